//! Role/attribute access control over vehicle functions.
//!
//! Vehicle functions are objects grouped into four macro domains
//! (engine, chassis, body, infotainment), with read/write/execute grants
//! per role, rendered in the familiar `rwe` triplet notation. Grants at
//! macro level propagate to every object of the domain unless an
//! explicit object entry overrides them. Entries may carry attribute
//! constraints (time windows, boolean flags, numeric bounds); all
//! constraints on an entry must hold (conjunction). Anything not
//! explicitly granted is denied.

use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

use crate::wire::Timestamp;

/// Shipped factory policy: the six standard roles over seventeen
/// vehicle functions.
pub const FACTORY_POLICY: &str = include_str!("../fixtures/table1.policy");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
}

fn parse_err(line: usize, column: usize, msg: impl Into<String>) -> PolicyError {
    PolicyError::Parse {
        line,
        column,
        msg: msg.into(),
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VinError {
    #[error("vin must be 17 characters, got {0}")]
    WrongLength(usize),
    #[error("vin contains forbidden character {0:?}")]
    ForbiddenCharacter(char),
}

/// The four functional domains objects belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MacroObject {
    Engine,
    Chassis,
    Body,
    Infotainment,
}

impl MacroObject {
    pub const ALL: [MacroObject; 4] = [
        MacroObject::Engine,
        MacroObject::Chassis,
        MacroObject::Body,
        MacroObject::Infotainment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MacroObject::Engine => "Engine",
            MacroObject::Chassis => "Chassis",
            MacroObject::Body => "Body",
            MacroObject::Infotainment => "Infotainment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        MacroObject::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

/// One of the three actions on an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Read,
    Write,
    Execute,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Read, Action::Write, Action::Execute];

    pub fn letter(&self) -> char {
        match self {
            Action::Read => 'r',
            Action::Write => 'w',
            Action::Execute => 'e',
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "r" | "read" => Some(Action::Read),
            "w" | "write" => Some(Action::Write),
            "e" | "exec" | "execute" => Some(Action::Execute),
            _ => None,
        }
    }
}

/// Grant flags for one (role, object) cell, rendered as "rwe" / "--e" / "---".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ActionSet {
    pub read: bool,
    pub write: bool,
    pub execute: bool,
}

impl ActionSet {
    pub fn allows(&self, action: Action) -> bool {
        match action {
            Action::Read => self.read,
            Action::Write => self.write,
            Action::Execute => self.execute,
        }
    }

    /// The triplet notation: one of "rwe", "rw-", "--e", "---", ...
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(3);
        out.push(if self.read { 'r' } else { '-' });
        out.push(if self.write { 'w' } else { '-' });
        out.push(if self.execute { 'e' } else { '-' });
        out
    }

    pub fn parse(s: &str) -> Option<Self> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 3 {
            return None;
        }
        let flag = |c: char, on: char| match c {
            '-' => Some(false),
            c if c == on => Some(true),
            _ => None,
        };
        Some(ActionSet {
            read: flag(chars[0], 'r')?,
            write: flag(chars[1], 'w')?,
            execute: flag(chars[2], 'e')?,
        })
    }
}

/// A claimed attribute value; ⊥ (not applicable) is `Null`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttrValue {
    Number(i64),
    Bool(bool),
    Null,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeValue {
    pub name: String,
    pub value: AttrValue,
}

impl AttributeValue {
    pub fn number(name: &str, value: i64) -> Self {
        AttributeValue {
            name: name.to_string(),
            value: AttrValue::Number(value),
        }
    }

    pub fn flag(name: &str, value: bool) -> Self {
        AttributeValue {
            name: name.to_string(),
            value: AttrValue::Bool(value),
        }
    }

    pub fn null(name: &str) -> Self {
        AttributeValue {
            name: name.to_string(),
            value: AttrValue::Null,
        }
    }
}

/// A constraint attached to a permission entry. `optional` constraints
/// are vacuously satisfied when the attribute is ⊥ or absent; required
/// ones are not, so replacing a value by ⊥ can never widen access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    TimeWindow {
        start: Timestamp,
        stop: Timestamp,
    },
    RequireFlag {
        name: String,
        optional: bool,
    },
    NumberAtMost {
        name: String,
        max: i64,
        optional: bool,
    },
    NumberAtLeast {
        name: String,
        min: i64,
        optional: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

impl Decision {
    pub fn is_allow(&self) -> bool {
        matches!(self, Decision::Allow)
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Allow => f.write_str("ALLOW"),
            Decision::Deny(reason) => write!(f, "DENY ({reason})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DenyReason {
    UnknownRole,
    UnknownObject,
    NotGranted,
    ActionNotGranted,
    OutsideTimeWindow,
    AttributeMissing(String),
    AttributeViolated(String),
}

impl std::fmt::Display for DenyReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DenyReason::UnknownRole => f.write_str("unknown role"),
            DenyReason::UnknownObject => f.write_str("unknown object"),
            DenyReason::NotGranted => f.write_str("no grant"),
            DenyReason::ActionNotGranted => f.write_str("action not granted"),
            DenyReason::OutsideTimeWindow => f.write_str("outside time window"),
            DenyReason::AttributeMissing(name) => write!(f, "attribute {name} missing"),
            DenyReason::AttributeViolated(name) => write!(f, "attribute {name} violated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    actions: ActionSet,
    constraints: Vec<Constraint>,
}

/// Loaded permission table: total over declared roles × objects, with
/// absent cells denying everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PermissionTable {
    roles: BTreeSet<String>,
    objects: BTreeMap<String, MacroObject>,
    object_entries: BTreeMap<(String, String), Entry>,
    macro_entries: BTreeMap<(String, MacroObject), Entry>,
}

impl PermissionTable {
    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.roles.iter().map(String::as_str)
    }

    pub fn objects(&self) -> impl Iterator<Item = (&str, MacroObject)> {
        self.objects.iter().map(|(name, m)| (name.as_str(), *m))
    }

    pub fn role_count(&self) -> usize {
        self.roles.len()
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.contains(role)
    }

    /// Effective grant flags for one cell, macro propagation applied.
    pub fn effective_actions(&self, role: &str, object: &str) -> ActionSet {
        self.lookup(role, object)
            .map(|entry| entry.actions)
            .unwrap_or_default()
    }

    fn lookup(&self, role: &str, object: &str) -> Option<&Entry> {
        let key = (role.to_string(), object.to_string());
        if let Some(entry) = self.object_entries.get(&key) {
            return Some(entry);
        }
        let macro_object = self.objects.get(object)?;
        self.macro_entries
            .get(&(role.to_string(), *macro_object))
    }
}

/// Load a policy document. Unknown roles or objects in entries,
/// duplicate cells, and malformed lines are rejected with the line and
/// column of the offending token.
pub fn policy_load(document: &str) -> Result<PermissionTable, PolicyError> {
    let mut table = PermissionTable::default();
    for (idx, raw_line) in document.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        if line.trim().is_empty() {
            continue;
        }
        let column = raw_line.len() - raw_line.trim_start().len() + 1;
        let trimmed = line.trim();

        if let Some(role) = trimmed.strip_prefix("role ") {
            let role = role.trim();
            if role.is_empty() || role.contains(';') {
                return Err(parse_err(line_no, column, "malformed role declaration"));
            }
            if !table.roles.insert(role.to_string()) {
                return Err(parse_err(line_no, column, format!("duplicate role {role}")));
            }
            continue;
        }

        if let Some(rest) = trimmed.strip_prefix("object ") {
            let Some((macro_part, name)) = rest.split_once(';') else {
                return Err(parse_err(line_no, column, "object needs `MACRO; NAME`"));
            };
            let Some(macro_object) = MacroObject::parse(macro_part.trim()) else {
                return Err(parse_err(
                    line_no,
                    column,
                    format!("unknown macro-object {:?}", macro_part.trim()),
                ));
            };
            let name = name.trim();
            if name.is_empty() {
                return Err(parse_err(line_no, column, "empty object name"));
            }
            if table
                .objects
                .insert(name.to_string(), macro_object)
                .is_some()
            {
                return Err(parse_err(line_no, column, format!("duplicate object {name}")));
            }
            continue;
        }

        // permission entry: ROLE; OBJECT; FLAGS[; constraints]
        let parts: Vec<&str> = trimmed.split(';').map(str::trim).collect();
        if parts.len() < 3 || parts.len() > 4 {
            return Err(parse_err(
                line_no,
                column,
                "entry needs `ROLE; OBJECT; FLAGS[; constraints]`",
            ));
        }
        let (role, object, flags) = (parts[0], parts[1], parts[2]);
        if !table.roles.contains(role) {
            return Err(parse_err(line_no, column, format!("unknown role {role}")));
        }
        let Some(actions) = ActionSet::parse(flags) else {
            return Err(parse_err(line_no, column, format!("bad rwe flags {flags:?}")));
        };
        let constraints = match parts.get(3) {
            Some(spec) => parse_constraints(spec, line_no, column)?,
            None => Vec::new(),
        };
        let entry = Entry {
            actions,
            constraints,
        };
        if let Some(macro_name) = object.strip_prefix('@') {
            let Some(macro_object) = MacroObject::parse(macro_name) else {
                return Err(parse_err(
                    line_no,
                    column,
                    format!("unknown macro-object {macro_name:?}"),
                ));
            };
            if table
                .macro_entries
                .insert((role.to_string(), macro_object), entry)
                .is_some()
            {
                return Err(parse_err(
                    line_no,
                    column,
                    format!("duplicate entry ({role}, @{macro_name})"),
                ));
            }
        } else {
            if !table.objects.contains_key(object) {
                return Err(parse_err(line_no, column, format!("unknown object {object}")));
            }
            if table
                .object_entries
                .insert((role.to_string(), object.to_string()), entry)
                .is_some()
            {
                return Err(parse_err(
                    line_no,
                    column,
                    format!("duplicate entry ({role}, {object})"),
                ));
            }
        }
    }
    Ok(table)
}

fn parse_constraints(
    spec: &str,
    line: usize,
    column: usize,
) -> Result<Vec<Constraint>, PolicyError> {
    let mut out = Vec::new();
    for raw in spec.split(',') {
        let mut token = raw.trim();
        if token.is_empty() {
            continue;
        }
        let optional = token.ends_with('?');
        if optional {
            token = token[..token.len() - 1].trim_end();
        }
        if let Some(window) = token.strip_prefix("time=") {
            let Some((start, stop)) = window.split_once("..") else {
                return Err(parse_err(line, column, "time constraint needs START..STOP"));
            };
            let parse_ts = |s: &str| -> Result<Timestamp, PolicyError> {
                if s == "inf" {
                    Ok(Timestamp::INFINITY)
                } else {
                    s.parse::<u64>()
                        .map(Timestamp)
                        .map_err(|_| parse_err(line, column, format!("bad timestamp {s:?}")))
                }
            };
            out.push(Constraint::TimeWindow {
                start: parse_ts(start)?,
                stop: parse_ts(stop)?,
            });
        } else if let Some(name) = token.strip_prefix("require=") {
            out.push(Constraint::RequireFlag {
                name: name.to_string(),
                optional,
            });
        } else if let Some((name, value)) = token.split_once("<=") {
            let max = value
                .trim()
                .parse()
                .map_err(|_| parse_err(line, column, format!("bad bound {value:?}")))?;
            out.push(Constraint::NumberAtMost {
                name: name.trim().to_string(),
                max,
                optional,
            });
        } else if let Some((name, value)) = token.split_once(">=") {
            let min = value
                .trim()
                .parse()
                .map_err(|_| parse_err(line, column, format!("bad bound {value:?}")))?;
            out.push(Constraint::NumberAtLeast {
                name: name.trim().to_string(),
                min,
                optional,
            });
        } else {
            return Err(parse_err(line, column, format!("unknown constraint {token:?}")));
        }
    }
    Ok(out)
}

fn check_constraint(
    constraint: &Constraint,
    attributes: &[AttributeValue],
    now: Timestamp,
) -> Result<(), DenyReason> {
    let find = |name: &str| attributes.iter().find(|a| a.name == name);
    match constraint {
        Constraint::TimeWindow { start, stop } => {
            if now < *start || now > *stop {
                return Err(DenyReason::OutsideTimeWindow);
            }
        }
        Constraint::RequireFlag { name, optional } => match find(name).map(|a| &a.value) {
            Some(AttrValue::Bool(true)) => {}
            Some(AttrValue::Bool(false)) | Some(AttrValue::Number(_)) => {
                return Err(DenyReason::AttributeViolated(name.clone()))
            }
            Some(AttrValue::Null) | None if *optional => {}
            Some(AttrValue::Null) | None => {
                return Err(DenyReason::AttributeMissing(name.clone()))
            }
        },
        Constraint::NumberAtMost {
            name,
            max,
            optional,
        } => match find(name).map(|a| &a.value) {
            Some(AttrValue::Number(v)) if v <= max => {}
            Some(AttrValue::Number(_)) | Some(AttrValue::Bool(_)) => {
                return Err(DenyReason::AttributeViolated(name.clone()))
            }
            Some(AttrValue::Null) | None if *optional => {}
            Some(AttrValue::Null) | None => {
                return Err(DenyReason::AttributeMissing(name.clone()))
            }
        },
        Constraint::NumberAtLeast {
            name,
            min,
            optional,
        } => match find(name).map(|a| &a.value) {
            Some(AttrValue::Number(v)) if v >= min => {}
            Some(AttrValue::Number(_)) | Some(AttrValue::Bool(_)) => {
                return Err(DenyReason::AttributeViolated(name.clone()))
            }
            Some(AttrValue::Null) | None if *optional => {}
            Some(AttrValue::Null) | None => {
                return Err(DenyReason::AttributeMissing(name.clone()))
            }
        },
    }
    Ok(())
}

/// Evaluate one access request. Allow requires the grant flags to cover
/// the action and every constraint on the effective entry to hold at
/// time `now` with the supplied attributes.
pub fn policy_check(
    table: &PermissionTable,
    role: &str,
    object: &str,
    action: Action,
    attributes: &[AttributeValue],
    now: Timestamp,
) -> Decision {
    if !table.roles.contains(role) {
        return Decision::Deny(DenyReason::UnknownRole);
    }
    if !table.objects.contains_key(object) {
        return Decision::Deny(DenyReason::UnknownObject);
    }
    let Some(entry) = table.lookup(role, object) else {
        return Decision::Deny(DenyReason::NotGranted);
    };
    if !entry.actions.allows(action) {
        return Decision::Deny(DenyReason::ActionNotGranted);
    }
    for constraint in &entry.constraints {
        if let Err(reason) = check_constraint(constraint, attributes, now) {
            return Decision::Deny(reason);
        }
    }
    Decision::Allow
}

/// Normalize and validate a vehicle identification number: exactly 17
/// characters from [A-HJ-NPR-Z0-9] after uppercasing (I, O and Q are
/// excluded from the VIN alphabet).
pub fn validate_vin(text: &str) -> Result<String, VinError> {
    let upper = text.to_ascii_uppercase();
    let chars: Vec<char> = upper.chars().collect();
    if chars.len() != 17 {
        return Err(VinError::WrongLength(chars.len()));
    }
    for &c in &chars {
        let ok = matches!(c, 'A'..='H' | 'J'..='N' | 'P' | 'R'..='Z' | '0'..='9');
        if !ok {
            return Err(VinError::ForbiddenCharacter(c));
        }
    }
    Ok(upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOW: Timestamp = Timestamp(1_000_000);

    fn check(table: &PermissionTable, role: &str, object: &str, action: Action) -> Decision {
        policy_check(table, role, object, action, &[], NOW)
    }

    #[test]
    fn factory_policy_loads_with_six_roles_and_seventeen_objects() {
        let table = policy_load(FACTORY_POLICY).unwrap();
        assert_eq!(table.role_count(), 6);
        assert_eq!(table.object_count(), 17);
    }

    #[test]
    fn factory_policy_spot_checks() {
        let table = policy_load(FACTORY_POLICY).unwrap();
        assert!(check(&table, "Driver", "Start Engine", Action::Execute).is_allow());
        assert_eq!(
            check(&table, "Owner", "Start Engine", Action::Execute),
            Decision::Deny(DenyReason::NotGranted)
        );
        assert!(check(&table, "Technician", "SW Update", Action::Execute).is_allow());
        assert_eq!(
            check(&table, "Valet", "SW Update", Action::Execute),
            Decision::Deny(DenyReason::NotGranted)
        );
        assert_eq!(
            check(&table, "Passenger", "Fuel Level", Action::Read),
            Decision::Deny(DenyReason::NotGranted)
        );
        // granted for read, requested write
        assert_eq!(
            check(&table, "Technician", "Trip Computer", Action::Write),
            Decision::Deny(DenyReason::ActionNotGranted)
        );
    }

    #[test]
    fn empty_document_is_a_deny_all_table() {
        let table = policy_load("").unwrap();
        assert_eq!(table.role_count(), 0);
        assert_eq!(
            check(&table, "Driver", "Start Engine", Action::Execute),
            Decision::Deny(DenyReason::UnknownRole)
        );
    }

    #[test]
    fn duplicate_entry_is_rejected_with_location() {
        let doc = "role A\nobject Body; Doors\nA; Doors; --e\nA; Doors; r--\n";
        match policy_load(doc).unwrap_err() {
            PolicyError::Parse { line, .. } => assert_eq!(line, 4),
        }
    }

    #[test]
    fn unknown_role_and_object_are_rejected_at_load() {
        assert!(policy_load("B; Doors; --e\n").is_err());
        assert!(policy_load("role A\nA; Doors; --e\n").is_err());
        assert!(policy_load("role A\nobject Cabin; Doors\n").is_err());
        assert!(policy_load("role A\nobject Body; Doors\nA; Doors; xyz\n").is_err());
    }

    #[test]
    fn deny_by_default_for_unlisted_cells() {
        let table = policy_load(FACTORY_POLICY).unwrap();
        for action in Action::ALL {
            assert!(!check(&table, "ChildOccupant", "SW Update", action).is_allow());
            assert!(!check(&table, "Passenger", "Diagnosis", action).is_allow());
        }
    }

    #[test]
    fn macro_grant_propagates_and_object_entry_overrides() {
        let doc = "\
role Valet
object Body; Open Doors
object Body; Open Trunk
object Body; Alarm
Valet; @Body; --e
Valet; Open Trunk; ---
";
        let table = policy_load(doc).unwrap();
        assert!(check(&table, "Valet", "Open Doors", Action::Execute).is_allow());
        assert!(check(&table, "Valet", "Alarm", Action::Execute).is_allow());
        // explicit object-level "---" overrides the macro grant
        assert_eq!(
            check(&table, "Valet", "Open Trunk", Action::Execute),
            Decision::Deny(DenyReason::ActionNotGranted)
        );
    }

    #[test]
    fn macro_form_is_observationally_equal_to_expanded_form() {
        let macro_form = "\
role R
object Body; A
object Body; B
object Body; C
object Engine; D
R; @Body; -w-
";
        let expanded_form = "\
role R
object Body; A
object Body; B
object Body; C
object Engine; D
R; A; -w-
R; B; -w-
R; C; -w-
";
        let t1 = policy_load(macro_form).unwrap();
        let t2 = policy_load(expanded_form).unwrap();
        for object in ["A", "B", "C", "D"] {
            for action in Action::ALL {
                assert_eq!(
                    check(&t1, "R", object, action),
                    check(&t2, "R", object, action),
                    "mismatch at ({object}, {action:?})"
                );
            }
        }
    }

    #[test]
    fn time_window_denies_outside_even_when_flags_grant() {
        let doc = "\
role Tech
object Engine; SW Update
Tech; SW Update; --e; time=1000..2000
";
        let table = policy_load(doc).unwrap();
        let allow = policy_check(
            &table,
            "Tech",
            "SW Update",
            Action::Execute,
            &[],
            Timestamp(1500),
        );
        assert!(allow.is_allow());
        let deny = policy_check(
            &table,
            "Tech",
            "SW Update",
            Action::Execute,
            &[],
            Timestamp(2001),
        );
        assert_eq!(deny, Decision::Deny(DenyReason::OutsideTimeWindow));
        // open-ended window
        let doc_inf = "\
role Tech
object Engine; SW Update
Tech; SW Update; --e; time=1000..inf
";
        let table = policy_load(doc_inf).unwrap();
        assert!(policy_check(
            &table,
            "Tech",
            "SW Update",
            Action::Execute,
            &[],
            Timestamp(u64::MAX - 1)
        )
        .is_allow());
    }

    #[test]
    fn attribute_constraints_flags_and_ranges() {
        let doc = "\
role Tech
object Engine; Diagnosis
Tech; Diagnosis; --e; require=has_license, distance<=500, age>=18?
";
        let table = policy_load(doc).unwrap();
        let good = [
            AttributeValue::flag("has_license", true),
            AttributeValue::number("distance", 120),
            AttributeValue::number("age", 33),
        ];
        assert!(policy_check(&table, "Tech", "Diagnosis", Action::Execute, &good, NOW).is_allow());

        let far = [
            AttributeValue::flag("has_license", true),
            AttributeValue::number("distance", 501),
        ];
        assert_eq!(
            policy_check(&table, "Tech", "Diagnosis", Action::Execute, &far, NOW),
            Decision::Deny(DenyReason::AttributeViolated("distance".into()))
        );

        let unlicensed = [
            AttributeValue::flag("has_license", false),
            AttributeValue::number("distance", 10),
        ];
        assert_eq!(
            policy_check(&table, "Tech", "Diagnosis", Action::Execute, &unlicensed, NOW),
            Decision::Deny(DenyReason::AttributeViolated("has_license".into()))
        );

        // optional constraint (age) is vacuously satisfied by ⊥/absence,
        // required ones are not
        let sparse = [
            AttributeValue::flag("has_license", true),
            AttributeValue::number("distance", 10),
            AttributeValue::null("age"),
        ];
        assert!(policy_check(&table, "Tech", "Diagnosis", Action::Execute, &sparse, NOW).is_allow());
        let missing_required = [AttributeValue::flag("has_license", true)];
        assert_eq!(
            policy_check(
                &table,
                "Tech",
                "Diagnosis",
                Action::Execute,
                &missing_required,
                NOW
            ),
            Decision::Deny(DenyReason::AttributeMissing("distance".into()))
        );
    }

    #[test]
    fn replacing_required_attributes_by_null_never_widens_access() {
        let doc = "\
role R
object Engine; X
R; X; --e; require=lic, d<=100, a>=5
";
        let table = policy_load(doc).unwrap();
        let candidates: Vec<Vec<AttributeValue>> = vec![
            vec![
                AttributeValue::flag("lic", true),
                AttributeValue::number("d", 50),
                AttributeValue::number("a", 9),
            ],
            vec![
                AttributeValue::flag("lic", false),
                AttributeValue::number("d", 500),
                AttributeValue::number("a", 1),
            ],
            vec![AttributeValue::flag("lic", true)],
        ];
        for attrs in candidates {
            let before = policy_check(&table, "R", "X", Action::Execute, &attrs, NOW);
            for i in 0..attrs.len() {
                let mut nulled = attrs.clone();
                nulled[i].value = AttrValue::Null;
                let after = policy_check(&table, "R", "X", Action::Execute, &nulled, NOW);
                if !before.is_allow() {
                    assert!(
                        !after.is_allow(),
                        "nulling {} turned Deny into Allow",
                        attrs[i].name
                    );
                }
            }
        }
    }

    #[test]
    fn action_set_rendering_round_trips() {
        for s in ["---", "r--", "-w-", "--e", "rw-", "r-e", "-we", "rwe"] {
            assert_eq!(ActionSet::parse(s).unwrap().render(), s);
        }
        assert!(ActionSet::parse("rw").is_none());
        assert!(ActionSet::parse("xwe").is_none());
    }

    #[test]
    fn vin_normalization_and_validation() {
        assert_eq!(
            validate_vin("1hgcm82633a004352").unwrap(),
            "1HGCM82633A004352"
        );
        assert_eq!(
            validate_vin("1HGCM82633A00435").unwrap_err(),
            VinError::WrongLength(16)
        );
        assert_eq!(
            validate_vin("1HGCM82633A00435O").unwrap_err(),
            VinError::ForbiddenCharacter('O')
        );
        assert_eq!(
            validate_vin("1HGCM82633A0043I2").unwrap_err(),
            VinError::ForbiddenCharacter('I')
        );
        assert_eq!(
            validate_vin("1HGCM82633A0043Q2").unwrap_err(),
            VinError::ForbiddenCharacter('Q')
        );
    }
}
