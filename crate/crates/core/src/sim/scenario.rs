//! Line-oriented scenario files: world knobs, a script of procedure
//! runs, one adversary strategy, and an expectation the run is judged
//! against. The fixed cast (manufacturer `man`, seller `sel`, owner
//! `own`, car `car`) always exists; users are declared explicitly and
//! referencing an undeclared actor is a configuration error.

use crate::groupsig::GsBackend;
use crate::ibs::IbsScheme;
use crate::policy::Action;
use crate::protocol::{ActionRequest, SessionCipher, TokenKind, WorldConfig};
use crate::wire::Timestamp;
use thiserror::Error;

use super::adversary::{MutationTarget, Strategy};
use super::{ChannelSpec, Phase, RevokeTargetSpec, SimReport, World};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct ScenarioError {
    pub line: usize,
    pub msg: String,
}

fn err(line: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError {
        line,
        msg: msg.into(),
    }
}

/// What the scenario asserts about its own outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// No attack found and every scripted phase completed.
    Safe,
    /// The adversary's attack succeeds (expected-attack mode).
    Attack,
    /// No attack found, but the adversary kept at least one phase from
    /// completing.
    Blocked,
}

impl Expectation {
    pub fn name(&self) -> &'static str {
        match self {
            Expectation::Safe => "safe",
            Expectation::Attack => "attack",
            Expectation::Blocked => "blocked",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub vin: String,
    pub config: WorldConfig,
    pub users: Vec<String>,
    pub clock_offsets: Vec<(String, i64)>,
    pub channels: Vec<(String, String, ChannelSpec)>,
    pub script: Vec<Phase>,
    pub strategy: Strategy,
    pub expect: Expectation,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 1,
            vin: super::battery::VIN.to_string(),
            config: WorldConfig::default(),
            users: Vec::new(),
            clock_offsets: Vec::new(),
            channels: Vec::new(),
            script: Vec::new(),
            strategy: Strategy::Passive,
            expect: Expectation::Safe,
        }
    }
}

/// Split a line into tokens, honoring double-quoted strings.
fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    for c in line.chars() {
        match c {
            '"' => in_quotes = !in_quotes,
            c if c.is_whitespace() && !in_quotes => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn parse_procedure(s: &str, line: usize) -> Result<crate::wire::Procedure, ScenarioError> {
    crate::wire::Procedure::ALL
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| err(line, format!("unknown procedure {s:?}")))
}

fn parse_action(
    object: &str,
    flag: &str,
    line: usize,
) -> Result<ActionRequest, ScenarioError> {
    let action =
        Action::parse(flag).ok_or_else(|| err(line, format!("unknown action {flag:?}")))?;
    Ok(ActionRequest::new(object, action))
}

/// Parse a scenario document.
pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    let mut scenario = Scenario::default();
    let mut known_users: std::collections::BTreeSet<String> = Default::default();
    let known_actor = |users: &std::collections::BTreeSet<String>, name: &str| {
        matches!(name, "man" | "sel" | "own" | "car") || users.contains(name)
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens = tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        let args: Vec<&str> = tokens.iter().map(String::as_str).collect();
        match args[0] {
            "seed" => {
                scenario.seed = args
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(line_no, "seed needs an integer"))?;
            }
            "vin" => {
                let vin = args.get(1).ok_or_else(|| err(line_no, "vin needs a value"))?;
                scenario.vin = crate::policy::validate_vin(vin)
                    .map_err(|e| err(line_no, format!("invalid vin: {e}")))?;
            }
            "mtu" => {
                scenario.config.mtu = args
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(line_no, "mtu needs an integer"))?;
            }
            "cipher" => {
                scenario.config.cipher = args
                    .get(1)
                    .and_then(|s| SessionCipher::parse(s))
                    .ok_or_else(|| err(line_no, "cipher is kem or dh"))?;
            }
            "gs-backend" => {
                scenario.config.gs_backend = match args.get(1).copied() {
                    Some("pairing") => GsBackend::Pairing,
                    Some("reference") => GsBackend::Reference,
                    _ => return Err(err(line_no, "gs-backend is pairing or reference")),
                };
            }
            "ibs-scheme" => {
                scenario.config.ibs_scheme = match args.get(1).copied() {
                    Some("shamir") => IbsScheme::Shamir,
                    Some("gq") => IbsScheme::Gq,
                    _ => return Err(err(line_no, "ibs-scheme is shamir or gq")),
                };
            }
            "ibs-bits" => {
                scenario.config.ibs_bits = args
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(line_no, "ibs-bits needs an integer"))?;
            }
            "group-capacity" => {
                scenario.config.group_capacity = args
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(line_no, "group-capacity needs an integer"))?;
            }
            "session-lifetime" => {
                scenario.config.session_lifetime = args
                    .get(1)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| err(line_no, "session-lifetime needs an integer"))?;
            }
            "user" => {
                let name = args
                    .get(1)
                    .ok_or_else(|| err(line_no, "user needs a name"))?;
                known_users.insert(name.to_string());
                scenario.users.push(name.to_string());
            }
            "clock-offset" => {
                let (actor, secs) = match (args.get(1), args.get(2)) {
                    (Some(a), Some(s)) => (*a, *s),
                    _ => return Err(err(line_no, "clock-offset ACTOR SECONDS")),
                };
                if !known_actor(&known_users, actor) {
                    return Err(err(line_no, format!("undeclared actor {actor:?}")));
                }
                let secs: i64 = secs
                    .parse()
                    .map_err(|_| err(line_no, "clock-offset needs an integer"))?;
                scenario.clock_offsets.push((actor.to_string(), secs));
            }
            "channel" => {
                let (a, b, kind) = match (args.get(1), args.get(2), args.get(3)) {
                    (Some(a), Some(b), Some(k)) => (*a, *b, *k),
                    _ => return Err(err(line_no, "channel A B trusted|untrusted")),
                };
                for actor in [a, b] {
                    if !known_actor(&known_users, actor) {
                        return Err(err(line_no, format!("undeclared actor {actor:?}")));
                    }
                }
                let trusted = match kind {
                    "trusted" => true,
                    "untrusted" => false,
                    _ => return Err(err(line_no, "channel kind is trusted or untrusted")),
                };
                let mut spec = ChannelSpec {
                    mtu: scenario.config.mtu,
                    trusted,
                    latency: 1,
                };
                let mut i = 4;
                while i + 1 < args.len() {
                    match args[i] {
                        "mtu" => {
                            spec.mtu = args[i + 1]
                                .parse()
                                .map_err(|_| err(line_no, "bad channel mtu"))?
                        }
                        "latency" => {
                            spec.latency = args[i + 1]
                                .parse()
                                .map_err(|_| err(line_no, "bad channel latency"))?
                        }
                        other => {
                            return Err(err(line_no, format!("unknown channel option {other:?}")))
                        }
                    }
                    i += 2;
                }
                scenario
                    .channels
                    .push((a.to_string(), b.to_string(), spec));
            }
            "do" => {
                let phase = parse_phase(&args[1..], line_no, &known_users, &known_actor)?;
                scenario.script.push(phase);
            }
            "adversary" => {
                scenario.strategy = parse_strategy(&args[1..], line_no)?;
            }
            "expect" => {
                scenario.expect = match args.get(1).copied() {
                    Some("safe") => Expectation::Safe,
                    Some("attack") => Expectation::Attack,
                    Some("blocked") => Expectation::Blocked,
                    _ => return Err(err(line_no, "expect safe, attack, or blocked")),
                };
            }
            other => return Err(err(line_no, format!("unknown directive {other:?}"))),
        }
    }
    Ok(scenario)
}

fn parse_phase(
    args: &[&str],
    line: usize,
    users: &std::collections::BTreeSet<String>,
    known_actor: &dyn Fn(&std::collections::BTreeSet<String>, &str) -> bool,
) -> Result<Phase, ScenarioError> {
    let require_user = |name: &str| -> Result<String, ScenarioError> {
        if !users.contains(name) {
            return Err(err(line, format!("undeclared user {name:?}")));
        }
        Ok(name.to_string())
    };
    match args.first().copied() {
        Some("setup") => Ok(Phase::Setup),
        Some("set-root") => Ok(Phase::SetRoot),
        Some("upload-gpk") => {
            let role = args
                .get(1)
                .ok_or_else(|| err(line, "upload-gpk ROLE"))?;
            Ok(Phase::UploadGpk {
                role: role.to_string(),
            })
        }
        Some("delegate") => {
            let kind = match args.get(1).copied() {
                Some("persistent") => TokenKind::Persistent,
                Some("ephemeral") => TokenKind::Ephemeral,
                _ => return Err(err(line, "delegate persistent|ephemeral USER ROLE")),
            };
            let user = require_user(
                args.get(2)
                    .ok_or_else(|| err(line, "delegate needs a user"))?,
            )?;
            let role = args
                .get(3)
                .ok_or_else(|| err(line, "delegate needs a role"))?;
            let window = match (args.get(4), args.get(5)) {
                (Some(start), Some(stop)) => {
                    let start: u64 = start
                        .parse()
                        .map_err(|_| err(line, "bad window start"))?;
                    let stop = if *stop == "inf" {
                        Timestamp::INFINITY
                    } else {
                        Timestamp(stop.parse().map_err(|_| err(line, "bad window stop"))?)
                    };
                    (Timestamp(start), stop)
                }
                _ => (Timestamp(0), Timestamp::INFINITY),
            };
            Ok(Phase::Delegate {
                user,
                kind,
                role: role.to_string(),
                attributes: vec![],
                window,
            })
        }
        Some("execute") => {
            let user = require_user(
                args.get(1)
                    .ok_or_else(|| err(line, "execute USER OBJECT ACTION"))?,
            )?;
            let object = args
                .get(2)
                .ok_or_else(|| err(line, "execute needs an object"))?;
            let flag = args
                .get(3)
                .ok_or_else(|| err(line, "execute needs an action"))?;
            Ok(Phase::Execute {
                user,
                action: parse_action(object, flag, line)?,
                attributes: vec![],
            })
        }
        Some("execute-otf") => {
            let user = require_user(
                args.get(1)
                    .ok_or_else(|| err(line, "execute-otf USER OBJECT ACTION"))?,
            )?;
            let object = args
                .get(2)
                .ok_or_else(|| err(line, "execute-otf needs an object"))?;
            let flag = args
                .get(3)
                .ok_or_else(|| err(line, "execute-otf needs an action"))?;
            Ok(Phase::ExecuteOtf {
                user,
                action: parse_action(object, flag, line)?,
            })
        }
        Some("leak-kses") => {
            let user = require_user(
                args.get(1)
                    .ok_or_else(|| err(line, "leak-kses USER"))?,
            )?;
            Ok(Phase::LeakSessionKey { user })
        }
        Some("forge-otf") => {
            let object = args
                .get(1)
                .ok_or_else(|| err(line, "forge-otf OBJECT ACTION"))?;
            let flag = args
                .get(2)
                .ok_or_else(|| err(line, "forge-otf needs an action"))?;
            Ok(Phase::ForgeOtf {
                action: parse_action(object, flag, line)?,
            })
        }
        Some("revoke") => {
            let authority = args
                .get(1)
                .ok_or_else(|| err(line, "revoke AUTHORITY pseudonym|token-of VALUE"))?;
            let target = match (args.get(2).copied(), args.get(3)) {
                (Some("pseudonym"), Some(value)) => {
                    RevokeTargetSpec::Pseudonym(value.to_string())
                }
                (Some("token-of"), Some(user)) => {
                    if !known_actor(users, user) {
                        return Err(err(line, format!("undeclared user {user:?}")));
                    }
                    RevokeTargetSpec::TokenOfUser(user.to_string())
                }
                _ => return Err(err(line, "revoke target is pseudonym VALUE or token-of USER")),
            };
            Ok(Phase::Revoke {
                authority: authority.to_string(),
                target,
            })
        }
        Some("advance-clock") => {
            let seconds = args
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(line, "advance-clock SECONDS"))?;
            Ok(Phase::AdvanceClock { seconds })
        }
        other => Err(err(line, format!("unknown phase {other:?}"))),
    }
}

fn parse_strategy(args: &[&str], line: usize) -> Result<Strategy, ScenarioError> {
    match args.first().copied() {
        Some("passive") | None => Ok(Strategy::Passive),
        Some("drop") => {
            let (procedure, step) = proc_step(args, line)?;
            Ok(Strategy::Drop { procedure, step })
        }
        Some("replay") => {
            let (procedure, step) = proc_step(args, line)?;
            Ok(Strategy::Replay { procedure, step })
        }
        Some("splice") => {
            let (procedure, step) = proc_step(args, line)?;
            Ok(Strategy::Splice { procedure, step })
        }
        Some("mutate") => {
            let (procedure, step) = proc_step(args, line)?;
            let target = match (args.get(3).copied(), args.get(4)) {
                (Some("auth"), _) => MutationTarget::Auth,
                (Some("field"), Some(i)) => MutationTarget::Field(
                    i.parse().map_err(|_| err(line, "bad field index"))?,
                ),
                _ => return Err(err(line, "mutate PROC STEP field N | auth")),
            };
            Ok(Strategy::Mutate {
                procedure,
                step,
                target,
            })
        }
        other => Err(err(line, format!("unknown strategy {other:?}"))),
    }
}

fn proc_step(args: &[&str], line: usize) -> Result<(crate::wire::Procedure, u8), ScenarioError> {
    let procedure = parse_procedure(
        args.get(1)
            .ok_or_else(|| err(line, "strategy needs a procedure"))?,
        line,
    )?;
    let step: u8 = args
        .get(2)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(line, "strategy needs a step"))?;
    if step == 0 || step > procedure.step_count() {
        return Err(err(line, format!("step {step} out of range")));
    }
    Ok((procedure, step))
}

/// Build the world and run the scenario script.
pub fn sim_run(scenario: &Scenario) -> (World, SimReport) {
    let mut world = World::new(
        scenario.config.clone(),
        &scenario.vin,
        scenario.seed,
        scenario.strategy.clone(),
    );
    for user in &scenario.users {
        world.add_user(user);
    }
    for (actor, offset) in &scenario.clock_offsets {
        world.set_clock_offset(actor, *offset);
    }
    for (a, b, spec) in &scenario.channels {
        world.set_channel(a, b, *spec);
    }
    let report = world.run_script(&scenario.script);
    (world, report)
}

/// Whether the run matches the scenario's expectation.
pub fn expectation_met(scenario: &Scenario, report: &SimReport) -> bool {
    let all_completed = report.phases.iter().all(|p| p.completed);
    match scenario.expect {
        Expectation::Safe => !report.attack_found && all_completed,
        Expectation::Attack => report.attack_found,
        Expectation::Blocked => !report.attack_found && !all_completed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAPPY: &str = r#"
seed 7
user u1
do setup
do set-root
do upload-gpk Owner
do upload-gpk Driver
do delegate persistent u1 Driver
do execute u1 "Start Engine" e
do execute-otf u1 "Open Doors" e
expect safe
"#;

    #[test]
    fn happy_scenario_parses_runs_and_meets_expectation() {
        let scenario = parse(HAPPY).unwrap();
        assert_eq!(scenario.script.len(), 7);
        let (world, report) = sim_run(&scenario);
        assert!(expectation_met(&scenario, &report), "{report:?}");
        assert_eq!(world.cast.car.executed.len(), 2);
        // the on-the-fly leg ran without any asymmetric operation
        let otf_phase = report
            .phases
            .iter()
            .find(|p| p.label.starts_with("execute-otf"))
            .unwrap();
        assert_eq!(otf_phase.asymmetric_ops, 0);
    }

    #[test]
    fn identical_seed_and_scenario_give_identical_transcripts() {
        let scenario = parse(HAPPY).unwrap();
        let (w1, _) = sim_run(&scenario);
        let (w2, _) = sim_run(&scenario);
        assert_eq!(w1.transcript(), w2.transcript());
        let mut other = parse(HAPPY).unwrap();
        other.seed = 8;
        let (w3, _) = sim_run(&other);
        assert_ne!(w1.transcript(), w3.transcript());
    }

    #[test]
    fn undeclared_actor_is_a_configuration_error() {
        let bad = "do execute ghost \"Open Doors\" e\n";
        let err = parse(bad).unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.msg.contains("undeclared"));
    }

    #[test]
    fn malformed_directives_report_their_line() {
        for (text, line) in [
            ("seed x\n", 1),
            ("user u1\nchannel u1 car sometimes\n", 2),
            ("florp\n", 1),
            ("adversary mutate bogus 1 auth\n", 1),
            ("expect maybe\n", 1),
            ("vin TOOSHORT\n", 1),
        ] {
            let err = parse(text).unwrap_err();
            assert_eq!(err.line, line, "for {text:?}");
        }
    }

    #[test]
    fn leak_scenario_reports_the_attack() {
        let text = r#"
seed 9
user u1
do setup
do set-root
do upload-gpk Owner
do upload-gpk Driver
do delegate persistent u1 Driver
do execute u1 "Open Doors" e
do leak-kses u1
do forge-otf "Start Engine" e
expect attack
"#;
        let scenario = parse(text).unwrap();
        let (world, report) = sim_run(&scenario);
        assert!(report.attack_found, "{report:?}");
        assert!(expectation_met(&scenario, &report));
        assert!(world
            .cast
            .car
            .executed
            .contains(&ActionRequest::new("Start Engine", crate::policy::Action::Execute)));
    }

    #[test]
    fn setup_on_untrusted_channel_is_refused() {
        let text = r#"
seed 3
channel man car untrusted
do setup
expect blocked
"#;
        let scenario = parse(text).unwrap();
        let (world, report) = sim_run(&scenario);
        assert!(!report.phases[0].completed);
        assert!(expectation_met(&scenario, &report));
        assert!(!world.cast.car.is_provisioned());
        assert!(report.phases[0]
            .aborts
            .iter()
            .any(|a| a.contains("untrusted-channel")));
    }

    #[test]
    fn clock_skew_beyond_bound_aborts() {
        let text = r#"
seed 4
user u1
clock-offset own 200
do setup
do set-root
do upload-gpk Driver
expect blocked
"#;
        let scenario = parse(text).unwrap();
        let (_, report) = sim_run(&scenario);
        // upload fails against the 120 s skew bound
        let upload = report
            .phases
            .iter()
            .find(|p| p.label.starts_with("upload-gpk"))
            .unwrap();
        assert!(!upload.completed);
        assert!(upload.aborts.iter().any(|a| a.contains("stale-timestamp")));
    }
}
