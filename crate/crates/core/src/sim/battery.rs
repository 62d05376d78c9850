//! Safety sweep: a scripted honest run is attacked under every
//! enumerable syntactic strategy — each field and each authenticator of
//! every open-channel step mutated, every step replayed and dropped,
//! and the key-establishing steps spliced across sessions. A sweep
//! passes when no strategy makes the car execute anything the honest
//! user did not request. The complementary leak battery hands the
//! session key to the adversary and must find the forged exchange.

use crate::policy::Action;
use crate::protocol::{ActionRequest, TokenKind, WorldConfig};
use crate::wire::{self, Procedure, Timestamp};

use super::adversary::{MutationTarget, Strategy};
use super::{Phase, SimReport, World};

pub const VIN: &str = "1HGCM82633A004352";
pub const SWEEP_USER: &str = "u1";
/// The honest user's only request in sweep scripts.
pub const HONEST_OBJECT: &str = "Open Doors";
/// The escalation target the adversary is after.
pub const FORGED_OBJECT: &str = "Start Engine";

fn open_doors() -> ActionRequest {
    ActionRequest::new(HONEST_OBJECT, Action::Execute)
}

/// Provisioning prefix shared by all sweep scripts.
fn provisioning() -> Vec<Phase> {
    vec![
        Phase::Setup,
        Phase::SetRoot,
        Phase::UploadGpk {
            role: "Owner".into(),
        },
        Phase::UploadGpk {
            role: "Driver".into(),
        },
        Phase::Delegate {
            user: SWEEP_USER.into(),
            kind: TokenKind::Persistent,
            role: "Driver".into(),
            attributes: vec![],
            window: (Timestamp(0), Timestamp::INFINITY),
        },
    ]
}

/// Two sessions of execute + on-the-fly, so splice strategies have a
/// second occurrence of every step to cross.
pub fn sweep_script() -> Vec<Phase> {
    let mut script = provisioning();
    for _ in 0..2 {
        script.push(Phase::Execute {
            user: SWEEP_USER.into(),
            action: open_doors(),
            attributes: vec![],
        });
        script.push(Phase::ExecuteOtf {
            user: SWEEP_USER.into(),
            action: open_doors(),
        });
    }
    script
}

/// Honest script followed by a session-key leak and the forged
/// exchange.
pub fn leak_script() -> Vec<Phase> {
    let mut script = provisioning();
    script.push(Phase::Execute {
        user: SWEEP_USER.into(),
        action: open_doors(),
        attributes: vec![],
    });
    script.push(Phase::LeakSessionKey {
        user: SWEEP_USER.into(),
    });
    script.push(Phase::ForgeOtf {
        action: ActionRequest::new(FORGED_OBJECT, Action::Execute),
    });
    script
}

fn run_world(config: &WorldConfig, seed: u64, strategy: Strategy, script: &[Phase]) -> (World, SimReport) {
    let mut world = World::new(config.clone(), VIN, seed, strategy);
    world.add_user(SWEEP_USER);
    let report = world.run_script(script);
    (world, report)
}

/// Enumerate strategies from an honest probe run: for every frame of
/// the open-channel procedures, one mutation per field plus the
/// authenticator, one replay, one drop; splice for the session-bearing
/// procedures.
pub fn enumerate_strategies(config: &WorldConfig, seed: u64) -> Vec<Strategy> {
    let script = sweep_script();
    let (world, _) = run_world(config, seed, Strategy::Passive, &script);

    let mut strategies = vec![Strategy::Passive];
    let mut seen: std::collections::BTreeSet<(Procedure, u8)> = Default::default();
    for line in world.transcript().lines() {
        // probe frames carry their chunk-encoded hex as the last token
        let Some(hex_part) = line.split_whitespace().last() else {
            continue;
        };
        let Ok(chunk_bytes) = hex::decode(hex_part) else {
            continue;
        };
        let Ok(chunk) = wire::Chunk::decode(&chunk_bytes) else {
            continue;
        };
        if chunk.seq != 0 {
            continue;
        }
        // field counts only need the header, present in chunk 0
        let Some(&field_count) = chunk.payload.get(2) else {
            continue;
        };
        let Ok(procedure) = wire::Procedure::from_code(chunk.payload[0]) else {
            continue;
        };
        let step = chunk.payload[1];
        if !matches!(
            procedure,
            Procedure::UploadGpk | Procedure::Delegate | Procedure::Execute | Procedure::ExecuteOtf
        ) {
            continue;
        }
        if !seen.insert((procedure, step)) {
            continue;
        }
        for field in 0..field_count as usize {
            strategies.push(Strategy::Mutate {
                procedure,
                step,
                target: MutationTarget::Field(field),
            });
        }
        strategies.push(Strategy::Mutate {
            procedure,
            step,
            target: MutationTarget::Auth,
        });
        strategies.push(Strategy::Replay { procedure, step });
        strategies.push(Strategy::Drop { procedure, step });
        if matches!(procedure, Procedure::Execute | Procedure::ExecuteOtf) {
            strategies.push(Strategy::Splice { procedure, step });
        }
    }
    strategies
}

#[derive(Debug, Clone)]
pub struct BatteryOutcome {
    pub strategy: String,
    pub report: SimReport,
    /// First safety violation found, if any.
    pub violation: Option<String>,
}

/// Check one finished run for safety violations.
fn check_safety(world: &World, report: &SimReport) -> Option<String> {
    if let Some(action) = report.unaccounted_executions.first() {
        return Some(format!(
            "car executed unrequested action {:?} {}",
            action.object,
            action.action.letter()
        ));
    }
    for action in &world.cast.car.executed {
        if action.object != HONEST_OBJECT {
            return Some(format!(
                "car executed {:?} but the honest user only requested {HONEST_OBJECT:?}",
                action.object
            ));
        }
    }
    // escalation check: every decision the policy engine saw used the
    // role carried by the verified credential
    for entry in &world.cast.car.audit {
        if entry.role != "Driver" {
            return Some(format!(
                "policy consulted role {:?}, credential said Driver",
                entry.role
            ));
        }
    }
    None
}

/// Run the full no-leak battery. Every outcome must be violation-free.
pub fn run_sweep(config: &WorldConfig, seed: u64) -> Vec<BatteryOutcome> {
    let script = sweep_script();
    enumerate_strategies(config, seed)
        .into_iter()
        .map(|strategy| {
            let label = strategy.label();
            let (world, report) = run_world(config, seed, strategy, &script);
            let violation = check_safety(&world, &report);
            BatteryOutcome {
                strategy: label,
                report,
                violation,
            }
        })
        .collect()
}

/// Run the leak battery: the forged exchange must be found.
pub fn run_leak(config: &WorldConfig, seed: u64) -> BatteryOutcome {
    let script = leak_script();
    let (world, report) = run_world(config, seed, Strategy::Passive, &script);
    let forged = ActionRequest::new(FORGED_OBJECT, Action::Execute);
    let violation = if report.attack_found
        && world.cast.car.executed.contains(&forged)
    {
        None
    } else {
        Some("forged exchange was not accepted".into())
    };
    BatteryOutcome {
        strategy: "leak-kses + forge-otf".into(),
        report,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupsig::GsBackend;

    fn test_config() -> WorldConfig {
        WorldConfig {
            gs_backend: GsBackend::Reference,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn honest_probe_completes_and_strategy_list_is_substantial() {
        let config = test_config();
        let strategies = enumerate_strategies(&config, 11);
        // every field of every open-channel step plus auth/replay/drop
        let mutations = strategies
            .iter()
            .filter(|s| matches!(s, Strategy::Mutate { .. }))
            .count();
        assert!(
            mutations >= 30,
            "expected a broad mutation battery, got {mutations}"
        );
        assert!(strategies
            .iter()
            .any(|s| matches!(s, Strategy::Splice { .. })));
    }

    #[test]
    fn sweep_finds_no_violation_without_key_leakage() {
        let config = test_config();
        let outcomes = run_sweep(&config, 12);
        for outcome in &outcomes {
            assert!(
                outcome.violation.is_none(),
                "strategy {} violated safety: {:?}",
                outcome.strategy,
                outcome.violation
            );
        }
    }

    #[test]
    fn leak_battery_finds_the_attack() {
        let config = test_config();
        let outcome = run_leak(&config, 13);
        assert!(outcome.violation.is_none(), "{:?}", outcome.violation);
        assert!(outcome.report.attack_found);
    }
}
