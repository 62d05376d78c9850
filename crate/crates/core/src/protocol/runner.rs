//! Direct drivers for whole procedure runs: every message is encoded,
//! chunked at the configured MTU, reassembled and decoded on its way
//! between the two engines, exactly as on a simulated channel but with
//! no adversary in between. Used by the unit tests and the loopback
//! benchmarks; the simulator drives the same engines frame by frame.

use crate::policy::AttributeValue;
use crate::wire::{self, Procedure, Timestamp, WireMessage};

use super::delegate::UserDelegate;
use super::execute::UserExecute;
use super::otf::UserOtf;
use super::parties::Cast;
use super::setup;
use super::upload::OwnerUpload;
use super::{
    abort, ActionRequest, EngineCtx, ProtocolError, RevocationTarget, RevokeError, TokenKind,
};

/// One transport hop: encode, chunk, reassemble, decode.
fn transfer(msg: &WireMessage, mtu: usize) -> Result<WireMessage, ProtocolError> {
    let bytes = wire::encode(msg)?;
    let chunks = wire::chunk(&bytes, mtu)?;
    let reassembled = wire::reassemble(&chunks)?;
    Ok(wire::decode(&reassembled)?)
}

/// Procedure I over the trusted factory channel.
pub fn run_setup(
    cast: &mut Cast,
    policy_doc: &str,
    ctx: &mut EngineCtx,
) -> Result<(), ProtocolError> {
    let mtu = cast.config.mtu;
    let msg = setup::build_setup(&cast.manufacturer, &cast.car.car_id, policy_doc, ctx);
    cast.car
        .handle_setup(&transfer(&msg, mtu)?, true, ctx)
        .map_err(|r| abort("car", Procedure::Setup, 1, r))
}

/// Procedure II over the trusted sales channel.
pub fn run_set_root(
    cast: &mut Cast,
    contract_start: Timestamp,
    ctx: &mut EngineCtx,
) -> Result<(), ProtocolError> {
    let mtu = cast.config.mtu;
    let m1 = setup::seller_request(
        &cast.seller,
        &cast.manufacturer.identity,
        &cast.car.car_id,
        ctx,
    );
    let m2 = cast
        .manufacturer
        .handle_seller_request(&transfer(&m1, mtu)?, ctx)
        .map_err(|r| abort("manufacturer", Procedure::SetRoot, 1, r))?;
    let m3 = setup::owner_record(&cast.owner, contract_start, ctx);
    let m4 = setup::seller_install(&cast.seller, &m3, &transfer(&m2, mtu)?, ctx)
        .map_err(|r| abort("seller", Procedure::SetRoot, 4, r))?;
    cast.car
        .handle_set_root(&transfer(&m4, mtu)?, true, ctx)
        .map_err(|r| abort("car", Procedure::SetRoot, 4, r))
}

/// Procedure III: upload one role's group public key.
pub fn run_upload_gpk(
    cast: &mut Cast,
    role: &str,
    ctx: &mut EngineCtx,
) -> Result<(), ProtocolError> {
    let mtu = cast.config.mtu;
    let gpk = cast.owner.role_gpk(role, ctx.rng);
    let gpk_bytes = crate::keyfile::save_group_public(&gpk);
    let (mut engine, m1) = OwnerUpload::start(
        &cast.owner,
        &cast.car.car_id.clone(),
        role,
        gpk_bytes,
        ctx.now,
        ctx,
    );
    let m2 = cast
        .car
        .handle_upload_open(&transfer(&m1, mtu)?, ctx)
        .map_err(|r| abort("car", Procedure::UploadGpk, 1, r))?;
    let m3 = engine
        .on_challenge(&cast.owner, &transfer(&m2, mtu)?, ctx)
        .map_err(|r| abort("owner", Procedure::UploadGpk, 2, r))?;
    let m4 = cast
        .car
        .handle_upload_install(&transfer(&m3, mtu)?, ctx)
        .map_err(|r| abort("car", Procedure::UploadGpk, 3, r))?;
    engine
        .on_confirm(&cast.owner, &transfer(&m4, mtu)?, ctx)
        .map_err(|r| abort("owner", Procedure::UploadGpk, 4, r))
}

/// Procedure IV: delegate a role to a user; on success the user holds
/// the token.
pub fn run_delegate(
    cast: &mut Cast,
    user_name: &str,
    kind: TokenKind,
    role: &str,
    attributes: &[AttributeValue],
    window: (Timestamp, Timestamp),
    ctx: &mut EngineCtx,
) -> Result<(), ProtocolError> {
    let mtu = cast.config.mtu;
    let (mut engine, m1) = UserDelegate::start(
        cast.user(user_name),
        kind,
        role,
        attributes,
        window.0,
        window.1,
        ctx,
    );
    let m2 = cast
        .owner
        .handle_delegate_request(&transfer(&m1, mtu)?, ctx)
        .map_err(|r| abort("owner", Procedure::Delegate, 1, r))?;
    let m3 = engine
        .on_token(cast.user(user_name), &transfer(&m2, mtu)?, ctx)
        .map_err(|r| abort("user", Procedure::Delegate, 2, r))?;
    let m4 = cast
        .owner
        .handle_delegate_receipt(&transfer(&m3, mtu)?, ctx)
        .map_err(|r| abort("owner", Procedure::Delegate, 3, r))?;
    let token = engine
        .on_key(cast.user(user_name), &transfer(&m4, mtu)?, ctx)
        .map_err(|r| abort("user", Procedure::Delegate, 4, r))?;
    cast.user_mut(user_name).token = Some(token);
    Ok(())
}

/// Procedure V: execute an action, establishing a session.
pub fn run_execute(
    cast: &mut Cast,
    user_name: &str,
    action: ActionRequest,
    claimed_attributes: &[AttributeValue],
    ctx: &mut EngineCtx,
) -> Result<ActionRequest, ProtocolError> {
    let mtu = cast.config.mtu;
    let (mut engine, m1) = UserExecute::start(cast.user(user_name), action, claimed_attributes, ctx)
        .map_err(|r| abort("user", Procedure::Execute, 1, r))?;
    let m2 = cast
        .car
        .handle_execute_request(&transfer(&m1, mtu)?, ctx)
        .map_err(|r| abort("car", Procedure::Execute, 1, r))?;
    let m3 = engine
        .on_challenge(cast.user_mut(user_name), &transfer(&m2, mtu)?, ctx)
        .map_err(|r| abort("user", Procedure::Execute, 2, r))?;
    cast.car
        .handle_execute_final(&transfer(&m3, mtu)?, ctx)
        .map_err(|r| abort("car", Procedure::Execute, 3, r))
}

/// Procedure VI: execute on-the-fly within an established session.
pub fn run_execute_otf(
    cast: &mut Cast,
    user_name: &str,
    action: ActionRequest,
    ctx: &mut EngineCtx,
) -> Result<ActionRequest, ProtocolError> {
    let mtu = cast.config.mtu;
    let (mut engine, m1) = UserOtf::start(cast.user(user_name), &action, ctx)
        .map_err(|r| abort("user", Procedure::ExecuteOtf, 1, r))?;
    let m2 = cast
        .car
        .handle_otf_request(&transfer(&m1, mtu)?, ctx)
        .map_err(|r| abort("car", Procedure::ExecuteOtf, 1, r))?;
    let m3 = engine
        .on_challenge(cast.user(user_name), &transfer(&m2, mtu)?, ctx)
        .map_err(|r| abort("user", Procedure::ExecuteOtf, 2, r))?;
    cast.car
        .handle_otf_final(&transfer(&m3, mtu)?, ctx)
        .map_err(|r| abort("car", Procedure::ExecuteOtf, 3, r))
}

/// Rights revocation by the root or the original delegator.
pub fn revoke(
    cast: &Cast,
    authority: &str,
    target: RevocationTarget,
    now: Timestamp,
) -> Result<(), RevokeError> {
    cast.revocations.write().unwrap().revoke(authority, target, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupsig::GsBackend;
    use crate::policy::{Action, FACTORY_POLICY};
    use crate::protocol::parties::{WorldConfig, OWNER_ROLE};
    use crate::protocol::{AbortReason, OpCounters};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const VIN: &str = "1HGCM82633A004352";

    struct Fixture {
        cast: Cast,
        rng: ChaCha20Rng,
        now: Timestamp,
        ops: OpCounters,
    }

    impl Fixture {
        fn new(seed: u64) -> Self {
            Fixture::with_config(seed, WorldConfig::default())
        }

        fn with_config(seed: u64, config: WorldConfig) -> Self {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let cast = Cast::new(config, VIN, &mut rng);
            Fixture {
                cast,
                rng,
                now: Timestamp(1_700_000_000),
                ops: OpCounters::default(),
            }
        }

        /// Run one operation with a context borrowing the fixture's RNG
        /// and op counters alongside the cast.
        fn run<R>(&mut self, op: impl FnOnce(&mut Cast, &mut EngineCtx) -> R) -> R {
            let mut ctx = EngineCtx {
                rng: &mut self.rng,
                now: self.now,
                ops: &mut self.ops,
            };
            op(&mut self.cast, &mut ctx)
        }

        /// Full provisioning: setup, root install, owner + driver keys.
        fn provision(&mut self) {
            self.run(|cast, ctx| {
                run_setup(cast, FACTORY_POLICY, ctx).unwrap();
                run_set_root(cast, ctx.now, ctx).unwrap();
                run_upload_gpk(cast, OWNER_ROLE, ctx).unwrap();
                run_upload_gpk(cast, "Driver", ctx).unwrap();
            })
        }

        fn delegate(&mut self, user: &str, kind: TokenKind, role: &str) {
            self.run(|cast, ctx| {
                run_delegate(
                    cast,
                    user,
                    kind,
                    role,
                    &[],
                    (Timestamp(0), Timestamp::INFINITY),
                    ctx,
                )
                .unwrap()
            })
        }
    }

    fn exec(object: &str) -> ActionRequest {
        ActionRequest::new(object, Action::Execute)
    }

    #[test]
    fn happy_path_persistent_driver() {
        let mut f = Fixture::new(1);
        f.cast.add_user("alice");
        f.provision();
        f.delegate("alice", TokenKind::Persistent, "Driver");
        let done = f
            .run(|cast, ctx| run_execute(cast, "alice", exec("Start Engine"), &[], ctx))
            .unwrap();
        assert_eq!(done.object, "Start Engine");
        assert_eq!(f.cast.car.sessions.len(), 1);

        let otf = f
            .run(|cast, ctx| run_execute_otf(cast, "alice", exec("Open Doors"), ctx))
            .unwrap();
        assert_eq!(otf.object, "Open Doors");
        assert_eq!(
            f.cast.car.executed,
            vec![exec("Start Engine"), exec("Open Doors")]
        );
    }

    #[test]
    fn otf_leg_uses_zero_asymmetric_operations() {
        let mut f = Fixture::new(2);
        f.cast.add_user("alice");
        f.provision();
        f.delegate("alice", TokenKind::Persistent, "Driver");
        f.run(|cast, ctx| run_execute(cast, "alice", exec("Open Doors"), &[], ctx))
            .unwrap();
        let before = f.ops;
        f.run(|cast, ctx| run_execute_otf(cast, "alice", exec("Open Doors"), ctx))
            .unwrap();
        assert_eq!(
            f.ops.asymmetric_total(),
            before.asymmetric_total(),
            "on-the-fly leg must be symmetric only"
        );
        assert!(f.ops.asymmetric_total() > 0, "execute leg was asymmetric");
    }

    #[test]
    fn ephemeral_delegation_and_execution_with_dh() {
        let mut f = Fixture::with_config(
            3,
            WorldConfig {
                cipher: crate::protocol::SessionCipher::Dh,
                ..WorldConfig::default()
            },
        );
        f.cast.add_user("bob");
        f.provision();
        f.run(|cast, ctx| {
            run_delegate(
                cast,
                "bob",
                TokenKind::Ephemeral,
                "Valet",
                &[],
                (Timestamp(1_699_999_000), Timestamp(1_800_000_000)),
                ctx,
            )
            .unwrap();
            run_upload_gpk(cast, "Valet", ctx).unwrap();
            run_execute(cast, "bob", exec("Park car"), &[], ctx).unwrap();
        });
        assert_eq!(f.cast.car.executed.len(), 1);
    }

    #[test]
    fn policy_denied_action_never_executes() {
        let mut f = Fixture::new(4);
        f.cast.add_user("kid");
        f.provision();
        f.run(|cast, ctx| run_upload_gpk(cast, "ChildOccupant", ctx))
            .unwrap();
        f.delegate("kid", TokenKind::Persistent, "ChildOccupant");
        let err = f
            .run(|cast, ctx| run_execute(cast, "kid", exec("Start Engine"), &[], ctx))
            .unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Abort {
                reason: AbortReason::PolicyDeny(_),
                ..
            }
        ));
        assert!(f.cast.car.executed.is_empty());
        assert!(f.cast.car.sessions.is_empty(), "no session on deny");
    }

    #[test]
    fn expired_ephemeral_window_aborts() {
        let mut f = Fixture::new(5);
        f.cast.add_user("visitor");
        f.provision();
        f.run(|cast, ctx| {
            run_delegate(
                cast,
                "visitor",
                TokenKind::Ephemeral,
                "Driver",
                &[],
                (Timestamp(1_700_000_000), Timestamp(1_700_000_500)),
                ctx,
            )
        })
        .unwrap();
        // advance past the window
        f.now = Timestamp(1_700_001_000);
        let err = f
            .run(|cast, ctx| run_execute(cast, "visitor", exec("Open Doors"), &[], ctx))
            .unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Abort {
                reason: AbortReason::WindowExpired,
                ..
            }
        ));
    }

    #[test]
    fn second_setup_and_second_set_root_are_rejected() {
        let mut f = Fixture::new(6);
        f.provision();
        let err = f
            .run(|cast, ctx| run_setup(cast, FACTORY_POLICY, ctx))
            .unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Abort {
                reason: AbortReason::AlreadySetUp,
                ..
            }
        ));
        let err = f
            .run(|cast, ctx| run_set_root(cast, ctx.now, ctx))
            .unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Abort {
                reason: AbortReason::OwnerAlreadySet,
                ..
            }
        ));
    }

    #[test]
    fn upload_by_non_owner_identity_aborts() {
        let mut f = Fixture::new(7);
        f.provision();
        // a technician identity attempts the upload
        let mut impostor = crate::protocol::parties::OwnerState::new(
            "PsU-technician",
            f.cast.manufacturer.issue("PsU-technician"),
            f.cast.config.cipher,
            GsBackend::Reference,
            4,
            f.cast.directory.clone(),
            f.cast.revocations.clone(),
        );
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let mut ops = OpCounters::default();
        let mut ctx = EngineCtx {
            rng: &mut rng,
            now: f.now,
            ops: &mut ops,
        };
        let gpk = impostor.role_gpk("Driver", ctx.rng);
        let (_engine, m1) = OwnerUpload::start(
            &impostor,
            &f.cast.car.car_id.clone(),
            "Driver",
            crate::keyfile::save_group_public(&gpk),
            ctx.now,
            &mut ctx,
        );
        let err = f.cast.car.handle_upload_open(&m1, &mut ctx).unwrap_err();
        assert_eq!(err, AbortReason::NotOwner);
    }

    #[test]
    fn owner_traces_the_execute_signature_to_the_member() {
        let mut f = Fixture::new(8);
        f.cast.add_user("alice");
        f.cast.add_user("carol");
        f.provision();
        f.delegate("alice", TokenKind::Persistent, "Driver");
        f.delegate("carol", TokenKind::Persistent, "Driver");
        // drive step 1 manually to capture the group-signed request
        let m1 = f.run(|cast, ctx| {
            let (_, m1) =
                UserExecute::start(cast.user("carol"), exec("Open Doors"), &[], ctx).unwrap();
            m1
        });
        let crate::wire::AuthSlot::Group(sig) = &m1.auth else {
            panic!("persistent request must be group signed");
        };
        let index = f
            .cast
            .owner
            .trace_role_signature(
                "Driver",
                &m1.signing_bytes(),
                &crate::groupsig::GroupSignature::from_bytes(sig),
            )
            .unwrap();
        // alice got member 1, carol member 2
        assert_eq!(index, 2);
    }

    #[test]
    fn revoked_token_and_pseudonym_are_denied_at_execute() {
        let mut f = Fixture::new(9);
        f.cast.add_user("mallory");
        f.provision();
        f.delegate("mallory", TokenKind::Ephemeral, "Driver");
        // works before revocation
        f.run(|cast, ctx| run_execute(cast, "mallory", exec("Open Doors"), &[], ctx))
            .unwrap();

        let digest = f.cast.user("mallory").token.as_ref().unwrap().digest().unwrap();
        revoke(
            &f.cast,
            "PsO-root",
            RevocationTarget::TokenDigest(digest),
            f.now,
        )
        .unwrap();
        let err = f
            .run(|cast, ctx| run_execute(cast, "mallory", exec("Open Doors"), &[], ctx))
            .unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Abort {
                reason: AbortReason::Revoked,
                ..
            }
        ));

        // revoking the pseudonym instead behaves the same
        let mut f = Fixture::new(10);
        f.cast.add_user("mallory");
        f.provision();
        f.delegate("mallory", TokenKind::Ephemeral, "Driver");
        revoke(
            &f.cast,
            "PsO-root",
            RevocationTarget::Pseudonym("PsU-mallory".into()),
            f.now,
        )
        .unwrap();
        let err = f
            .run(|cast, ctx| run_execute(cast, "mallory", exec("Open Doors"), &[], ctx))
            .unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Abort {
                reason: AbortReason::Revoked,
                ..
            }
        ));
    }

    #[test]
    fn unauthorized_revoker_is_rejected() {
        let mut f = Fixture::new(11);
        f.cast.add_user("driver");
        f.provision();
        f.delegate("driver", TokenKind::Ephemeral, "Driver");
        let err = revoke(
            &f.cast,
            "PsU-passenger",
            RevocationTarget::Pseudonym("PsU-driver".into()),
            f.now,
        )
        .unwrap_err();
        assert!(matches!(err, RevokeError::Unauthorized(_)));
    }

    #[test]
    fn delegator_may_revoke_their_own_delegate() {
        let mut f = Fixture::new(15);
        f.cast.add_user("temp");
        f.provision();
        f.delegate("temp", TokenKind::Ephemeral, "Driver");
        // the owner is both root and delegator here; the registry path
        // is exercised by revoking under the delegator rule with the
        // root name removed
        f.cast.revocations.write().unwrap().set_root("someone-else");
        revoke(
            &f.cast,
            "PsO-root",
            RevocationTarget::Pseudonym("PsU-temp".into()),
            f.now,
        )
        .expect("delegator may revoke own delegate");
    }

    #[test]
    fn dropped_key_release_leaves_receipt_but_no_token() {
        let mut f = Fixture::new(12);
        f.cast.add_user("victim");
        f.provision();
        let state = f.run(|cast, ctx| {
            let (mut engine, m1) = UserDelegate::start(
                cast.user("victim"),
                TokenKind::Persistent,
                "Driver",
                &[],
                Timestamp(0),
                Timestamp::INFINITY,
                ctx,
            );
            let m2 = cast.owner.handle_delegate_request(&m1, ctx).unwrap();
            let m3 = engine.on_token(cast.user("victim"), &m2, ctx).unwrap();
            let _m4_dropped = cast.owner.handle_delegate_receipt(&m3, ctx).unwrap();
            engine.state()
        });
        // the adversary suppressed the key release: the user holds only
        // ciphertext, the owner already holds the signed receipt
        assert!(f.cast.user("victim").token.is_none());
        assert_eq!(f.cast.owner.receipts.len(), 1);
        assert_eq!(f.cast.owner.receipts[0].user_pseudonym, "PsU-victim");
        assert_ne!(state, crate::protocol::delegate::UserDelegateState::Done);
    }

    #[test]
    fn session_expiry_blocks_on_the_fly() {
        let mut f = Fixture::new(13);
        f.cast.add_user("alice");
        f.provision();
        f.delegate("alice", TokenKind::Persistent, "Driver");
        f.run(|cast, ctx| run_execute(cast, "alice", exec("Open Doors"), &[], ctx))
            .unwrap();
        // jump past the session lifetime
        f.now = Timestamp(f.now.0 + f.cast.config.session_lifetime);
        let err = f
            .run(|cast, ctx| run_execute_otf(cast, "alice", exec("Open Doors"), ctx))
            .unwrap_err();
        assert!(matches!(
            err,
            ProtocolError::Abort {
                reason: AbortReason::SessionExpired | AbortReason::StaleTimestamp,
                ..
            }
        ));
    }

    #[test]
    fn state_machines_have_the_documented_shape() {
        use crate::protocol::delegate::UserDelegateState;
        use crate::protocol::execute::UserExecuteState;
        use crate::protocol::otf::UserOtfState;
        // three states for execute and on-the-fly, four for delegation
        assert_eq!(UserExecuteState::COUNT, 3);
        assert_eq!(UserOtfState::COUNT, 3);
        assert_eq!(UserDelegateState::COUNT, 4);
        let exec_states = [
            UserExecuteState::Start,
            UserExecuteState::AwaitChallenge,
            UserExecuteState::Done,
        ];
        assert!(exec_states.iter().enumerate().all(|(i, s)| s.index() == i));
        let otf_states = [
            UserOtfState::Start,
            UserOtfState::AwaitChallenge,
            UserOtfState::Done,
        ];
        assert!(otf_states.iter().enumerate().all(|(i, s)| s.index() == i));
        let delegate_states = [
            UserDelegateState::Start,
            UserDelegateState::AwaitToken,
            UserDelegateState::AwaitKey,
            UserDelegateState::Done,
        ];
        assert!(delegate_states
            .iter()
            .enumerate()
            .all(|(i, s)| s.index() == i));
    }

    #[test]
    fn stale_timestamp_aborts_the_upload() {
        let mut f = Fixture::new(14);
        f.provision();
        // owner clock is 10 minutes ahead of the car
        f.now = Timestamp(f.now.0 + 600);
        let m1 = f.run(|cast, ctx| {
            let gpk = cast.owner.role_gpk("Valet", ctx.rng);
            let (_engine, m1) = OwnerUpload::start(
                &cast.owner,
                &cast.car.car_id.clone(),
                "Valet",
                crate::keyfile::save_group_public(&gpk),
                ctx.now,
                ctx,
            );
            m1
        });
        f.now = Timestamp(f.now.0 - 600);
        let err = f
            .run(|cast, ctx| cast.car.handle_upload_open(&m1, ctx))
            .unwrap_err();
        assert_eq!(err, AbortReason::StaleTimestamp);
    }
}
