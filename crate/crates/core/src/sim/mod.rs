//! Deterministic actor simulator with an adversarial network.
//!
//! A discrete-tick event loop hosts the manufacturer, seller, owner,
//! car and user actors. Frames on untrusted channels pass through the
//! adversary, which can observe, drop, replay, mutate, splice and
//! inject according to its strategy; trusted channels (factory and
//! sales floor) bypass it. One frame is delivered per tick, actor
//! clocks derive from the tick counter plus per-actor offsets, and all
//! randomness comes from the single seeded world RNG, so equal seed and
//! scenario reproduce bit-identical transcripts.

pub mod adversary;
pub mod battery;
pub mod scenario;

use std::collections::{BTreeMap, VecDeque};

use rand_chacha::ChaCha20Rng;

use crate::policy::AttributeValue;
use crate::protocol::delegate::UserDelegate;
use crate::protocol::execute::UserExecute;
use crate::protocol::otf::UserOtf;
use crate::protocol::upload::OwnerUpload;
use crate::protocol::{
    setup, AbortReason, ActionRequest, Cast, EngineCtx, OpCounters, RevocationTarget, TokenKind,
    WorldConfig,
};

/// Revocation target named in a script; token digests are resolved
/// against the user's current token at run time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RevokeTargetSpec {
    Pseudonym(String),
    TokenOfUser(String),
}
use crate::wire::{self, Procedure, Timestamp, WireMessage};

use adversary::{Adversary, Strategy};

/// Base of the simulated wall clock.
pub const CLOCK_EPOCH: u64 = 1_700_000_000;

/// Canonical actor names used in transcripts and scenarios.
pub mod names {
    pub const MANUFACTURER: &str = "man";
    pub const SELLER: &str = "sel";
    pub const OWNER: &str = "own";
    pub const CAR: &str = "car";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSpec {
    pub mtu: usize,
    pub trusted: bool,
    pub latency: u64,
}

/// One in-flight frame: a whole encoded message (chunking happens at
/// the transcript level, reassembly is implicit on delivery).
#[derive(Debug, Clone)]
struct Frame {
    from: String,
    to: String,
    bytes: Vec<u8>,
    deliver_at: u64,
    injected: bool,
}

/// A script step; phases run strictly one after another.
#[derive(Debug, Clone)]
pub enum Phase {
    Setup,
    SetRoot,
    UploadGpk { role: String },
    Delegate {
        user: String,
        kind: TokenKind,
        role: String,
        attributes: Vec<AttributeValue>,
        window: (Timestamp, Timestamp),
    },
    Execute {
        user: String,
        action: ActionRequest,
        attributes: Vec<AttributeValue>,
    },
    ExecuteOtf {
        user: String,
        action: ActionRequest,
    },
    /// Hand the user's current session key to the adversary.
    LeakSessionKey { user: String },
    /// The adversary forges a full on-the-fly exchange.
    ForgeOtf { action: ActionRequest },
    Revoke {
        authority: String,
        target: RevokeTargetSpec,
    },
    AdvanceClock { seconds: u64 },
}

impl Phase {
    pub fn label(&self) -> String {
        match self {
            Phase::Setup => "setup".into(),
            Phase::SetRoot => "set-root".into(),
            Phase::UploadGpk { role } => format!("upload-gpk {role}"),
            Phase::Delegate { user, kind, role, .. } => {
                format!("delegate {} {user} {role}", kind.name())
            }
            Phase::Execute { user, action, .. } => {
                format!("execute {user} {:?}", action.object)
            }
            Phase::ExecuteOtf { user, action } => {
                format!("execute-otf {user} {:?}", action.object)
            }
            Phase::LeakSessionKey { user } => format!("leak-kses {user}"),
            Phase::ForgeOtf { action } => format!("forge-otf {:?}", action.object),
            Phase::Revoke { .. } => "revoke".into(),
            Phase::AdvanceClock { seconds } => format!("advance-clock {seconds}"),
        }
    }

    /// Honest action requests contributed by this phase.
    fn honest_action(&self) -> Option<&ActionRequest> {
        match self {
            Phase::Execute { action, .. } | Phase::ExecuteOtf { action, .. } => Some(action),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseOutcome {
    pub label: String,
    pub completed: bool,
    /// Car-side abort codes recorded during the phase.
    pub aborts: Vec<String>,
    /// Asymmetric operations spent during the phase.
    pub asymmetric_ops: u64,
}

/// Final report of one simulation run.
#[derive(Debug, Clone)]
pub struct SimReport {
    pub phases: Vec<PhaseOutcome>,
    pub executed: Vec<ActionRequest>,
    /// Actions executed beyond the completed honest requests.
    pub unaccounted_executions: Vec<ActionRequest>,
    pub attack_found: bool,
}

pub struct World {
    pub cast: Cast,
    pub adversary: Adversary,
    channels: BTreeMap<(String, String), ChannelSpec>,
    clock_offsets: BTreeMap<String, i64>,
    clock_base: u64,
    tick: u64,
    queue: VecDeque<Frame>,
    rng: ChaCha20Rng,
    pub ops: OpCounters,
    transcript: Vec<String>,
    phase_outcomes: Vec<PhaseOutcome>,
    honest_completed: Vec<ActionRequest>,
}

impl World {
    pub fn new(config: WorldConfig, car_vin: &str, seed: u64, strategy: Strategy) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cast = Cast::new(config, car_vin, &mut rng);
        World {
            cast,
            adversary: Adversary::new(strategy),
            channels: BTreeMap::new(),
            clock_offsets: BTreeMap::new(),
            clock_base: CLOCK_EPOCH,
            tick: 0,
            queue: VecDeque::new(),
            rng,
            ops: OpCounters::default(),
            transcript: Vec::new(),
            phase_outcomes: Vec::new(),
            honest_completed: Vec::new(),
        }
    }

    pub fn add_user(&mut self, name: &str) {
        self.cast.add_user(name);
    }

    pub fn set_channel(&mut self, a: &str, b: &str, spec: ChannelSpec) {
        self.channels.insert(channel_key(a, b), spec);
    }

    pub fn set_clock_offset(&mut self, actor: &str, offset: i64) {
        self.clock_offsets.insert(actor.to_string(), offset);
    }

    fn channel(&self, a: &str, b: &str) -> ChannelSpec {
        if let Some(spec) = self.channels.get(&channel_key(a, b)) {
            return *spec;
        }
        // factory and sales-floor relationships are trusted by default;
        // every other channel routes through the adversary
        let key = channel_key(a, b);
        let trusted = [
            ("car", "man"),
            ("car", "sel"),
            ("man", "sel"),
            ("own", "sel"),
        ]
        .iter()
        .any(|(x, y)| key.0 == *x && key.1 == *y);
        ChannelSpec {
            mtu: self.cast.config.mtu,
            trusted,
            latency: 1,
        }
    }

    fn actor_now(&self, actor: &str) -> Timestamp {
        let offset = self.clock_offsets.get(actor).copied().unwrap_or(0);
        Timestamp((self.clock_base + self.tick).saturating_add_signed(offset))
    }

    fn log(&mut self, line: String) {
        self.transcript.push(line);
    }

    /// Queue a message; the transcript records its chunked frames.
    fn send(&mut self, from: &str, to: &str, msg: &WireMessage) {
        let bytes = match wire::encode(msg) {
            Ok(bytes) => bytes,
            Err(err) => {
                self.log(format!("[t={:04}] {from}->{to} encode-error {err}", self.tick));
                return;
            }
        };
        self.send_raw(from, to, bytes, false);
    }

    fn send_raw(&mut self, from: &str, to: &str, bytes: Vec<u8>, injected: bool) {
        let channel = self.channel(from, to);
        let chunks = wire::chunk(&bytes, channel.mtu).expect("mtu validated at configuration");
        let kind = if channel.trusted { "trusted" } else { "untrusted" };
        let note = if injected { " injected" } else { "" };
        for chunk in &chunks {
            self.transcript.push(format!(
                "[t={:04}] {from}->{to} {kind} {}/{}{note} {}",
                self.tick,
                chunk.seq + 1,
                chunk.total,
                hex::encode(chunk.encode()),
            ));
        }
        self.queue.push_back(Frame {
            from: from.to_string(),
            to: to.to_string(),
            bytes,
            deliver_at: self.tick + channel.latency,
            injected,
        });
    }

    /// Drain the queue, routing untrusted frames through the adversary.
    fn pump(&mut self) {
        while let Some(frame) = self.queue.pop_front() {
            if frame.deliver_at > self.tick {
                self.tick = frame.deliver_at;
            }
            let channel = self.channel(&frame.from, &frame.to);
            let deliveries = if channel.trusted {
                vec![frame.clone()]
            } else {
                let now = self.tick;
                let verdicts =
                    self.adversary
                        .process(&frame.bytes, &frame.from, &frame.to, &mut self.rng);
                let mut out = Vec::new();
                for directive in verdicts {
                    match directive {
                        adversary::Directive::Deliver(bytes) => {
                            if bytes != frame.bytes {
                                self.transcript.push(format!(
                                    "[t={now:04}] adversary mutates {}->{}",
                                    frame.from, frame.to
                                ));
                            }
                            out.push(Frame {
                                bytes,
                                ..frame.clone()
                            });
                        }
                        adversary::Directive::Drop => {
                            self.transcript.push(format!(
                                "[t={now:04}] adversary drops {}->{}",
                                frame.from, frame.to
                            ));
                        }
                        adversary::Directive::InjectLater {
                            bytes,
                            delay,
                            from,
                            to,
                        } => {
                            self.transcript.push(format!(
                                "[t={now:04}] adversary schedules injection to {to}"
                            ));
                            self.queue.push_back(Frame {
                                from,
                                to,
                                bytes,
                                deliver_at: now + delay,
                                injected: true,
                            });
                        }
                    }
                }
                out
            };
            for delivery in deliveries {
                self.deliver(delivery);
            }
        }
    }

    /// Dispatch one frame to its destination actor.
    fn deliver(&mut self, frame: Frame) {
        if frame.injected {
            self.log(format!(
                "[t={:04}] delivering injected frame to {}",
                self.tick, frame.to
            ));
        }
        let msg = match wire::decode(&frame.bytes) {
            Ok(msg) => msg,
            Err(err) => {
                self.log(format!(
                    "[t={:04}] {} rejects undecodable frame: {err}",
                    self.tick, frame.to
                ));
                return;
            }
        };
        let trusted = self.channel(&frame.from, &frame.to).trusted;
        let now = self.actor_now(&frame.to);
        let World {
            cast, rng, ops, ..
        } = self;
        let mut ctx = EngineCtx { rng, now, ops };
        let mut replies: Vec<(String, String, WireMessage)> = Vec::new();
        let mut notes: Vec<String> = Vec::new();

        match frame.to.as_str() {
            names::CAR => {
                let result: Result<Option<WireMessage>, AbortReason> =
                    match (msg.procedure, msg.step) {
                        (Procedure::Setup, 1) => {
                            cast.car.handle_setup(&msg, trusted, &mut ctx).map(|_| None)
                        }
                        (Procedure::SetRoot, 4) => cast
                            .car
                            .handle_set_root(&msg, trusted, &mut ctx)
                            .map(|_| None),
                        (Procedure::UploadGpk, 1) => {
                            cast.car.handle_upload_open(&msg, &mut ctx).map(Some)
                        }
                        (Procedure::UploadGpk, 3) => {
                            cast.car.handle_upload_install(&msg, &mut ctx).map(Some)
                        }
                        (Procedure::Execute, 1) => {
                            cast.car.handle_execute_request(&msg, &mut ctx).map(Some)
                        }
                        (Procedure::Execute, 3) => cast
                            .car
                            .handle_execute_final(&msg, &mut ctx)
                            .map(|done| {
                                notes.push(format!("car executes {:?} {}", done.object, done.action.letter()));
                                None
                            }),
                        (Procedure::ExecuteOtf, 1) => {
                            cast.car.handle_otf_request(&msg, &mut ctx).map(Some)
                        }
                        (Procedure::ExecuteOtf, 3) => cast
                            .car
                            .handle_otf_final(&msg, &mut ctx)
                            .map(|done| {
                                notes.push(format!("car executes {:?} {}", done.object, done.action.letter()));
                                None
                            }),
                        _ => Err(cast.car.record_abort(
                            msg.procedure,
                            msg.step,
                            AbortReason::UnexpectedStep,
                        )),
                    };
                match result {
                    Ok(Some(reply)) => replies.push(("car".into(), frame.from.clone(), reply)),
                    Ok(None) => {}
                    Err(reason) => notes.push(format!("car aborts: {}", reason.code())),
                }
            }
            names::MANUFACTURER => match (msg.procedure, msg.step) {
                (Procedure::SetRoot, 1) => {
                    match cast.manufacturer.handle_seller_request(&msg, &mut ctx) {
                        Ok(reply) => replies.push((
                            names::MANUFACTURER.into(),
                            frame.from.clone(),
                            reply,
                        )),
                        Err(reason) => notes.push(format!("man aborts: {}", reason.code())),
                    }
                }
                _ => notes.push("man ignores frame".into()),
            },
            names::SELLER => match (msg.procedure, msg.step) {
                (Procedure::SetRoot, 2) => {
                    cast.seller.pending_authorization = Some(frame.bytes.clone());
                    if let Some(owner_msg) = cast.seller.pending_owner.clone() {
                        match setup::seller_install(&cast.seller, &owner_msg, &msg, &mut ctx) {
                            Ok(install) => replies.push((
                                names::SELLER.into(),
                                names::CAR.into(),
                                install,
                            )),
                            Err(reason) => notes.push(format!("sel aborts: {}", reason.code())),
                        }
                    }
                }
                (Procedure::SetRoot, 3) => {
                    cast.seller.pending_owner = Some(msg.clone());
                    if let Some(auth_bytes) = cast.seller.pending_authorization.clone() {
                        if let Ok(auth_msg) = wire::decode(&auth_bytes) {
                            match setup::seller_install(&cast.seller, &msg, &auth_msg, &mut ctx) {
                                Ok(install) => replies.push((
                                    names::SELLER.into(),
                                    names::CAR.into(),
                                    install,
                                )),
                                Err(reason) => {
                                    notes.push(format!("sel aborts: {}", reason.code()))
                                }
                            }
                        }
                    }
                }
                _ => notes.push("sel ignores frame".into()),
            },
            names::OWNER => match (msg.procedure, msg.step) {
                (Procedure::Delegate, 1) => {
                    match cast.owner.handle_delegate_request(&msg, &mut ctx) {
                        Ok(reply) => {
                            replies.push((names::OWNER.into(), frame.from.clone(), reply))
                        }
                        Err(reason) => notes.push(format!("own aborts: {}", reason.code())),
                    }
                }
                (Procedure::Delegate, 3) => {
                    match cast.owner.handle_delegate_receipt(&msg, &mut ctx) {
                        Ok(reply) => {
                            replies.push((names::OWNER.into(), frame.from.clone(), reply))
                        }
                        Err(reason) => notes.push(format!("own aborts: {}", reason.code())),
                    }
                }
                (Procedure::UploadGpk, 2) => {
                    let mut engine = cast.owner.upload_session.take();
                    match engine
                        .as_mut()
                        .ok_or(AbortReason::UnexpectedStep)
                        .and_then(|e| e.on_challenge(&cast.owner, &msg, &mut ctx))
                    {
                        Ok(reply) => {
                            cast.owner.upload_session = engine;
                            replies.push((names::OWNER.into(), frame.from.clone(), reply));
                        }
                        Err(reason) => notes.push(format!("own aborts: {}", reason.code())),
                    }
                }
                (Procedure::UploadGpk, 4) => {
                    let mut engine = cast.owner.upload_session.take();
                    match engine
                        .as_mut()
                        .ok_or(AbortReason::UnexpectedStep)
                        .and_then(|e| e.on_confirm(&cast.owner, &msg, &mut ctx))
                    {
                        Ok(()) => notes.push("own upload confirmed".into()),
                        Err(reason) => notes.push(format!("own aborts: {}", reason.code())),
                    }
                }
                _ => notes.push("own ignores frame".into()),
            },
            user_name => {
                if !cast.users.contains_key(user_name) {
                    notes.push(format!("unknown actor {user_name}"));
                } else {
                    match (msg.procedure, msg.step) {
                        (Procedure::Delegate, 2) => {
                            let mut engine = cast.user_mut(user_name).delegate_session.take();
                            let user = cast.user(user_name);
                            match engine
                                .as_mut()
                                .ok_or(AbortReason::UnexpectedStep)
                                .and_then(|e| e.on_token(user, &msg, &mut ctx))
                            {
                                Ok(reply) => {
                                    cast.user_mut(user_name).delegate_session = engine;
                                    replies.push((
                                        user_name.to_string(),
                                        frame.from.clone(),
                                        reply,
                                    ));
                                }
                                Err(reason) => {
                                    notes.push(format!("{user_name} aborts: {}", reason.code()))
                                }
                            }
                        }
                        (Procedure::Delegate, 4) => {
                            let mut engine = cast.user_mut(user_name).delegate_session.take();
                            let user = cast.user(user_name);
                            match engine
                                .as_mut()
                                .ok_or(AbortReason::UnexpectedStep)
                                .and_then(|e| e.on_key(user, &msg, &mut ctx))
                            {
                                Ok(token) => {
                                    cast.user_mut(user_name).token = Some(token);
                                    notes.push(format!("{user_name} holds token"));
                                }
                                Err(reason) => {
                                    notes.push(format!("{user_name} aborts: {}", reason.code()))
                                }
                            }
                        }
                        (Procedure::Execute, 2) => {
                            let mut engine = cast.user_mut(user_name).exec_session.take();
                            match engine.as_mut().ok_or(AbortReason::UnexpectedStep).and_then(
                                |e| e.on_challenge(cast.user_mut(user_name), &msg, &mut ctx),
                            ) {
                                Ok(reply) => {
                                    cast.user_mut(user_name).exec_session = engine;
                                    replies.push((
                                        user_name.to_string(),
                                        frame.from.clone(),
                                        reply,
                                    ));
                                }
                                Err(reason) => {
                                    notes.push(format!("{user_name} aborts: {}", reason.code()))
                                }
                            }
                        }
                        (Procedure::ExecuteOtf, 2) => {
                            let mut engine = cast.user_mut(user_name).otf_session.take();
                            let user = cast.user(user_name);
                            match engine
                                .as_mut()
                                .ok_or(AbortReason::UnexpectedStep)
                                .and_then(|e| e.on_challenge(user, &msg, &mut ctx))
                            {
                                Ok(reply) => {
                                    cast.user_mut(user_name).otf_session = engine;
                                    replies.push((
                                        user_name.to_string(),
                                        frame.from.clone(),
                                        reply,
                                    ));
                                }
                                Err(reason) => {
                                    notes.push(format!("{user_name} aborts: {}", reason.code()))
                                }
                            }
                        }
                        _ => notes.push(format!("{user_name} ignores frame")),
                    }
                }
            }
        }

        for note in notes {
            let tick = self.tick;
            self.log(format!("[t={tick:04}] {note}"));
        }
        for (from, to, reply) in replies {
            self.send(&from, &to, &reply);
        }
    }

    /// Run one phase to quiescence and record its outcome.
    pub fn run_phase(&mut self, phase: &Phase) {
        let aborts_before = self.cast.car.aborts.len();
        let executed_before = self.cast.car.executed.len();
        let ops_before = self.ops.asymmetric_total();
        let label = phase.label();
        self.log(format!("[t={:04}] -- phase: {label}", self.tick));

        match phase {
            Phase::Setup => {
                let now = self.actor_now(names::MANUFACTURER);
                let World { cast, rng, ops, .. } = self;
                let mut ctx = EngineCtx { rng, now, ops };
                let msg = setup::build_setup(
                    &cast.manufacturer,
                    &cast.car.car_id.clone(),
                    crate::policy::FACTORY_POLICY,
                    &mut ctx,
                );
                self.send(names::MANUFACTURER, names::CAR, &msg);
            }
            Phase::SetRoot => {
                let now = self.actor_now(names::SELLER);
                let World { cast, rng, ops, .. } = self;
                let mut ctx = EngineCtx { rng, now, ops };
                let m1 = setup::seller_request(
                    &cast.seller,
                    &cast.manufacturer.identity.clone(),
                    &cast.car.car_id.clone(),
                    &mut ctx,
                );
                let m3 = setup::owner_record(&cast.owner, ctx.now, &mut ctx);
                self.send(names::SELLER, names::MANUFACTURER, &m1);
                self.send(names::OWNER, names::SELLER, &m3);
            }
            Phase::UploadGpk { role } => {
                let now = self.actor_now(names::OWNER);
                let World { cast, rng, ops, .. } = self;
                let mut ctx = EngineCtx { rng, now, ops };
                let gpk = cast.owner.role_gpk(role, ctx.rng);
                let gpk_bytes = crate::keyfile::save_group_public(&gpk);
                let (engine, m1) = OwnerUpload::start(
                    &cast.owner,
                    &cast.car.car_id.clone(),
                    role,
                    gpk_bytes,
                    ctx.now,
                    &mut ctx,
                );
                cast.owner.upload_session = Some(engine);
                self.send(names::OWNER, names::CAR, &m1);
            }
            Phase::Delegate {
                user,
                kind,
                role,
                attributes,
                window,
            } => {
                let now = self.actor_now(user);
                let World { cast, rng, ops, .. } = self;
                let mut ctx = EngineCtx { rng, now, ops };
                let (engine, m1) = UserDelegate::start(
                    cast.user(user),
                    *kind,
                    role,
                    attributes,
                    window.0,
                    window.1,
                    &mut ctx,
                );
                cast.user_mut(user).delegate_session = Some(engine);
                self.send(user, names::OWNER, &m1);
            }
            Phase::Execute {
                user,
                action,
                attributes,
            } => {
                let now = self.actor_now(user);
                let World { cast, rng, ops, .. } = self;
                let mut ctx = EngineCtx { rng, now, ops };
                match UserExecute::start(cast.user(user), action.clone(), attributes, &mut ctx) {
                    Ok((engine, m1)) => {
                        cast.user_mut(user).exec_session = Some(engine);
                        self.send(user, names::CAR, &m1);
                    }
                    Err(reason) => {
                        let tick = self.tick;
                        self.log(format!("[t={tick:04}] {user} cannot start: {}", reason.code()));
                    }
                }
            }
            Phase::ExecuteOtf { user, action } => {
                let now = self.actor_now(user);
                let World { cast, rng, ops, .. } = self;
                let mut ctx = EngineCtx { rng, now, ops };
                match UserOtf::start(cast.user(user), action, &mut ctx) {
                    Ok((engine, m1)) => {
                        cast.user_mut(user).otf_session = Some(engine);
                        self.send(user, names::CAR, &m1);
                    }
                    Err(reason) => {
                        let tick = self.tick;
                        self.log(format!("[t={tick:04}] {user} cannot start: {}", reason.code()));
                    }
                }
            }
            Phase::LeakSessionKey { user } => {
                if let Some(session) = &self.cast.user(user).session {
                    let sid = session.sid;
                    let key = session.key.clone();
                    self.adversary.leak_session(sid, key);
                    let tick = self.tick;
                    self.log(format!("[t={tick:04}] adversary learns session key of {user}"));
                }
            }
            Phase::ForgeOtf { action } => {
                let frames = self.adversary.forge_otf(action, &mut self.rng, Timestamp(self.clock_base + self.tick));
                for bytes in frames {
                    self.send_raw("adv", names::CAR, bytes, true);
                }
            }
            Phase::Revoke { authority, target } => {
                let now = self.actor_now(names::OWNER);
                let resolved = match target {
                    RevokeTargetSpec::Pseudonym(p) => {
                        Some(RevocationTarget::Pseudonym(p.clone()))
                    }
                    RevokeTargetSpec::TokenOfUser(user) => self
                        .cast
                        .users
                        .get(user)
                        .and_then(|u| u.token.as_ref())
                        .and_then(|t| t.digest())
                        .map(RevocationTarget::TokenDigest),
                };
                let tick = self.tick;
                match resolved {
                    Some(target) => {
                        let outcome = self
                            .cast
                            .revocations
                            .write()
                            .unwrap()
                            .revoke(authority, target, now);
                        match outcome {
                            Ok(()) => self.log(format!("[t={tick:04}] revocation recorded")),
                            Err(e) => {
                                self.log(format!("[t={tick:04}] revocation rejected: {e}"))
                            }
                        }
                    }
                    None => self.log(format!("[t={tick:04}] revocation target unresolved")),
                }
            }
            Phase::AdvanceClock { seconds } => {
                self.clock_base += seconds;
            }
        }

        self.pump();

        let completed = match phase {
            Phase::Setup => self.cast.car.is_provisioned(),
            Phase::SetRoot => self.cast.car.owner.is_some(),
            Phase::UploadGpk { role } => self.cast.car.role_key(role).is_some(),
            Phase::Delegate { user, .. } => self.cast.user(user).token.is_some(),
            Phase::Execute { .. } | Phase::ExecuteOtf { .. } => {
                self.cast.car.executed.len() > executed_before
            }
            Phase::ForgeOtf { .. } => self.cast.car.executed.len() > executed_before,
            Phase::LeakSessionKey { .. } | Phase::Revoke { .. } | Phase::AdvanceClock { .. } => {
                true
            }
        };
        if completed {
            if let Some(action) = phase.honest_action() {
                self.honest_completed.push(action.clone());
            }
        }
        let aborts: Vec<String> = self.cast.car.aborts[aborts_before..]
            .iter()
            .map(|a| format!("{}:{}:{}", a.procedure.name(), a.step, a.reason.code()))
            .collect();
        self.phase_outcomes.push(PhaseOutcome {
            label,
            completed,
            aborts,
            asymmetric_ops: self.ops.asymmetric_total() - ops_before,
        });
    }

    /// Run a whole script.
    pub fn run_script(&mut self, script: &[Phase]) -> SimReport {
        for phase in script {
            self.run_phase(phase);
        }
        self.report()
    }

    /// Executed actions not accounted for by completed honest phases
    /// indicate the adversary drove the car.
    pub fn report(&self) -> SimReport {
        let mut honest = self.honest_completed.clone();
        let mut unaccounted = Vec::new();
        for action in &self.cast.car.executed {
            if let Some(pos) = honest.iter().position(|a| a == action) {
                honest.remove(pos);
            } else {
                unaccounted.push(action.clone());
            }
        }
        SimReport {
            phases: self.phase_outcomes.clone(),
            executed: self.cast.car.executed.clone(),
            unaccounted_executions: unaccounted.clone(),
            attack_found: !unaccounted.is_empty(),
        }
    }

    /// The annotated hex transcript, one line per frame or event.
    pub fn transcript(&self) -> String {
        self.transcript.join("\n") + "\n"
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }
}

fn channel_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}
