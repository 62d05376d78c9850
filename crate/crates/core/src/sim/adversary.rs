//! The network adversary: full control over untrusted channels.
//!
//! Every frame it sees feeds a monotone knowledge base closed under
//! TLV projection, embedded-message decoding and decryption with any
//! known 32-byte key. Strategies are syntactic — drop, replay, bit-flip
//! a chosen field or the authenticator, splice frames across sessions —
//! matching the perfect-cryptography assumption; the one semantic power
//! is forging a complete on-the-fly exchange once a session key has
//! leaked into its knowledge.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;

use crate::crypto::{self, SymmetricKey};
use crate::protocol::{tags, ActionRequest, truncate_mac64};
use crate::wire::{self, AuthSlot, Procedure, Timestamp, WireMessage};

/// What to flip when mutating a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationTarget {
    Field(usize),
    Auth,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    Passive,
    Drop {
        procedure: Procedure,
        step: u8,
    },
    Replay {
        procedure: Procedure,
        step: u8,
    },
    Mutate {
        procedure: Procedure,
        step: u8,
        target: MutationTarget,
    },
    Splice {
        procedure: Procedure,
        step: u8,
    },
}

impl Strategy {
    pub fn label(&self) -> String {
        match self {
            Strategy::Passive => "passive".into(),
            Strategy::Drop { procedure, step } => format!("drop {} {step}", procedure.name()),
            Strategy::Replay { procedure, step } => {
                format!("replay {} {step}", procedure.name())
            }
            Strategy::Mutate {
                procedure,
                step,
                target,
            } => match target {
                MutationTarget::Field(i) => {
                    format!("mutate {} {step} field {i}", procedure.name())
                }
                MutationTarget::Auth => format!("mutate {} {step} auth", procedure.name()),
            },
            Strategy::Splice { procedure, step } => {
                format!("splice {} {step}", procedure.name())
            }
        }
    }
}

/// Routing directives returned to the event loop.
#[derive(Debug, Clone)]
pub enum Directive {
    Deliver(Vec<u8>),
    Drop,
    InjectLater {
        bytes: Vec<u8>,
        delay: u64,
        from: String,
        to: String,
    },
}

/// Monotone fact base: frames, their projections, and everything
/// decryptable with known keys.
#[derive(Debug, Default)]
pub struct Knowledge {
    items: BTreeSet<Vec<u8>>,
    /// Session identifiers observed in any decoded message.
    pub sids: BTreeSet<[u8; 8]>,
}

impl Knowledge {
    pub fn absorb(&mut self, bytes: &[u8]) {
        self.items.insert(bytes.to_vec());
        self.close();
    }

    pub fn add_key(&mut self, key: &SymmetricKey) {
        self.items.insert(key.as_bytes().to_vec());
        self.close();
    }

    pub fn contains(&self, bytes: &[u8]) -> bool {
        self.items.contains(bytes)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &[u8]> {
        self.items.iter().map(Vec::as_slice)
    }

    /// Fixpoint closure: project TLV structure and decrypt whatever a
    /// known key opens. The intruder never forgets.
    fn close(&mut self) {
        loop {
            let mut derived: Vec<Vec<u8>> = Vec::new();
            for item in &self.items {
                if let Ok(msg) = wire::decode(item) {
                    for (tag, value) in &msg.fields {
                        if *tag == tags::SID {
                            if let Ok(sid) = <[u8; 8]>::try_from(value.as_slice()) {
                                self.sids.insert(sid);
                            }
                        }
                        if !self.items.contains(value) {
                            derived.push(value.clone());
                        }
                    }
                    let auth = msg.auth.bytes();
                    if !auth.is_empty() && !self.items.contains(auth) {
                        derived.push(auth.to_vec());
                    }
                }
            }
            // decryption with any known 32-byte value as a key
            let keys: Vec<[u8; 32]> = self
                .items
                .iter()
                .filter_map(|i| <[u8; 32]>::try_from(i.as_slice()).ok())
                .collect();
            for key_bytes in &keys {
                let key = SymmetricKey::from_bytes(*key_bytes);
                for item in &self.items {
                    if item.len() >= 28 {
                        if let Ok(plain) = crypto::sym_decrypt(&key, item) {
                            if !self.items.contains(&plain) {
                                derived.push(plain);
                            }
                        }
                    }
                }
            }
            if derived.is_empty() {
                break;
            }
            for item in derived {
                self.items.insert(item);
            }
        }
    }
}

pub struct Adversary {
    pub strategy: Strategy,
    pub knowledge: Knowledge,
    /// Frames observed per (procedure, step), in order.
    recorded: BTreeMap<(Procedure, u8), Vec<Vec<u8>>>,
    leaked_sessions: Vec<([u8; 8], SymmetricKey)>,
    pending_forge: Option<(ActionRequest, crypto::MacTag)>,
    replay_fired: bool,
    mutate_fired: bool,
}

impl Adversary {
    pub fn new(strategy: Strategy) -> Self {
        Adversary {
            strategy,
            knowledge: Knowledge::default(),
            recorded: BTreeMap::new(),
            leaked_sessions: Vec::new(),
            pending_forge: None,
            replay_fired: false,
            mutate_fired: false,
        }
    }

    pub fn leak_session(&mut self, sid: [u8; 8], key: SymmetricKey) {
        self.knowledge.add_key(&key);
        self.leaked_sessions.push((sid, key));
    }

    /// Process one frame on an untrusted channel.
    pub fn process(
        &mut self,
        bytes: &[u8],
        from: &str,
        to: &str,
        rng: &mut ChaCha20Rng,
    ) -> Vec<Directive> {
        self.knowledge.absorb(bytes);
        let decoded = wire::decode(bytes).ok();
        if let Some(msg) = &decoded {
            self.recorded
                .entry((msg.procedure, msg.step))
                .or_default()
                .push(bytes.to_vec());
        }

        // a pending forge intercepts the car's on-the-fly challenge
        if let Some(msg) = &decoded {
            if msg.procedure == Procedure::ExecuteOtf && msg.step == 2 {
                if let Some((_, key)) = self.forge_key() {
                    if let Some((_, expected_m1_mac)) = &self.pending_forge {
                        if msg.field(tags::TRUNC_SIG).map(|t| t == truncate_mac64(expected_m1_mac))
                            == Some(true)
                        {
                            let key = key.clone();
                            let AuthSlot::Mac(m2_tag) = &msg.auth else {
                                return vec![Directive::Deliver(bytes.to_vec())];
                            };
                            let ts = msg
                                .field(tags::TIMESTAMP)
                                .and_then(Timestamp::from_slice)
                                .unwrap_or(Timestamp(0));
                            let mut close = WireMessage::new(Procedure::ExecuteOtf, 3);
                            close.push_field(tags::PEER_MAC, m2_tag.to_vec());
                            close.push_field(tags::TIMESTAMP, ts.to_bytes().to_vec());
                            let mac = crypto::mac_sign(&key, &close.signing_bytes());
                            close.auth = AuthSlot::Mac(*mac.as_bytes());
                            self.pending_forge = None;
                            return vec![Directive::InjectLater {
                                bytes: wire::encode(&close).expect("legal message"),
                                delay: 1,
                                from: "adv".into(),
                                to: from.to_string(),
                            }];
                        }
                    }
                }
            }
        }

        let _ = rng;
        match &self.strategy {
            Strategy::Passive => vec![Directive::Deliver(bytes.to_vec())],
            Strategy::Drop { procedure, step } => {
                if matches(&decoded, *procedure, *step) {
                    vec![Directive::Drop]
                } else {
                    vec![Directive::Deliver(bytes.to_vec())]
                }
            }
            Strategy::Replay { procedure, step } => {
                if matches(&decoded, *procedure, *step) && !self.replay_fired {
                    self.replay_fired = true;
                    vec![
                        Directive::Deliver(bytes.to_vec()),
                        Directive::InjectLater {
                            bytes: bytes.to_vec(),
                            delay: 3,
                            from: from.to_string(),
                            to: to.to_string(),
                        },
                    ]
                } else {
                    vec![Directive::Deliver(bytes.to_vec())]
                }
            }
            Strategy::Mutate {
                procedure,
                step,
                target,
            } => {
                if matches(&decoded, *procedure, *step) && !self.mutate_fired {
                    self.mutate_fired = true;
                    let mutated = mutate(decoded.as_ref().expect("matched"), *target);
                    vec![Directive::Deliver(mutated)]
                } else {
                    vec![Directive::Deliver(bytes.to_vec())]
                }
            }
            Strategy::Splice { procedure, step } => {
                let history = self
                    .recorded
                    .get(&(*procedure, *step))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                // substitute the first recorded occurrence once a later
                // session produces the same (procedure, step)
                if matches(&decoded, *procedure, *step) && history.len() > 1 {
                    vec![Directive::Deliver(history[0].clone())]
                } else {
                    vec![Directive::Deliver(bytes.to_vec())]
                }
            }
        }
    }

    fn forge_key(&self) -> Option<&([u8; 8], SymmetricKey)> {
        self.leaked_sessions.last()
    }

    /// Open a forged on-the-fly exchange for `action` using a leaked
    /// session key. Returns the frames to inject (the closing message
    /// is produced when the car's challenge comes back through
    /// [`Adversary::process`]).
    pub fn forge_otf(
        &mut self,
        action: &ActionRequest,
        rng: &mut ChaCha20Rng,
        now: Timestamp,
    ) -> Vec<Vec<u8>> {
        let Some((sid, key)) = self.leaked_sessions.last().cloned() else {
            return Vec::new();
        };
        let action_plain = wire::tuple_bytes(&[
            (tags::ACTION_OBJECT, action.object.as_bytes()),
            (
                tags::ACTION_FLAG,
                &[crate::protocol::action_flag_byte(action.action)],
            ),
        ]);
        let action_ct = crypto::sym_encrypt(&key, &action_plain, rng);
        let mut msg = WireMessage::new(Procedure::ExecuteOtf, 1);
        msg.push_field(tags::SID, sid.to_vec());
        msg.push_field(tags::ACTION_CT, action_ct);
        msg.push_field(tags::TIMESTAMP, now.to_bytes().to_vec());
        let mac = crypto::mac_sign(&key, &msg.signing_bytes());
        msg.auth = AuthSlot::Mac(*mac.as_bytes());
        self.pending_forge = Some((action.clone(), mac));
        vec![wire::encode(&msg).expect("legal message")]
    }
}

fn matches(decoded: &Option<WireMessage>, procedure: Procedure, step: u8) -> bool {
    decoded
        .as_ref()
        .map(|m| m.procedure == procedure && m.step == step)
        .unwrap_or(false)
}

/// Flip one bit in the chosen field (or authenticator) and re-encode.
fn mutate(msg: &WireMessage, target: MutationTarget) -> Vec<u8> {
    let mut mutated = msg.clone();
    match target {
        MutationTarget::Field(index) => {
            if let Some((_, value)) = mutated.fields.get_mut(index) {
                if value.is_empty() {
                    value.push(0x01);
                } else {
                    value[0] ^= 0x01;
                }
            }
        }
        MutationTarget::Auth => {
            mutated.auth = match mutated.auth {
                AuthSlot::None => AuthSlot::None,
                AuthSlot::Ibs(mut b) => {
                    if let Some(first) = b.first_mut() {
                        *first ^= 0x01;
                    }
                    AuthSlot::Ibs(b)
                }
                AuthSlot::Group(mut b) => {
                    if let Some(first) = b.first_mut() {
                        *first ^= 0x01;
                    }
                    AuthSlot::Group(b)
                }
                AuthSlot::Mac(mut b) => {
                    b[0] ^= 0x01;
                    AuthSlot::Mac(b)
                }
            };
        }
    }
    wire::encode(&mutated).expect("mutation preserves wire legality")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore, SeedableRng};

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn encryption_is_opaque_until_the_key_leaks() {
        let mut r = rng(1);
        let key = SymmetricKey::generate(&mut r);
        let secret = b"the session payload".to_vec();
        let ciphertext = crypto::sym_encrypt(&key, &secret, &mut r);

        let mut msg = WireMessage::new(Procedure::ExecuteOtf, 1);
        msg.push_field(tags::SID, vec![1u8; 8]);
        msg.push_field(tags::ACTION_CT, ciphertext.clone());
        msg.push_field(tags::TIMESTAMP, Timestamp(5).to_bytes().to_vec());
        let frame = wire::encode(&msg).unwrap();

        let mut knowledge = Knowledge::default();
        knowledge.absorb(&frame);
        assert!(knowledge.contains(&ciphertext), "ciphertext is projected");
        assert!(!knowledge.contains(&secret), "plaintext must stay opaque");

        // staged leak: learning the key re-runs the closure and the
        // plaintext becomes derivable from the remembered ciphertext
        knowledge.add_key(&key);
        assert!(knowledge.contains(&secret));
    }

    #[test]
    fn knowledge_grows_monotonically_over_random_frames() {
        let mut r = rng(2);
        let mut knowledge = Knowledge::default();
        let mut previous: Vec<Vec<u8>> = Vec::new();
        for i in 0..100u32 {
            let mut msg = WireMessage::new(Procedure::Execute, 1 + (i % 3) as u8);
            for tag in 0..(i % 4) as u8 {
                let mut value = vec![0u8; r.gen_range(1..24)];
                r.fill_bytes(&mut value);
                msg.push_field(tag + 1, value);
            }
            msg.push_field(tags::TIMESTAMP, Timestamp(i as u64).to_bytes().to_vec());
            knowledge.absorb(&wire::encode(&msg).unwrap());
            assert!(
                previous.iter().all(|item| knowledge.contains(item)),
                "the intruder never forgets"
            );
            previous = knowledge.items().map(<[u8]>::to_vec).collect();
        }
    }

    #[test]
    fn sids_are_collected_from_observed_frames() {
        let mut knowledge = Knowledge::default();
        let mut msg = WireMessage::new(Procedure::Execute, 2);
        msg.push_field(tags::SID, vec![9u8; 8]);
        knowledge.absorb(&wire::encode(&msg).unwrap());
        assert!(knowledge.sids.contains(&[9u8; 8]));
    }
}
