//! Finite-state-machine engines for the six car-access procedures.
//!
//! Procedures I and II (factory setup, root installation) run over
//! trusted channels; III–VI (role-key upload, rights delegation,
//! execute, execute on-the-fly) run over open channels and carry
//! identity-based signatures, group signatures or session-key MACs on
//! every step. Engines are pure state machines: they consume and
//! produce [`wire::WireMessage`]s and mutate only the party state they
//! were given, so the same engines serve the direct-pump runner, the
//! benchmark harness and the adversarial simulator.
//!
//! Every abort carries a typed [`AbortReason`] on the verifying side;
//! nothing is sent back on the wire (an error frame would itself be an
//! oracle).

pub mod delegate;
pub mod execute;
pub mod otf;
pub mod parties;
pub mod runner;
pub mod setup;
pub mod upload;

use std::sync::{Arc, RwLock};

use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::crypto::MacTag;
use crate::policy::{Action, AttrValue, AttributeValue, DenyReason};
use crate::wire::{self, Procedure, Timestamp, WireMessage};

pub use parties::{
    CarState, Cast, ManufacturerState, OwnerState, SellerState, SessionCipher, SessionState,
    UserState, WorldConfig,
};

/// Accepted disagreement between a signed timestamp and the receiver's
/// clock ("a loose time synchronization exists").
pub const CLOCK_SKEW_SECONDS: u64 = 120;

/// Field tags used across the procedures.
pub mod tags {
    pub const TIMESTAMP: u8 = 0x01;
    pub const IDENTITY: u8 = 0x02;
    pub const PEER_IDENTITY: u8 = 0x03;
    pub const CAR_ID: u8 = 0x04;
    pub const PSEUDONYM: u8 = 0x05;
    pub const ROLE: u8 = 0x06;
    pub const NONCE_A: u8 = 0x07;
    pub const NONCE_B: u8 = 0x08;
    pub const TSTART: u8 = 0x09;
    pub const TSTOP: u8 = 0x0A;
    pub const GPK: u8 = 0x0B;
    pub const ATTRIBUTES: u8 = 0x0C;
    pub const EPK: u8 = 0x0D;
    pub const CIPHER_KIND: u8 = 0x0E;
    pub const ENC_TOKEN: u8 = 0x0F;
    pub const TRUNC_SIG: u8 = 0x10;
    pub const EMBEDDED: u8 = 0x11;
    pub const EMBEDDED_2: u8 = 0x12;
    pub const KEY_TRANSPORT: u8 = 0x13;
    pub const SID: u8 = 0x14;
    pub const ACTION_CT: u8 = 0x15;
    pub const TOKEN_KIND: u8 = 0x16;
    pub const ACT: u8 = 0x17;
    pub const POLICY_DOC: u8 = 0x18;
    pub const USER_KEY: u8 = 0x19;
    pub const IBS_PARAMS: u8 = 0x1A;
    pub const PEER_MAC: u8 = 0x1B;
    pub const OWNER_DATA: u8 = 0x1C;
    pub const CREDENTIAL_MSG: u8 = 0x1D;
    pub const CREDENTIAL_SIG: u8 = 0x1E;
    pub const ACTION_OBJECT: u8 = 0x1F;
    pub const ACTION_FLAG: u8 = 0x20;
}

/// Typed abort reasons recorded on the verifying side. The reason-code
/// table in the README mirrors the `code()` strings.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbortReason {
    #[error("malformed message")]
    MalformedMessage,
    #[error("signature verification failed")]
    BadSignature,
    #[error("mac verification failed")]
    BadMac,
    #[error("procedure requires a trusted channel")]
    UntrustedChannel,
    #[error("car already set up")]
    AlreadySetUp,
    #[error("car not set up")]
    NotSetUp,
    #[error("owner already installed")]
    OwnerAlreadySet,
    #[error("no owner installed")]
    NoOwner,
    #[error("message names a different car")]
    BadCarId,
    #[error("sender is not the root owner")]
    NotOwner,
    #[error("nonce echo mismatch")]
    NonceMismatch,
    #[error("timestamp outside skew bound")]
    StaleTimestamp,
    #[error("role not installed")]
    UnknownRole,
    #[error("role or pseudonym mismatch against credential")]
    CredentialMismatch,
    #[error("signature truncation mismatch")]
    TruncationMismatch,
    #[error("decryption failed")]
    DecryptFailed,
    #[error("target revoked")]
    Revoked,
    #[error("delegation window expired")]
    WindowExpired,
    #[error("policy denied: {0}")]
    PolicyDeny(DenyReason),
    #[error("unknown session identifier")]
    UnknownSession,
    #[error("session expired")]
    SessionExpired,
    #[error("message arrived in an unexpected state")]
    UnexpectedStep,
    #[error("delegation token unusable")]
    BadToken,
}

impl AbortReason {
    /// Stable short code, used in transcripts and the README table.
    pub fn code(&self) -> &'static str {
        match self {
            AbortReason::MalformedMessage => "malformed",
            AbortReason::BadSignature => "bad-signature",
            AbortReason::BadMac => "bad-mac",
            AbortReason::UntrustedChannel => "untrusted-channel",
            AbortReason::AlreadySetUp => "already-set-up",
            AbortReason::NotSetUp => "not-set-up",
            AbortReason::OwnerAlreadySet => "owner-already-set",
            AbortReason::NoOwner => "no-owner",
            AbortReason::BadCarId => "bad-car-id",
            AbortReason::NotOwner => "not-owner",
            AbortReason::NonceMismatch => "nonce-mismatch",
            AbortReason::StaleTimestamp => "stale-timestamp",
            AbortReason::UnknownRole => "unknown-role",
            AbortReason::CredentialMismatch => "credential-mismatch",
            AbortReason::TruncationMismatch => "truncation-mismatch",
            AbortReason::DecryptFailed => "decrypt-failed",
            AbortReason::Revoked => "revoked",
            AbortReason::WindowExpired => "window-expired",
            AbortReason::PolicyDeny(_) => "policy-deny",
            AbortReason::UnknownSession => "unknown-session",
            AbortReason::SessionExpired => "session-expired",
            AbortReason::UnexpectedStep => "unexpected-step",
            AbortReason::BadToken => "bad-token",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("{actor} aborted {procedure:?} step {step}: {reason}")]
    Abort {
        actor: String,
        procedure: Procedure,
        step: u8,
        reason: AbortReason,
    },
    #[error(transparent)]
    Wire(#[from] wire::WireError),
}

pub(crate) fn abort(
    actor: &str,
    procedure: Procedure,
    step: u8,
    reason: AbortReason,
) -> ProtocolError {
    ProtocolError::Abort {
        actor: actor.to_string(),
        procedure,
        step,
        reason,
    }
}

/// Counters for asymmetric operations, threaded through the engine
/// context; the on-the-fly procedure must leave them untouched.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounters {
    pub kem: u64,
    pub dh: u64,
    pub ibs_sign: u64,
    pub ibs_verify: u64,
    pub gs_sign: u64,
    pub gs_verify: u64,
}

impl OpCounters {
    pub fn asymmetric_total(&self) -> u64 {
        self.kem + self.dh + self.ibs_sign + self.ibs_verify + self.gs_sign + self.gs_verify
    }
}

/// Per-step engine context: injected RNG, the acting party's clock, and
/// the shared operation counters.
pub struct EngineCtx<'a> {
    pub rng: &'a mut ChaCha20Rng,
    pub now: Timestamp,
    pub ops: &'a mut OpCounters,
}

/// Record car-side aborts in the typed reason log while passing the
/// error through.
pub(crate) fn abort_on<T>(
    car: &mut parties::CarState,
    procedure: Procedure,
    step: u8,
    result: Result<T, AbortReason>,
) -> Result<T, AbortReason> {
    result.map_err(|reason| car.record_abort(procedure, step, reason))
}

/// Last 64 bits of an authenticator (signature encoding or MAC tag).
pub fn last8(bytes: &[u8]) -> Result<[u8; 8], AbortReason> {
    if bytes.len() < 8 {
        return Err(AbortReason::MalformedMessage);
    }
    Ok(bytes[bytes.len() - 8..].try_into().unwrap())
}

/// Last 64 bits of a MAC tag.
pub fn truncate_mac64(tag: &MacTag) -> [u8; 8] {
    last8(tag.as_bytes()).expect("mac tags are 32 bytes")
}

pub(crate) fn check_skew(sent: Timestamp, now: Timestamp) -> Result<(), AbortReason> {
    if sent.within_skew(now, CLOCK_SKEW_SECONDS) {
        Ok(())
    } else {
        Err(AbortReason::StaleTimestamp)
    }
}

pub(crate) fn get_field<'m>(msg: &'m WireMessage, tag: u8) -> Result<&'m [u8], AbortReason> {
    msg.field(tag).ok_or(AbortReason::MalformedMessage)
}

pub(crate) fn get_timestamp(msg: &WireMessage) -> Result<Timestamp, AbortReason> {
    Timestamp::from_slice(get_field(msg, tags::TIMESTAMP)?).ok_or(AbortReason::MalformedMessage)
}

pub(crate) fn get_string(msg: &WireMessage, tag: u8) -> Result<String, AbortReason> {
    String::from_utf8(get_field(msg, tag)?.to_vec()).map_err(|_| AbortReason::MalformedMessage)
}

/// The requested action on a vehicle object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionRequest {
    pub object: String,
    pub action: Action,
}

impl ActionRequest {
    pub fn new(object: &str, action: Action) -> Self {
        ActionRequest {
            object: object.to_string(),
            action,
        }
    }
}

pub(crate) fn action_flag_byte(action: Action) -> u8 {
    match action {
        Action::Read => b'r',
        Action::Write => b'w',
        Action::Execute => b'e',
    }
}

pub(crate) fn action_from_byte(byte: u8) -> Result<Action, AbortReason> {
    match byte {
        b'r' => Ok(Action::Read),
        b'w' => Ok(Action::Write),
        b'e' => Ok(Action::Execute),
        _ => Err(AbortReason::MalformedMessage),
    }
}

/// Attribute list codec: count byte, then per attribute a length-prefixed
/// name, a kind byte and the value.
pub(crate) fn encode_attributes(attrs: &[AttributeValue]) -> Vec<u8> {
    let mut out = vec![attrs.len() as u8];
    for attr in attrs {
        let name = attr.name.as_bytes();
        out.push(name.len() as u8);
        out.extend_from_slice(name);
        match &attr.value {
            AttrValue::Number(v) => {
                out.push(1);
                out.extend_from_slice(&v.to_be_bytes());
            }
            AttrValue::Bool(v) => {
                out.push(2);
                out.push(*v as u8);
            }
            AttrValue::Null => out.push(3),
        }
    }
    out
}

pub(crate) fn decode_attributes(bytes: &[u8]) -> Result<Vec<AttributeValue>, AbortReason> {
    let malformed = AbortReason::MalformedMessage;
    let Some((&count, mut rest)) = bytes.split_first() else {
        return Err(malformed);
    };
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let (&name_len, r) = rest.split_first().ok_or(malformed.clone())?;
        if r.len() < name_len as usize + 1 {
            return Err(malformed);
        }
        let (name, r) = r.split_at(name_len as usize);
        let name = String::from_utf8(name.to_vec()).map_err(|_| malformed.clone())?;
        let (&kind, r) = r.split_first().ok_or(malformed.clone())?;
        let (value, r) = match kind {
            1 => {
                if r.len() < 8 {
                    return Err(malformed);
                }
                let (v, r) = r.split_at(8);
                (AttrValue::Number(i64::from_be_bytes(v.try_into().unwrap())), r)
            }
            2 => {
                let (&b, r) = r.split_first().ok_or(malformed.clone())?;
                (AttrValue::Bool(b != 0), r)
            }
            3 => (AttrValue::Null, r),
            _ => return Err(malformed),
        };
        out.push(AttributeValue { name, value });
        rest = r;
    }
    if !rest.is_empty() {
        return Err(malformed);
    }
    Ok(out)
}

/// Token kind requested in a delegation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Persistent,
    Ephemeral,
}

impl TokenKind {
    pub(crate) fn byte(&self) -> u8 {
        match self {
            TokenKind::Persistent => 1,
            TokenKind::Ephemeral => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Result<Self, AbortReason> {
        match b {
            1 => Ok(TokenKind::Persistent),
            2 => Ok(TokenKind::Ephemeral),
            _ => Err(AbortReason::MalformedMessage),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TokenKind::Persistent => "persistent",
            TokenKind::Ephemeral => "ephemeral",
        }
    }
}

/// A delegated credential held by a user.
#[derive(Debug, Clone)]
pub enum DelegationToken {
    Persistent {
        role: String,
        member: crate::groupsig::GroupMemberKey,
    },
    Ephemeral {
        role: String,
        attributes: Vec<AttributeValue>,
        window_start: Timestamp,
        window_stop: Timestamp,
        /// Signed tuple (pseudonym, role, attributes, window).
        credential_msg: Vec<u8>,
        /// Owner's group signature over `credential_msg`.
        credential_sig: Vec<u8>,
    },
}

impl DelegationToken {
    pub fn kind(&self) -> TokenKind {
        match self {
            DelegationToken::Persistent { .. } => TokenKind::Persistent,
            DelegationToken::Ephemeral { .. } => TokenKind::Ephemeral,
        }
    }

    pub fn role(&self) -> &str {
        match self {
            DelegationToken::Persistent { role, .. } => role,
            DelegationToken::Ephemeral { role, .. } => role,
        }
    }

    /// Digest identifying an ephemeral token on the revocation list.
    pub fn digest(&self) -> Option<[u8; 32]> {
        match self {
            DelegationToken::Persistent { .. } => None,
            DelegationToken::Ephemeral { credential_sig, .. } => {
                Some(crate::crypto::hash(credential_sig))
            }
        }
    }
}

/// What a revocation entry names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum RevocationTarget {
    Pseudonym(String),
    TokenDigest([u8; 32]),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RevokeError {
    #[error("{0} is neither the root nor the delegator of the target")]
    Unauthorized(String),
}

/// Append-only revocation list, shared between the issuing side and the
/// car ("maintained in the cloud"). Also records which delegator issued
/// each target so revocation authority can be checked.
#[derive(Debug, Default)]
pub struct RevocationList {
    root: Option<String>,
    entries: Vec<(RevocationTarget, Timestamp)>,
    delegations: std::collections::BTreeMap<RevocationTarget, String>,
}

impl RevocationList {
    pub fn set_root(&mut self, pseudonym: &str) {
        self.root = Some(pseudonym.to_string());
    }

    pub fn register_delegation(&mut self, target: RevocationTarget, delegator: &str) {
        self.delegations.insert(target, delegator.to_string());
    }

    /// Revoke a target. Only the root or the original delegator may.
    pub fn revoke(
        &mut self,
        authority: &str,
        target: RevocationTarget,
        now: Timestamp,
    ) -> Result<(), RevokeError> {
        let is_root = self.root.as_deref() == Some(authority);
        let is_delegator = self.delegations.get(&target).map(String::as_str) == Some(authority);
        if !is_root && !is_delegator {
            return Err(RevokeError::Unauthorized(authority.to_string()));
        }
        self.entries.push((target, now));
        Ok(())
    }

    pub fn is_revoked(&self, target: &RevocationTarget, now: Timestamp) -> bool {
        self.entries
            .iter()
            .any(|(t, revoked_at)| t == target && *revoked_at <= now)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Shared handle to the revocation list.
pub type SharedRevocations = Arc<RwLock<RevocationList>>;

pub fn new_shared_revocations() -> SharedRevocations {
    Arc::new(RwLock::new(RevocationList::default()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attribute_codec_round_trips() {
        let attrs = vec![
            AttributeValue::number("distance", -42),
            AttributeValue::flag("has_license", true),
            AttributeValue::null("age"),
        ];
        let bytes = encode_attributes(&attrs);
        assert_eq!(decode_attributes(&bytes).unwrap(), attrs);
        assert!(decode_attributes(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_attributes(&[]).is_err());
        assert_eq!(decode_attributes(&[0]).unwrap(), vec![]);
    }

    #[test]
    fn revocation_authority_rules() {
        let mut list = RevocationList::default();
        list.set_root("PsO");
        let token = RevocationTarget::TokenDigest([9u8; 32]);
        list.register_delegation(token.clone(), "PsDelegator");
        let now = Timestamp(10);

        assert!(list.revoke("PsO", token.clone(), now).is_ok());
        assert!(list.revoke("PsDelegator", token.clone(), now).is_ok());
        assert_eq!(
            list.revoke("PsPassenger", RevocationTarget::Pseudonym("PsU".into()), now),
            Err(RevokeError::Unauthorized("PsPassenger".into()))
        );
        assert!(list.is_revoked(&token, now));
        assert!(!list.is_revoked(&RevocationTarget::Pseudonym("PsU".into()), now));
    }

    #[test]
    fn revocation_respects_time_of_entry() {
        let mut list = RevocationList::default();
        list.set_root("PsO");
        let target = RevocationTarget::Pseudonym("PsU".into());
        list.revoke("PsO", target.clone(), Timestamp(100)).unwrap();
        assert!(!list.is_revoked(&target, Timestamp(99)));
        assert!(list.is_revoked(&target, Timestamp(100)));
    }

    #[test]
    fn last8_requires_eight_bytes() {
        assert!(last8(&[1, 2, 3]).is_err());
        assert_eq!(last8(&[0, 1, 2, 3, 4, 5, 6, 7, 8]).unwrap(), [1, 2, 3, 4, 5, 6, 7, 8]);
    }
}
