//! Canonical binary message model shared by every protocol procedure.
//!
//! Layout: `[procedure u8][step u8][field-count u8]`, then each field as
//! `[tag u8][len u16 BE][bytes]`, then the auth slot appended last with
//! its own tag (`0xF0` none, `0xF1` identity-based signature, `0xF2`
//! group signature, `0xF3` MAC). Encoding is deterministic and
//! injective: `decode(encode(m)) == m` and decode rejects truncated
//! input and trailing garbage.
//!
//! Signatures and MACs cover exactly the canonical encoding of the
//! fields region (excluding the auth slot), see [`WireMessage::signing_bytes`],
//! so verification is reproducible from the wire alone.
//!
//! [`chunk`]/[`reassemble`] split an encoded message into MTU-sized
//! frames for constrained transports; the default MTU elsewhere in the
//! crate is 254 bytes, of which 6 are chunk framing overhead.

use rand::RngCore;
use thiserror::Error;

/// Field tags `0xF0..=0xFF` are reserved for the auth slot.
pub const MAX_FIELD_TAG: u8 = 0xEF;
const AUTH_NONE: u8 = 0xF0;
const AUTH_IBS: u8 = 0xF1;
const AUTH_GROUP: u8 = 0xF2;
const AUTH_MAC: u8 = 0xF3;

/// Chunk framing overhead: seq + total + payload length, 2 bytes each.
pub const CHUNK_OVERHEAD: usize = 6;
pub const MIN_MTU: usize = 16;
pub const DEFAULT_MTU: usize = 254;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("message truncated")]
    Truncated,
    #[error("trailing bytes after message")]
    TrailingBytes,
    #[error("unknown procedure code {0}")]
    UnknownProcedure(u8),
    #[error("step {step} invalid for procedure {procedure:?}")]
    InvalidStep { procedure: Procedure, step: u8 },
    #[error("field tag {0:#04x} collides with the auth-slot range")]
    BadFieldTag(u8),
    #[error("unexpected auth tag {0:#04x}")]
    BadAuthTag(u8),
    #[error("too many fields for one message")]
    TooManyFields,
    #[error("field value exceeds u16 length")]
    FieldTooLong,
    #[error("mtu below the {MIN_MTU}-byte minimum")]
    MtuTooSmall,
    #[error("message too large for chunk sequence numbers")]
    TooManyChunks,
    #[error("chunk set malformed: {0}")]
    ChunkSet(&'static str),
}

/// The six protocol procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Procedure {
    Setup,
    SetRoot,
    UploadGpk,
    Delegate,
    Execute,
    ExecuteOtf,
}

impl Procedure {
    pub const ALL: [Procedure; 6] = [
        Procedure::Setup,
        Procedure::SetRoot,
        Procedure::UploadGpk,
        Procedure::Delegate,
        Procedure::Execute,
        Procedure::ExecuteOtf,
    ];

    pub fn code(&self) -> u8 {
        match self {
            Procedure::Setup => 1,
            Procedure::SetRoot => 2,
            Procedure::UploadGpk => 3,
            Procedure::Delegate => 4,
            Procedure::Execute => 5,
            Procedure::ExecuteOtf => 6,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, WireError> {
        Ok(match code {
            1 => Procedure::Setup,
            2 => Procedure::SetRoot,
            3 => Procedure::UploadGpk,
            4 => Procedure::Delegate,
            5 => Procedure::Execute,
            6 => Procedure::ExecuteOtf,
            other => return Err(WireError::UnknownProcedure(other)),
        })
    }

    /// Number of message steps in the procedure.
    pub fn step_count(&self) -> u8 {
        match self {
            Procedure::Setup => 1,
            Procedure::SetRoot | Procedure::UploadGpk | Procedure::Delegate => 4,
            Procedure::Execute | Procedure::ExecuteOtf => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Procedure::Setup => "setup",
            Procedure::SetRoot => "set-root",
            Procedure::UploadGpk => "upload-gpk",
            Procedure::Delegate => "delegate",
            Procedure::Execute => "execute",
            Procedure::ExecuteOtf => "execute-otf",
        }
    }
}

/// Authenticator slot carried by every message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthSlot {
    None,
    Ibs(Vec<u8>),
    Group(Vec<u8>),
    Mac([u8; 32]),
}

impl AuthSlot {
    fn tag(&self) -> u8 {
        match self {
            AuthSlot::None => AUTH_NONE,
            AuthSlot::Ibs(_) => AUTH_IBS,
            AuthSlot::Group(_) => AUTH_GROUP,
            AuthSlot::Mac(_) => AUTH_MAC,
        }
    }

    pub fn bytes(&self) -> &[u8] {
        match self {
            AuthSlot::None => &[],
            AuthSlot::Ibs(b) | AuthSlot::Group(b) => b,
            AuthSlot::Mac(b) => b,
        }
    }
}

/// One protocol message: procedure, step, ordered TLV fields, auth slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub procedure: Procedure,
    pub step: u8,
    pub fields: Vec<(u8, Vec<u8>)>,
    pub auth: AuthSlot,
}

impl WireMessage {
    pub fn new(procedure: Procedure, step: u8) -> Self {
        WireMessage {
            procedure,
            step,
            fields: Vec::new(),
            auth: AuthSlot::None,
        }
    }

    pub fn push_field(&mut self, tag: u8, value: impl Into<Vec<u8>>) -> &mut Self {
        self.fields.push((tag, value.into()));
        self
    }

    /// First field with the given tag.
    pub fn field(&self, tag: u8) -> Option<&[u8]> {
        self.fields
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, v)| v.as_slice())
    }

    /// Exact-match field extraction: the message must carry precisely
    /// the expected tags in the expected order. Engines use this so
    /// spliced or padded frames fail structurally.
    pub fn expect_fields(&self, tags: &[u8]) -> Result<Vec<&[u8]>, WireError> {
        if self.fields.len() != tags.len()
            || self.fields.iter().map(|(t, _)| *t).ne(tags.iter().copied())
        {
            return Err(WireError::ChunkSet("unexpected field layout"));
        }
        Ok(self.fields.iter().map(|(_, v)| v.as_slice()).collect())
    }

    /// Canonical bytes covered by the auth slot: the encoded fields
    /// region, header and auth excluded.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (tag, value) in &self.fields {
            push_tlv(&mut out, *tag, value);
        }
        out
    }
}

fn push_tlv(out: &mut Vec<u8>, tag: u8, value: &[u8]) {
    out.push(tag);
    out.extend_from_slice(&(value.len() as u16).to_be_bytes());
    out.extend_from_slice(value);
}

fn validate_header(procedure: Procedure, step: u8) -> Result<(), WireError> {
    if step == 0 || step > procedure.step_count() {
        return Err(WireError::InvalidStep { procedure, step });
    }
    Ok(())
}

/// Encode a message to its canonical byte form.
pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    validate_header(msg.procedure, msg.step)?;
    if msg.fields.len() > u8::MAX as usize {
        return Err(WireError::TooManyFields);
    }
    let mut out = Vec::new();
    out.push(msg.procedure.code());
    out.push(msg.step);
    out.push(msg.fields.len() as u8);
    for (tag, value) in &msg.fields {
        if *tag > MAX_FIELD_TAG {
            return Err(WireError::BadFieldTag(*tag));
        }
        if value.len() > u16::MAX as usize {
            return Err(WireError::FieldTooLong);
        }
        push_tlv(&mut out, *tag, value);
    }
    if msg.auth.bytes().len() > u16::MAX as usize {
        return Err(WireError::FieldTooLong);
    }
    push_tlv(&mut out, msg.auth.tag(), msg.auth.bytes());
    Ok(out)
}

/// Decode a canonical byte form back into a message. Rejects unknown
/// procedures and steps, truncation, and trailing garbage.
pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
    if bytes.len() < 3 {
        return Err(WireError::Truncated);
    }
    let procedure = Procedure::from_code(bytes[0])?;
    let step = bytes[1];
    validate_header(procedure, step)?;
    let count = bytes[2] as usize;
    let mut offset = 3;
    let read_tlv = |offset: &mut usize| -> Result<(u8, Vec<u8>), WireError> {
        if bytes.len() < *offset + 3 {
            return Err(WireError::Truncated);
        }
        let tag = bytes[*offset];
        let len = u16::from_be_bytes([bytes[*offset + 1], bytes[*offset + 2]]) as usize;
        *offset += 3;
        if bytes.len() < *offset + len {
            return Err(WireError::Truncated);
        }
        let value = bytes[*offset..*offset + len].to_vec();
        *offset += len;
        Ok((tag, value))
    };
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let (tag, value) = read_tlv(&mut offset)?;
        if tag > MAX_FIELD_TAG {
            return Err(WireError::BadFieldTag(tag));
        }
        fields.push((tag, value));
    }
    let (auth_tag, auth_value) = read_tlv(&mut offset)?;
    let auth = match auth_tag {
        AUTH_NONE if auth_value.is_empty() => AuthSlot::None,
        AUTH_NONE => return Err(WireError::BadAuthTag(auth_tag)),
        AUTH_IBS => AuthSlot::Ibs(auth_value),
        AUTH_GROUP => AuthSlot::Group(auth_value),
        AUTH_MAC => {
            let tag: [u8; 32] = auth_value
                .try_into()
                .map_err(|_| WireError::BadAuthTag(AUTH_MAC))?;
            AuthSlot::Mac(tag)
        }
        other => return Err(WireError::BadAuthTag(other)),
    };
    if offset != bytes.len() {
        return Err(WireError::TrailingBytes);
    }
    Ok(WireMessage {
        procedure,
        step,
        fields,
        auth,
    })
}

/// Encode an ordered tag/value sequence outside a message envelope;
/// used for signed tuples embedded as single fields.
pub fn tuple_bytes(fields: &[(u8, &[u8])]) -> Vec<u8> {
    let mut out = Vec::new();
    for (tag, value) in fields {
        push_tlv(&mut out, *tag, value);
    }
    out
}

/// Parse a tag/value sequence produced by [`tuple_bytes`].
pub fn parse_tuple(bytes: &[u8]) -> Result<Vec<(u8, Vec<u8>)>, WireError> {
    let mut out = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        if bytes.len() < offset + 3 {
            return Err(WireError::Truncated);
        }
        let tag = bytes[offset];
        let len = u16::from_be_bytes([bytes[offset + 1], bytes[offset + 2]]) as usize;
        offset += 3;
        if bytes.len() < offset + len {
            return Err(WireError::Truncated);
        }
        out.push((tag, bytes[offset..offset + len].to_vec()));
        offset += len;
    }
    Ok(out)
}

/// 16-byte nonce, fresh per message from the injected RNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Nonce(pub [u8; 16]);

impl Nonce {
    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        Nonce(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        Some(Nonce(bytes.try_into().ok()?))
    }
}

/// Seconds since epoch; the all-ones value encodes an indefinite (∞)
/// validity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const INFINITY: Timestamp = Timestamp(u64::MAX);

    pub fn to_bytes(&self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        Some(Timestamp(u64::from_be_bytes(bytes.try_into().ok()?)))
    }

    pub fn is_infinite(&self) -> bool {
        *self == Timestamp::INFINITY
    }

    /// |self - other| <= skew, used for the loose clock-sync bound.
    pub fn within_skew(&self, other: Timestamp, skew_seconds: u64) -> bool {
        self.0.abs_diff(other.0) <= skew_seconds
    }

    pub fn saturating_add(&self, seconds: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(seconds))
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// One transport frame of a chunked message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub seq: u16,
    pub total: u16,
    pub payload: Vec<u8>,
}

impl Chunk {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CHUNK_OVERHEAD + self.payload.len());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.total.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < CHUNK_OVERHEAD {
            return Err(WireError::Truncated);
        }
        let seq = u16::from_be_bytes([bytes[0], bytes[1]]);
        let total = u16::from_be_bytes([bytes[2], bytes[3]]);
        let len = u16::from_be_bytes([bytes[4], bytes[5]]) as usize;
        if bytes.len() != CHUNK_OVERHEAD + len {
            return Err(WireError::Truncated);
        }
        Ok(Chunk {
            seq,
            total,
            payload: bytes[CHUNK_OVERHEAD..].to_vec(),
        })
    }
}

/// Split encoded bytes into chunks that fit the MTU (payload plus the
/// 6-byte chunk header). A message always yields at least one chunk.
pub fn chunk(bytes: &[u8], mtu: usize) -> Result<Vec<Chunk>, WireError> {
    if mtu < MIN_MTU {
        return Err(WireError::MtuTooSmall);
    }
    let cap = mtu - CHUNK_OVERHEAD;
    let total = bytes.len().div_ceil(cap).max(1);
    if total > u16::MAX as usize {
        return Err(WireError::TooManyChunks);
    }
    Ok((0..total)
        .map(|i| Chunk {
            seq: i as u16,
            total: total as u16,
            payload: bytes[i * cap..((i + 1) * cap).min(bytes.len())].to_vec(),
        })
        .collect())
}

/// Reassemble chunks produced by [`chunk`]. The set must be complete,
/// in order, and consistent; anything else is an explicit error.
pub fn reassemble(chunks: &[Chunk]) -> Result<Vec<u8>, WireError> {
    let Some(first) = chunks.first() else {
        return Err(WireError::ChunkSet("empty chunk set"));
    };
    let total = first.total as usize;
    if total == 0 {
        return Err(WireError::ChunkSet("zero total"));
    }
    if chunks.len() != total {
        return Err(WireError::ChunkSet("missing or extra chunks"));
    }
    let mut out = Vec::new();
    for (i, chunk) in chunks.iter().enumerate() {
        if chunk.total as usize != total {
            return Err(WireError::ChunkSet("inconsistent totals"));
        }
        if chunk.seq as usize != i {
            return Err(WireError::ChunkSet("out-of-order or duplicate seq"));
        }
        out.extend_from_slice(&chunk.payload);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn sample_message() -> WireMessage {
        let mut msg = WireMessage::new(Procedure::Execute, 2);
        msg.push_field(0x01, vec![1, 2, 3]);
        msg.push_field(0x02, vec![]);
        msg.auth = AuthSlot::Mac([7u8; 32]);
        msg
    }

    #[test]
    fn encode_is_deterministic_and_round_trips() {
        let msg = sample_message();
        let a = encode(&msg).unwrap();
        let b = encode(&msg).unwrap();
        assert_eq!(a, b);
        assert_eq!(decode(&a).unwrap(), msg);
    }

    #[test]
    fn decode_rejects_empty_truncated_and_trailing_input() {
        assert_eq!(decode(&[]).unwrap_err(), WireError::Truncated);
        let bytes = encode(&sample_message()).unwrap();
        assert_eq!(
            decode(&bytes[..bytes.len() - 1]).unwrap_err(),
            WireError::Truncated
        );
        let mut extended = bytes.clone();
        extended.push(0);
        assert_eq!(decode(&extended).unwrap_err(), WireError::TrailingBytes);
    }

    #[test]
    fn decode_rejects_unknown_procedure_and_step() {
        let mut bytes = encode(&sample_message()).unwrap();
        bytes[0] = 9;
        assert_eq!(decode(&bytes).unwrap_err(), WireError::UnknownProcedure(9));
        let mut bytes = encode(&sample_message()).unwrap();
        bytes[1] = 4; // Execute has 3 steps
        assert!(matches!(
            decode(&bytes).unwrap_err(),
            WireError::InvalidStep { .. }
        ));
    }

    #[test]
    fn encode_rejects_reserved_field_tags() {
        let mut msg = WireMessage::new(Procedure::Setup, 1);
        msg.push_field(0xF1, vec![1]);
        assert_eq!(encode(&msg).unwrap_err(), WireError::BadFieldTag(0xF1));
    }

    #[test]
    fn signing_bytes_exclude_header_and_auth() {
        let mut msg = sample_message();
        let covered = msg.signing_bytes();
        msg.auth = AuthSlot::None;
        assert_eq!(covered, msg.signing_bytes());
        let mut other_step = msg.clone();
        other_step.step = 1;
        assert_eq!(covered, other_step.signing_bytes());
    }

    #[test]
    fn expect_fields_rejects_reordered_and_extra_fields() {
        let msg = sample_message();
        assert!(msg.expect_fields(&[0x01, 0x02]).is_ok());
        assert!(msg.expect_fields(&[0x02, 0x01]).is_err());
        assert!(msg.expect_fields(&[0x01]).is_err());
        assert!(msg.expect_fields(&[0x01, 0x02, 0x03]).is_err());
    }

    #[test]
    fn six_hundred_bytes_at_default_mtu_is_three_chunks() {
        let bytes = vec![0xAB; 600];
        let chunks = chunk(&bytes, DEFAULT_MTU).unwrap();
        assert_eq!(chunks.len(), 3);
        assert!(chunks.iter().all(|c| c.payload.len() <= DEFAULT_MTU - CHUNK_OVERHEAD));
        assert_eq!(reassemble(&chunks).unwrap(), bytes);
    }

    #[test]
    fn short_message_is_a_single_chunk() {
        let chunks = chunk(b"abc", DEFAULT_MTU).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(reassemble(&chunks).unwrap(), b"abc");
        let empty = chunk(b"", DEFAULT_MTU).unwrap();
        assert_eq!(empty.len(), 1);
        assert_eq!(reassemble(&empty).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn dropped_duplicate_and_reordered_chunks_fail_reassembly() {
        let bytes = vec![0x11; 600];
        let chunks = chunk(&bytes, DEFAULT_MTU).unwrap();
        let dropped = vec![chunks[0].clone(), chunks[2].clone()];
        assert!(reassemble(&dropped).is_err());
        let duplicated = vec![chunks[0].clone(), chunks[1].clone(), chunks[1].clone()];
        assert!(reassemble(&duplicated).is_err());
        let swapped = vec![chunks[1].clone(), chunks[0].clone(), chunks[2].clone()];
        assert!(reassemble(&swapped).is_err());
    }

    #[test]
    fn tiny_mtu_is_rejected() {
        assert_eq!(chunk(b"x", 8).unwrap_err(), WireError::MtuTooSmall);
    }

    #[test]
    fn chunk_frames_round_trip() {
        let chunks = chunk(&vec![5u8; 300], 64).unwrap();
        for c in &chunks {
            assert_eq!(Chunk::decode(&c.encode()).unwrap(), *c);
        }
    }

    #[test]
    fn timestamp_infinity_and_skew() {
        assert!(Timestamp::INFINITY.is_infinite());
        assert_eq!(Timestamp::INFINITY.to_bytes(), [0xFF; 8]);
        assert!(Timestamp(100).within_skew(Timestamp(220), 120));
        assert!(!Timestamp(100).within_skew(Timestamp(221), 120));
    }

    #[test]
    fn random_legal_messages_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let procedure = Procedure::ALL[rng.gen_range(0..6)];
            let step = rng.gen_range(1..=procedure.step_count());
            let mut msg = WireMessage::new(procedure, step);
            for _ in 0..rng.gen_range(0..6) {
                let tag = rng.gen_range(0..=MAX_FIELD_TAG);
                let mut value = vec![0u8; rng.gen_range(0..64)];
                rand::RngCore::fill_bytes(&mut rng, &mut value);
                msg.push_field(tag, value);
            }
            msg.auth = match rng.gen_range(0..4) {
                0 => AuthSlot::None,
                1 => AuthSlot::Ibs(vec![1; rng.gen_range(0..96)]),
                2 => AuthSlot::Group(vec![2; rng.gen_range(0..96)]),
                _ => AuthSlot::Mac([9u8; 32]),
            };
            let bytes = encode(&msg).unwrap();
            assert_eq!(decode(&bytes).unwrap(), msg);
        }
    }

    proptest! {
        #[test]
        fn prop_codec_round_trip(
            proc_idx in 0usize..6,
            step_off in 0u8..4,
            fields in proptest::collection::vec(
                (0u8..=MAX_FIELD_TAG, proptest::collection::vec(any::<u8>(), 0..128)),
                0..8
            ),
            auth_kind in 0u8..4,
            auth_bytes in proptest::collection::vec(any::<u8>(), 0..64),
        ) {
            let procedure = Procedure::ALL[proc_idx];
            let step = 1 + step_off % procedure.step_count();
            let auth = match auth_kind {
                0 => AuthSlot::None,
                1 => AuthSlot::Ibs(auth_bytes.clone()),
                2 => AuthSlot::Group(auth_bytes.clone()),
                _ => AuthSlot::Mac([3u8; 32]),
            };
            let msg = WireMessage { procedure, step, fields, auth };
            let bytes = encode(&msg).unwrap();
            prop_assert_eq!(decode(&bytes).unwrap(), msg);
        }

        #[test]
        fn prop_chunk_reassemble_identity(
            data in proptest::collection::vec(any::<u8>(), 0..4096),
            mtu in MIN_MTU..512usize,
        ) {
            let chunks = chunk(&data, mtu).unwrap();
            prop_assert!(chunks.iter().all(|c| c.payload.len() <= mtu - CHUNK_OVERHEAD));
            prop_assert_eq!(reassemble(&chunks).unwrap(), data);
        }
    }
}
