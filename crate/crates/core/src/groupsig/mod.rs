//! Group signatures with signer anonymity and manager traceability.
//!
//! Four algorithms — `gen`, `sign`, `verify`, `trace` — over static
//! groups whose size is fixed at generation time. Two interchangeable
//! backends implement the interface:
//!
//! * [`GsBackend::Pairing`] — short group signatures (linear encryption
//!   of an SDH pair plus a signature proof of knowledge) over the
//!   BLS12-381 pairing curve. Anonymity rests on the decision-linear
//!   assumption; this is the production backend.
//! * [`GsBackend::Reference`] — a dependency-free construction for CI:
//!   the member index is AEAD-encrypted under a tracing key held by the
//!   manager and the result is conventionally signed under a per-group
//!   key shared by all members. Trace semantics and interface anonymity
//!   match the pairing backend; member-vs-member privacy is only
//!   computational-toy, which is acceptable for its test role.
//!
//! Signatures are randomized, fixed-length for fixed parameters, and
//! carry no plaintext member index.

pub(crate) mod bbs;
pub(crate) mod reference;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GsError {
    #[error("group must have at least one member")]
    BadGroupSize,
    #[error("key backend mismatch: expected {expected}, found {found}")]
    BackendMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("signature does not verify")]
    InvalidSignature,
    #[error("signer could not be traced")]
    TraceFailure,
    #[error("malformed {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GsBackend {
    Pairing,
    Reference,
}

impl GsBackend {
    pub fn name(&self) -> &'static str {
        match self {
            GsBackend::Pairing => "pairing",
            GsBackend::Reference => "reference",
        }
    }

    fn signature_tag(&self) -> u8 {
        match self {
            GsBackend::Pairing => 0x01,
            GsBackend::Reference => 0x02,
        }
    }
}

/// Group public key: verifies signatures from every member of the group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupPublicKey {
    pub(crate) group_size: u32,
    pub(crate) inner: GpkInner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum GpkInner {
    Pairing(bbs::Gpk),
    Reference(reference::Gpk),
}

/// Group manager (tracing) secret.
#[derive(Clone)]
pub struct GroupManagerKey {
    pub(crate) group_size: u32,
    pub(crate) inner: GmskInner,
}

#[derive(Clone)]
pub(crate) enum GmskInner {
    Pairing(bbs::Gmsk),
    Reference(reference::Gmsk),
}

impl std::fmt::Debug for GroupManagerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "GroupManagerKey(backend={}, <redacted>)",
            self.backend().name()
        )
    }
}

/// One member's signing key; `index` is stable and 1-based.
#[derive(Clone)]
pub struct GroupMemberKey {
    pub(crate) index: u32,
    pub(crate) inner: MemberInner,
}

#[derive(Clone)]
pub(crate) enum MemberInner {
    Pairing(bbs::MemberKey),
    Reference(reference::MemberKey),
}

impl std::fmt::Debug for GroupMemberKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "GroupMemberKey(index={}, backend={}, <redacted>)",
            self.index,
            self.backend().name()
        )
    }
}

/// Canonical signature encoding: one backend tag byte followed by the
/// backend's fixed-length payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSignature(pub(crate) Vec<u8>);

impl GroupSignature {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        GroupSignature(bytes.to_vec())
    }
}

impl GroupPublicKey {
    pub fn backend(&self) -> GsBackend {
        match self.inner {
            GpkInner::Pairing(_) => GsBackend::Pairing,
            GpkInner::Reference(_) => GsBackend::Reference,
        }
    }

    pub fn group_size(&self) -> u32 {
        self.group_size
    }
}

impl GroupManagerKey {
    pub fn backend(&self) -> GsBackend {
        match self.inner {
            GmskInner::Pairing(_) => GsBackend::Pairing,
            GmskInner::Reference(_) => GsBackend::Reference,
        }
    }
}

impl GroupMemberKey {
    pub fn backend(&self) -> GsBackend {
        match self.inner {
            MemberInner::Pairing(_) => GsBackend::Pairing,
            MemberInner::Reference(_) => GsBackend::Reference,
        }
    }

    pub fn index(&self) -> u32 {
        self.index
    }
}

/// Generate a group of `n` members. Every member key signs under the
/// returned public key and is traceable through the manager key.
pub fn gen<R: RngCore + CryptoRng>(
    backend: GsBackend,
    n: u32,
    rng: &mut R,
) -> Result<(GroupPublicKey, GroupManagerKey, Vec<GroupMemberKey>), GsError> {
    if n == 0 {
        return Err(GsError::BadGroupSize);
    }
    match backend {
        GsBackend::Pairing => {
            let (gpk, gmsk, members) = bbs::gen(n, rng);
            Ok((
                GroupPublicKey {
                    group_size: n,
                    inner: GpkInner::Pairing(gpk),
                },
                GroupManagerKey {
                    group_size: n,
                    inner: GmskInner::Pairing(gmsk),
                },
                members
                    .into_iter()
                    .enumerate()
                    .map(|(i, m)| GroupMemberKey {
                        index: i as u32 + 1,
                        inner: MemberInner::Pairing(m),
                    })
                    .collect(),
            ))
        }
        GsBackend::Reference => {
            let (gpk, gmsk, members) = reference::gen(n, rng);
            Ok((
                GroupPublicKey {
                    group_size: n,
                    inner: GpkInner::Reference(gpk),
                },
                GroupManagerKey {
                    group_size: n,
                    inner: GmskInner::Reference(gmsk),
                },
                members
                    .into_iter()
                    .enumerate()
                    .map(|(i, m)| GroupMemberKey {
                        index: i as u32 + 1,
                        inner: MemberInner::Reference(m),
                    })
                    .collect(),
            ))
        }
    }
}

/// Sign `msg` as the given member. Signing with a key from a different
/// group than `gpk` proceeds (there is no membership oracle at signing
/// time) but the result will not verify.
pub fn sign<R: RngCore + CryptoRng>(
    gpk: &GroupPublicKey,
    member: &GroupMemberKey,
    msg: &[u8],
    rng: &mut R,
) -> GroupSignature {
    let mut out = vec![gpk.backend().signature_tag()];
    match (&gpk.inner, &member.inner) {
        (GpkInner::Pairing(g), MemberInner::Pairing(m)) => {
            out.extend_from_slice(&bbs::sign(g, m, msg, rng));
        }
        (GpkInner::Reference(_), MemberInner::Reference(m)) => {
            out.extend_from_slice(&reference::sign(m, member.index, msg, rng));
        }
        // backend mismatch between gpk and member key: the payload can
        // only come from the member's backend; verification fails
        (GpkInner::Pairing(_), MemberInner::Reference(m)) => {
            out.extend_from_slice(&reference::sign(m, member.index, msg, rng));
        }
        (GpkInner::Reference(_), MemberInner::Pairing(_)) => {
            out.extend_from_slice(&[0u8; 32]);
        }
    }
    GroupSignature(out)
}

/// Verify a signature under the group public key. Total on arbitrary
/// bytes; reveals nothing about which member signed.
pub fn verify(gpk: &GroupPublicKey, msg: &[u8], sig: &GroupSignature) -> bool {
    let Some((&tag, payload)) = sig.0.split_first() else {
        return false;
    };
    if tag != gpk.backend().signature_tag() {
        return false;
    }
    match &gpk.inner {
        GpkInner::Pairing(g) => bbs::verify(g, msg, payload),
        GpkInner::Reference(g) => reference::verify(g, msg, payload),
    }
}

/// Recover the signer's index. Only valid signatures can be traced;
/// a tampered signature yields an error, never a wrong index.
pub fn trace(
    gpk: &GroupPublicKey,
    gmsk: &GroupManagerKey,
    msg: &[u8],
    sig: &GroupSignature,
) -> Result<u32, GsError> {
    if !verify(gpk, msg, sig) {
        return Err(GsError::InvalidSignature);
    }
    let payload = &sig.0[1..];
    let index = match (&gpk.inner, &gmsk.inner) {
        (GpkInner::Pairing(g), GmskInner::Pairing(m)) => bbs::trace(g, m, payload)?,
        (GpkInner::Reference(_), GmskInner::Reference(m)) => reference::trace(m, payload)?,
        _ => {
            return Err(GsError::BackendMismatch {
                expected: gpk.backend().name(),
                found: gmsk.backend().name(),
            })
        }
    };
    if index == 0 || index > gmsk.group_size {
        return Err(GsError::TraceFailure);
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    const BACKENDS: [GsBackend; 2] = [GsBackend::Pairing, GsBackend::Reference];

    #[test]
    fn zero_member_group_is_rejected() {
        let mut r = rng(0);
        for backend in BACKENDS {
            assert_eq!(gen(backend, 0, &mut r).unwrap_err(), GsError::BadGroupSize);
        }
    }

    #[test]
    fn single_member_group_signs_verifies_and_traces() {
        let mut r = rng(1);
        for backend in BACKENDS {
            let (gpk, gmsk, members) = gen(backend, 1, &mut r).unwrap();
            let sig = sign(&gpk, &members[0], b"solo", &mut r);
            assert!(verify(&gpk, b"solo", &sig));
            assert_eq!(trace(&gpk, &gmsk, b"solo", &sig).unwrap(), 1);
        }
    }

    #[test]
    fn every_member_of_a_ten_member_group_verifies_and_traces() {
        let mut r = rng(2);
        for backend in BACKENDS {
            let (gpk, gmsk, members) = gen(backend, 10, &mut r).unwrap();
            for member in &members {
                let msg = format!("request from {}", member.index());
                let sig = sign(&gpk, member, msg.as_bytes(), &mut r);
                assert!(verify(&gpk, msg.as_bytes(), &sig));
                assert_eq!(
                    trace(&gpk, &gmsk, msg.as_bytes(), &sig).unwrap(),
                    member.index()
                );
            }
        }
    }

    #[test]
    fn signatures_are_randomized() {
        let mut r = rng(3);
        for backend in BACKENDS {
            let (gpk, _, members) = gen(backend, 2, &mut r).unwrap();
            let a = sign(&gpk, &members[0], b"same", &mut r);
            let b = sign(&gpk, &members[0], b"same", &mut r);
            assert_ne!(a, b);
            assert_eq!(a.as_bytes().len(), b.as_bytes().len());
        }
    }

    #[test]
    fn empty_message_signs_and_verifies() {
        let mut r = rng(4);
        for backend in BACKENDS {
            let (gpk, _, members) = gen(backend, 1, &mut r).unwrap();
            let sig = sign(&gpk, &members[0], b"", &mut r);
            assert!(verify(&gpk, b"", &sig));
        }
    }

    #[test]
    fn cross_group_keys_do_not_verify() {
        let mut r = rng(5);
        for backend in BACKENDS {
            let (gpk_a, _, members_a) = gen(backend, 3, &mut r).unwrap();
            let (gpk_b, _, _) = gen(backend, 3, &mut r).unwrap();
            // signature from group A against group B's public key
            let sig = sign(&gpk_a, &members_a[0], b"msg", &mut r);
            assert!(!verify(&gpk_b, b"msg", &sig));
            // foreign member key: signing proceeds, verification fails
            let foreign = sign(&gpk_b, &members_a[1], b"msg", &mut r);
            assert!(!verify(&gpk_b, b"msg", &foreign));
        }
    }

    #[test]
    fn tampering_flips_verification_and_trace_errors() {
        let mut r = rng(6);
        for backend in BACKENDS {
            let (gpk, gmsk, members) = gen(backend, 4, &mut r).unwrap();
            for i in 0..25usize {
                let msg = format!("m{i}");
                let sig = sign(&gpk, &members[i % 4], msg.as_bytes(), &mut r);
                let mut bytes = sig.as_bytes().to_vec();
                let bit = r.gen_range(8..bytes.len() * 8);
                bytes[bit / 8] ^= 1 << (bit % 8);
                let bad = GroupSignature::from_bytes(&bytes);
                assert!(!verify(&gpk, msg.as_bytes(), &bad));
                assert!(matches!(
                    trace(&gpk, &gmsk, msg.as_bytes(), &bad),
                    Err(GsError::InvalidSignature)
                ));
                // message tamper
                assert!(!verify(&gpk, b"other message", &sig));
            }
        }
    }

    #[test]
    fn truncated_and_garbage_signatures_are_rejected() {
        let mut r = rng(7);
        for backend in BACKENDS {
            let (gpk, _, _) = gen(backend, 1, &mut r).unwrap();
            assert!(!verify(&gpk, b"m", &GroupSignature::from_bytes(&[])));
            assert!(!verify(&gpk, b"m", &GroupSignature::from_bytes(&[0x01])));
            assert!(!verify(&gpk, b"m", &GroupSignature::from_bytes(&[0xFF; 400])));
        }
    }

    #[test]
    fn wrong_backend_signature_tag_is_rejected() {
        let mut r = rng(8);
        let (gpk_ref, _, members_ref) = gen(GsBackend::Reference, 1, &mut r).unwrap();
        let (gpk_pair, _, _) = gen(GsBackend::Pairing, 1, &mut r).unwrap();
        let sig = sign(&gpk_ref, &members_ref[0], b"m", &mut r);
        assert!(!verify(&gpk_pair, b"m", &sig));
    }
}
