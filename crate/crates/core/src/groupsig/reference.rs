//! Reference backend, kept free of the pairing stack.
//!
//! gen() derives one conventional signing key shared by all members
//! (a Shamir IBS key under a random per-group identity) and a symmetric
//! tracing key. A signature is the AEAD-encrypted member index followed
//! by an IBS signature over message-plus-tag, so signatures stay
//! randomized, fixed-length, and free of any plaintext index.

use rand::{CryptoRng, RngCore};

use super::GsError;
use crate::crypto::{self, SymmetricKey};
use crate::ibs::{self, IbsParams, IbsScheme, IbsUserKey};

const GROUP_ID_LEN: usize = 16;
const MODULUS_BITS: u64 = 512;
/// AEAD nonce + 4-byte index + GCM tag.
const TRACE_TAG_LEN: usize = 12 + 4 + 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Gpk {
    pub(crate) group_id: [u8; GROUP_ID_LEN],
    pub(crate) params: IbsParams,
}

#[derive(Clone)]
pub(crate) struct Gmsk {
    pub(crate) trace_key: SymmetricKey,
}

#[derive(Clone)]
pub(crate) struct MemberKey {
    pub(crate) trace_key: SymmetricKey,
    pub(crate) signing_key: IbsUserKey,
}

impl Gpk {
    /// Identity string the shared signing key is derived from.
    pub(crate) fn identity(&self) -> Vec<u8> {
        let mut id = b"group:".to_vec();
        id.extend_from_slice(hex::encode(self.group_id).as_bytes());
        id
    }
}

fn push_chunk(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
    out.extend_from_slice(bytes);
}

fn take_chunk<'a>(cursor: &mut &'a [u8]) -> Option<&'a [u8]> {
    if cursor.len() < 2 {
        return None;
    }
    let len = u16::from_be_bytes([cursor[0], cursor[1]]) as usize;
    if cursor.len() < 2 + len {
        return None;
    }
    let (chunk, rest) = cursor[2..].split_at(len);
    *cursor = rest;
    Some(chunk)
}

fn params_to_bytes(params: &IbsParams, out: &mut Vec<u8>) {
    push_chunk(out, &params.modulus().to_bytes_be());
    push_chunk(out, &params.exponent().to_bytes_be());
}

fn params_from_bytes(cursor: &mut &[u8]) -> Option<IbsParams> {
    let modulus = num_bigint::BigUint::from_bytes_be(take_chunk(cursor)?);
    let exponent = num_bigint::BigUint::from_bytes_be(take_chunk(cursor)?);
    Some(IbsParams::from_parts(IbsScheme::Shamir, modulus, exponent))
}

impl Gpk {
    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.group_id);
        params_to_bytes(&self.params, &mut out);
        out
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self, GsError> {
        let malformed = || GsError::Malformed("group public key");
        if bytes.len() < GROUP_ID_LEN {
            return Err(malformed());
        }
        let group_id = bytes[..GROUP_ID_LEN].try_into().unwrap();
        let mut cursor = &bytes[GROUP_ID_LEN..];
        let params = params_from_bytes(&mut cursor).ok_or_else(malformed)?;
        if !cursor.is_empty() {
            return Err(malformed());
        }
        Ok(Gpk { group_id, params })
    }
}

impl Gmsk {
    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        self.trace_key.as_bytes().to_vec()
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self, GsError> {
        let key: [u8; 32] = bytes
            .try_into()
            .map_err(|_| GsError::Malformed("group manager key"))?;
        Ok(Gmsk {
            trace_key: SymmetricKey::from_bytes(key),
        })
    }
}

impl MemberKey {
    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.trace_key.as_bytes().to_vec();
        params_to_bytes(self.signing_key.params(), &mut out);
        push_chunk(&mut out, self.signing_key.identity());
        push_chunk(&mut out, &self.signing_key.secret().to_bytes_be());
        out
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self, GsError> {
        let malformed = || GsError::Malformed("group member key");
        if bytes.len() < 32 {
            return Err(malformed());
        }
        let trace_key = SymmetricKey::from_bytes(bytes[..32].try_into().unwrap());
        let mut cursor = &bytes[32..];
        let params = params_from_bytes(&mut cursor).ok_or_else(malformed)?;
        let identity = take_chunk(&mut cursor).ok_or_else(malformed)?.to_vec();
        let secret =
            num_bigint::BigUint::from_bytes_be(take_chunk(&mut cursor).ok_or_else(malformed)?);
        if !cursor.is_empty() {
            return Err(malformed());
        }
        Ok(MemberKey {
            trace_key,
            signing_key: IbsUserKey::from_parts(params, identity, secret),
        })
    }
}

pub(crate) fn gen<R: RngCore + CryptoRng>(n: u32, rng: &mut R) -> (Gpk, Gmsk, Vec<MemberKey>) {
    let mut group_id = [0u8; GROUP_ID_LEN];
    rng.fill_bytes(&mut group_id);
    let master = ibs::setup(IbsScheme::Shamir, MODULUS_BITS, None, rng)
        .expect("setup at the fixed backend size");
    let gpk = Gpk {
        group_id,
        params: master.params().clone(),
    };
    let signing_key = ibs::keyder(&master, &gpk.identity());
    let trace_key = SymmetricKey::generate(rng);
    let members = (0..n)
        .map(|_| MemberKey {
            trace_key: trace_key.clone(),
            signing_key: signing_key.clone(),
        })
        .collect();
    (
        gpk,
        Gmsk { trace_key },
        members,
    )
}

pub(crate) fn sign<R: RngCore + CryptoRng>(
    member: &MemberKey,
    index: u32,
    msg: &[u8],
    rng: &mut R,
) -> Vec<u8> {
    let tag = crypto::sym_encrypt(&member.trace_key, &index.to_be_bytes(), rng);
    debug_assert_eq!(tag.len(), TRACE_TAG_LEN);
    let mut signed = msg.to_vec();
    signed.extend_from_slice(&tag);
    let sig = ibs::sign(&member.signing_key, &signed, rng);
    let mut out = tag;
    out.extend_from_slice(&sig.to_bytes());
    out
}

pub(crate) fn verify(gpk: &Gpk, msg: &[u8], payload: &[u8]) -> bool {
    if payload.len() != TRACE_TAG_LEN + 2 * gpk.params.component_width() {
        return false;
    }
    let (tag, sig) = payload.split_at(TRACE_TAG_LEN);
    let mut signed = msg.to_vec();
    signed.extend_from_slice(tag);
    ibs::verify_bytes(&gpk.params, &gpk.identity(), &signed, sig)
}

/// Decrypt the index tag. Caller has already verified the signature.
pub(crate) fn trace(gmsk: &Gmsk, payload: &[u8]) -> Result<u32, GsError> {
    if payload.len() < TRACE_TAG_LEN {
        return Err(GsError::Malformed("group signature"));
    }
    let plain = crypto::sym_decrypt(&gmsk.trace_key, &payload[..TRACE_TAG_LEN])
        .map_err(|_| GsError::TraceFailure)?;
    let bytes: [u8; 4] = plain.try_into().map_err(|_| GsError::TraceFailure)?;
    Ok(u32::from_be_bytes(bytes))
}
