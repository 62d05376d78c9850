//! Pairing backend: short group signatures over BLS12-381.
//!
//! A member key is an SDH pair (A_i, x_i) with A_i = g1^(1/(γ+x_i)).
//! Signing linearly encrypts A_i as (T1, T2, T3) under the manager's
//! (ξ1, ξ2) and attaches a Fiat-Shamir signature proof of knowledge of
//! (α, β, x, δ1, δ2) for the standard five verification relations.
//! Tracing strips the linear encryption, A = T3 / (T1^ξ1 · T2^ξ2), and
//! looks the result up in the manager's roster.

use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{CurveGroup, Group};
use ark_ff::{Field, PrimeField, UniformRand};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use ark_std::Zero;
use rand::{CryptoRng, RngCore};

use super::GsError;
use crate::crypto::hash_parts;

type Gt = PairingOutput<Bls12_381>;

const G1_LEN: usize = 48;
const FR_LEN: usize = 32;
/// T1, T2, T3 then c, s_alpha, s_beta, s_x, s_delta1, s_delta2.
const PAYLOAD_LEN: usize = 3 * G1_LEN + 6 * FR_LEN;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Gpk {
    h: G1Affine,
    u: G1Affine,
    v: G1Affine,
    w: G2Affine,
}

#[derive(Clone)]
pub(crate) struct Gmsk {
    xi1: Fr,
    xi2: Fr,
    roster: Vec<G1Affine>,
}

#[derive(Clone)]
pub(crate) struct MemberKey {
    a: G1Affine,
    x: Fr,
}

impl Gpk {
    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * G1_LEN + 96);
        self.h.serialize_compressed(&mut out).unwrap();
        self.u.serialize_compressed(&mut out).unwrap();
        self.v.serialize_compressed(&mut out).unwrap();
        self.w.serialize_compressed(&mut out).unwrap();
        out
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self, GsError> {
        let mut cursor = bytes;
        let gpk = Gpk {
            h: G1Affine::deserialize_compressed(&mut cursor)
                .map_err(|_| GsError::Malformed("group public key"))?,
            u: G1Affine::deserialize_compressed(&mut cursor)
                .map_err(|_| GsError::Malformed("group public key"))?,
            v: G1Affine::deserialize_compressed(&mut cursor)
                .map_err(|_| GsError::Malformed("group public key"))?,
            w: G2Affine::deserialize_compressed(&mut cursor)
                .map_err(|_| GsError::Malformed("group public key"))?,
        };
        if !cursor.is_empty() {
            return Err(GsError::Malformed("group public key"));
        }
        Ok(gpk)
    }
}

impl Gmsk {
    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.xi1.serialize_compressed(&mut out).unwrap();
        self.xi2.serialize_compressed(&mut out).unwrap();
        out.extend_from_slice(&(self.roster.len() as u32).to_be_bytes());
        for a in &self.roster {
            a.serialize_compressed(&mut out).unwrap();
        }
        out
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self, GsError> {
        let malformed = || GsError::Malformed("group manager key");
        let mut cursor = bytes;
        let xi1 = Fr::deserialize_compressed(&mut cursor).map_err(|_| malformed())?;
        let xi2 = Fr::deserialize_compressed(&mut cursor).map_err(|_| malformed())?;
        if cursor.len() < 4 {
            return Err(malformed());
        }
        let count = u32::from_be_bytes(cursor[..4].try_into().unwrap()) as usize;
        cursor = &cursor[4..];
        let mut roster = Vec::with_capacity(count);
        for _ in 0..count {
            roster.push(G1Affine::deserialize_compressed(&mut cursor).map_err(|_| malformed())?);
        }
        if !cursor.is_empty() {
            return Err(malformed());
        }
        Ok(Gmsk { xi1, xi2, roster })
    }
}

impl MemberKey {
    pub(crate) fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(G1_LEN + FR_LEN);
        self.a.serialize_compressed(&mut out).unwrap();
        self.x.serialize_compressed(&mut out).unwrap();
        out
    }

    pub(crate) fn from_bytes(bytes: &[u8]) -> Result<Self, GsError> {
        let malformed = || GsError::Malformed("group member key");
        let mut cursor = bytes;
        let a = G1Affine::deserialize_compressed(&mut cursor).map_err(|_| malformed())?;
        let x = Fr::deserialize_compressed(&mut cursor).map_err(|_| malformed())?;
        if !cursor.is_empty() {
            return Err(malformed());
        }
        Ok(MemberKey { a, x })
    }
}

fn nonzero_fr<R: RngCore + CryptoRng>(rng: &mut R) -> Fr {
    loop {
        let x = Fr::rand(rng);
        if !x.is_zero() {
            return x;
        }
    }
}

pub(crate) fn gen<R: RngCore + CryptoRng>(
    n: u32,
    rng: &mut R,
) -> (Gpk, Gmsk, Vec<MemberKey>) {
    let g1 = G1Projective::generator();
    let g2 = G2Projective::generator();
    let gamma = nonzero_fr(rng);
    let w = (g2 * gamma).into_affine();
    let h = loop {
        let p = G1Projective::rand(rng);
        if !p.is_zero() {
            break p;
        }
    };
    let xi1 = nonzero_fr(rng);
    let xi2 = nonzero_fr(rng);
    let u = (h * xi1.inverse().expect("nonzero")).into_affine();
    let v = (h * xi2.inverse().expect("nonzero")).into_affine();

    let mut members = Vec::with_capacity(n as usize);
    let mut roster = Vec::with_capacity(n as usize);
    while members.len() < n as usize {
        let x = nonzero_fr(rng);
        let Some(inv) = (gamma + x).inverse() else {
            continue;
        };
        let a = (g1 * inv).into_affine();
        roster.push(a);
        members.push(MemberKey { a, x });
    }

    (
        Gpk {
            h: h.into_affine(),
            u,
            v,
            w,
        },
        Gmsk { xi1, xi2, roster },
        members,
    )
}

/// Fiat-Shamir challenge over the group key, message and commitments.
fn challenge(gpk: &Gpk, msg: &[u8], points: &[&G1Affine], rs: &[&G1Projective], r3: &Gt) -> Fr {
    let mut transcript = Vec::new();
    transcript.extend_from_slice(&gpk.to_bytes());
    for p in points {
        p.serialize_compressed(&mut transcript).unwrap();
    }
    for r in rs {
        r.into_affine().serialize_compressed(&mut transcript).unwrap();
    }
    r3.serialize_compressed(&mut transcript).unwrap();
    let digest = hash_parts(&[b"gs-bbs-challenge", &transcript, msg]);
    Fr::from_be_bytes_mod_order(&digest)
}

pub(crate) fn sign<R: RngCore + CryptoRng>(
    gpk: &Gpk,
    member: &MemberKey,
    msg: &[u8],
    rng: &mut R,
) -> Vec<u8> {
    let g2 = G2Projective::generator().into_affine();
    let alpha = Fr::rand(rng);
    let beta = Fr::rand(rng);
    let t1 = (gpk.u * alpha).into_affine();
    let t2 = (gpk.v * beta).into_affine();
    let t3 = (member.a + gpk.h * (alpha + beta)).into_affine();
    let delta1 = member.x * alpha;
    let delta2 = member.x * beta;

    let r_alpha = Fr::rand(rng);
    let r_beta = Fr::rand(rng);
    let r_x = Fr::rand(rng);
    let r_delta1 = Fr::rand(rng);
    let r_delta2 = Fr::rand(rng);

    let r1 = gpk.u * r_alpha;
    let r2 = gpk.v * r_beta;
    let r3 = Bls12_381::pairing(t3, g2) * r_x
        + Bls12_381::pairing(gpk.h, gpk.w) * (-r_alpha - r_beta)
        + Bls12_381::pairing(gpk.h, g2) * (-r_delta1 - r_delta2);
    let r4 = t1 * r_x - gpk.u * r_delta1;
    let r5 = t2 * r_x - gpk.v * r_delta2;

    let c = challenge(gpk, msg, &[&t1, &t2, &t3], &[&r1, &r2, &r4, &r5], &r3);

    let s_alpha = r_alpha + c * alpha;
    let s_beta = r_beta + c * beta;
    let s_x = r_x + c * member.x;
    let s_delta1 = r_delta1 + c * delta1;
    let s_delta2 = r_delta2 + c * delta2;

    let mut out = Vec::with_capacity(PAYLOAD_LEN);
    t1.serialize_compressed(&mut out).unwrap();
    t2.serialize_compressed(&mut out).unwrap();
    t3.serialize_compressed(&mut out).unwrap();
    for s in [c, s_alpha, s_beta, s_x, s_delta1, s_delta2] {
        s.serialize_compressed(&mut out).unwrap();
    }
    debug_assert_eq!(out.len(), PAYLOAD_LEN);
    out
}

struct Parsed {
    t1: G1Affine,
    t2: G1Affine,
    t3: G1Affine,
    c: Fr,
    s_alpha: Fr,
    s_beta: Fr,
    s_x: Fr,
    s_delta1: Fr,
    s_delta2: Fr,
}

fn parse(payload: &[u8]) -> Option<Parsed> {
    if payload.len() != PAYLOAD_LEN {
        return None;
    }
    let mut cursor = payload;
    let t1 = G1Affine::deserialize_compressed(&mut cursor).ok()?;
    let t2 = G1Affine::deserialize_compressed(&mut cursor).ok()?;
    let t3 = G1Affine::deserialize_compressed(&mut cursor).ok()?;
    let c = Fr::deserialize_compressed(&mut cursor).ok()?;
    let s_alpha = Fr::deserialize_compressed(&mut cursor).ok()?;
    let s_beta = Fr::deserialize_compressed(&mut cursor).ok()?;
    let s_x = Fr::deserialize_compressed(&mut cursor).ok()?;
    let s_delta1 = Fr::deserialize_compressed(&mut cursor).ok()?;
    let s_delta2 = Fr::deserialize_compressed(&mut cursor).ok()?;
    Some(Parsed {
        t1,
        t2,
        t3,
        c,
        s_alpha,
        s_beta,
        s_x,
        s_delta1,
        s_delta2,
    })
}

pub(crate) fn verify(gpk: &Gpk, msg: &[u8], payload: &[u8]) -> bool {
    let Some(p) = parse(payload) else {
        return false;
    };
    let g1 = G1Projective::generator().into_affine();
    let g2 = G2Projective::generator().into_affine();

    let r1 = gpk.u * p.s_alpha - p.t1 * p.c;
    let r2 = gpk.v * p.s_beta - p.t2 * p.c;
    let r3 = Bls12_381::pairing(p.t3, g2) * p.s_x
        + Bls12_381::pairing(gpk.h, gpk.w) * (-p.s_alpha - p.s_beta)
        + Bls12_381::pairing(gpk.h, g2) * (-p.s_delta1 - p.s_delta2)
        + (Bls12_381::pairing(p.t3, gpk.w) - Bls12_381::pairing(g1, g2)) * p.c;
    let r4 = p.t1 * p.s_x - gpk.u * p.s_delta1;
    let r5 = p.t2 * p.s_x - gpk.v * p.s_delta2;

    let expected = challenge(gpk, msg, &[&p.t1, &p.t2, &p.t3], &[&r1, &r2, &r4, &r5], &r3);
    expected == p.c
}

/// Strip the linear encryption and look the member up in the roster.
/// Caller has already verified the signature.
pub(crate) fn trace(_gpk: &Gpk, gmsk: &Gmsk, payload: &[u8]) -> Result<u32, GsError> {
    let p = parse(payload).ok_or(GsError::Malformed("group signature"))?;
    let a = (G1Projective::from(p.t3) - (p.t1 * gmsk.xi1 + p.t2 * gmsk.xi2)).into_affine();
    gmsk.roster
        .iter()
        .position(|candidate| *candidate == a)
        .map(|i| i as u32 + 1)
        .ok_or(GsError::TraceFailure)
}
