//! Key-file envelope: `VKF1` magic, a kind byte, then tagged
//! length-prefixed fields. All key material written or read by the key
//! ceremonies goes through this format; group keys carry a backend tag
//! and loading one under the wrong backend is an explicit error.

use num_bigint::BigUint;
use thiserror::Error;

use crate::groupsig::{
    GmskInner, GpkInner, GroupManagerKey, GroupMemberKey, GroupPublicKey, GsBackend, MemberInner,
};
use crate::ibs::{IbsMasterKey, IbsParams, IbsScheme, IbsUserKey};

const MAGIC: &[u8; 4] = b"VKF1";

const KIND_IBS_PARAMS: u8 = 1;
const KIND_IBS_MASTER: u8 = 2;
const KIND_IBS_USER: u8 = 3;
const KIND_GS_PUBLIC: u8 = 4;
const KIND_GS_MANAGER: u8 = 5;
const KIND_GS_MEMBER: u8 = 6;

const TAG_SCHEME: u8 = 0x01;
const TAG_MODULUS: u8 = 0x02;
const TAG_EXPONENT: u8 = 0x03;
const TAG_SECRET: u8 = 0x04;
const TAG_IDENTITY: u8 = 0x05;
const TAG_BACKEND: u8 = 0x06;
const TAG_GROUP_SIZE: u8 = 0x07;
const TAG_MATERIAL: u8 = 0x08;
const TAG_INDEX: u8 = 0x09;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyfileError {
    #[error("bad key file magic")]
    BadMagic,
    #[error("unexpected key kind {found}, wanted {expected}")]
    WrongKind { expected: u8, found: u8 },
    #[error("key backend mismatch: expected {expected}, found {found}")]
    BackendMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("malformed key file: {0}")]
    Malformed(&'static str),
}

fn encode_file(kind: u8, fields: &[(u8, &[u8])]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(kind);
    for (tag, value) in fields {
        out.push(*tag);
        out.extend_from_slice(&(value.len() as u32).to_be_bytes());
        out.extend_from_slice(value);
    }
    out
}

fn decode_file(bytes: &[u8], expected_kind: u8) -> Result<Vec<(u8, Vec<u8>)>, KeyfileError> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC {
        return Err(KeyfileError::BadMagic);
    }
    let kind = bytes[4];
    if kind != expected_kind {
        return Err(KeyfileError::WrongKind {
            expected: expected_kind,
            found: kind,
        });
    }
    let mut fields = Vec::new();
    let mut offset = 5;
    while offset < bytes.len() {
        if bytes.len() < offset + 5 {
            return Err(KeyfileError::Malformed("truncated field header"));
        }
        let tag = bytes[offset];
        let len = u32::from_be_bytes(bytes[offset + 1..offset + 5].try_into().unwrap()) as usize;
        offset += 5;
        if bytes.len() < offset + len {
            return Err(KeyfileError::Malformed("truncated field value"));
        }
        fields.push((tag, bytes[offset..offset + len].to_vec()));
        offset += len;
    }
    Ok(fields)
}

fn get<'a>(fields: &'a [(u8, Vec<u8>)], tag: u8) -> Result<&'a [u8], KeyfileError> {
    fields
        .iter()
        .find(|(t, _)| *t == tag)
        .map(|(_, v)| v.as_slice())
        .ok_or(KeyfileError::Malformed("missing field"))
}

fn scheme_byte(scheme: IbsScheme) -> u8 {
    match scheme {
        IbsScheme::Shamir => 1,
        IbsScheme::Gq => 2,
    }
}

fn scheme_from_byte(bytes: &[u8]) -> Result<IbsScheme, KeyfileError> {
    match bytes {
        [1] => Ok(IbsScheme::Shamir),
        [2] => Ok(IbsScheme::Gq),
        _ => Err(KeyfileError::Malformed("bad scheme tag")),
    }
}

fn backend_byte(backend: GsBackend) -> u8 {
    match backend {
        GsBackend::Pairing => 1,
        GsBackend::Reference => 2,
    }
}

fn backend_from_byte(bytes: &[u8]) -> Result<GsBackend, KeyfileError> {
    match bytes {
        [1] => Ok(GsBackend::Pairing),
        [2] => Ok(GsBackend::Reference),
        _ => Err(KeyfileError::Malformed("bad backend tag")),
    }
}

fn check_backend(expected: GsBackend, found: GsBackend) -> Result<(), KeyfileError> {
    if expected != found {
        return Err(KeyfileError::BackendMismatch {
            expected: expected.name(),
            found: found.name(),
        });
    }
    Ok(())
}

fn u32_field(bytes: &[u8]) -> Result<u32, KeyfileError> {
    Ok(u32::from_be_bytes(
        bytes
            .try_into()
            .map_err(|_| KeyfileError::Malformed("bad u32 field"))?,
    ))
}

pub fn save_ibs_params(params: &IbsParams) -> Vec<u8> {
    encode_file(
        KIND_IBS_PARAMS,
        &[
            (TAG_SCHEME, &[scheme_byte(params.scheme())]),
            (TAG_MODULUS, &params.modulus().to_bytes_be()),
            (TAG_EXPONENT, &params.exponent().to_bytes_be()),
        ],
    )
}

pub fn load_ibs_params(bytes: &[u8]) -> Result<IbsParams, KeyfileError> {
    let fields = decode_file(bytes, KIND_IBS_PARAMS)?;
    params_from_fields(&fields)
}

fn params_from_fields(fields: &[(u8, Vec<u8>)]) -> Result<IbsParams, KeyfileError> {
    let scheme = scheme_from_byte(get(fields, TAG_SCHEME)?)?;
    let modulus = BigUint::from_bytes_be(get(fields, TAG_MODULUS)?);
    let exponent = BigUint::from_bytes_be(get(fields, TAG_EXPONENT)?);
    Ok(IbsParams::from_parts(scheme, modulus, exponent))
}

pub fn save_ibs_master(master: &IbsMasterKey) -> Vec<u8> {
    let params = master.params();
    encode_file(
        KIND_IBS_MASTER,
        &[
            (TAG_SCHEME, &[scheme_byte(params.scheme())]),
            (TAG_MODULUS, &params.modulus().to_bytes_be()),
            (TAG_EXPONENT, &params.exponent().to_bytes_be()),
            (TAG_SECRET, &master.secret_exponent().to_bytes_be()),
        ],
    )
}

pub fn load_ibs_master(bytes: &[u8]) -> Result<IbsMasterKey, KeyfileError> {
    let fields = decode_file(bytes, KIND_IBS_MASTER)?;
    let params = params_from_fields(&fields)?;
    let secret = BigUint::from_bytes_be(get(&fields, TAG_SECRET)?);
    Ok(IbsMasterKey::from_parts(params, secret))
}

pub fn save_ibs_user(key: &IbsUserKey) -> Vec<u8> {
    let params = key.params();
    encode_file(
        KIND_IBS_USER,
        &[
            (TAG_SCHEME, &[scheme_byte(params.scheme())]),
            (TAG_MODULUS, &params.modulus().to_bytes_be()),
            (TAG_EXPONENT, &params.exponent().to_bytes_be()),
            (TAG_IDENTITY, key.identity()),
            (TAG_SECRET, &key.secret().to_bytes_be()),
        ],
    )
}

pub fn load_ibs_user(bytes: &[u8]) -> Result<IbsUserKey, KeyfileError> {
    let fields = decode_file(bytes, KIND_IBS_USER)?;
    let params = params_from_fields(&fields)?;
    let identity = get(&fields, TAG_IDENTITY)?.to_vec();
    let secret = BigUint::from_bytes_be(get(&fields, TAG_SECRET)?);
    Ok(IbsUserKey::from_parts(params, identity, secret))
}

pub fn save_group_public(gpk: &GroupPublicKey) -> Vec<u8> {
    let material = match &gpk.inner {
        GpkInner::Pairing(g) => g.to_bytes(),
        GpkInner::Reference(g) => g.to_bytes(),
    };
    encode_file(
        KIND_GS_PUBLIC,
        &[
            (TAG_BACKEND, &[backend_byte(gpk.backend())]),
            (TAG_GROUP_SIZE, &gpk.group_size().to_be_bytes()),
            (TAG_MATERIAL, &material),
        ],
    )
}

pub fn load_group_public(
    bytes: &[u8],
    expected: GsBackend,
) -> Result<GroupPublicKey, KeyfileError> {
    let fields = decode_file(bytes, KIND_GS_PUBLIC)?;
    let backend = backend_from_byte(get(&fields, TAG_BACKEND)?)?;
    check_backend(expected, backend)?;
    let group_size = u32_field(get(&fields, TAG_GROUP_SIZE)?)?;
    let material = get(&fields, TAG_MATERIAL)?;
    let inner = match backend {
        GsBackend::Pairing => GpkInner::Pairing(
            crate::groupsig::bbs::Gpk::from_bytes(material)
                .map_err(|_| KeyfileError::Malformed("group public key material"))?,
        ),
        GsBackend::Reference => GpkInner::Reference(
            crate::groupsig::reference::Gpk::from_bytes(material)
                .map_err(|_| KeyfileError::Malformed("group public key material"))?,
        ),
    };
    Ok(GroupPublicKey { group_size, inner })
}

pub fn save_group_manager(gmsk: &GroupManagerKey) -> Vec<u8> {
    let material = match &gmsk.inner {
        GmskInner::Pairing(g) => g.to_bytes(),
        GmskInner::Reference(g) => g.to_bytes(),
    };
    encode_file(
        KIND_GS_MANAGER,
        &[
            (TAG_BACKEND, &[backend_byte(gmsk.backend())]),
            (TAG_GROUP_SIZE, &gmsk_size(gmsk).to_be_bytes()),
            (TAG_MATERIAL, &material),
        ],
    )
}

fn gmsk_size(gmsk: &GroupManagerKey) -> u32 {
    gmsk.group_size
}

pub fn load_group_manager(
    bytes: &[u8],
    expected: GsBackend,
) -> Result<GroupManagerKey, KeyfileError> {
    let fields = decode_file(bytes, KIND_GS_MANAGER)?;
    let backend = backend_from_byte(get(&fields, TAG_BACKEND)?)?;
    check_backend(expected, backend)?;
    let group_size = u32_field(get(&fields, TAG_GROUP_SIZE)?)?;
    let material = get(&fields, TAG_MATERIAL)?;
    let inner = match backend {
        GsBackend::Pairing => GmskInner::Pairing(
            crate::groupsig::bbs::Gmsk::from_bytes(material)
                .map_err(|_| KeyfileError::Malformed("group manager key material"))?,
        ),
        GsBackend::Reference => GmskInner::Reference(
            crate::groupsig::reference::Gmsk::from_bytes(material)
                .map_err(|_| KeyfileError::Malformed("group manager key material"))?,
        ),
    };
    Ok(GroupManagerKey { group_size, inner })
}

pub fn save_group_member(member: &GroupMemberKey) -> Vec<u8> {
    let material = match &member.inner {
        MemberInner::Pairing(m) => m.to_bytes(),
        MemberInner::Reference(m) => m.to_bytes(),
    };
    encode_file(
        KIND_GS_MEMBER,
        &[
            (TAG_BACKEND, &[backend_byte(member.backend())]),
            (TAG_INDEX, &member.index().to_be_bytes()),
            (TAG_MATERIAL, &material),
        ],
    )
}

pub fn load_group_member(
    bytes: &[u8],
    expected: GsBackend,
) -> Result<GroupMemberKey, KeyfileError> {
    let fields = decode_file(bytes, KIND_GS_MEMBER)?;
    let backend = backend_from_byte(get(&fields, TAG_BACKEND)?)?;
    check_backend(expected, backend)?;
    let index = u32_field(get(&fields, TAG_INDEX)?)?;
    let material = get(&fields, TAG_MATERIAL)?;
    let inner = match backend {
        GsBackend::Pairing => MemberInner::Pairing(
            crate::groupsig::bbs::MemberKey::from_bytes(material)
                .map_err(|_| KeyfileError::Malformed("group member key material"))?,
        ),
        GsBackend::Reference => MemberInner::Reference(
            crate::groupsig::reference::MemberKey::from_bytes(material)
                .map_err(|_| KeyfileError::Malformed("group member key material"))?,
        ),
    };
    Ok(GroupMemberKey { index, inner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groupsig;
    use crate::ibs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn ibs_key_files_round_trip_and_still_sign() {
        let mut rng = ChaCha20Rng::seed_from_u64(40);
        for scheme in [IbsScheme::Shamir, IbsScheme::Gq] {
            let master = ibs::setup(scheme, 512, None, &mut rng).unwrap();
            let params2 = load_ibs_params(&save_ibs_params(master.params())).unwrap();
            assert_eq!(&params2, master.params());

            let master2 = load_ibs_master(&save_ibs_master(&master)).unwrap();
            let user = ibs::keyder(&master2, b"alice");
            let user2 = load_ibs_user(&save_ibs_user(&user)).unwrap();
            let sig = ibs::sign(&user2, b"msg", &mut rng);
            assert!(ibs::verify(&params2, b"alice", b"msg", &sig));
        }
    }

    #[test]
    fn group_key_files_round_trip_for_both_backends() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for backend in [GsBackend::Pairing, GsBackend::Reference] {
            let (gpk, gmsk, members) = groupsig::gen(backend, 3, &mut rng).unwrap();
            let gpk2 = load_group_public(&save_group_public(&gpk), backend).unwrap();
            assert_eq!(gpk2, gpk);
            let gmsk2 = load_group_manager(&save_group_manager(&gmsk), backend).unwrap();
            let member2 = load_group_member(&save_group_member(&members[1]), backend).unwrap();
            assert_eq!(member2.index(), 2);
            let sig = groupsig::sign(&gpk2, &member2, b"hello", &mut rng);
            assert!(groupsig::verify(&gpk, b"hello", &sig));
            assert_eq!(groupsig::trace(&gpk, &gmsk2, b"hello", &sig).unwrap(), 2);
        }
    }

    #[test]
    fn wrong_backend_load_is_an_explicit_error() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let (gpk, gmsk, members) = groupsig::gen(GsBackend::Reference, 1, &mut rng).unwrap();
        assert!(matches!(
            load_group_public(&save_group_public(&gpk), GsBackend::Pairing),
            Err(KeyfileError::BackendMismatch { .. })
        ));
        assert!(matches!(
            load_group_manager(&save_group_manager(&gmsk), GsBackend::Pairing),
            Err(KeyfileError::BackendMismatch { .. })
        ));
        assert!(matches!(
            load_group_member(&save_group_member(&members[0]), GsBackend::Pairing),
            Err(KeyfileError::BackendMismatch { .. })
        ));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        let master = ibs::setup(IbsScheme::Shamir, 512, None, &mut rng).unwrap();
        let bytes = save_ibs_master(&master);
        assert_eq!(load_ibs_master(b"nope").unwrap_err(), KeyfileError::BadMagic);
        assert!(matches!(
            load_ibs_params(&bytes),
            Err(KeyfileError::WrongKind { .. })
        ));
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            load_ibs_master(truncated),
            Err(KeyfileError::Malformed(_))
        ));
    }
}
