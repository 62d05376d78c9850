//! Symmetric and conventional asymmetric building blocks.
//!
//! Everything here is deterministic given (key, input) or draws its
//! randomness from an injected RNG, so protocol runs replay bit-exactly
//! under a fixed seed. The concrete algorithms are SHA-256, HMAC-SHA256,
//! AES-256-GCM, an RSA-style KEM and finite-field Diffie-Hellman over
//! fixed 2048/3072-bit groups.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use hmac::{Hmac, Mac};
use num_bigint::{BigUint, RandBigInt};
use num_traits::One;
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numth;

type HmacSha256 = Hmac<Sha256>;

const AEAD_NONCE_LEN: usize = 12;
const KEM_CONFIRM_LEN: usize = 16;
/// Secret DH exponents are 384 bits; ample for the group sizes used here.
const DH_EXPONENT_BITS: u64 = 384;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("ciphertext failed authentication")]
    AeadFailure,
    #[error("malformed input: {0}")]
    Malformed(&'static str),
    #[error("decapsulation failed")]
    Decapsulation,
    #[error("invalid peer share")]
    InvalidPeerShare,
}

/// 32-byte symmetric key (session keys, MAC keys, tracing keys).
///
/// `Debug` deliberately redacts the bytes so key material cannot leak
/// into logs or transcripts through formatting.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; 32]);

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        SymmetricKey(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymmetricKey(<redacted>)")
    }
}

/// 32-byte message authenticator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacTag([u8; 32]);

impl MacTag {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        MacTag(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

/// SHA-256.
pub fn hash(data: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(data);
    hasher.finalize().into()
}

/// SHA-256 over several segments; used for domain-separated derivations.
pub fn hash_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update(part);
    }
    hasher.finalize().into()
}

/// HMAC-SHA256.
pub fn mac_sign(key: &SymmetricKey, msg: &[u8]) -> MacTag {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(&key.0).expect("hmac accepts 32-byte keys");
    mac.update(msg);
    let out = mac.finalize().into_bytes();
    MacTag(out.into())
}

pub fn mac_verify(key: &SymmetricKey, msg: &[u8], tag: &MacTag) -> bool {
    let mut mac = <HmacSha256 as Mac>::new_from_slice(&key.0).expect("hmac accepts 32-byte keys");
    mac.update(msg);
    mac.verify_slice(&tag.0).is_ok()
}

/// AES-256-GCM with a fresh random nonce; output is `nonce || ciphertext`.
pub fn sym_encrypt<R: RngCore + ?Sized>(
    key: &SymmetricKey,
    plaintext: &[u8],
    rng: &mut R,
) -> Vec<u8> {
    let cipher = Aes256Gcm::new((&key.0).into());
    let mut nonce = [0u8; AEAD_NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = cipher
        .encrypt(Nonce::from_slice(&nonce), Payload::from(plaintext))
        .expect("aes-gcm encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(AEAD_NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ct);
    out
}

pub fn sym_decrypt(key: &SymmetricKey, blob: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if blob.len() < AEAD_NONCE_LEN + 16 {
        return Err(CryptoError::Malformed("ciphertext too short"));
    }
    let (nonce, ct) = blob.split_at(AEAD_NONCE_LEN);
    let cipher = Aes256Gcm::new((&key.0).into());
    cipher
        .decrypt(Nonce::from_slice(nonce), Payload::from(ct))
        .map_err(|_| CryptoError::AeadFailure)
}

/// Encapsulation key of the RSA-style KEM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemPublicKey {
    modulus: BigUint,
    exponent: BigUint,
}

/// Decapsulation secret of the RSA-style KEM.
#[derive(Clone)]
pub struct KemSecretKey {
    modulus: BigUint,
    secret_exponent: BigUint,
}

#[derive(Clone)]
pub struct KemKeyPair {
    pub public: KemPublicKey,
    pub secret: KemSecretKey,
}

impl KemPublicKey {
    pub fn modulus_width(&self) -> usize {
        ((self.modulus.bits() + 7) / 8) as usize
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.modulus.to_bytes_be();
        let e = self.exponent.to_bytes_be();
        let mut out = Vec::with_capacity(4 + n.len() + e.len());
        out.extend_from_slice(&(n.len() as u16).to_be_bytes());
        out.extend_from_slice(&n);
        out.extend_from_slice(&(e.len() as u16).to_be_bytes());
        out.extend_from_slice(&e);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let err = CryptoError::Malformed("kem public key");
        let take = |buf: &[u8]| -> Result<(BigUint, usize), CryptoError> {
            if buf.len() < 2 {
                return Err(err.clone());
            }
            let len = u16::from_be_bytes([buf[0], buf[1]]) as usize;
            if buf.len() < 2 + len {
                return Err(err.clone());
            }
            Ok((BigUint::from_bytes_be(&buf[2..2 + len]), 2 + len))
        };
        let (modulus, used) = take(bytes)?;
        let (exponent, used2) = take(&bytes[used..])?;
        if used + used2 != bytes.len() {
            return Err(err);
        }
        Ok(KemPublicKey { modulus, exponent })
    }
}

/// Generate an RSA-KEM key pair with a modulus of `bits` bits.
pub fn kem_keygen<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> KemKeyPair {
    assert!(bits >= 64 && bits % 2 == 0, "modulus size must be even");
    let e = BigUint::from(65537u32);
    loop {
        let p = numth::gen_prime(bits / 2, rng);
        let q = numth::gen_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        let phi = (&p - 1u32) * (&q - 1u32);
        if let Some(d) = numth::mod_inverse(&e, &phi) {
            return KemKeyPair {
                public: KemPublicKey {
                    modulus: n.clone(),
                    exponent: e,
                },
                secret: KemSecretKey {
                    modulus: n,
                    secret_exponent: d,
                },
            };
        }
    }
}

fn kem_derive(x_bytes: &[u8]) -> (SymmetricKey, [u8; KEM_CONFIRM_LEN]) {
    let key = hash_parts(&[b"kem-key", x_bytes]);
    let confirm_full = hash_parts(&[b"kem-confirm", x_bytes]);
    let mut confirm = [0u8; KEM_CONFIRM_LEN];
    confirm.copy_from_slice(&confirm_full[..KEM_CONFIRM_LEN]);
    (SymmetricKey(key), confirm)
}

/// Encapsulate a fresh shared key to `pk`. Returns the key and the
/// ciphertext (`x^e mod n` plus a key-confirmation tag that lets the
/// decapsulator reject tampered ciphertexts explicitly).
pub fn kem_encapsulate<R: RngCore + ?Sized>(
    pk: &KemPublicKey,
    rng: &mut R,
) -> (SymmetricKey, Vec<u8>) {
    let two = BigUint::from(2u32);
    let x = rng.gen_biguint_range(&two, &(&pk.modulus - 1u32));
    let c = x.modpow(&pk.exponent, &pk.modulus);
    let width = pk.modulus_width();
    let x_bytes = numth::to_fixed_bytes(&x, width);
    let (key, confirm) = kem_derive(&x_bytes);
    let mut ct = numth::to_fixed_bytes(&c, width);
    ct.extend_from_slice(&confirm);
    (key, ct)
}

pub fn kem_decapsulate(sk: &KemSecretKey, ciphertext: &[u8]) -> Result<SymmetricKey, CryptoError> {
    let width = ((sk.modulus.bits() + 7) / 8) as usize;
    if ciphertext.len() != width + KEM_CONFIRM_LEN {
        return Err(CryptoError::Malformed("kem ciphertext length"));
    }
    let (c_bytes, confirm) = ciphertext.split_at(width);
    let c = BigUint::from_bytes_be(c_bytes);
    if c >= sk.modulus {
        return Err(CryptoError::Malformed("kem ciphertext out of range"));
    }
    let x = c.modpow(&sk.secret_exponent, &sk.modulus);
    let x_bytes = numth::to_fixed_bytes(&x, width);
    let (key, expected_confirm) = kem_derive(&x_bytes);
    if confirm != expected_confirm {
        return Err(CryptoError::Decapsulation);
    }
    Ok(key)
}

/// Fixed Diffie-Hellman group; the primes are the 2048- and 3072-bit
/// MODP groups of RFC 3526 with generator 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DhGroup {
    Modp2048,
    Modp3072,
}

const MODP_2048_HEX: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3BE39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF";

const MODP_3072_HEX: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7EDEE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3BE39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF6955817183995497CEA956AE515D2261898FA051015728E5A8AAAC42DAD33170D04507A33A85521ABDF1CBA64ECFB850458DBEF0A8AEA71575D060C7DB3970F85A6E1E4C7ABF5AE8CDB0933D71E8C94E04A25619DCEE3D2261AD2EE6BF12FFA06D98A0864D87602733EC86A64521F2B18177B200CBBE117577A615D6C770988C0BAD946E208E24FA074E5AB3143DB5BFCE0FD108E4B82D120A93AD2CAFFFFFFFFFFFFFFFF";

impl DhGroup {
    pub fn prime(&self) -> BigUint {
        use std::sync::OnceLock;
        static P2048: OnceLock<BigUint> = OnceLock::new();
        static P3072: OnceLock<BigUint> = OnceLock::new();
        match self {
            DhGroup::Modp2048 => {
                P2048.get_or_init(|| BigUint::parse_bytes(MODP_2048_HEX.as_bytes(), 16).unwrap())
            }
            DhGroup::Modp3072 => {
                P3072.get_or_init(|| BigUint::parse_bytes(MODP_3072_HEX.as_bytes(), 16).unwrap())
            }
        }
        .clone()
    }

    pub fn generator(&self) -> BigUint {
        BigUint::from(2u32)
    }

    pub fn byte_len(&self) -> usize {
        match self {
            DhGroup::Modp2048 => 256,
            DhGroup::Modp3072 => 384,
        }
    }
}

/// One party's Diffie-Hellman contribution: a secret scalar and the
/// public share `g^scalar`.
#[derive(Clone)]
pub struct DhShare {
    group: DhGroup,
    scalar: BigUint,
    point: BigUint,
}

impl DhShare {
    pub fn group(&self) -> DhGroup {
        self.group
    }

    /// Public share, canonically encoded at the group's fixed width.
    pub fn point_bytes(&self) -> Vec<u8> {
        numth::to_fixed_bytes(&self.point, self.group.byte_len())
    }
}

pub fn dh_keygen<R: RngCore + ?Sized>(group: DhGroup, rng: &mut R) -> DhShare {
    let p = group.prime();
    loop {
        let scalar = rng.gen_biguint(DH_EXPONENT_BITS);
        if scalar <= BigUint::one() {
            continue;
        }
        let point = group.generator().modpow(&scalar, &p);
        return DhShare {
            group,
            scalar,
            point,
        };
    }
}

/// Combine our secret scalar with the peer's public share. The session
/// key is the hash of the canonical fixed-width encoding of the shared
/// group element. Degenerate peer shares (0, 1, p-1 and out-of-range
/// values) are rejected.
pub fn dh_combine(share: &DhShare, peer_point: &[u8]) -> Result<SymmetricKey, CryptoError> {
    let p = share.group.prime();
    if peer_point.len() != share.group.byte_len() {
        return Err(CryptoError::InvalidPeerShare);
    }
    let peer = BigUint::from_bytes_be(peer_point);
    let two = BigUint::from(2u32);
    if peer < two || peer >= &p - 1u32 {
        return Err(CryptoError::InvalidPeerShare);
    }
    let shared = peer.modpow(&share.scalar, &p);
    let shared_bytes = numth::to_fixed_bytes(&shared, share.group.byte_len());
    Ok(SymmetricKey(hash_parts(&[b"dh-kdf", &shared_bytes])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    #[test]
    fn hash_of_empty_input_matches_known_vector() {
        assert_eq!(
            hex::encode(hash(b"")),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn hash_is_deterministic_and_sensitive_to_single_bits() {
        let mut rng = rng(2);
        for _ in 0..1000 {
            let mut data = vec![0u8; rng.gen_range(1..64)];
            rng.fill_bytes(&mut data);
            assert_eq!(hash(&data), hash(&data));
            let mut flipped = data.clone();
            let bit = rng.gen_range(0..flipped.len() * 8);
            flipped[bit / 8] ^= 1 << (bit % 8);
            assert_ne!(hash(&data), hash(&flipped));
        }
    }

    #[test]
    fn mac_round_trip_and_mismatch() {
        let mut rng = rng(3);
        for _ in 0..1000 {
            let key = SymmetricKey::generate(&mut rng);
            let mut msg = vec![0u8; rng.gen_range(0..48)];
            rng.fill_bytes(&mut msg);
            let tag = mac_sign(&key, &msg);
            assert!(mac_verify(&key, &msg, &tag));

            let other_key = SymmetricKey::generate(&mut rng);
            assert!(!mac_verify(&other_key, &msg, &tag));

            let mut other_msg = msg.clone();
            other_msg.push(0x55);
            assert!(!mac_verify(&key, &other_msg, &tag));
        }
    }

    #[test]
    fn aead_round_trip_fresh_nonces_and_tamper_detection() {
        let mut rng = rng(4);
        for _ in 0..200 {
            let key = SymmetricKey::generate(&mut rng);
            let mut pt = vec![0u8; rng.gen_range(0..128)];
            rng.fill_bytes(&mut pt);
            let ct1 = sym_encrypt(&key, &pt, &mut rng);
            let ct2 = sym_encrypt(&key, &pt, &mut rng);
            assert_ne!(ct1, ct2, "fresh nonce must randomize ciphertexts");
            assert_eq!(sym_decrypt(&key, &ct1).unwrap(), pt);

            let mut tampered = ct1.clone();
            let pos = rng.gen_range(0..tampered.len());
            tampered[pos] ^= 0x01;
            assert_eq!(sym_decrypt(&key, &tampered), Err(CryptoError::AeadFailure));
        }
    }

    #[test]
    fn sym_decrypt_rejects_truncated_blob() {
        let key = SymmetricKey::from_bytes([7u8; 32]);
        assert!(matches!(
            sym_decrypt(&key, &[0u8; 5]),
            Err(CryptoError::Malformed(_))
        ));
    }

    #[test]
    fn kem_round_trip_and_tamper_rejection() {
        let mut rng = rng(5);
        let pair = kem_keygen(512, &mut rng);
        for _ in 0..50 {
            let (key, ct) = kem_encapsulate(&pair.public, &mut rng);
            assert_eq!(kem_decapsulate(&pair.secret, &ct).unwrap(), key);

            let mut tampered = ct.clone();
            let pos = rng.gen_range(0..tampered.len());
            tampered[pos] ^= 0x80;
            assert!(kem_decapsulate(&pair.secret, &tampered).is_err());
        }
    }

    #[test]
    fn kem_wrong_secret_is_flagged() {
        let mut rng = rng(6);
        let pair = kem_keygen(512, &mut rng);
        let other = kem_keygen(512, &mut rng);
        for _ in 0..20 {
            let (_key, ct) = kem_encapsulate(&pair.public, &mut rng);
            assert!(kem_decapsulate(&other.secret, &ct).is_err());
        }
    }

    #[test]
    fn kem_public_key_encoding_round_trips() {
        let mut rng = rng(7);
        let pair = kem_keygen(512, &mut rng);
        let bytes = pair.public.to_bytes();
        assert_eq!(KemPublicKey::from_bytes(&bytes).unwrap(), pair.public);
        assert!(KemPublicKey::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn dh_both_directions_agree_third_party_differs() {
        let mut rng = rng(8);
        for _ in 0..5 {
            let a = dh_keygen(DhGroup::Modp2048, &mut rng);
            let b = dh_keygen(DhGroup::Modp2048, &mut rng);
            let c = dh_keygen(DhGroup::Modp2048, &mut rng);
            let kab = dh_combine(&a, &b.point_bytes()).unwrap();
            let kba = dh_combine(&b, &a.point_bytes()).unwrap();
            assert_eq!(kab, kba);
            let kca = dh_combine(&c, &a.point_bytes()).unwrap();
            assert_ne!(kab, kca);
        }
    }

    #[test]
    fn dh_rejects_degenerate_peer_shares() {
        let mut rng = rng(9);
        let share = dh_keygen(DhGroup::Modp2048, &mut rng);
        let width = DhGroup::Modp2048.byte_len();
        let one = numth::to_fixed_bytes(&BigUint::one(), width);
        assert_eq!(
            dh_combine(&share, &one),
            Err(CryptoError::InvalidPeerShare)
        );
        let zero = vec![0u8; width];
        assert_eq!(
            dh_combine(&share, &zero),
            Err(CryptoError::InvalidPeerShare)
        );
        let p_minus_one =
            numth::to_fixed_bytes(&(DhGroup::Modp2048.prime() - 1u32), width);
        assert_eq!(
            dh_combine(&share, &p_minus_one),
            Err(CryptoError::InvalidPeerShare)
        );
    }

    #[test]
    fn modp_groups_are_prime_with_expected_structure() {
        let mut rng = rng(10);
        for (group, bits) in [(DhGroup::Modp2048, 2048u64), (DhGroup::Modp3072, 3072)] {
            let p = group.prime();
            assert_eq!(p.bits(), bits);
            assert!(crate::numth::is_probable_prime(&p, 16, &mut rng));
            // RFC 3526 primes have all-ones top and bottom 64 bits.
            let bytes = p.to_bytes_be();
            assert!(bytes[..8].iter().all(|&b| b == 0xFF));
            assert!(bytes[bytes.len() - 8..].iter().all(|&b| b == 0xFF));
        }
    }
}
