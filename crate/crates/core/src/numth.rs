//! Modular-arithmetic helpers shared by the IBS schemes and the KEM.

use num_bigint::{BigInt, BigUint, RandBigInt, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::RngCore;

/// Odd primes below 2000, used to sieve candidates before Miller-Rabin.
fn small_primes() -> &'static [u32] {
    use std::sync::OnceLock;
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut sieve = vec![true; 2000];
        let mut out = Vec::new();
        for n in 3..2000usize {
            if sieve[n] {
                out.push(n as u32);
                let mut m = n * n;
                while m < 2000 {
                    sieve[m] = false;
                    m += n;
                }
            }
        }
        out
    })
}

/// Modular inverse of `a` mod `m`, if `gcd(a, m) == 1`.
pub fn mod_inverse(a: &BigUint, m: &BigUint) -> Option<BigUint> {
    let a = BigInt::from_biguint(Sign::Plus, a.clone());
    let m_int = BigInt::from_biguint(Sign::Plus, m.clone());
    let ext = a.extended_gcd(&m_int);
    if !ext.gcd.is_one() {
        return None;
    }
    let mut x = ext.x % &m_int;
    if x.is_negative() {
        x += &m_int;
    }
    Some(x.to_biguint().expect("non-negative after reduction"))
}

/// Miller-Rabin probable-prime test with `rounds` random bases.
pub fn is_probable_prime<R: RngCore + ?Sized>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    if n == &two {
        return true;
    }
    if n.is_even() {
        return false;
    }
    for &p in small_primes() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    // n - 1 = d * 2^s with d odd
    let n_minus_one = n - 1u32;
    let s = n_minus_one.trailing_zeros().unwrap_or(0);
    let d = &n_minus_one >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &(n - &two));
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_one {
            continue;
        }
        for _ in 0..s.saturating_sub(1) {
            x = x.modpow(&two, n);
            if x == n_minus_one {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Generate a random prime of exactly `bits` bits (top bit set, odd).
pub fn gen_prime<R: RngCore + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    assert!(bits >= 4, "prime size too small");
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(0, true);
        if is_probable_prime(&candidate, 24, rng) {
            return candidate;
        }
    }
}

/// Fixed-width big-endian encoding, zero-padded on the left.
pub fn to_fixed_bytes(value: &BigUint, width: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    assert!(raw.len() <= width, "value does not fit canonical width");
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn inverse_of_three_mod_forty() {
        let inv = mod_inverse(&BigUint::from(3u32), &BigUint::from(40u32)).unwrap();
        assert_eq!(inv, BigUint::from(27u32));
    }

    #[test]
    fn no_inverse_when_not_coprime() {
        assert!(mod_inverse(&BigUint::from(10u32), &BigUint::from(40u32)).is_none());
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let naive = |n: u64| {
            if n < 2 {
                return false;
            }
            let mut d = 2;
            while d * d <= n {
                if n % d == 0 {
                    return false;
                }
                d += 1;
            }
            true
        };
        for n in 2u64..3000 {
            assert_eq!(
                is_probable_prime(&BigUint::from(n), 16, &mut rng),
                naive(n),
                "disagreement at {n}"
            );
        }
    }

    #[test]
    fn generated_primes_have_requested_size() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..4 {
            let p = gen_prime(96, &mut rng);
            assert_eq!(p.bits(), 96);
            assert!(is_probable_prime(&p, 24, &mut rng));
        }
    }

    #[test]
    fn fixed_width_encoding_pads_left() {
        let v = BigUint::from(0x0102u32);
        assert_eq!(to_fixed_bytes(&v, 4), vec![0, 0, 1, 2]);
    }
}
