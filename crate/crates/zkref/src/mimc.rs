//! MiMC-based sponge used to commit to model weights.
//!
//! The permutation runs 64 rounds of `x <- (x + k + c_i)^17`, followed by a
//! final key addition. 17 is the smallest exponent coprime to p - 1 for the
//! Mersenne-61 field (3, 5, 7, 11 and 13 all divide p - 1), so the round map
//! is a bijection. The sponge has a single-element state: each input element
//! is added and permuted, and the element count is absorbed last.
//!
//! Parameters are pedagogical, not a production security level.

use std::sync::OnceLock;

use crate::circuit::{CircuitBuilder, Wire};
use crate::field::Fp;
use crate::hash::hash_parts;

pub const ROUNDS: usize = 64;
pub const EXPONENT: u64 = 17;
/// `Mul` gates emitted per round: four squarings and one multiply.
pub const MULS_PER_ROUND: usize = 5;

const SEED: &[u8] = b"zkmlops/mimc/v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MimcParams {
    pub key: Fp,
    pub round_constants: [Fp; ROUNDS],
}

fn derive_constant(label: &[u8], index: u64) -> Fp {
    let digest = hash_parts(SEED, &[label, &index.to_le_bytes()]);
    Fp::new(u64::from_le_bytes(digest[..8].try_into().unwrap()))
}

impl MimcParams {
    pub fn standard() -> &'static MimcParams {
        static PARAMS: OnceLock<MimcParams> = OnceLock::new();
        PARAMS.get_or_init(|| MimcParams {
            key: derive_constant(b"key", 0),
            round_constants: std::array::from_fn(|i| derive_constant(b"round", i as u64)),
        })
    }
}

#[inline]
fn pow17(t: Fp) -> Fp {
    let t2 = t.square();
    let t4 = t2.square();
    let t8 = t4.square();
    let t16 = t8.square();
    t16 * t
}

pub fn permute(x: Fp) -> Fp {
    let params = MimcParams::standard();
    let mut x = x;
    for &c in &params.round_constants {
        x = pow17(x + params.key + c);
    }
    x + params.key
}

pub fn mimc_hash(elements: &[Fp]) -> Fp {
    let mut state = Fp::ZERO;
    for &m in elements {
        state = permute(state + m);
    }
    permute(state + Fp::new(elements.len() as u64))
}

fn permute_gadget(b: &mut CircuitBuilder, x: Wire) -> Wire {
    let params = MimcParams::standard();
    let mut x = x;
    for &c in &params.round_constants {
        let t = b.add_const(x, params.key + c);
        let t2 = b.mul(t, t);
        let t4 = b.mul(t2, t2);
        let t8 = b.mul(t4, t4);
        let t16 = b.mul(t8, t8);
        x = b.mul(t16, t);
    }
    b.add_const(x, params.key)
}

/// Emits gates computing `mimc_hash` over `inputs`; returns the digest wire.
pub fn mimc_hash_gadget(b: &mut CircuitBuilder, inputs: &[Wire]) -> Wire {
    let mut state = b.constant(Fp::ZERO);
    for &m in inputs {
        let absorbed = b.add(state, m);
        state = permute_gadget(b, absorbed);
    }
    let absorbed = b.add_const(state, Fp::new(inputs.len() as u64));
    permute_gadget(b, absorbed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MODULUS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Round function evaluated with plain u128 arithmetic and a naive
    /// exponent loop, sharing nothing with `Fp` beyond the constants.
    fn oracle_hash(elements: &[u64]) -> u64 {
        let p = MODULUS as u128;
        let params = MimcParams::standard();
        let key = params.key.value() as u128;
        let permute = |mut x: u128| {
            for c in params.round_constants.iter() {
                let t = (x + key + c.value() as u128) % p;
                let mut acc = 1u128;
                for _ in 0..EXPONENT {
                    acc = acc * t % p;
                }
                x = acc;
            }
            (x + key) % p
        };
        let mut state = 0u128;
        for &m in elements {
            state = permute((state + m as u128) % p);
        }
        permute((state + elements.len() as u128) % p) as u64
    }

    #[test]
    fn exponent_is_coprime_to_group_order() {
        for e in [3u64, 5, 7, 11, 13] {
            assert_eq!((MODULUS - 1) % e, 0, "{e} should divide p-1");
        }
        assert_ne!((MODULUS - 1) % EXPONENT, 0);
    }

    #[test]
    fn empty_hash_is_a_fixed_constant() {
        assert_eq!(mimc_hash(&[]).value(), oracle_hash(&[]));
        assert_eq!(mimc_hash(&[]).value(), 993_493_005_469_649_801);
    }

    #[test]
    fn native_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in 0..6 {
            let v: Vec<u64> = (0..len).map(|_| rng.random_range(0..MODULUS)).collect();
            let f: Vec<Fp> = v.iter().map(|&x| Fp::new(x)).collect();
            assert_eq!(mimc_hash(&f).value(), oracle_hash(&v));
        }
    }

    #[test]
    fn gadget_matches_native() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let len = trial % 5;
            let mut b = CircuitBuilder::new();
            let wires: Vec<Wire> = (0..len).map(|_| b.witness().0).collect();
            let out = mimc_hash_gadget(&mut b, &wires);
            b.output(out);
            let circuit = b.build().unwrap();
            assert_eq!(circuit.num_mul(), (len + 1) * ROUNDS * MULS_PER_ROUND);
            let w: Vec<Fp> = (0..len).map(|_| Fp::random(&mut rng)).collect();
            assert_eq!(circuit.eval(&[], &w).unwrap(), vec![mimc_hash(&w)]);
        }
    }

    #[test]
    fn single_element_changes_change_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut v: Vec<Fp> = (0..4).map(|_| Fp::random(&mut rng)).collect();
            let before = mimc_hash(&v);
            let i = rng.random_range(0..v.len());
            v[i] += Fp::new(rng.random_range(1..MODULUS));
            assert_ne!(mimc_hash(&v), before);
        }
    }

    #[test]
    fn length_is_absorbed() {
        assert_ne!(mimc_hash(&[]), mimc_hash(&[Fp::ZERO]));
        assert_ne!(mimc_hash(&[Fp::ZERO]), mimc_hash(&[Fp::ZERO, Fp::ZERO]));
    }
}
