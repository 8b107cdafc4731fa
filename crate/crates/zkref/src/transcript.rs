//! Fiat–Shamir transcript.
//!
//! A running SHA-256 chain: every absorbed message and every squeezed
//! challenge updates the state, so challenges depend on the full message
//! sequence in order.

use crate::hash::{hash_parts, Digest32};

const DOMAIN: &[u8] = b"zkmlops/transcript/v1";

#[derive(Clone, Debug)]
pub struct Transcript {
    state: Digest32,
}

impl Transcript {
    pub fn new(label: &[u8]) -> Self {
        Transcript {
            state: hash_parts(DOMAIN, &[b"init", label]),
        }
    }

    pub fn absorb(&mut self, label: &[u8], message: &[u8]) {
        self.state = hash_parts(DOMAIN, &[b"absorb", &self.state, label, message]);
    }

    pub fn challenge_bytes(&mut self, label: &[u8]) -> Digest32 {
        let out = hash_parts(DOMAIN, &[b"squeeze", &self.state, label]);
        self.state = hash_parts(DOMAIN, &[b"ratchet", &self.state, &out]);
        out
    }

    /// `count` uniform values in `{0, 1, 2}`, by rejection sampling on bytes.
    pub fn challenge_trits(&mut self, label: &[u8], count: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(count);
        let mut block = 0u64;
        while out.len() < count {
            let bytes = hash_parts(DOMAIN, &[b"trits", &self.state, label, &block.to_le_bytes()]);
            for b in bytes {
                // 255 is the only byte that would bias the residue.
                if b < 255 && out.len() < count {
                    out.push(b % 3);
                }
            }
            block += 1;
        }
        self.state = hash_parts(DOMAIN, &[b"ratchet", &self.state, &out]);
        out
    }

    /// `count` indices uniform in `[0, bound)`.
    pub fn challenge_indices(&mut self, label: &[u8], count: usize, bound: usize) -> Vec<usize> {
        assert!(bound > 0, "index bound must be positive");
        let bound = bound as u64;
        // Largest multiple of `bound` representable, for unbiased reduction.
        let zone = u64::MAX - (u64::MAX % bound);
        let mut out = Vec::with_capacity(count);
        let mut block = 0u64;
        while out.len() < count {
            let bytes = hash_parts(DOMAIN, &[b"indices", &self.state, label, &block.to_le_bytes()]);
            for chunk in bytes.chunks_exact(8) {
                let v = u64::from_le_bytes(chunk.try_into().unwrap());
                if v < zone && out.len() < count {
                    out.push((v % bound) as usize);
                }
            }
            block += 1;
        }
        let mut encoded = Vec::with_capacity(out.len() * 8);
        for i in &out {
            encoded.extend_from_slice(&(*i as u64).to_le_bytes());
        }
        self.state = hash_parts(DOMAIN, &[b"ratchet", &self.state, &encoded]);
        out
    }

    /// Current chain value; binds everything absorbed and squeezed so far.
    pub fn digest(&self) -> Digest32 {
        self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn challenges_are_deterministic() {
        let run = || {
            let mut t = Transcript::new(b"test");
            t.absorb(b"m", b"hello");
            t.challenge_trits(b"e", 64)
        };
        assert_eq!(run(), run());
        assert!(run().iter().all(|&e| e < 3));
    }

    #[test]
    fn message_order_matters() {
        let mut a = Transcript::new(b"test");
        a.absorb(b"m", b"x");
        a.absorb(b"m", b"y");
        let mut b = Transcript::new(b"test");
        b.absorb(b"m", b"y");
        b.absorb(b"m", b"x");
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn trits_are_roughly_uniform() {
        let mut t = Transcript::new(b"uniform");
        let trits = t.challenge_trits(b"e", 30_000);
        for v in 0..3 {
            let n = trits.iter().filter(|&&e| e == v).count();
            assert!((9_400..10_600).contains(&n), "value {v}: {n}");
        }
    }

    #[test]
    fn indices_stay_in_bound() {
        let mut t = Transcript::new(b"idx");
        assert!(t.challenge_indices(b"i", 500, 7).iter().all(|&i| i < 7));
    }
}
