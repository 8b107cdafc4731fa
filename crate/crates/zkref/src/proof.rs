//! Public statement and proof containers with their binary encodings.

use crate::codec::{Reader, Writer};
use crate::error::{Result, ZkError};
use crate::field::{Fp, ENCODED_LEN};
use crate::hash::Digest32;

pub const SEED_LEN: usize = 32;
pub const PARTIES: usize = 3;

/// What the verifier knows: `C(x, w) = y` for the circuit named by
/// `circuit_digest`, optionally with the weights bound to `weight_commitment`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Statement {
    pub circuit_digest: Digest32,
    pub public_inputs: Vec<Fp>,
    pub public_outputs: Vec<Fp>,
    pub weight_commitment: Option<Fp>,
}

impl Statement {
    /// The circuit's public-input vector: `x` followed by the commitment.
    pub fn public_vector(&self) -> Vec<Fp> {
        self.public_inputs
            .iter()
            .copied()
            .chain(self.weight_commitment)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes32(&self.circuit_digest);
        w.fps(&self.public_inputs);
        w.fps(&self.public_outputs);
        match self.weight_commitment {
            Some(c) => {
                w.u8(1);
                w.fp(c);
            }
            None => w.u8(0),
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| ZkError::MalformedProof(format!("statement: {m}"));
        let mut r = Reader::new(bytes).map_err(|e| bad(&e))?;
        let circuit_digest = r.bytes32().ok_or_else(|| bad("truncated digest"))?;
        let public_inputs = r.fps().ok_or_else(|| bad("bad inputs"))?;
        let public_outputs = r.fps().ok_or_else(|| bad("bad outputs"))?;
        let weight_commitment = match r.u8() {
            Some(0) => None,
            Some(1) => Some(r.fp().ok_or_else(|| bad("bad commitment"))?),
            _ => return Err(bad("bad commitment flag")),
        };
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Statement {
            circuit_digest,
            public_inputs,
            public_outputs,
            weight_commitment,
        })
    }
}

/// A party's view: its additive witness share and the share it computed at
/// every multiplication gate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub witness_share: Vec<Fp>,
    pub mul_outputs: Vec<Fp>,
}

impl View {
    pub fn encoded_len(&self) -> usize {
        8 + (self.witness_share.len() + self.mul_outputs.len()) * ENCODED_LEN
    }

    pub fn write_to(&self, w: &mut Writer) {
        w.fps(&self.witness_share);
        w.fps(&self.mul_outputs);
    }

    /// Bytes fed to the view commitment.
    pub fn commitment_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&(self.witness_share.len() as u32).to_le_bytes());
        for v in &self.witness_share {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.mul_outputs.len() as u32).to_le_bytes());
        for v in &self.mul_outputs {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenedParty {
    pub seed: [u8; SEED_LEN],
    pub salt: [u8; 32],
    pub view: View,
}

/// One parallel repetition. The opened pair is implied by the Fiat–Shamir
/// challenge `e`: parties `e` and `e + 1 (mod 3)`, in that order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepetitionProof {
    pub commitments: [Digest32; PARTIES],
    /// Per party: shares of the circuit outputs followed by shares of every
    /// asserted wire.
    pub output_shares: [Vec<Fp>; PARTIES],
    pub opened: [OpenedParty; 2],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Proof {
    pub repetitions: Vec<RepetitionProof>,
    /// Final transcript state, binding statement, commitments and challenges.
    pub binding: Digest32,
}

impl Proof {
    pub fn version(&self) -> u8 {
        crate::codec::FORMAT_VERSION
    }

    pub fn num_repetitions(&self) -> usize {
        self.repetitions.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per_rep = self
            .repetitions
            .first()
            .map(|r| {
                PARTIES * 32
                    + r.output_shares.iter().map(|s| 4 + s.len() * ENCODED_LEN).sum::<usize>()
                    + r.opened.iter().map(|o| 64 + o.view.encoded_len()).sum::<usize>()
            })
            .unwrap_or(0);
        let mut w = Writer::with_capacity(40 + per_rep * self.repetitions.len());
        w.len_prefix(self.repetitions.len());
        for rep in &self.repetitions {
            for c in &rep.commitments {
                w.bytes32(c);
            }
            for s in &rep.output_shares {
                w.fps(s);
            }
            for o in &rep.opened {
                w.bytes32(&o.seed);
                w.bytes32(&o.salt);
                o.view.write_to(&mut w);
            }
        }
        w.bytes32(&self.binding);
        w.finish()
    }

    /// Parses untrusted bytes. Never panics; every structural problem is a
    /// `MalformedProof`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| ZkError::MalformedProof(m.to_string());
        let mut r = Reader::new(bytes).map_err(|e| bad(&e))?;
        let t = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
        // Each repetition needs at least its three commitments.
        if t.saturating_mul(PARTIES * 32) > r.remaining() {
            return Err(bad("repetition count exceeds input"));
        }
        let mut repetitions = Vec::with_capacity(t);
        for _ in 0..t {
            let mut commitments = [[0u8; 32]; PARTIES];
            for c in &mut commitments {
                *c = r.bytes32().ok_or_else(|| bad("truncated commitment"))?;
            }
            let mut shares = Vec::with_capacity(PARTIES);
            for _ in 0..PARTIES {
                shares.push(r.fps().ok_or_else(|| bad("bad output shares"))?);
            }
            let mut opened = Vec::with_capacity(2);
            for _ in 0..2 {
                let seed = r.bytes32().ok_or_else(|| bad("truncated seed"))?;
                let salt = r.bytes32().ok_or_else(|| bad("truncated salt"))?;
                let witness_share = r.fps().ok_or_else(|| bad("bad witness share"))?;
                let mul_outputs = r.fps().ok_or_else(|| bad("bad view"))?;
                opened.push(OpenedParty {
                    seed,
                    salt,
                    view: View {
                        witness_share,
                        mul_outputs,
                    },
                });
            }
            repetitions.push(RepetitionProof {
                commitments,
                output_shares: shares.try_into().unwrap(),
                opened: opened.try_into().unwrap(),
            });
        }
        let binding = r.bytes32().ok_or_else(|| bad("truncated binding digest"))?;
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        Ok(Proof { repetitions, binding })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statement_round_trip() {
        let s = Statement {
            circuit_digest: [7; 32],
            public_inputs: vec![Fp::new(1), Fp::from_i64(-2)],
            public_outputs: vec![Fp::new(3)],
            weight_commitment: Some(Fp::new(99)),
        };
        assert_eq!(Statement::from_bytes(&s.to_bytes()).unwrap(), s);
        assert_eq!(s.public_vector().len(), 3);
    }

    #[test]
    fn garbage_never_panics() {
        for len in 0..200 {
            let bytes: Vec<u8> = (0..len).map(|i| (i * 37 % 251) as u8).collect();
            let _ = Proof::from_bytes(&bytes);
            let _ = Statement::from_bytes(&bytes);
        }
        let mut huge = vec![1u8];
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(Proof::from_bytes(&huge).is_err());
    }
}
