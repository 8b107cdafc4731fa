//! Spot-check lookup argument: shows that committed `(input, output)` pairs
//! belong to a public table.
//!
//! The prover commits to all pairs in a salted Merkle tree. Fiat–Shamir
//! picks `k` leaf indices (with replacement) from the root; the prover opens
//! them and the verifier checks each opened pair against the table. If a
//! fraction `ρ` of the pairs is outside the table, a proof survives with
//! probability `(1 - ρ)^k`.

use std::collections::HashSet;

use rand::RngCore;

use crate::commit::{leaf_hash, verify_path, MerkleTree};
use crate::error::{Result, ZkError};
use crate::field::Fp;
use crate::hash::Digest32;
use crate::transcript::Transcript;

const TRANSCRIPT_LABEL: &[u8] = b"zkmlops/lookup/v1";

#[derive(Clone, Debug)]
pub struct LookupTable {
    entries: HashSet<(Fp, Fp)>,
}

impl LookupTable {
    pub fn new(entries: impl IntoIterator<Item = (Fp, Fp)>) -> Result<Self> {
        let entries: HashSet<_> = entries.into_iter().collect();
        if entries.is_empty() {
            return Err(ZkError::EmptyTable);
        }
        Ok(LookupTable { entries })
    }

    /// `(v, max(0, v))` for every `v` in `range`.
    pub fn relu(range: std::ops::RangeInclusive<i64>) -> Result<Self> {
        Self::new(range.map(|v| (Fp::from_i64(v), Fp::from_i64(v.max(0)))))
    }

    pub fn contains(&self, pair: &(Fp, Fp)) -> bool {
        self.entries.contains(pair)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupOpening {
    pub index: usize,
    pub pair: (Fp, Fp),
    pub salt: [u8; 32],
    pub siblings: Vec<Digest32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LookupProof {
    pub root: Digest32,
    pub num_pairs: usize,
    pub openings: Vec<LookupOpening>,
}

fn pair_bytes(pair: &(Fp, Fp)) -> [u8; 16] {
    let mut out = [0u8; 16];
    out[..8].copy_from_slice(&pair.0.to_le_bytes());
    out[8..].copy_from_slice(&pair.1.to_le_bytes());
    out
}

fn challenge_indices(root: &Digest32, num_pairs: usize, k: usize) -> Vec<usize> {
    let mut t = Transcript::new(TRANSCRIPT_LABEL);
    t.absorb(b"root", root);
    t.absorb(b"pairs", &(num_pairs as u64).to_le_bytes());
    t.absorb(b"openings", &(k as u64).to_le_bytes());
    t.challenge_indices(b"indices", k, num_pairs)
}

/// Commits to `pairs` and opens `k` challenged positions. Membership is not
/// checked here; catching pairs outside the table is the verifier's job.
pub fn prove_lookup<R: RngCore + ?Sized>(
    pairs: &[(Fp, Fp)],
    table: &LookupTable,
    k: usize,
    rng: &mut R,
) -> Result<LookupProof> {
    if table.is_empty() {
        return Err(ZkError::EmptyTable);
    }
    let salts: Vec<[u8; 32]> = pairs
        .iter()
        .map(|_| {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        })
        .collect();
    let leaves = pairs
        .iter()
        .zip(&salts)
        .map(|(p, s)| leaf_hash(s, &pair_bytes(p)))
        .collect();
    let tree = MerkleTree::build(leaves)?;
    let root = tree.root();
    let openings = challenge_indices(&root, pairs.len(), k)
        .into_iter()
        .map(|index| {
            Ok(LookupOpening {
                index,
                pair: pairs[index],
                salt: salts[index],
                siblings: tree.path(index)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LookupProof {
        root,
        num_pairs: pairs.len(),
        openings,
    })
}

pub fn verify_lookup(proof: &LookupProof, table: &LookupTable) -> bool {
    if proof.num_pairs == 0 || proof.openings.is_empty() {
        return false;
    }
    let expected = challenge_indices(&proof.root, proof.num_pairs, proof.openings.len());
    proof.openings.iter().zip(expected).all(|(o, index)| {
        o.index == index
            && table.contains(&o.pair)
            && verify_path(&proof.root, o.index, leaf_hash(&o.salt, &pair_bytes(&o.pair)), &o.siblings)
    })
}
