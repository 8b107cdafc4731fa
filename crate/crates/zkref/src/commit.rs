//! Salted Merkle commitments, used directly as a polynomial commitment to a
//! coefficient vector and as the backbone of the lookup argument.
//!
//! Leaves are `H(0x00 || salt || payload)`, inner nodes `H(0x01 || l || r)`.
//! The tree is padded to a power of two with an all-zero digest. Fresh salts
//! make the root hiding; collision resistance makes it binding.

use rand::RngCore;

use crate::error::{Result, ZkError};
use crate::field::Fp;
use crate::hash::{hash_parts, Digest32};

const DOMAIN: &[u8] = b"zkmlops/merkle/v1";
const PADDING: Digest32 = [0; 32];

pub fn leaf_hash(salt: &[u8; 32], payload: &[u8]) -> Digest32 {
    hash_parts(DOMAIN, &[&[0x00], salt, payload])
}

fn node_hash(left: &Digest32, right: &Digest32) -> Digest32 {
    hash_parts(DOMAIN, &[&[0x01], left, right])
}

#[derive(Clone, Debug)]
pub struct MerkleTree {
    /// `levels[0]` are the padded leaves, the last level is the root.
    levels: Vec<Vec<Digest32>>,
    len: usize,
}

impl MerkleTree {
    pub fn build(leaves: Vec<Digest32>) -> Result<Self> {
        if leaves.is_empty() {
            return Err(ZkError::EmptyInput);
        }
        let len = leaves.len();
        let mut level = leaves;
        level.resize(len.next_power_of_two(), PADDING);
        let mut levels = vec![level];
        while levels.last().unwrap().len() > 1 {
            let next = levels
                .last()
                .unwrap()
                .chunks(2)
                .map(|pair| node_hash(&pair[0], &pair[1]))
                .collect();
            levels.push(next);
        }
        Ok(MerkleTree { levels, len })
    }

    pub fn root(&self) -> Digest32 {
        self.levels.last().unwrap()[0]
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sibling digests from the leaf up to (excluding) the root.
    pub fn path(&self, index: usize) -> Result<Vec<Digest32>> {
        if index >= self.len {
            return Err(ZkError::IndexOutOfRange { index, len: self.len });
        }
        let mut i = index;
        let mut out = Vec::with_capacity(self.levels.len() - 1);
        for level in &self.levels[..self.levels.len() - 1] {
            out.push(level[i ^ 1]);
            i >>= 1;
        }
        Ok(out)
    }
}

pub fn verify_path(root: &Digest32, index: usize, leaf: Digest32, siblings: &[Digest32]) -> bool {
    if siblings.len() >= usize::BITS as usize || index >> siblings.len() != 0 {
        return false;
    }
    let mut acc = leaf;
    let mut i = index;
    for sibling in siblings {
        acc = if i & 1 == 0 {
            node_hash(&acc, sibling)
        } else {
            node_hash(sibling, &acc)
        };
        i >>= 1;
    }
    acc == *root
}

/// Prover-side state kept after committing to `P(x) = Σ c_i x^i`.
#[derive(Clone, Debug)]
pub struct OpeningState {
    coefficients: Vec<Fp>,
    salts: Vec<[u8; 32]>,
    tree: MerkleTree,
}

impl OpeningState {
    pub fn coefficients(&self) -> &[Fp] {
        &self.coefficients
    }

    /// `P(x)` by Horner's rule.
    pub fn evaluate(&self, x: Fp) -> Fp {
        self.coefficients.iter().rev().fold(Fp::ZERO, |acc, &c| acc * x + c)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MembershipPath {
    pub salt: [u8; 32],
    pub siblings: Vec<Digest32>,
}

pub fn poly_commit<R: RngCore + ?Sized>(coefficients: &[Fp], rng: &mut R) -> Result<(Digest32, OpeningState)> {
    let salts: Vec<[u8; 32]> = coefficients
        .iter()
        .map(|_| {
            let mut s = [0u8; 32];
            rng.fill_bytes(&mut s);
            s
        })
        .collect();
    let leaves = coefficients
        .iter()
        .zip(&salts)
        .map(|(c, s)| leaf_hash(s, &c.to_le_bytes()))
        .collect();
    let tree = MerkleTree::build(leaves)?;
    let root = tree.root();
    Ok((
        root,
        OpeningState {
            coefficients: coefficients.to_vec(),
            salts,
            tree,
        },
    ))
}

pub fn poly_open(state: &OpeningState, index: usize) -> Result<(Fp, MembershipPath)> {
    let siblings = state.tree.path(index)?;
    Ok((
        state.coefficients[index],
        MembershipPath {
            salt: state.salts[index],
            siblings,
        },
    ))
}

pub fn poly_verify_opening(root: &Digest32, index: usize, value: Fp, path: &MembershipPath) -> bool {
    verify_path(root, index, leaf_hash(&path.salt, &value.to_le_bytes()), &path.siblings)
}
