//! Three-party MPC-in-the-head prover and verifier, made non-interactive with
//! Fiat–Shamir.
//!
//! Per repetition the prover splits the witness into three additive shares
//! (parties 0 and 1 derive theirs from their seeds, party 2 holds the
//! correction), evaluates the circuit on shares, and commits to every
//! party's `(seed, view)` under a fresh salt. Linear gates are local. A
//! multiplication gate uses the cross-term rule
//!
//! ```text
//! z_i = a_i b_i + a_{i+1} b_i + a_i b_{i+1} + r_i - r_{i+1}
//! ```
//!
//! with `r_i` drawn from party `i`'s tape, so the `z_i` sum to `a b`. The
//! challenge `e` opens parties `e` and `e + 1`; the verifier recomputes party
//! `e`'s view from the two seeds and party `e + 1`'s messages.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::circuit::{Circuit, Gate};
use crate::error::{Result, ZkError};
use crate::field::Fp;
use crate::hash::{hash_parts, Digest32};
use crate::proof::{OpenedParty, Proof, RepetitionProof, Statement, View, PARTIES, SEED_LEN};
use crate::transcript::Transcript;

const TRANSCRIPT_LABEL: &[u8] = b"zkmlops/mpcith/v1";
const COMMIT_DOMAIN: &[u8] = b"zkmlops/mpcith/view-commitment";

/// Default number of parallel repetitions; soundness error (2/3)^64 ~ 2^-37.
pub const DEFAULT_REPETITIONS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub accepted: bool,
    pub detail: String,
}

impl Verdict {
    fn accept() -> Self {
        Verdict {
            accepted: true,
            detail: "all repetitions consistent".into(),
        }
    }

    fn reject(detail: impl Into<String>) -> Self {
        Verdict {
            accepted: false,
            detail: detail.into(),
        }
    }
}

/// A party's random tape: one stream for its witness share, one for the
/// multiplication-gate masks, so either can be replayed independently.
struct Tape {
    rng: ChaCha20Rng,
}

impl Tape {
    fn witness_stream(seed: &[u8; SEED_LEN]) -> Self {
        let mut rng = ChaCha20Rng::from_seed(*seed);
        rng.set_stream(0);
        Tape { rng }
    }

    fn mul_stream(seed: &[u8; SEED_LEN]) -> Self {
        let mut rng = ChaCha20Rng::from_seed(*seed);
        rng.set_stream(1);
        Tape { rng }
    }

    fn next(&mut self) -> Fp {
        Fp::random(&mut self.rng)
    }

    fn take(&mut self, n: usize) -> Vec<Fp> {
        (0..n).map(|_| self.next()).collect()
    }
}

fn commit_view(salt: &[u8; 32], seed: &[u8; SEED_LEN], view: &View) -> Digest32 {
    hash_parts(COMMIT_DOMAIN, &[salt, seed, &view.commitment_bytes()])
}

/// Value a public constant contributes to `party`'s share.
#[inline]
fn public_share(party: usize, value: Fp) -> Fp {
    if party == 0 {
        value
    } else {
        Fp::ZERO
    }
}

/// Expected sum of the output shares: `y` then one zero per assertion.
fn expected_outputs(statement: &Statement, circuit: &Circuit) -> Vec<Fp> {
    let mut out = statement.public_outputs.clone();
    out.resize(circuit.num_outputs() + circuit.assertions().len(), Fp::ZERO);
    out
}

fn absorb_repetition(transcript: &mut Transcript, commitments: &[Digest32; PARTIES], shares: &[Vec<Fp>; PARTIES]) {
    let mut msg = Vec::with_capacity(PARTIES * 32 + shares.iter().map(|s| s.len() * 8).sum::<usize>());
    for c in commitments {
        msg.extend_from_slice(c);
    }
    for s in shares {
        for v in s {
            msg.extend_from_slice(&v.to_le_bytes());
        }
    }
    transcript.absorb(b"repetition", &msg);
}

fn start_transcript(statement: &Statement, repetitions: usize) -> Transcript {
    let mut transcript = Transcript::new(TRANSCRIPT_LABEL);
    transcript.absorb(b"statement", &statement.to_bytes());
    transcript.absorb(b"repetitions", &(repetitions as u64).to_le_bytes());
    transcript
}

/// Corrupts one party's share at one multiplication gate. Used to measure
/// soundness empirically; an honest prover never sets this.
#[derive(Clone, Copy, Debug)]
pub struct MulFault {
    /// Ordinal of the `Mul` gate among multiplications.
    pub mul_index: usize,
    pub delta: Fp,
}

struct PartyRun {
    seed: [u8; SEED_LEN],
    salt: [u8; 32],
    view: View,
    output_share: Vec<Fp>,
    commitment: Digest32,
}

/// Secrets for one repetition, drawn from the master RNG before the
/// repetitions fan out so results do not depend on scheduling.
struct RepetitionSecrets {
    seeds: [[u8; SEED_LEN]; PARTIES],
    salts: [[u8; 32]; PARTIES],
    faulty_party: usize,
}

fn simulate(circuit: &Circuit, public: &[Fp], witness: &[Fp], secrets: &RepetitionSecrets, fault: Option<MulFault>) -> [PartyRun; PARTIES] {
    let n_wit = circuit.num_witness();
    let s0 = Tape::witness_stream(&secrets.seeds[0]).take(n_wit);
    let s1 = Tape::witness_stream(&secrets.seeds[1]).take(n_wit);
    let s2: Vec<Fp> = (0..n_wit).map(|k| witness[k] - s0[k] - s1[k]).collect();
    let shares = [s0, s1, s2];
    let mut tapes: [Tape; PARTIES] = std::array::from_fn(|i| Tape::mul_stream(&secrets.seeds[i]));

    let mut wires: Vec<[Fp; PARTIES]> = Vec::with_capacity(circuit.gates().len());
    let mut mul_outputs: [Vec<Fp>; PARTIES] = std::array::from_fn(|_| Vec::with_capacity(circuit.num_mul()));
    for gate in circuit.gates() {
        let v = match *gate {
            Gate::Input(k) => std::array::from_fn(|i| public_share(i, public[k])),
            Gate::Const(c) => std::array::from_fn(|i| public_share(i, c)),
            Gate::Witness(k) => std::array::from_fn(|i| shares[i][k]),
            Gate::Add(a, b) => {
                let (a, b) = (wires[a], wires[b]);
                std::array::from_fn(|i| a[i] + b[i])
            }
            Gate::ScalarMul(c, a) => {
                let a = wires[a];
                std::array::from_fn(|i| c * a[i])
            }
            Gate::AssertZero(a) => wires[a],
            Gate::Mul(a, b) => {
                let (a, b) = (wires[a], wires[b]);
                let r: [Fp; PARTIES] = std::array::from_fn(|i| tapes[i].next());
                let mut z: [Fp; PARTIES] = std::array::from_fn(|i| {
                    let j = (i + 1) % PARTIES;
                    a[i] * b[i] + a[j] * b[i] + a[i] * b[j] + r[i] - r[j]
                });
                if let Some(f) = fault {
                    if f.mul_index == mul_outputs[0].len() {
                        z[secrets.faulty_party] += f.delta;
                    }
                }
                for i in 0..PARTIES {
                    mul_outputs[i].push(z[i]);
                }
                z
            }
        };
        wires.push(v);
    }

    let output_wires: Vec<usize> = circuit.outputs().iter().chain(circuit.assertions()).copied().collect();
    let [w0, w1, w2] = shares;
    let [m0, m1, m2] = mul_outputs;
    let views = [(w0, m0), (w1, m1), (w2, m2)];
    let mut i = 0;
    views.map(|(witness_share, mul_outputs)| {
        let party = i;
        i += 1;
        let view = View { witness_share, mul_outputs };
        let commitment = commit_view(&secrets.salts[party], &secrets.seeds[party], &view);
        PartyRun {
            seed: secrets.seeds[party],
            salt: secrets.salts[party],
            output_share: output_wires.iter().map(|&w| wires[w][party]).collect(),
            view,
            commitment,
        }
    })
}

fn draw_secrets(rng: &mut ChaCha20Rng, repetitions: usize) -> Vec<RepetitionSecrets> {
    (0..repetitions)
        .map(|_| {
            let mut s = RepetitionSecrets {
                seeds: [[0; SEED_LEN]; PARTIES],
                salts: [[0; 32]; PARTIES],
                faulty_party: 0,
            };
            for seed in &mut s.seeds {
                rng.fill_bytes(seed);
            }
            for salt in &mut s.salts {
                rng.fill_bytes(salt);
            }
            s.faulty_party = rng.random_range(0..PARTIES);
            s
        })
        .collect()
}

/// Builds the proof and also returns every party's seed, so tests can
/// check what was and was not revealed.
fn prove_inner(
    statement: &Statement,
    witness: &[Fp],
    circuit: &Circuit,
    repetitions: usize,
    seed: [u8; 32],
    fault: Option<MulFault>,
) -> Result<(Proof, Vec<[[u8; SEED_LEN]; PARTIES]>)> {
    if repetitions == 0 {
        return Err(ZkError::ZeroRepetitions);
    }
    let public = statement.public_vector();
    circuit.check_arity(public.len(), witness.len())?;
    let mut rng = ChaCha20Rng::from_seed(seed);
    let secrets = draw_secrets(&mut rng, repetitions);
    let runs: Vec<[PartyRun; PARTIES]> = secrets
        .par_iter()
        .map(|s| simulate(circuit, &public, witness, s, fault))
        .collect();

    let mut transcript = start_transcript(statement, repetitions);
    for run in &runs {
        let commitments = std::array::from_fn(|i| run[i].commitment);
        let shares = std::array::from_fn(|i| run[i].output_share.clone());
        absorb_repetition(&mut transcript, &commitments, &shares);
    }
    let challenges = transcript.challenge_trits(b"challenges", repetitions);
    let binding = transcript.digest();

    let all_seeds = runs.iter().map(|run| std::array::from_fn(|i| run[i].seed)).collect();
    let repetitions = runs
        .into_iter()
        .zip(&challenges)
        .map(|(run, &e)| {
            let e = e as usize;
            let commitments = std::array::from_fn(|i| run[i].commitment);
            let mut parties = run.map(Some);
            let output_shares = std::array::from_fn(|i| parties[i].as_ref().unwrap().output_share.clone());
            let mut open = |p: usize| {
                let run = parties[p].take().unwrap();
                OpenedParty {
                    seed: run.seed,
                    salt: run.salt,
                    view: run.view,
                }
            };
            let first = open(e);
            let second = open((e + 1) % PARTIES);
            RepetitionProof {
                commitments,
                output_shares,
                opened: [first, second],
            }
        })
        .collect();
    Ok((Proof { repetitions, binding }, all_seeds))
}

/// Proves knowledge of `witness` with `C(x, witness) = y`.
///
/// `seed` drives every random choice, so identical inputs and seed give
/// byte-identical proofs.
pub fn prove(statement: &Statement, witness: &[Fp], circuit: &Circuit, repetitions: usize, seed: [u8; 32]) -> Result<Proof> {
    if statement.circuit_digest != circuit.digest() {
        return Err(ZkError::WitnessMismatch);
    }
    let outputs = circuit
        .eval(&statement.public_vector(), witness)
        .map_err(|e| match e {
            ZkError::ArityMismatch { .. } => e,
            _ => ZkError::WitnessMismatch,
        })?;
    if outputs != statement.public_outputs {
        return Err(ZkError::WitnessMismatch);
    }
    prove_inner(statement, witness, circuit, repetitions, seed, None).map(|(p, _)| p)
}

/// Runs the prover without the honesty pre-check and with one corrupted
/// multiplication per repetition, the corrupted party chosen uniformly at
/// random. Exists to measure soundness; the resulting proof is for a false
/// statement whenever `delta` shifts an output.
pub fn prove_with_fault(
    statement: &Statement,
    witness: &[Fp],
    circuit: &Circuit,
    repetitions: usize,
    seed: [u8; 32],
    fault: MulFault,
) -> Result<Proof> {
    prove_inner(statement, witness, circuit, repetitions, seed, Some(fault)).map(|(p, _)| p)
}

fn check_shape(proof: &Proof, circuit: &Circuit) -> Result<()> {
    let bad = |m: String| Err(ZkError::MalformedProof(m));
    if proof.repetitions.is_empty() {
        return bad("proof has no repetitions".into());
    }
    let n_out = circuit.num_outputs() + circuit.assertions().len();
    for (r, rep) in proof.repetitions.iter().enumerate() {
        if rep.output_shares.iter().any(|s| s.len() != n_out) {
            return bad(format!("repetition {r}: output share length"));
        }
        for o in &rep.opened {
            if o.view.witness_share.len() != circuit.num_witness() || o.view.mul_outputs.len() != circuit.num_mul() {
                return bad(format!("repetition {r}: view length"));
            }
        }
    }
    Ok(())
}

/// Replays opened parties `e` and `e + 1`. Returns a rejection reason on
/// the first inconsistency.
fn check_repetition(circuit: &Circuit, public: &[Fp], expected: &[Fp], rep: &RepetitionProof, e: usize) -> Option<String> {
    let parties = [e, (e + 1) % PARTIES];
    let [first, second] = &rep.opened;

    for (slot, party) in parties.iter().enumerate() {
        let opened = &rep.opened[slot];
        if commit_view(&opened.salt, &opened.seed, &opened.view) != rep.commitments[*party] {
            return Some(format!("commitment of party {party} does not open"));
        }
        if *party < 2 && Tape::witness_stream(&opened.seed).take(circuit.num_witness()) != opened.view.witness_share {
            return Some(format!("witness share of party {party} is not derived from its seed"));
        }
    }

    let mut tapes = [Tape::mul_stream(&first.seed), Tape::mul_stream(&second.seed)];
    let mut wires: Vec<[Fp; 2]> = Vec::with_capacity(circuit.gates().len());
    let mut mul = 0usize;
    for gate in circuit.gates() {
        let v = match *gate {
            Gate::Input(k) => parties.map(|p| public_share(p, public[k])),
            Gate::Const(c) => parties.map(|p| public_share(p, c)),
            Gate::Witness(k) => [first.view.witness_share[k], second.view.witness_share[k]],
            Gate::Add(a, b) => {
                let (a, b) = (wires[a], wires[b]);
                [a[0] + b[0], a[1] + b[1]]
            }
            Gate::ScalarMul(c, a) => {
                let a = wires[a];
                [c * a[0], c * a[1]]
            }
            Gate::AssertZero(a) => wires[a],
            Gate::Mul(a, b) => {
                let (a, b) = (wires[a], wires[b]);
                let r0 = tapes[0].next();
                let r1 = tapes[1].next();
                let z0 = a[0] * b[0] + a[1] * b[0] + a[0] * b[1] + r0 - r1;
                if z0 != first.view.mul_outputs[mul] {
                    return Some(format!("party {e} disagrees at multiplication {mul}"));
                }
                let z1 = second.view.mul_outputs[mul];
                mul += 1;
                [z0, z1]
            }
        };
        wires.push(v);
    }

    let output_wires = circuit.outputs().iter().chain(circuit.assertions());
    for (k, &w) in output_wires.enumerate() {
        for slot in 0..2 {
            if wires[w][slot] != rep.output_shares[parties[slot]][k] {
                return Some(format!("output share {k} of party {} is inconsistent", parties[slot]));
            }
        }
        let total: Fp = rep.output_shares.iter().map(|s| s[k]).sum();
        if total != expected[k] {
            return Some(if k < circuit.num_outputs() {
                format!("output {k} does not match the statement")
            } else {
                format!("assertion {} does not hold", k - circuit.num_outputs())
            });
        }
    }
    None
}

/// Checks `proof` against `statement` for `circuit`. Structural problems are
/// errors; failed checks produce a rejecting verdict.
pub fn verify(statement: &Statement, proof: &Proof, circuit: &Circuit) -> Result<Verdict> {
    check_shape(proof, circuit)?;
    if statement.circuit_digest != circuit.digest() {
        return Ok(Verdict::reject("statement names a different circuit"));
    }
    let public = statement.public_vector();
    if public.len() != circuit.num_public_inputs() || statement.public_outputs.len() != circuit.num_outputs() {
        return Ok(Verdict::reject("statement arity does not match the circuit"));
    }
    let expected = expected_outputs(statement, circuit);

    let mut transcript = start_transcript(statement, proof.repetitions.len());
    for rep in &proof.repetitions {
        absorb_repetition(&mut transcript, &rep.commitments, &rep.output_shares);
    }
    let challenges = transcript.challenge_trits(b"challenges", proof.repetitions.len());
    if transcript.digest() != proof.binding {
        return Ok(Verdict::reject("transcript binding digest mismatch"));
    }

    let failure = proof
        .repetitions
        .par_iter()
        .zip(challenges.par_iter())
        .enumerate()
        .filter_map(|(r, (rep, &e))| {
            check_repetition(circuit, &public, &expected, rep, e as usize).map(|why| (r, why))
        })
        .min_by_key(|(r, _)| *r);
    Ok(match failure {
        Some((r, why)) => Verdict::reject(format!("repetition {r}: {why}")),
        None => Verdict::accept(),
    })
}

/// Challenges a proof's commitments and output shares yield, exposed for
/// transcript-binding experiments.
pub fn derive_challenges(statement: &Statement, proof: &Proof) -> Vec<u8> {
    let mut transcript = start_transcript(statement, proof.repetitions.len());
    for rep in &proof.repetitions {
        absorb_repetition(&mut transcript, &rep.commitments, &rep.output_shares);
    }
    transcript.challenge_trits(b"challenges", proof.repetitions.len())
}
