//! Transparent setup: proving and verification keys.
//!
//! Nothing here is secret or trapdoored. Both keys are deterministic
//! functions of the network shape, the public parameters and (when weights
//! are bound) the MiMC commitment to the weights.

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::codec::{Reader, Writer};
use crate::error::{Result, ZkError};
use crate::field::{Fp, MODULUS};
use crate::fnn::{compile_architecture, generate_witness, QuantizedFnn, WitnessLayout, RELU_BOUND_BITS};
use crate::hash::Digest32;
use crate::mimc::{MimcParams, ROUNDS};
use crate::mpc::{self, Verdict, DEFAULT_REPETITIONS};
use crate::proof::{Proof, Statement};

const PROVING_KEY_TAG: u8 = b'P';
const VERIFICATION_KEY_TAG: u8 = b'V';

/// Caller-facing setup options, as found in a `setup-params` artifact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SetupParams {
    pub repetitions: usize,
    pub bind_weights: bool,
}

impl Default for SetupParams {
    fn default() -> Self {
        SetupParams {
            repetitions: DEFAULT_REPETITIONS,
            bind_weights: true,
        }
    }
}

impl SetupParams {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let params: SetupParams =
            serde_json::from_slice(bytes).map_err(|e| ZkError::InvalidModel(format!("setup parameters: {e}")))?;
        if params.repetitions == 0 {
            return Err(ZkError::ZeroRepetitions);
        }
        Ok(params)
    }
}

/// Public parameters shared by both keys.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicParams {
    pub modulus: u64,
    pub repetitions: usize,
    pub relu_bound_bits: u32,
    pub mimc: MimcParams,
}

impl PublicParams {
    pub fn new(repetitions: usize) -> Self {
        PublicParams {
            modulus: MODULUS,
            repetitions,
            relu_bound_bits: RELU_BOUND_BITS,
            mimc: MimcParams::standard().clone(),
        }
    }

    fn write(&self, w: &mut Writer) {
        w.u64(self.modulus);
        w.u32(self.repetitions as u32);
        w.u32(self.relu_bound_bits);
        w.fp(self.mimc.key);
        w.fps(&self.mimc.round_constants);
    }

    fn read(r: &mut Reader) -> Result<Self> {
        let bad = |m: &str| ZkError::MalformedKey(m.to_string());
        let modulus = r.u64().ok_or_else(|| bad("truncated modulus"))?;
        let repetitions = r.u32().ok_or_else(|| bad("truncated repetitions"))? as usize;
        let relu_bound_bits = r.u32().ok_or_else(|| bad("truncated bound"))?;
        let key = r.fp().ok_or_else(|| bad("bad MiMC key"))?;
        let constants = r.fps().ok_or_else(|| bad("bad MiMC constants"))?;
        let round_constants: [Fp; ROUNDS] = constants.try_into().map_err(|_| bad("wrong MiMC round count"))?;
        let params = PublicParams {
            modulus,
            repetitions,
            relu_bound_bits,
            mimc: MimcParams { key, round_constants },
        };
        if repetitions == 0 {
            return Err(ZkError::ZeroRepetitions);
        }
        // Only one parameter set is implemented; anything else was produced
        // by a different build.
        if params != PublicParams::new(repetitions) {
            return Err(bad("unsupported public parameters"));
        }
        Ok(params)
    }
}

fn write_dims(w: &mut Writer, dims: &[usize]) {
    w.len_prefix(dims.len());
    for &d in dims {
        w.u32(d as u32);
    }
}

fn read_dims(r: &mut Reader) -> Result<Vec<usize>> {
    let bad = || ZkError::MalformedKey("bad layer dims".into());
    let n = r.u32().ok_or_else(bad)? as usize;
    if n.saturating_mul(4) > r.remaining() {
        return Err(bad());
    }
    (0..n).map(|_| r.u32().map(|d| d as usize).ok_or_else(bad)).collect()
}

fn read_flag(r: &mut Reader) -> Result<bool> {
    match r.u8() {
        Some(0) => Ok(false),
        Some(1) => Ok(true),
        _ => Err(ZkError::MalformedKey("bad flag byte".into())),
    }
}

fn read_commitment(r: &mut Reader, bind: bool) -> Result<Option<Fp>> {
    if !bind {
        return Ok(None);
    }
    r.fp()
        .map(Some)
        .ok_or_else(|| ZkError::MalformedKey("bad weight commitment".into()))
}

fn expect_header(r: &mut Reader, tag: u8) -> Result<()> {
    if r.u8() != Some(tag) {
        return Err(ZkError::MalformedKey("wrong key type".into()));
    }
    Ok(())
}

fn expect_end(r: &Reader) -> Result<()> {
    if !r.is_empty() {
        return Err(ZkError::MalformedKey("trailing bytes".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProvingKey {
    pub params: PublicParams,
    pub circuit: Circuit,
    pub layout: WitnessLayout,
    pub weight_commitment: Option<Fp>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerificationKey {
    pub params: PublicParams,
    pub dims: Vec<usize>,
    pub bind_weights: bool,
    pub circuit_digest: Digest32,
    pub num_public_inputs: usize,
    pub num_outputs: usize,
    pub weight_commitment: Option<Fp>,
}

pub fn setup(model: &QuantizedFnn, params: SetupParams) -> Result<(ProvingKey, VerificationKey)> {
    if params.repetitions == 0 {
        return Err(ZkError::ZeroRepetitions);
    }
    let (circuit, layout) = compile_architecture(model.dims(), params.bind_weights)?;
    let public = PublicParams::new(params.repetitions);
    let weight_commitment = params.bind_weights.then(|| model.weight_commitment());
    let vk = VerificationKey {
        params: public.clone(),
        dims: model.dims().to_vec(),
        bind_weights: params.bind_weights,
        circuit_digest: circuit.digest(),
        num_public_inputs: model.dims()[0],
        num_outputs: circuit.num_outputs(),
        weight_commitment,
    };
    let pk = ProvingKey {
        params: public,
        circuit,
        layout,
        weight_commitment,
    };
    Ok((pk, vk))
}

/// Output of a proving run: the proof plus the integer outputs it attests.
#[derive(Clone, Debug)]
pub struct ProvedInference {
    pub proof: Proof,
    pub outputs: Vec<i64>,
}

impl ProvingKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(PROVING_KEY_TAG);
        self.params.write(&mut w);
        write_dims(&mut w, &self.layout.dims);
        w.u8(self.layout.bind_weights as u8);
        if let Some(c) = self.weight_commitment {
            w.fp(c);
        }
        let circuit = self.circuit.to_bytes();
        w.len_prefix(circuit.len());
        let mut out = w.finish();
        out.extend_from_slice(&circuit);
        out
    }

    /// Parses a proving key. The witness layout is recompiled from the
    /// stored shape and must reproduce the stored circuit exactly.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| ZkError::MalformedKey(m.to_string());
        let mut r = Reader::new(bytes).map_err(|e| bad(&e))?;
        expect_header(&mut r, PROVING_KEY_TAG)?;
        let params = PublicParams::read(&mut r)?;
        let dims = read_dims(&mut r)?;
        let bind = read_flag(&mut r)?;
        let weight_commitment = read_commitment(&mut r, bind)?;
        let len = r.u32().ok_or_else(|| bad("truncated circuit length"))? as usize;
        if len != r.remaining() {
            return Err(bad("circuit length mismatch"));
        }
        let circuit_bytes = &bytes[bytes.len() - len..];
        let circuit = Circuit::from_bytes(circuit_bytes).map_err(|e| bad(&e.to_string()))?;
        let (expected, layout) = compile_architecture(&dims, bind).map_err(|e| bad(&e.to_string()))?;
        if expected != circuit {
            return Err(bad("circuit does not match the declared shape"));
        }
        Ok(ProvingKey {
            params,
            circuit,
            layout,
            weight_commitment,
        })
    }

    pub fn verification_key(&self) -> VerificationKey {
        VerificationKey {
            params: self.params.clone(),
            dims: self.layout.dims.clone(),
            bind_weights: self.layout.bind_weights,
            circuit_digest: self.circuit.digest(),
            num_public_inputs: self.layout.dims[0],
            num_outputs: self.circuit.num_outputs(),
            weight_commitment: self.weight_commitment,
        }
    }

    /// Runs `model` on `input` and proves the result. Fails with
    /// `WitnessMismatch` if `model` is not the one the key was made for.
    pub fn prove(&self, model: &QuantizedFnn, input: &[i8], seed: [u8; 32]) -> Result<ProvedInference> {
        if model.dims() != self.layout.dims.as_slice() {
            return Err(ZkError::WitnessMismatch);
        }
        if let Some(c) = self.weight_commitment {
            if model.weight_commitment() != c {
                return Err(ZkError::WitnessMismatch);
            }
        }
        let (witness, outputs) = generate_witness(model, &self.layout, input)?;
        let statement = statement_for(self.circuit.digest(), input, &outputs, self.weight_commitment);
        let proof = mpc::prove(&statement, &witness, &self.circuit, self.params.repetitions, seed)?;
        Ok(ProvedInference { proof, outputs })
    }
}

fn statement_for(digest: Digest32, input: &[i8], outputs: &[i64], weight_commitment: Option<Fp>) -> Statement {
    Statement {
        circuit_digest: digest,
        public_inputs: input.iter().map(|&v| Fp::from_i64(v as i64)).collect(),
        public_outputs: outputs.iter().map(|&v| Fp::from_i64(v)).collect(),
        weight_commitment,
    }
}

impl VerificationKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(VERIFICATION_KEY_TAG);
        self.params.write(&mut w);
        write_dims(&mut w, &self.dims);
        w.u8(self.bind_weights as u8);
        if let Some(c) = self.weight_commitment {
            w.fp(c);
        }
        w.bytes32(&self.circuit_digest);
        w.u32(self.num_public_inputs as u32);
        w.u32(self.num_outputs as u32);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| ZkError::MalformedKey(m.to_string());
        let mut r = Reader::new(bytes).map_err(|e| bad(&e))?;
        expect_header(&mut r, VERIFICATION_KEY_TAG)?;
        let params = PublicParams::read(&mut r)?;
        let dims = read_dims(&mut r)?;
        let bind_weights = read_flag(&mut r)?;
        let weight_commitment = read_commitment(&mut r, bind_weights)?;
        let circuit_digest = r.bytes32().ok_or_else(|| bad("truncated digest"))?;
        let num_public_inputs = r.u32().ok_or_else(|| bad("truncated arity"))? as usize;
        let num_outputs = r.u32().ok_or_else(|| bad("truncated arity"))? as usize;
        expect_end(&r)?;
        Ok(VerificationKey {
            params,
            dims,
            bind_weights,
            circuit_digest,
            num_public_inputs,
            num_outputs,
            weight_commitment,
        })
    }

    pub fn statement(&self, input: &[i8], outputs: &[i64]) -> Statement {
        statement_for(self.circuit_digest, input, outputs, self.weight_commitment)
    }

    /// Rebuilds the circuit from the public shape; the key's digest must
    /// match what the shape compiles to.
    pub fn circuit(&self) -> Result<Circuit> {
        let (circuit, _) = compile_architecture(&self.dims, self.bind_weights)?;
        if circuit.digest() != self.circuit_digest {
            return Err(ZkError::MalformedKey("circuit digest does not match the declared shape".into()));
        }
        Ok(circuit)
    }

    /// Verifies a claimed inference `input -> outputs`. Arity mismatches and
    /// proofs with a repetition count other than the key's are rejected.
    pub fn verify(&self, input: &[i8], outputs: &[i64], proof: &Proof) -> Result<Verdict> {
        let circuit = self.circuit()?;
        if input.len() != self.num_public_inputs || outputs.len() != self.num_outputs {
            return Ok(Verdict {
                accepted: false,
                detail: format!(
                    "statement arity ({} inputs, {} outputs) does not match the key ({}, {})",
                    input.len(),
                    outputs.len(),
                    self.num_public_inputs,
                    self.num_outputs
                ),
            });
        }
        if proof.num_repetitions() != self.params.repetitions {
            return Ok(Verdict {
                accepted: false,
                detail: format!(
                    "proof has {} repetitions, key requires {}",
                    proof.num_repetitions(),
                    self.params.repetitions
                ),
            });
        }
        mpc::verify(&self.statement(input, outputs), proof, &circuit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(dims: &[usize], seed: u64) -> QuantizedFnn {
        QuantizedFnn::random(dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn params(t: usize, bind: bool) -> SetupParams {
        SetupParams {
            repetitions: t,
            bind_weights: bind,
        }
    }

    #[test]
    fn verification_key_is_deterministic() {
        let m = model(&[4, 3, 2], 1);
        let (_, a) = setup(&m, params(8, true)).unwrap();
        let (_, b) = setup(&m, params(8, true)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn unbound_key_is_independent_of_weights() {
        let (_, a) = setup(&model(&[4, 3, 2], 1), params(8, false)).unwrap();
        let (_, b) = setup(&model(&[4, 3, 2], 2), params(8, false)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn bound_key_tracks_weights() {
        let (_, a) = setup(&model(&[4, 3, 2], 1), params(8, true)).unwrap();
        let (_, b) = setup(&model(&[4, 3, 2], 2), params(8, true)).unwrap();
        assert_ne!(a.weight_commitment, b.weight_commitment);
    }

    #[test]
    fn keys_round_trip() {
        for bind in [false, true] {
            let (pk, vk) = setup(&model(&[3, 4, 2], 3), params(5, bind)).unwrap();
            assert_eq!(ProvingKey::from_bytes(&pk.to_bytes()).unwrap(), pk);
            assert_eq!(VerificationKey::from_bytes(&vk.to_bytes()).unwrap(), vk);
            assert_eq!(pk.verification_key(), vk);
        }
    }

    #[test]
    fn key_type_confusion_rejected() {
        let (pk, vk) = setup(&model(&[2, 2], 4), params(2, false)).unwrap();
        assert!(ProvingKey::from_bytes(&vk.to_bytes()).is_err());
        assert!(VerificationKey::from_bytes(&pk.to_bytes()).is_err());
    }

    #[test]
    fn prove_and_verify_through_keys() {
        let m = model(&[4, 6, 3], 5);
        let (pk, vk) = setup(&m, params(8, true)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<i8> = (0..4).map(|_| rng.random()).collect();
        let run = pk.prove(&m, &x, [3; 32]).unwrap();
        assert!(vk.verify(&x, &run.outputs, &run.proof).unwrap().accepted);

        let mut y = run.outputs.clone();
        y[0] += 1;
        assert!(!vk.verify(&x, &y, &run.proof).unwrap().accepted);
    }

    #[test]
    fn other_model_cannot_use_bound_key() {
        let (pk, _) = setup(&model(&[3, 2], 6), params(2, true)).unwrap();
        let other = model(&[3, 2], 7);
        assert_eq!(pk.prove(&other, &[1, 2, 3], [0; 32]).unwrap_err(), ZkError::WitnessMismatch);
    }

    #[test]
    fn repetition_count_is_enforced() {
        let m = model(&[3, 2], 8);
        let (pk, _) = setup(&m, params(1, false)).unwrap();
        let (_, vk8) = setup(&m, params(8, false)).unwrap();
        let run = pk.prove(&m, &[1, 2, 3], [0; 32]).unwrap();
        assert!(!vk8.verify(&[1, 2, 3], &run.outputs, &run.proof).unwrap().accepted);
    }

    #[test]
    fn setup_params_json() {
        let p = SetupParams::from_json(br#"{"repetitions": 8}"#).unwrap();
        assert_eq!(p, params(8, true));
        assert!(SetupParams::from_json(br#"{"repetitions": 0}"#).is_err());
        assert!(SetupParams::from_json(br#"{"reps": 8}"#).is_err());
    }
}
