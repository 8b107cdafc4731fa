//! Quantized feed-forward networks and their compilation to circuits.
//!
//! Weights, biases and inputs are signed 8-bit integers embedded in F_p as
//! `v mod p`. There is no rescaling between layers, so outputs are exact
//! integers. Hidden layers use ReLU; the last layer is affine.
//!
//! ReLU uses a bit-decomposition gadget: for a pre-activation `v` with
//! `|v| < 2^23` the witness carries the 24 bits of `v + 2^23`. Each bit is
//! constrained boolean, the bits must recompose to `v + 2^23`, and the top
//! bit (1 iff `v >= 0`) selects the output `bit * v`.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, CircuitBuilder, Wire};
use crate::error::{Result, ZkError};
use crate::field::{Fp, MODULUS};
use crate::mimc::{mimc_hash, mimc_hash_gadget};

/// log2 of the ReLU pre-activation bound B.
pub const RELU_BOUND_BITS: u32 = 23;
pub const RELU_BOUND: i64 = 1 << RELU_BOUND_BITS;
/// Bits in the decomposition of `v + B`.
pub const RELU_WIDTH: usize = RELU_BOUND_BITS as usize + 1;

const INT8_MAGNITUDE: u64 = 128;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedFnn {
    dims: Vec<usize>,
    /// Per layer, row-major `dims[l+1] x dims[l]`.
    weights: Vec<Vec<i8>>,
    biases: Vec<Vec<i8>>,
}

/// On-disk model document.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    dims: Vec<usize>,
    weights: Vec<Vec<i64>>,
    biases: Vec<Vec<i64>>,
}

fn to_i8(v: i64, what: &str) -> Result<i8> {
    i8::try_from(v).map_err(|_| ZkError::InvalidModel(format!("{what} value {v} outside 8-bit range")))
}

pub fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(ZkError::InvalidModel("need at least an input and an output layer".into()));
    }
    if dims.contains(&0) {
        return Err(ZkError::InvalidModel("layer widths must be positive".into()));
    }
    Ok(())
}

impl QuantizedFnn {
    pub fn new(dims: Vec<usize>, weights: Vec<Vec<i8>>, biases: Vec<Vec<i8>>) -> Result<Self> {
        validate_dims(&dims)?;
        let layers = dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(ZkError::InvalidModel(format!(
                "expected {layers} weight and bias arrays, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..layers {
            if weights[l].len() != dims[l] * dims[l + 1] {
                return Err(ZkError::InvalidModel(format!(
                    "layer {l}: expected {} weights, got {}",
                    dims[l] * dims[l + 1],
                    weights[l].len()
                )));
            }
            if biases[l].len() != dims[l + 1] {
                return Err(ZkError::InvalidModel(format!(
                    "layer {l}: expected {} biases, got {}",
                    dims[l + 1],
                    biases[l].len()
                )));
            }
        }
        Ok(QuantizedFnn { dims, weights, biases })
    }

    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        validate_dims(dims)?;
        let weights = dims
            .windows(2)
            .map(|w| (0..w[0] * w[1]).map(|_| rng.random::<i8>()).collect())
            .collect();
        let biases = dims[1..]
            .iter()
            .map(|&d| (0..d).map(|_| rng.random::<i8>()).collect())
            .collect();
        QuantizedFnn::new(dims.to_vec(), weights, biases)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_slice(bytes).map_err(|e| ZkError::InvalidModel(e.to_string()))?;
        let weights = file
            .weights
            .iter()
            .map(|l| l.iter().map(|&v| to_i8(v, "weight")).collect())
            .collect::<Result<_>>()?;
        let biases = file
            .biases
            .iter()
            .map(|l| l.iter().map(|&v| to_i8(v, "bias")).collect())
            .collect::<Result<_>>()?;
        QuantizedFnn::new(file.dims, weights, biases)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let widen = |v: &Vec<Vec<i8>>| v.iter().map(|l| l.iter().map(|&x| x as i64).collect()).collect();
        let file = ModelFile {
            dims: self.dims.clone(),
            weights: widen(&self.weights),
            biases: widen(&self.biases),
        };
        serde_json::to_vec(&file).expect("model serializes")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn weights(&self, layer: usize) -> &[i8] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[i8] {
        &self.biases[layer]
    }

    /// Every parameter in commitment order: per layer, weights then biases.
    pub fn flattened_parameters(&self) -> Vec<i8> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        parameter_count(&self.dims)
    }

    /// MiMC commitment to the flattened parameters.
    pub fn weight_commitment(&self) -> Fp {
        let elems: Vec<Fp> = self
            .flattened_parameters()
            .iter()
            .map(|&v| Fp::from_i64(v as i64))
            .collect();
        mimc_hash(&elems)
    }
}

pub fn parameter_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Where each part of the witness lives, plus the circuit facts callers
/// need without re-walking the gate list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessLayout {
    pub dims: Vec<usize>,
    pub bind_weights: bool,
    pub weights: Range<usize>,
    pub relu_bits: Range<usize>,
    /// Public-input slot holding the weight commitment, when bound.
    pub commitment_input: Option<usize>,
    /// For each output coordinate, the ordinals (among `Mul` gates) of the
    /// products summed into it.
    pub output_products: Vec<Vec<usize>>,
}

impl WitnessLayout {
    pub fn num_relus(&self) -> usize {
        self.relu_bits.len() / RELU_WIDTH
    }
}

/// Worst-case |pre-activation| per layer for 8-bit parameters and inputs.
pub fn accumulator_bounds(dims: &[usize]) -> Vec<u64> {
    let mut input_bound = INT8_MAGNITUDE;
    let mut out = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let bound = (w[0] as u64)
            .saturating_mul(INT8_MAGNITUDE)
            .saturating_mul(input_bound)
            .saturating_add(INT8_MAGNITUDE);
        out.push(bound);
        input_bound = bound;
    }
    out
}

fn check_bounds(dims: &[usize]) -> Result<()> {
    let bounds = accumulator_bounds(dims);
    let last = bounds.len() - 1;
    for (layer, &bound) in bounds.iter().enumerate() {
        let limit = if layer == last { MODULUS / 2 } else { RELU_BOUND as u64 - 1 };
        if bound > limit {
            return Err(ZkError::RangeOverflow { layer, bound, limit });
        }
    }
    Ok(())
}

fn relu_gadget(b: &mut CircuitBuilder, v: Wire) -> Wire {
    let bits: Vec<Wire> = (0..RELU_WIDTH).map(|_| b.witness().0).collect();
    for &bit in &bits {
        let sq = b.mul(bit, bit);
        b.assert_equal(sq, bit);
    }
    let weighted: Vec<Wire> = bits
        .iter()
        .enumerate()
        .map(|(i, &bit)| b.scale(Fp::new(1 << i), bit))
        .collect();
    let recomposed = b.sum(&weighted);
    let shifted = b.add_const(v, Fp::new(RELU_BOUND as u64));
    b.assert_equal(recomposed, shifted);
    b.mul(bits[RELU_WIDTH - 1], v)
}

/// Compiles the network shape. The circuit depends only on `dims` and
/// `bind_weights`; parameter values enter exclusively through the witness.
pub fn compile_architecture(dims: &[usize], bind_weights: bool) -> Result<(Circuit, WitnessLayout)> {
    validate_dims(dims)?;
    check_bounds(dims)?;
    let mut b = CircuitBuilder::new();
    let mut activations: Vec<Wire> = (0..dims[0]).map(|_| b.public_input()).collect();
    let commitment_input = bind_weights.then(|| dims[0]);
    let commitment_wire = bind_weights.then(|| b.public_input());

    let param_wires: Vec<Wire> = (0..parameter_count(dims)).map(|_| b.witness().0).collect();
    let weights = 0..param_wires.len();
    let layers = dims.len() - 1;
    let mut params = param_wires.iter().copied();
    let mut output_products = Vec::new();
    let mut mul_ordinal = 0usize;

    for l in 0..layers {
        let (d_in, d_out) = (dims[l], dims[l + 1]);
        let w: Vec<Wire> = params.by_ref().take(d_in * d_out).collect();
        let bias: Vec<Wire> = params.by_ref().take(d_out).collect();
        let mut next = Vec::with_capacity(d_out);
        for r in 0..d_out {
            let mut ordinals = Vec::with_capacity(d_in);
            let mut terms: Vec<Wire> = (0..d_in)
                .map(|c| {
                    ordinals.push(mul_ordinal);
                    mul_ordinal += 1;
                    b.mul(w[r * d_in + c], activations[c])
                })
                .collect();
            terms.push(bias[r]);
            let pre = b.sum(&terms);
            if l + 1 < layers {
                next.push(relu_gadget(&mut b, pre));
                mul_ordinal += RELU_WIDTH + 1;
            } else {
                output_products.push(ordinals);
                next.push(pre);
            }
        }
        activations = next;
    }
    let relu_end = b.num_witness();
    for &y in &activations {
        b.output(y);
    }
    if let Some(c_w) = commitment_wire {
        let digest = mimc_hash_gadget(&mut b, &param_wires);
        b.assert_equal(digest, c_w);
    }
    let circuit = b.build()?;
    let layout = WitnessLayout {
        dims: dims.to_vec(),
        bind_weights,
        relu_bits: weights.end..relu_end,
        weights,
        commitment_input,
        output_products,
    };
    debug_assert_eq!(circuit.num_witness(), layout.relu_bits.end);
    Ok((circuit, layout))
}

pub fn compile_fnn(model: &QuantizedFnn, bind_weights: bool) -> Result<(Circuit, WitnessLayout)> {
    compile_architecture(model.dims(), bind_weights)
}

/// Integer forward pass plus the matching witness vector.
pub fn generate_witness(model: &QuantizedFnn, layout: &WitnessLayout, input: &[i8]) -> Result<(Vec<Fp>, Vec<i64>)> {
    if layout.dims != model.dims {
        return Err(ZkError::InvalidModel("model does not match the compiled architecture".into()));
    }
    if input.len() != model.dims[0] {
        return Err(ZkError::ArityMismatch {
            what: "model inputs",
            expected: model.dims[0],
            actual: input.len(),
        });
    }
    let mut witness: Vec<Fp> = model
        .flattened_parameters()
        .iter()
        .map(|&v| Fp::from_i64(v as i64))
        .collect();
    let layers = model.dims.len() - 1;
    let mut act: Vec<i64> = input.iter().map(|&v| v as i64).collect();
    for l in 0..layers {
        let d_in = model.dims[l];
        let mut next = Vec::with_capacity(model.dims[l + 1]);
        for (r, &bias) in model.biases[l].iter().enumerate() {
            let row = &model.weights[l][r * d_in..(r + 1) * d_in];
            let v: i64 = row.iter().zip(&act).map(|(&w, &a)| w as i64 * a).sum::<i64>() + bias as i64;
            if l + 1 < layers {
                if v.abs() >= RELU_BOUND {
                    return Err(ZkError::RangeOverflow {
                        layer: l,
                        bound: v.unsigned_abs(),
                        limit: RELU_BOUND as u64 - 1,
                    });
                }
                let shifted = (v + RELU_BOUND) as u64;
                witness.extend((0..RELU_WIDTH).map(|i| Fp::new((shifted >> i) & 1)));
                next.push(v.max(0));
            } else {
                next.push(v);
            }
        }
        act = next;
    }
    debug_assert_eq!(witness.len(), layout.relu_bits.end);
    Ok((witness, act))
}

/// Public-input vector for the circuit: `x`, then the commitment if bound.
pub fn public_inputs(input: &[i8], commitment: Option<Fp>) -> Vec<Fp> {
    input
        .iter()
        .map(|&v| Fp::from_i64(v as i64))
        .chain(commitment)
        .collect()
}

pub fn parse_input(bytes: &[u8]) -> Result<Vec<i8>> {
    let raw: Vec<i64> = serde_json::from_slice(bytes).map_err(|e| ZkError::InvalidModel(format!("input: {e}")))?;
    raw.into_iter().map(|v| to_i8(v, "input")).collect()
}

pub fn parse_output(bytes: &[u8]) -> Result<Vec<i64>> {
    serde_json::from_slice(bytes).map_err(|e| ZkError::InvalidModel(format!("output: {e}")))
}
