//! Arithmetic circuit IR.
//!
//! A circuit is a topologically ordered gate list. Gate `i` defines wire `i`;
//! operands always reference strictly earlier wires. `AssertZero` gates
//! define a wire too (its value is the asserted operand) so wire indices and
//! gate indices coincide.

use crate::codec::{Reader, Writer};
use crate::error::{Result, ZkError};
use crate::field::Fp;
use crate::hash::{sha256, Digest32};

pub type Wire = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    /// Public input by index.
    Input(usize),
    /// Secret witness value by index.
    Witness(usize),
    Const(Fp),
    Add(Wire, Wire),
    Mul(Wire, Wire),
    ScalarMul(Fp, Wire),
    AssertZero(Wire),
}

impl Gate {
    fn operands(&self) -> [Option<Wire>; 2] {
        match *self {
            Gate::Input(_) | Gate::Witness(_) | Gate::Const(_) => [None, None],
            Gate::Add(a, b) | Gate::Mul(a, b) => [Some(a), Some(b)],
            Gate::ScalarMul(_, a) | Gate::AssertZero(a) => [Some(a), None],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Circuit {
    gates: Vec<Gate>,
    num_public_inputs: usize,
    num_witness: usize,
    outputs: Vec<Wire>,
    num_mul: usize,
    assertions: Vec<Wire>,
}

impl Circuit {
    pub fn new(
        gates: Vec<Gate>,
        num_public_inputs: usize,
        num_witness: usize,
        outputs: Vec<Wire>,
    ) -> Result<Self> {
        let mut num_mul = 0;
        let mut assertions = Vec::new();
        for (i, gate) in gates.iter().enumerate() {
            for operand in gate.operands().into_iter().flatten() {
                if operand >= i {
                    return Err(ZkError::InvalidCircuit(format!(
                        "gate {i} reads wire {operand} which is not defined before it"
                    )));
                }
            }
            match *gate {
                Gate::Input(k) if k >= num_public_inputs => {
                    return Err(ZkError::InvalidCircuit(format!(
                        "gate {i} reads public input {k} of {num_public_inputs}"
                    )))
                }
                Gate::Witness(k) if k >= num_witness => {
                    return Err(ZkError::InvalidCircuit(format!(
                        "gate {i} reads witness {k} of {num_witness}"
                    )))
                }
                Gate::Mul(..) => num_mul += 1,
                Gate::AssertZero(a) => assertions.push(a),
                _ => {}
            }
        }
        if let Some(&bad) = outputs.iter().find(|&&w| w >= gates.len()) {
            return Err(ZkError::InvalidCircuit(format!("output wire {bad} out of range")));
        }
        Ok(Circuit {
            gates,
            num_public_inputs,
            num_witness,
            outputs,
            num_mul,
            assertions,
        })
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_public_inputs(&self) -> usize {
        self.num_public_inputs
    }

    pub fn num_witness(&self) -> usize {
        self.num_witness
    }

    pub fn outputs(&self) -> &[Wire] {
        &self.outputs
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn num_mul(&self) -> usize {
        self.num_mul
    }

    /// Operand wires of every `AssertZero` gate, in gate order.
    pub fn assertions(&self) -> &[Wire] {
        &self.assertions
    }

    /// Plain evaluation, checking every assertion.
    pub fn eval(&self, public_inputs: &[Fp], witness: &[Fp]) -> Result<Vec<Fp>> {
        self.check_arity(public_inputs.len(), witness.len())?;
        let mut wires = Vec::with_capacity(self.gates.len());
        for (i, gate) in self.gates.iter().enumerate() {
            let v = match *gate {
                Gate::Input(k) => public_inputs[k],
                Gate::Witness(k) => witness[k],
                Gate::Const(c) => c,
                Gate::Add(a, b) => wires[a] + wires[b],
                Gate::Mul(a, b) => wires[a] * wires[b],
                Gate::ScalarMul(c, a) => c * wires[a],
                Gate::AssertZero(a) => {
                    if !wires[a].is_zero() {
                        return Err(ZkError::AssertionViolated { gate: i });
                    }
                    wires[a]
                }
            };
            wires.push(v);
        }
        Ok(self.outputs.iter().map(|&w| wires[w]).collect())
    }

    pub fn check_arity(&self, num_public: usize, num_witness: usize) -> Result<()> {
        if num_public != self.num_public_inputs {
            return Err(ZkError::ArityMismatch {
                what: "public inputs",
                expected: self.num_public_inputs,
                actual: num_public,
            });
        }
        if num_witness != self.num_witness {
            return Err(ZkError::ArityMismatch {
                what: "witness values",
                expected: self.num_witness,
                actual: num_witness,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(16 + self.gates.len() * 13);
        w.len_prefix(self.num_public_inputs);
        w.len_prefix(self.num_witness);
        w.len_prefix(self.outputs.len());
        for &o in &self.outputs {
            w.len_prefix(o);
        }
        w.len_prefix(self.gates.len());
        for gate in &self.gates {
            match *gate {
                Gate::Input(k) => {
                    w.u8(0);
                    w.len_prefix(k);
                }
                Gate::Witness(k) => {
                    w.u8(1);
                    w.len_prefix(k);
                }
                Gate::Const(c) => {
                    w.u8(2);
                    w.fp(c);
                }
                Gate::Add(a, b) => {
                    w.u8(3);
                    w.len_prefix(a);
                    w.len_prefix(b);
                }
                Gate::Mul(a, b) => {
                    w.u8(4);
                    w.len_prefix(a);
                    w.len_prefix(b);
                }
                Gate::ScalarMul(c, a) => {
                    w.u8(5);
                    w.fp(c);
                    w.len_prefix(a);
                }
                Gate::AssertZero(a) => {
                    w.u8(6);
                    w.len_prefix(a);
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let malformed = |msg: &str| ZkError::InvalidCircuit(msg.to_string());
        let mut r = Reader::new(bytes).map_err(|e| malformed(&e))?;
        let mut next = || r.u32().map(|v| v as usize).ok_or_else(|| malformed("truncated"));
        let num_public = next()?;
        let num_witness = next()?;
        let num_outputs = next()?;
        let outputs = (0..num_outputs).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let num_gates = next()?;
        let mut gates = Vec::with_capacity(num_gates.min(bytes.len()));
        for _ in 0..num_gates {
            let idx = |r: &mut Reader| r.u32().map(|v| v as usize).ok_or_else(|| malformed("truncated"));
            let fp = |r: &mut Reader| r.fp().ok_or_else(|| malformed("bad field element"));
            let gate = match r.u8().ok_or_else(|| malformed("truncated"))? {
                0 => Gate::Input(idx(&mut r)?),
                1 => Gate::Witness(idx(&mut r)?),
                2 => Gate::Const(fp(&mut r)?),
                3 => Gate::Add(idx(&mut r)?, idx(&mut r)?),
                4 => Gate::Mul(idx(&mut r)?, idx(&mut r)?),
                5 => Gate::ScalarMul(fp(&mut r)?, idx(&mut r)?),
                6 => Gate::AssertZero(idx(&mut r)?),
                t => return Err(malformed(&format!("unknown gate tag {t}"))),
            };
            gates.push(gate);
        }
        if !r.is_empty() {
            return Err(malformed("trailing bytes"));
        }
        Circuit::new(gates, num_public, num_witness, outputs)
    }

    /// Binds the full circuit description; part of every statement.
    pub fn digest(&self) -> Digest32 {
        sha256(&self.to_bytes())
    }
}

/// Incremental circuit construction with typed wire handles.
#[derive(Default)]
pub struct CircuitBuilder {
    gates: Vec<Gate>,
    num_public_inputs: usize,
    num_witness: usize,
    outputs: Vec<Wire>,
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, gate: Gate) -> Wire {
        self.gates.push(gate);
        self.gates.len() - 1
    }

    /// Allocates the next public input slot.
    pub fn public_input(&mut self) -> Wire {
        let k = self.num_public_inputs;
        self.num_public_inputs += 1;
        self.push(Gate::Input(k))
    }

    /// Allocates the next witness slot; returns (wire, witness index).
    pub fn witness(&mut self) -> (Wire, usize) {
        let k = self.num_witness;
        self.num_witness += 1;
        (self.push(Gate::Witness(k)), k)
    }

    pub fn constant(&mut self, c: Fp) -> Wire {
        self.push(Gate::Const(c))
    }

    pub fn add(&mut self, a: Wire, b: Wire) -> Wire {
        self.push(Gate::Add(a, b))
    }

    pub fn sub(&mut self, a: Wire, b: Wire) -> Wire {
        let neg = self.scale(-Fp::ONE, b);
        self.add(a, neg)
    }

    pub fn add_const(&mut self, a: Wire, c: Fp) -> Wire {
        let k = self.constant(c);
        self.add(a, k)
    }

    pub fn mul(&mut self, a: Wire, b: Wire) -> Wire {
        self.push(Gate::Mul(a, b))
    }

    pub fn scale(&mut self, c: Fp, a: Wire) -> Wire {
        self.push(Gate::ScalarMul(c, a))
    }

    pub fn assert_zero(&mut self, a: Wire) -> Wire {
        self.push(Gate::AssertZero(a))
    }

    pub fn assert_equal(&mut self, a: Wire, b: Wire) -> Wire {
        let d = self.sub(a, b);
        self.assert_zero(d)
    }

    /// Sum of wires; an empty sum is the constant zero.
    pub fn sum(&mut self, wires: &[Wire]) -> Wire {
        match wires.split_first() {
            None => self.constant(Fp::ZERO),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &w| self.add(acc, w)),
        }
    }

    pub fn output(&mut self, w: Wire) {
        self.outputs.push(w);
    }

    pub fn num_witness(&self) -> usize {
        self.num_witness
    }

    pub fn build(self) -> Result<Circuit> {
        Circuit::new(self.gates, self.num_public_inputs, self.num_witness, self.outputs)
    }
}
