use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zkref::fnn::{compile_fnn, generate_witness, public_inputs, WitnessLayout};
use zkref::lookup::{prove_lookup, verify_lookup, LookupTable};
use zkref::mpc::{derive_challenges, prove_with_fault, MulFault};
use zkref::{prove, verify, Circuit, Fp, QuantizedFnn, Statement};

struct Instance {
    circuit: Circuit,
    layout: WitnessLayout,
    statement: Statement,
    witness: Vec<Fp>,
}

fn instance(dims: &[usize], bind: bool, rng: &mut ChaCha8Rng) -> Instance {
    let model = QuantizedFnn::random(dims, rng).unwrap();
    let (circuit, layout) = compile_fnn(&model, bind).unwrap();
    let x: Vec<i8> = (0..dims[0]).map(|_| rng.random()).collect();
    let (witness, y) = generate_witness(&model, &layout, &x).unwrap();
    let statement = Statement {
        circuit_digest: circuit.digest(),
        public_inputs: public_inputs(&x, None),
        public_outputs: y.iter().map(|&v| Fp::from_i64(v)).collect(),
        weight_commitment: bind.then(|| model.weight_commitment()),
    };
    Instance {
        circuit,
        layout,
        statement,
        witness,
    }
}

fn trial_seed(i: u64) -> [u8; 32] {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&i.to_le_bytes());
    s[8] = 0xa5;
    s
}

fn fault_acceptance(inst: &Instance, t: usize, trials: u64, offset: u64) -> f64 {
    let mut statement = inst.statement.clone();
    statement.public_outputs[0] += Fp::ONE;
    let fault = MulFault {
        mul_index: inst.layout.output_products[0][0],
        delta: Fp::ONE,
    };
    let accepted = (0..trials)
        .filter(|&i| {
            let proof = prove_with_fault(&statement, &inst.witness, &inst.circuit, t, trial_seed(offset + i), fault)
                .unwrap();
            verify(&statement, &proof, &inst.circuit).unwrap().accepted
        })
        .count();
    accepted as f64 / trials as f64
}

#[test]
fn soundness_error_follows_power_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let inst = instance(&[3, 4, 2], false, &mut rng);
    let n = 3000;
    let r1 = fault_acceptance(&inst, 1, n, 0);
    let se1 = (r1 * (1.0 - r1) / n as f64).sqrt();
    for (t, offset) in [(2usize, 10_000u64), (4, 20_000)] {
        let rt = fault_acceptance(&inst, t, n, offset);
        let predicted = r1.powi(t as i32);
        // Sampling error of r_t plus that of r1 carried through x^t.
        let se_t = (predicted * (1.0 - predicted) / n as f64).sqrt();
        let se_pred = t as f64 * r1.powi(t as i32 - 1) * se1;
        let se = (se_t * se_t + se_pred * se_pred).sqrt();
        assert!(
            (rt - predicted).abs() <= 3.0 * se,
            "t={t}: observed {rt:.4}, predicted {predicted:.4} from r1={r1:.4}, se={se:.4}"
        );
    }
}

#[test]
fn mutating_a_commitment_changes_the_challenges() {
    // With t = 16 the chance that a mutation leaves all challenges unchanged
    // is 3^-16, below 2^-16.
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let inst = instance(&[4, 4, 2], false, &mut rng);
    let proof = prove(&inst.statement, &inst.witness, &inst.circuit, 16, [1; 32]).unwrap();
    let original = derive_challenges(&inst.statement, &proof);
    for _ in 0..2000 {
        let mut mutated = proof.clone();
        let rep = rng.random_range(0..16);
        let party = rng.random_range(0..3);
        let byte = rng.random_range(0..32);
        mutated.repetitions[rep].commitments[party][byte] ^= rng.random_range(1..=255u8);
        assert_ne!(derive_challenges(&inst.statement, &mutated), original);
        assert!(!verify(&inst.statement, &mutated, &inst.circuit).unwrap().accepted);
    }
}

#[test]
fn honest_proofs_verify_across_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for i in 0..40 {
        // Deeper nets overflow the ReLU range without rescaling between layers.
        let layers = rng.random_range(1..=2);
        let dims: Vec<usize> = (0..=layers).map(|_| rng.random_range(2..=12)).collect();
        let bind = i % 4 == 0;
        let inst = instance(&dims, bind, &mut rng);
        let t = if i % 2 == 0 { 1 } else { 4 };
        let proof = prove(&inst.statement, &inst.witness, &inst.circuit, t, trial_seed(i)).unwrap();
        let verdict = verify(&inst.statement, &proof, &inst.circuit).unwrap();
        assert!(verdict.accepted, "dims {dims:?}: {}", verdict.detail);
    }
}

#[test]
fn proof_size_is_a_function_of_shape_and_repetitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let sizes: Vec<usize> = (0..5)
        .map(|i| {
            let inst = instance(&[5, 4, 3], false, &mut rng);
            prove(&inst.statement, &inst.witness, &inst.circuit, 8, trial_seed(i))
                .unwrap()
                .to_bytes()
                .len()
        })
        .collect();
    assert!(sizes.windows(2).all(|w| w[0] == w[1]), "{sizes:?}");
}

#[test]
fn lookup_with_one_bad_pair_in_ten() {
    let table = LookupTable::relu(-64..=64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut pairs: Vec<(Fp, Fp)> = (-50..50).map(|v: i64| (Fp::from_i64(v), Fp::from_i64(v.max(0)))).collect();
    for p in pairs.iter_mut().step_by(10) {
        p.1 += Fp::ONE;
    }
    let trials = 400;
    let accepted = (0..trials)
        .filter(|_| verify_lookup(&prove_lookup(&pairs, &table, 32, &mut rng).unwrap(), &table))
        .count();
    // (0.9)^32 is about 0.034.
    assert!((accepted as f64 / trials as f64) <= 0.08, "{accepted}/{trials}");
}
