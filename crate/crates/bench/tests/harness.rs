use zkmlops_bench::{parse_models, run_bench, Backend, BenchConfig, BenchError, Metric};

fn cfg(repetitions: usize, t: usize, seed: u64) -> BenchConfig {
    BenchConfig {
        repetitions,
        t,
        seed,
        scratch: None,
    }
}

#[test]
fn three_results_with_n_samples() {
    let models = parse_models("4-3-2,6-4-2").unwrap();
    let results = run_bench(&Backend::Reference, &models, &cfg(5, 2, 1)).unwrap();
    assert_eq!(results.len(), 6);
    for r in &results {
        assert_eq!(r.samples.len(), 5);
        assert_eq!(r.backend, "reference");
    }
    let sizes: Vec<_> = results.iter().filter(|r| r.metric == Metric::ProofBytes).collect();
    assert!(sizes.iter().all(|r| r.std == 0.0));
    assert!(sizes[0].mean < sizes[1].mean);
}

#[test]
fn non_timing_outputs_are_seed_deterministic() {
    let models = parse_models("5-3-2").unwrap();
    let size = |seed| {
        run_bench(&Backend::Reference, &models, &cfg(3, 3, seed))
            .unwrap()
            .into_iter()
            .find(|r| r.metric == Metric::ProofBytes)
            .unwrap()
            .samples
    };
    assert_eq!(size(9), size(9));
}

#[test]
fn overflowing_architecture_is_unsupported() {
    let models = parse_models("32-32-32-2").unwrap();
    assert!(matches!(
        run_bench(&Backend::Reference, &models, &cfg(1, 1, 0)),
        Err(BenchError::ModelUnsupported { .. })
    ));
    assert!(matches!(
        run_bench(&Backend::Reference, &parse_models("2-2").unwrap(), &cfg(0, 1, 0)),
        Err(BenchError::ZeroRepetitions)
    ));
}

#[test]
fn workflow_backend_runs_through_gateway() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mock.json");
    let doc = serde_json::json!({
        "id": "mock-bench",
        "purpose": "timing harness check",
        "phase": "Inference",
        "model_category": "GeneralNeuralNetworks",
        "protocol": "mock",
        "steps": [
            {"step_name": "setup", "executor": "external-script", "timeout_seconds": 10,
             "command_template": "cp {in:model} {out:proving-key} && printf vk > {out:prover-verification-key}",
             "inputs": ["model"], "outputs": ["proving-key", "prover-verification-key"]},
            {"step_name": "key-exchange", "executor": "external-script", "timeout_seconds": 10,
             "command_template": "cp {in:prover-verification-key} {out:verification-key}",
             "inputs": ["prover-verification-key"], "outputs": ["verification-key"]},
            {"step_name": "prove", "executor": "external-script", "timeout_seconds": 10,
             "command_template": "head -c 100 /dev/zero > {out:proof}",
             "inputs": ["proving-key", "model-input"], "outputs": ["proof"]},
            {"step_name": "verify", "executor": "external-script", "timeout_seconds": 10,
             "command_template": "printf ok > {out:verification-report}",
             "inputs": ["verification-key", "proof"], "outputs": ["verification-report"]}
        ],
        "traceability_ref": null
    });
    std::fs::write(&path, serde_json::to_vec(&doc).unwrap()).unwrap();
    let backend = Backend::resolve(&format!("workflow:{}", path.display())).unwrap();
    let results = run_bench(&backend, &parse_models("3-2").unwrap(), &cfg(2, 1, 0)).unwrap();
    assert_eq!(results.len(), 3);
    assert_eq!(results[0].backend, "mock-bench");
    let size = results.iter().find(|r| r.metric == Metric::ProofBytes).unwrap();
    assert_eq!(size.samples, vec![100.0, 100.0]);
}
