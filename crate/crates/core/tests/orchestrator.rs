use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use zkmlops_core::orchestrator::{AuditState, ExitStatus, OrchestratorError};
use zkmlops_core::workflow::{StepName, WorkflowConfig};
use zkmlops_core::Services;
use zkref::QuantizedFnn;

fn model_json(dims: &[usize], seed: u64) -> Vec<u8> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    QuantizedFnn::random(dims, &mut rng).unwrap().to_json()
}

fn reference_audit(s: &Services, dims: &[usize], reps: usize) -> String {
    let o = &s.orchestrator;
    let audit = o.create_audit("fnn-inference-v1").unwrap();
    o.upload_artifact(&audit.id, "model", &model_json(dims, 7), None).unwrap();
    o.upload_artifact(&audit.id, "setup-params", format!("{{\"repetitions\": {reps}}}").as_bytes(), None)
        .unwrap();
    let input: Vec<i64> = (0..dims[0] as i64).map(|i| i * 3 - 5).collect();
    o.upload_artifact(&audit.id, "model-input", &serde_json::to_vec(&input).unwrap(), None)
        .unwrap();
    audit.id
}

fn mock_workflow(id: &str, setup_cmd: &str) -> WorkflowConfig {
    let doc = serde_json::json!({
        "id": id,
        "purpose": "exercise the external adapter",
        "phase": "Inference",
        "model_category": "GeneralNeuralNetworks",
        "protocol": "mock",
        "steps": [
            {"step_name": "setup", "executor": "external-script", "timeout_seconds": 10,
             "command_template": setup_cmd,
             "inputs": ["model"], "outputs": ["proving-key", "prover-verification-key"]},
            {"step_name": "key-exchange", "executor": "external-script", "timeout_seconds": 10,
             "command_template": "cp {in:prover-verification-key} {out:verification-key}",
             "inputs": ["prover-verification-key"], "outputs": ["verification-key"]},
            {"step_name": "prove", "executor": "external-script", "timeout_seconds": 10,
             "command_template": "cat {in:proving-key} {in:model-input} > {out:proof} && cp {in:model-input} {out:model-output}",
             "inputs": ["proving-key", "model-input"], "outputs": ["proof", "model-output"]},
            {"step_name": "verify", "executor": "external-script", "timeout_seconds": 10,
             "command_template": "printf checked > {out:verification-report}; cmp -s {in:model-input} {in:model-output} || exit 10",
             "inputs": ["verification-key", "proof", "model-input", "model-output"],
             "outputs": ["verification-report"]}
        ],
        "traceability_ref": null
    });
    WorkflowConfig::from_json(&serde_json::to_vec(&doc).unwrap()).unwrap()
}

const MOCK_SETUP: &str = "printf pk > {out:proving-key} && printf vk > {out:prover-verification-key}";

fn run_all(s: &Services, id: &str) -> AuditState {
    for step in StepName::CANONICAL {
        s.orchestrator.advance(id, step.as_str(), Some("tester")).unwrap();
    }
    s.orchestrator.get_audit(id).unwrap().state
}

#[test]
fn reference_scenario_compliant_then_tampered() {
    let dir = tempfile::tempdir().unwrap();
    let s = Services::open(dir.path()).unwrap();
    let id = reference_audit(&s, &[4, 3, 2], 8);
    assert_eq!(run_all(&s, &id), AuditState::VerifiedCompliant);

    let audit = s.orchestrator.get_audit(&id).unwrap();
    assert_eq!(audit.history.len(), 4);
    assert!(audit.history.iter().all(|r| r.exit_status == ExitStatus::Success));
    assert_eq!(audit.history[0].triggered_by.as_deref(), Some("tester"));
    let cert = s.orchestrator.certificate(&id).unwrap();
    assert_eq!(cert.verdict, "compliant");
    assert_eq!(cert.proof_artifact.as_ref(), audit.artifacts.get("proof"));
    assert_eq!(cert.verification_key_artifact.as_ref(), audit.artifacts.get("verification-key"));

    let id2 = reference_audit(&s, &[4, 3, 2], 8);
    for step in &StepName::CANONICAL[..3] {
        s.orchestrator.advance(&id2, step.as_str(), None).unwrap();
    }
    let (_, bytes) = s.orchestrator.artifact_bytes(&id2, "model-output").unwrap();
    let mut y: Vec<i64> = serde_json::from_slice(&bytes).unwrap();
    y[0] += 1;
    s.orchestrator
        .upload_artifact(&id2, "model-output", &serde_json::to_vec(&y).unwrap(), None)
        .unwrap();
    s.orchestrator.advance(&id2, "verify", None).unwrap();
    let audit = s.orchestrator.get_audit(&id2).unwrap();
    assert_eq!(audit.state, AuditState::VerifiedNonCompliant);
    assert!(!audit.history[3].verdict.as_ref().unwrap().accepted);
    assert!(matches!(
        s.orchestrator.certificate(&id2),
        Err(OrchestratorError::NotCompliant { .. })
    ));
}

#[test]
fn rejected_requests_leave_no_trace() {
    let dir = tempfile::tempdir().unwrap();
    let s = Services::open(dir.path()).unwrap();
    let o = &s.orchestrator;
    let audit = o.create_audit("fnn-inference-v1").unwrap();
    let before = o.get_audit(&audit.id).unwrap();

    assert!(matches!(o.advance(&audit.id, "prove", None), Err(OrchestratorError::OutOfOrder { .. })));
    assert!(matches!(o.advance(&audit.id, "launch", None), Err(OrchestratorError::UnknownStep(_))));
    assert!(matches!(
        o.advance(&audit.id, "setup", None),
        Err(OrchestratorError::MissingPrecondition(k)) if k == "model"
    ));
    assert!(matches!(o.advance("nope", "setup", None), Err(OrchestratorError::UnknownAudit(_))));
    assert!(matches!(
        o.attach_artifact(&audit.id, "model", &"0".repeat(64)),
        Err(OrchestratorError::UnknownArtifact(_))
    ));
    assert!(matches!(
        o.upload_artifact(&audit.id, "Bad Kind", b"x", None),
        Err(OrchestratorError::InvalidKind(_))
    ));
    assert!(matches!(o.create_audit("missing"), Err(OrchestratorError::UnknownWorkflow(_))));
    assert_eq!(o.get_audit(&audit.id).unwrap(), before);
}

#[test]
fn restart_replays_logs() {
    let dir = tempfile::tempdir().unwrap();
    let (id, snapshot) = {
        let s = Services::open(dir.path()).unwrap();
        let id = reference_audit(&s, &[3, 2], 2);
        s.orchestrator.advance(&id, "setup", None).unwrap();
        s.orchestrator.advance(&id, "key-exchange", None).unwrap();
        (id.clone(), s.orchestrator.get_audit(&id).unwrap())
    };
    let s = Services::open(dir.path()).unwrap();
    assert_eq!(s.orchestrator.get_audit(&id).unwrap(), snapshot);

    // A crash mid-append leaves a partial record behind.
    let log = dir.path().join("audits").join(format!("{id}.log"));
    OpenOptions::new()
        .append(true)
        .open(&log)
        .unwrap()
        .write_all(b"{\"event\":\"step_comp")
        .unwrap();
    let s = Services::open(dir.path()).unwrap();
    assert_eq!(s.orchestrator.get_audit(&id).unwrap(), snapshot);
}

#[test]
fn corrupt_log_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let s = Services::open(dir.path()).unwrap();
        s.orchestrator.create_audit("fnn-inference-v1").unwrap().id
    };
    let log = dir.path().join("audits").join(format!("{id}.log"));
    let text = std::fs::read_to_string(&log).unwrap();
    std::fs::write(&log, format!("garbage\n{text}")).unwrap();
    assert!(matches!(
        Services::open(dir.path()),
        Err(zkmlops_core::OpenError::Orchestrator(OrchestratorError::CorruptLog(_)))
    ));
}

#[test]
fn external_scripts_follow_the_same_path() {
    let dir = tempfile::tempdir().unwrap();
    let s = Services::open(dir.path()).unwrap();
    s.orchestrator.workflows().register(mock_workflow("mock-v1", MOCK_SETUP)).unwrap();

    let start = |s: &Services| {
        let a = s.orchestrator.create_audit("mock-v1").unwrap();
        s.orchestrator.upload_artifact(&a.id, "model", b"{}", None).unwrap();
        s.orchestrator.upload_artifact(&a.id, "model-input", b"[1,2]", None).unwrap();
        a.id
    };
    let id = start(&s);
    assert_eq!(run_all(&s, &id), AuditState::VerifiedCompliant);
    assert_eq!(s.orchestrator.certificate(&id).unwrap().protocol, "mock");

    let id = start(&s);
    for step in &StepName::CANONICAL[..3] {
        s.orchestrator.advance(&id, step.as_str(), None).unwrap();
    }
    s.orchestrator.upload_artifact(&id, "model-output", b"[1,3]", None).unwrap();
    s.orchestrator.advance(&id, "verify", None).unwrap();
    assert_eq!(s.orchestrator.get_audit(&id).unwrap().state, AuditState::VerifiedNonCompliant);
}

#[test]
fn failing_step_fails_the_audit_for_good() {
    let dir = tempfile::tempdir().unwrap();
    let s = Services::open(dir.path()).unwrap();
    s.orchestrator.workflows().register(mock_workflow("broken-v1", "exit 3")).unwrap();
    s.orchestrator
        .workflows()
        .register(mock_workflow("silent-v1", "printf pk > {out:proving-key}"))
        .unwrap();

    for (wf, postcondition) in [("broken-v1", false), ("silent-v1", true)] {
        let a = s.orchestrator.create_audit(wf).unwrap();
        s.orchestrator.upload_artifact(&a.id, "model", b"{}", None).unwrap();
        let err = s.orchestrator.advance(&a.id, "setup", None).unwrap_err();
        assert_eq!(matches!(err, OrchestratorError::PostconditionViolation(_)), postcondition, "{err}");
        let audit = s.orchestrator.get_audit(&a.id).unwrap();
        assert_eq!(audit.state, AuditState::Failed);
        assert!(audit.failure_reason.is_some());
        assert!(matches!(audit.history[0].exit_status, ExitStatus::Failure(_)));
        assert!(audit.history[0].produced_artifacts.is_empty());
        for step in StepName::CANONICAL {
            assert!(matches!(
                s.orchestrator.advance(&a.id, step.as_str(), None),
                Err(OrchestratorError::TerminalAudit { .. })
            ));
        }
        assert!(matches!(
            s.orchestrator.upload_artifact(&a.id, "model", b"{}", None),
            Err(OrchestratorError::TerminalAudit { .. })
        ));
    }
}

#[test]
fn concurrent_step_on_same_audit_is_busy() {
    let dir = tempfile::tempdir().unwrap();
    let s = Arc::new(Services::open(dir.path()).unwrap());
    s.orchestrator
        .workflows()
        .register(mock_workflow("slow-v1", &format!("sleep 1; {MOCK_SETUP}")))
        .unwrap();
    let a = s.orchestrator.create_audit("slow-v1").unwrap();
    s.orchestrator.upload_artifact(&a.id, "model", b"{}", None).unwrap();

    let worker = {
        let s = Arc::clone(&s);
        let id = a.id.clone();
        std::thread::spawn(move || s.orchestrator.advance(&id, "setup", None))
    };
    std::thread::sleep(Duration::from_millis(300));
    assert!(matches!(
        s.orchestrator.advance(&a.id, "setup", None),
        Err(OrchestratorError::Busy(_))
    ));
    assert!(matches!(
        s.orchestrator.upload_artifact(&a.id, "model-input", b"[1]", None),
        Err(OrchestratorError::Busy(_))
    ));
    // Other audits are unaffected.
    let other = s.orchestrator.create_audit("slow-v1").unwrap();
    assert_eq!(s.orchestrator.get_audit(&other.id).unwrap().state, AuditState::Created);

    worker.join().unwrap().unwrap();
    let audit = s.orchestrator.get_audit(&a.id).unwrap();
    assert_eq!(audit.state, AuditState::SetupDone);
    assert_eq!(audit.history.len(), 1);
}

#[test]
fn list_filters_by_state() {
    let dir = tempfile::tempdir().unwrap();
    let s = Services::open(dir.path()).unwrap();
    s.orchestrator.workflows().register(mock_workflow("mock-v1", MOCK_SETUP)).unwrap();
    let a = s.orchestrator.create_audit("mock-v1").unwrap();
    let b = s.orchestrator.create_audit("mock-v1").unwrap();
    s.orchestrator.upload_artifact(&b.id, "model", b"{}", None).unwrap();
    s.orchestrator.advance(&b.id, "setup", None).unwrap();

    let all: Vec<String> = s.orchestrator.list_audits(None).into_iter().map(|x| x.id).collect();
    assert_eq!(all, vec![b.id.clone(), a.id.clone()]);
    let created = s.orchestrator.list_audits(Some(AuditState::Created));
    assert_eq!(created.len(), 1);
    assert_eq!(created[0].id, a.id);
    let _: BTreeMap<_, _> = s.orchestrator.get_audit(&b.id).unwrap().artifacts;
}
