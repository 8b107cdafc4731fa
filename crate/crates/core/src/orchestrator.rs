//! Audit state machine and saga orchestration.
//!
//! Each audit is persisted as an append-only JSON-lines event log at
//! `<data-dir>/audits/<id>.log`; in-memory state is always the fold of that
//! log. A step either appends one record and moves the audit forward (or to
//! `Failed`), or leaves the log untouched.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::artifact_store::{Artifact, ArtifactStore, StoreError};
use crate::clock;
use crate::gateway::{BackendVerdict, Gateway, GatewayError};
use crate::workflow::{is_valid_label, ExecutorKind, StepName, WorkflowError, WorkflowRegistry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditState {
    Created,
    SetupDone,
    KeysExchanged,
    ProofSubmitted,
    VerifiedCompliant,
    VerifiedNonCompliant,
    /// The reason is kept on the audit as `failure_reason`.
    Failed,
}

impl AuditState {
    pub const ALL: [AuditState; 7] = [
        AuditState::Created,
        AuditState::SetupDone,
        AuditState::KeysExchanged,
        AuditState::ProofSubmitted,
        AuditState::VerifiedCompliant,
        AuditState::VerifiedNonCompliant,
        AuditState::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            AuditState::VerifiedCompliant | AuditState::VerifiedNonCompliant | AuditState::Failed
        )
    }

    /// The only step that may run from this state.
    pub fn next_step(self) -> Option<StepName> {
        match self {
            AuditState::Created => Some(StepName::Setup),
            AuditState::SetupDone => Some(StepName::KeyExchange),
            AuditState::KeysExchanged => Some(StepName::Prove),
            AuditState::ProofSubmitted => Some(StepName::Verify),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AuditState::Created => "created",
            AuditState::SetupDone => "setup_done",
            AuditState::KeysExchanged => "keys_exchanged",
            AuditState::ProofSubmitted => "proof_submitted",
            AuditState::VerifiedCompliant => "verified_compliant",
            AuditState::VerifiedNonCompliant => "verified_non_compliant",
            AuditState::Failed => "failed",
        }
    }
}

impl fmt::Display for AuditState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AuditState {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        AuditState::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown audit state {s:?}"))
    }
}

/// State after `step` completes successfully from `from`. `compliant` is
/// consulted only for verification.
pub fn transition(from: AuditState, step: StepName, compliant: bool) -> Option<AuditState> {
    if from.next_step() != Some(step) {
        return None;
    }
    Some(match step {
        StepName::Setup => AuditState::SetupDone,
        StepName::KeyExchange => AuditState::KeysExchanged,
        StepName::Prove => AuditState::ProofSubmitted,
        StepName::Verify if compliant => AuditState::VerifiedCompliant,
        StepName::Verify => AuditState::VerifiedNonCompliant,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum ExitStatus {
    Success,
    Failure(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step_name: StepName,
    pub executor_kind: ExecutorKind,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub exit_status: ExitStatus,
    pub produced_artifacts: Vec<String>,
    /// Artifact ids the step read, by kind.
    pub consumed_artifacts: BTreeMap<String, String>,
    pub verdict: Option<BackendVerdict>,
    pub triggered_by: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    pub id: String,
    pub workflow_id: String,
    pub state: AuditState,
    pub failure_reason: Option<String>,
    pub history: Vec<StepRecord>,
    pub artifacts: BTreeMap<String, String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Audit {
    pub fn next_step(&self) -> Option<StepName> {
        self.state.next_step()
    }
}

/// One line of an audit log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Created {
        id: String,
        workflow_id: String,
        at: DateTime<Utc>,
    },
    ArtifactAttached {
        kind: String,
        artifact_id: String,
        at: DateTime<Utc>,
    },
    StepCompleted {
        record: StepRecord,
        /// Kind to artifact id for everything the step produced.
        outputs: BTreeMap<String, String>,
    },
    StepFailed {
        record: StepRecord,
        reason: String,
    },
}

/// Replays recorded steps from `Created`. Returns `None` if the history is
/// not a legal path.
pub fn replay(history: &[StepRecord]) -> Option<AuditState> {
    let mut state = AuditState::Created;
    for record in history {
        if state.is_terminal() {
            return None;
        }
        state = match &record.exit_status {
            ExitStatus::Failure(_) => AuditState::Failed,
            ExitStatus::Success => {
                let compliant = record.verdict.as_ref().is_some_and(|v| v.accepted);
                transition(state, record.step_name, compliant)?
            }
        };
    }
    Some(state)
}

fn apply(audit: Option<Audit>, event: &AuditEvent) -> Result<Audit> {
    let corrupt = |m: &str| OrchestratorError::CorruptLog(m.to_string());
    match (audit, event) {
        (None, AuditEvent::Created { id, workflow_id, at }) => Ok(Audit {
            id: id.clone(),
            workflow_id: workflow_id.clone(),
            state: AuditState::Created,
            failure_reason: None,
            history: Vec::new(),
            artifacts: BTreeMap::new(),
            created_at: *at,
            updated_at: *at,
        }),
        (None, _) | (Some(_), AuditEvent::Created { .. }) => Err(corrupt("log must start with exactly one creation")),
        (Some(mut a), AuditEvent::ArtifactAttached { kind, artifact_id, at }) => {
            a.artifacts.insert(kind.clone(), artifact_id.clone());
            a.updated_at = *at;
            Ok(a)
        }
        (Some(mut a), AuditEvent::StepCompleted { record, outputs }) => {
            let compliant = record.verdict.as_ref().is_some_and(|v| v.accepted);
            a.state = transition(a.state, record.step_name, compliant).ok_or_else(|| corrupt("illegal step in log"))?;
            a.artifacts.extend(outputs.clone());
            a.updated_at = record.finished_at;
            a.history.push(record.clone());
            Ok(a)
        }
        (Some(mut a), AuditEvent::StepFailed { record, reason }) => {
            if a.state.is_terminal() {
                return Err(corrupt("step recorded on a terminal audit"));
            }
            a.state = AuditState::Failed;
            a.failure_reason = Some(reason.clone());
            a.updated_at = record.finished_at;
            a.history.push(record.clone());
            Ok(a)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("unknown workflow {0:?}")]
    UnknownWorkflow(String),
    #[error("unknown audit {0:?}")]
    UnknownAudit(String),
    #[error("unknown artifact {0:?}")]
    UnknownArtifact(String),
    #[error("unknown step {0:?}")]
    UnknownStep(String),
    #[error("invalid artifact kind {0:?}")]
    InvalidKind(String),
    #[error("audit {id} is in terminal state {state}")]
    TerminalAudit { id: String, state: AuditState },
    #[error("step {requested} is out of order; next step is {}", expected.map_or("none", |s| s.as_str()))]
    OutOfOrder {
        requested: StepName,
        expected: Option<StepName>,
    },
    #[error("precondition failed: artifact {0:?} is not bound")]
    MissingPrecondition(String),
    #[error("step execution failed: {0}")]
    ExecutionFailure(String),
    #[error("postcondition violated: {0}")]
    PostconditionViolation(String),
    #[error("audit {0} is already running a step")]
    Busy(String),
    #[error("audit {id} is {state}, not compliant")]
    NotCompliant { id: String, state: AuditState },
    #[error("corrupt audit log: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("orchestrator I/O: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, OrchestratorError>;

struct AuditSlot {
    audit: RwLock<Audit>,
    /// Held for the whole of a step, and briefly by every other mutation.
    step_lock: Mutex<()>,
    log: Mutex<File>,
}

impl AuditSlot {
    fn snapshot(&self) -> Audit {
        self.audit.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Appends `event`, then applies it in memory. If the write fails the
    /// audit is unchanged.
    fn commit(&self, event: AuditEvent) -> Result<Audit> {
        let mut line = serde_json::to_vec(&event).expect("event serializes");
        line.push(b'\n');
        let mut audit = self.audit.write().unwrap_or_else(|e| e.into_inner());
        let next = apply(Some(audit.clone()), &event)?;
        {
            let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
            log.write_all(&line)?;
            log.sync_data()?;
        }
        *audit = next.clone();
        Ok(next)
    }
}

/// Compliance attestation for an audit whose verification accepted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub audit_id: String,
    pub workflow_id: String,
    pub protocol: String,
    pub verdict: String,
    pub verification_key_artifact: Option<String>,
    pub proof_artifact: Option<String>,
    pub verification_detail: String,
    pub issued_at: DateTime<Utc>,
}

pub struct Orchestrator {
    audits_dir: PathBuf,
    store: Arc<ArtifactStore>,
    workflows: Arc<WorkflowRegistry>,
    gateway: Arc<Gateway>,
    audits: RwLock<HashMap<String, Arc<AuditSlot>>>,
}

pub fn media_hint_for(kind: &str) -> &'static str {
    match kind {
        "model" | "model-input" | "model-output" | "setup-params" | "verification-report" => "application/json",
        _ => "application/octet-stream",
    }
}

fn load_log(path: &Path) -> Result<Audit> {
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<io::Result<_>>()?;
    let mut audit = None;
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AuditEvent>(line) {
            Ok(event) => audit = Some(apply(audit, &event)?),
            // A torn final line is a write interrupted by a crash.
            Err(e) if i == last => {
                tracing::warn!(path = %path.display(), error = %e, "ignoring torn final log record");
            }
            Err(e) => return Err(OrchestratorError::CorruptLog(format!("{}: line {}: {e}", path.display(), i + 1))),
        }
    }
    audit.ok_or_else(|| OrchestratorError::CorruptLog(format!("{}: empty log", path.display())))
}

impl Orchestrator {
    /// Opens the audit directory and replays every existing log.
    pub fn open(
        audits_dir: impl Into<PathBuf>,
        store: Arc<ArtifactStore>,
        workflows: Arc<WorkflowRegistry>,
        gateway: Arc<Gateway>,
    ) -> Result<Self> {
        let audits_dir = audits_dir.into();
        fs::create_dir_all(&audits_dir)?;
        let mut audits = HashMap::new();
        for entry in fs::read_dir(&audits_dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("log") {
                continue;
            }
            let audit = load_log(&path)?;
            let log = OpenOptions::new().append(true).open(&path)?;
            audits.insert(
                audit.id.clone(),
                Arc::new(AuditSlot {
                    audit: RwLock::new(audit),
                    step_lock: Mutex::new(()),
                    log: Mutex::new(log),
                }),
            );
        }
        Ok(Orchestrator {
            audits_dir,
            store,
            workflows,
            gateway,
            audits: RwLock::new(audits),
        })
    }

    pub fn store(&self) -> &Arc<ArtifactStore> {
        &self.store
    }

    pub fn workflows(&self) -> &Arc<WorkflowRegistry> {
        &self.workflows
    }

    fn slot(&self, id: &str) -> Result<Arc<AuditSlot>> {
        self.audits
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| OrchestratorError::UnknownAudit(id.to_string()))
    }

    pub fn create_audit(&self, workflow_id: &str) -> Result<Audit> {
        self.workflows.get(workflow_id).map_err(|e| match e {
            WorkflowError::UnknownWorkflow(id) => OrchestratorError::UnknownWorkflow(id),
            other => OrchestratorError::Io(io::Error::other(other.to_string())),
        })?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let event = AuditEvent::Created {
            id: id.clone(),
            workflow_id: workflow_id.to_string(),
            at: clock::now(),
        };
        let audit = apply(None, &event)?;
        let path = self.audits_dir.join(format!("{id}.log"));
        let mut log = OpenOptions::new().append(true).create_new(true).open(&path)?;
        let mut line = serde_json::to_vec(&event).expect("event serializes");
        line.push(b'\n');
        log.write_all(&line)?;
        log.sync_data()?;
        let slot = Arc::new(AuditSlot {
            audit: RwLock::new(audit.clone()),
            step_lock: Mutex::new(()),
            log: Mutex::new(log),
        });
        self.audits.write().unwrap_or_else(|e| e.into_inner()).insert(id, slot);
        Ok(audit)
    }

    pub fn get_audit(&self, id: &str) -> Result<Audit> {
        Ok(self.slot(id)?.snapshot())
    }

    /// Snapshots, newest first.
    pub fn list_audits(&self, state: Option<AuditState>) -> Vec<Audit> {
        let mut out: Vec<Audit> = self
            .audits
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .map(|s| s.snapshot())
            .filter(|a| state.is_none_or(|st| a.state == st))
            .collect();
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)));
        out
    }

    fn lock_step<'a>(&self, id: &str, slot: &'a AuditSlot) -> Result<std::sync::MutexGuard<'a, ()>> {
        match slot.step_lock.try_lock() {
            Ok(g) => Ok(g),
            Err(std::sync::TryLockError::Poisoned(p)) => Ok(p.into_inner()),
            Err(std::sync::TryLockError::WouldBlock) => Err(OrchestratorError::Busy(id.to_string())),
        }
    }

    pub fn attach_artifact(&self, audit_id: &str, kind: &str, artifact_id: &str) -> Result<Audit> {
        let slot = self.slot(audit_id)?;
        if !is_valid_label(kind) {
            return Err(OrchestratorError::InvalidKind(kind.to_string()));
        }
        let _guard = self.lock_step(audit_id, &slot)?;
        let audit = slot.snapshot();
        if audit.state.is_terminal() {
            return Err(OrchestratorError::TerminalAudit {
                id: audit.id,
                state: audit.state,
            });
        }
        if !self.store.contains(artifact_id) {
            return Err(OrchestratorError::UnknownArtifact(artifact_id.to_string()));
        }
        slot.commit(AuditEvent::ArtifactAttached {
            kind: kind.to_string(),
            artifact_id: artifact_id.to_string(),
            at: clock::now(),
        })
    }

    /// Stores `bytes` and binds them under `kind`.
    pub fn upload_artifact(&self, audit_id: &str, kind: &str, bytes: &[u8], media_hint: Option<&str>) -> Result<(Audit, Artifact)> {
        let audit = self.get_audit(audit_id)?;
        if !is_valid_label(kind) {
            return Err(OrchestratorError::InvalidKind(kind.to_string()));
        }
        if audit.state.is_terminal() {
            return Err(OrchestratorError::TerminalAudit {
                id: audit.id,
                state: audit.state,
            });
        }
        let artifact = self.store.put(bytes, kind, media_hint.unwrap_or_else(|| media_hint_for(kind)))?;
        let audit = self.attach_artifact(audit_id, kind, &artifact.id)?;
        Ok((audit, artifact))
    }

    /// Bytes bound under `kind` on the audit.
    pub fn artifact_bytes(&self, audit_id: &str, kind: &str) -> Result<(Artifact, Vec<u8>)> {
        let audit = self.get_audit(audit_id)?;
        let id = audit
            .artifacts
            .get(kind)
            .ok_or_else(|| OrchestratorError::UnknownArtifact(format!("{audit_id}/{kind}")))?;
        Ok((self.store.stat(id)?, self.store.get(id)?))
    }

    /// Runs `step_name` if it is the audit's next step.
    pub fn advance(&self, audit_id: &str, step_name: &str, triggered_by: Option<&str>) -> Result<Audit> {
        let slot = self.slot(audit_id)?;
        let _guard = self.lock_step(audit_id, &slot)?;
        let audit = slot.snapshot();
        if audit.state.is_terminal() {
            return Err(OrchestratorError::TerminalAudit {
                id: audit.id,
                state: audit.state,
            });
        }
        let step: StepName = step_name
            .parse()
            .map_err(|_| OrchestratorError::UnknownStep(step_name.to_string()))?;
        if audit.state.next_step() != Some(step) {
            return Err(OrchestratorError::OutOfOrder {
                requested: step,
                expected: audit.state.next_step(),
            });
        }
        let config = self
            .workflows
            .get(&audit.workflow_id)
            .map_err(|_| OrchestratorError::UnknownWorkflow(audit.workflow_id.clone()))?;
        let spec = config.step(step);

        let mut consumed = BTreeMap::new();
        let mut inputs = BTreeMap::new();
        for kind in &spec.inputs {
            let id = audit
                .artifacts
                .get(kind)
                .ok_or_else(|| OrchestratorError::MissingPrecondition(kind.clone()))?;
            inputs.insert(kind.clone(), self.store.get(id)?);
            consumed.insert(kind.clone(), id.clone());
        }

        let started_at = clock::now();
        let result = self.gateway.execute_step(&config, step.as_str(), &inputs);
        let outcome = result.map_err(|e| match e {
            GatewayError::MissingOutput { .. } => OrchestratorError::PostconditionViolation(e.to_string()),
            e => OrchestratorError::ExecutionFailure(e.to_string()),
        });
        let outcome = outcome.and_then(|out| {
            if step == StepName::Verify && out.verdict.is_none() {
                return Err(OrchestratorError::PostconditionViolation("verify produced no verdict".into()));
            }
            let mut stored = BTreeMap::new();
            for kind in &spec.outputs {
                let bytes = out
                    .produced
                    .get(kind)
                    .ok_or_else(|| OrchestratorError::PostconditionViolation(format!("{kind:?} not produced")))?;
                let artifact = self
                    .store
                    .put(bytes, kind, media_hint_for(kind))
                    .map_err(|e| OrchestratorError::PostconditionViolation(format!("{kind:?} not stored: {e}")))?;
                if !self.store.contains(&artifact.id) {
                    return Err(OrchestratorError::PostconditionViolation(format!("{kind:?} missing from store")));
                }
                stored.insert(kind.clone(), artifact.id);
            }
            Ok((out.verdict, stored))
        });

        let record = |exit_status, produced: Vec<String>, verdict| StepRecord {
            step_name: step,
            executor_kind: spec.executor,
            started_at,
            finished_at: clock::now(),
            exit_status,
            produced_artifacts: produced,
            consumed_artifacts: consumed.clone(),
            verdict,
            triggered_by: triggered_by.map(str::to_string),
        };
        match outcome {
            Ok((verdict, outputs)) => {
                let produced = spec.outputs.iter().map(|k| outputs[k].clone()).collect();
                slot.commit(AuditEvent::StepCompleted {
                    record: record(ExitStatus::Success, produced, verdict),
                    outputs,
                })
            }
            Err(err) => {
                let reason = err.to_string();
                slot.commit(AuditEvent::StepFailed {
                    record: record(ExitStatus::Failure(reason.clone()), Vec::new(), None),
                    reason,
                })?;
                Err(err)
            }
        }
    }

    pub fn certificate(&self, audit_id: &str) -> Result<Certificate> {
        let audit = self.get_audit(audit_id)?;
        if audit.state != AuditState::VerifiedCompliant {
            return Err(OrchestratorError::NotCompliant {
                id: audit.id,
                state: audit.state,
            });
        }
        let verify = audit
            .history
            .iter()
            .rev()
            .find(|r| r.step_name == StepName::Verify)
            .ok_or_else(|| OrchestratorError::CorruptLog("compliant audit without a verify record".into()))?;
        let protocol = self
            .workflows
            .get(&audit.workflow_id)
            .map(|w| w.protocol.clone())
            .unwrap_or_default();
        Ok(Certificate {
            audit_id: audit.id.clone(),
            workflow_id: audit.workflow_id.clone(),
            protocol,
            verdict: "compliant".into(),
            verification_key_artifact: verify.consumed_artifacts.get("verification-key").cloned(),
            proof_artifact: verify.consumed_artifacts.get("proof").cloned(),
            verification_detail: verify.verdict.as_ref().map(|v| v.detail.clone()).unwrap_or_default(),
            issued_at: verify.finished_at,
        })
    }
}
