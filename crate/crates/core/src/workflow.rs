//! Workflow configuration documents and the registry that holds them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::selection::{LifecyclePhase, ModelCategory};

/// The four steps every non-interactive audit goes through, in order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepName {
    Setup,
    KeyExchange,
    Prove,
    Verify,
}

impl StepName {
    pub const CANONICAL: [StepName; 4] = [StepName::Setup, StepName::KeyExchange, StepName::Prove, StepName::Verify];

    pub fn as_str(self) -> &'static str {
        match self {
            StepName::Setup => "setup",
            StepName::KeyExchange => "key-exchange",
            StepName::Prove => "prove",
            StepName::Verify => "verify",
        }
    }
}

impl fmt::Display for StepName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        StepName::CANONICAL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| format!("unknown step {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutorKind {
    ExternalScript,
    ReferenceBackend,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub step_name: StepName,
    pub executor: ExecutorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_template: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub timeout_seconds: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowConfig {
    pub id: String,
    pub purpose: String,
    pub phase: LifecyclePhase,
    pub model_category: ModelCategory,
    pub protocol: String,
    pub steps: Vec<StepSpec>,
    #[serde(default)]
    pub traceability_ref: Option<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum WorkflowError {
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("workflow {0:?} is already registered")]
    DuplicateWorkflow(String),
    #[error("unknown workflow {0:?}")]
    UnknownWorkflow(String),
    #[error("workflow storage I/O: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, WorkflowError>;

fn schema(msg: impl Into<String>) -> WorkflowError {
    WorkflowError::SchemaError(msg.into())
}

/// Labels for workflow ids and artifact kinds: lowercase, shell- and
/// path-safe.
pub fn is_valid_label(label: &str) -> bool {
    !label.is_empty()
        && label.len() <= 64
        && label.as_bytes()[0].is_ascii_alphanumeric()
        && label
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || matches!(b, b'-' | b'_' | b'.'))
}

/// A `{...}` token in a command template.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Placeholder {
    Scratch,
    Input(String),
    Output(String),
}

pub fn placeholder_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([^{}]*)\}").expect("valid regex"))
}

pub fn parse_placeholder(token: &str) -> Option<Placeholder> {
    if token == "scratch" {
        return Some(Placeholder::Scratch);
    }
    if let Some(k) = token.strip_prefix("in:") {
        return Some(Placeholder::Input(k.to_string()));
    }
    token.strip_prefix("out:").map(|k| Placeholder::Output(k.to_string()))
}

/// Which artifact kinds the built-in backend reads and writes per step.
pub struct ReferenceContract {
    pub required_inputs: &'static [&'static str],
    pub optional_inputs: &'static [&'static str],
    pub outputs: &'static [&'static str],
}

pub fn reference_contract(step: StepName) -> ReferenceContract {
    match step {
        StepName::Setup => ReferenceContract {
            required_inputs: &["model"],
            optional_inputs: &["setup-params"],
            outputs: &["proving-key", "prover-verification-key"],
        },
        StepName::KeyExchange => ReferenceContract {
            required_inputs: &["prover-verification-key"],
            optional_inputs: &[],
            outputs: &["verification-key"],
        },
        StepName::Prove => ReferenceContract {
            required_inputs: &["model", "model-input", "proving-key"],
            optional_inputs: &[],
            outputs: &["proof", "model-output"],
        },
        StepName::Verify => ReferenceContract {
            required_inputs: &["verification-key", "proof", "model-input", "model-output"],
            optional_inputs: &[],
            outputs: &["verification-report"],
        },
    }
}

fn validate_step(step: &StepSpec) -> Result<()> {
    let name = step.step_name;
    if step.timeout_seconds == 0 {
        return Err(schema(format!("{name}: timeout_seconds must be positive")));
    }
    for (what, list) in [("inputs", &step.inputs), ("outputs", &step.outputs)] {
        let mut seen = BTreeSet::new();
        for kind in list {
            if !is_valid_label(kind) {
                return Err(schema(format!("{name}: invalid artifact kind {kind:?}")));
            }
            if !seen.insert(kind) {
                return Err(schema(format!("{name}: duplicate {what} kind {kind:?}")));
            }
        }
    }
    if let Some(k) = step.outputs.iter().find(|k| step.inputs.contains(k)) {
        return Err(schema(format!("{name}: {k:?} is both consumed and produced")));
    }
    match step.executor {
        ExecutorKind::ExternalScript => {
            let template = step
                .command_template
                .as_deref()
                .filter(|t| !t.trim().is_empty())
                .ok_or_else(|| schema(format!("{name}: external steps need a command_template")))?;
            for cap in placeholder_regex().captures_iter(template) {
                let ok = match parse_placeholder(&cap[1]) {
                    Some(Placeholder::Scratch) => true,
                    Some(Placeholder::Input(k)) => step.inputs.contains(&k),
                    Some(Placeholder::Output(k)) => step.outputs.contains(&k),
                    None => false,
                };
                if !ok {
                    return Err(schema(format!("{name}: unresolvable placeholder {}", &cap[0])));
                }
            }
        }
        ExecutorKind::ReferenceBackend => {
            if step.command_template.is_some() {
                return Err(schema(format!("{name}: reference-backend steps take no command_template")));
            }
            let contract = reference_contract(name);
            if let Some(k) = contract.required_inputs.iter().find(|k| !step.inputs.iter().any(|i| i == *k)) {
                return Err(schema(format!("{name}: reference backend needs input {k:?}")));
            }
            if let Some(k) = step.inputs.iter().find(|i| {
                !contract.required_inputs.contains(&i.as_str()) && !contract.optional_inputs.contains(&i.as_str())
            }) {
                return Err(schema(format!("{name}: reference backend does not read {k:?}")));
            }
            let produced: BTreeSet<&str> = step.outputs.iter().map(String::as_str).collect();
            if produced != contract.outputs.iter().copied().collect() {
                return Err(schema(format!(
                    "{name}: reference backend produces exactly {:?}",
                    contract.outputs
                )));
            }
        }
    }
    Ok(())
}

impl WorkflowConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: WorkflowConfig = serde_json::from_slice(bytes).map_err(|e| schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_valid_label(&self.id) {
            return Err(schema(format!("invalid workflow id {:?}", self.id)));
        }
        let names: Vec<StepName> = self.steps.iter().map(|s| s.step_name).collect();
        if names != StepName::CANONICAL {
            return Err(schema(format!(
                "steps must be exactly setup, key-exchange, prove, verify in that order; got {:?}",
                names.iter().map(|n| n.as_str()).collect::<Vec<_>>()
            )));
        }
        let mut producers: BTreeMap<&str, StepName> = BTreeMap::new();
        for step in &self.steps {
            validate_step(step)?;
            for out in &step.outputs {
                if let Some(prev) = producers.insert(out, step.step_name) {
                    return Err(schema(format!("{out:?} is produced by both {prev} and {}", step.step_name)));
                }
            }
        }
        Ok(())
    }

    pub fn step(&self, name: StepName) -> &StepSpec {
        self.steps
            .iter()
            .find(|s| s.step_name == name)
            .expect("validated configs contain every canonical step")
    }
}

const SHIPPED: &[&str] = &[include_str!("../workflows/fnn-inference-v1.json")];

pub fn shipped_workflows() -> Vec<WorkflowConfig> {
    SHIPPED
        .iter()
        .map(|doc| WorkflowConfig::from_json(doc.as_bytes()).expect("shipped workflow is valid"))
        .collect()
}

/// Registered workflows, persisted as `<dir>/<id>.json` when a directory is
/// given.
#[derive(Debug, Default)]
pub struct WorkflowRegistry {
    dir: Option<PathBuf>,
    configs: RwLock<BTreeMap<String, Arc<WorkflowConfig>>>,
}

impl WorkflowRegistry {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the directory and loads every config already stored there.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut configs = BTreeMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let cfg = WorkflowConfig::from_json(&fs::read(&path)?)?;
            configs.insert(cfg.id.clone(), Arc::new(cfg));
        }
        Ok(WorkflowRegistry {
            dir: Some(dir),
            configs: RwLock::new(configs),
        })
    }

    pub fn load_config(&self, bytes: &[u8]) -> Result<Arc<WorkflowConfig>> {
        let cfg = WorkflowConfig::from_json(bytes)?;
        self.register(cfg)
    }

    pub fn register(&self, cfg: WorkflowConfig) -> Result<Arc<WorkflowConfig>> {
        cfg.validate()?;
        let mut configs = self.configs.write().unwrap_or_else(|e| e.into_inner());
        if configs.contains_key(&cfg.id) {
            return Err(WorkflowError::DuplicateWorkflow(cfg.id));
        }
        if let Some(dir) = &self.dir {
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(&serde_json::to_vec_pretty(&cfg).expect("config serializes"))?;
            tmp.as_file().sync_data()?;
            tmp.persist(dir.join(format!("{}.json", cfg.id))).map_err(|e| e.error)?;
        }
        let cfg = Arc::new(cfg);
        configs.insert(cfg.id.clone(), cfg.clone());
        Ok(cfg)
    }

    /// Registers the shipped configs that are not already present.
    pub fn ensure_shipped(&self) -> Result<()> {
        for cfg in shipped_workflows() {
            if self.get(&cfg.id).is_err() {
                self.register(cfg)?;
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Arc<WorkflowConfig>> {
        self.configs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| WorkflowError::UnknownWorkflow(id.to_string()))
    }

    pub fn list(&self) -> Vec<Arc<WorkflowConfig>> {
        self.configs.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect()
    }
}
