//! Benchmark harness: repeated setup, prove and verify cycles over models of
//! increasing size, summarised as Mean/Max/Min/Std per metric.
//!
//! Only the prove and verify calls are timed. Cycles run one after another
//! so they do not compete for cores.

mod render;
mod stats;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use zkmlops_core::gateway::Gateway;
use zkmlops_core::workflow::{StepName, WorkflowConfig};
use zkref::fnn::{compile_architecture, validate_dims};
use zkref::{QuantizedFnn, SetupParams, ZkError};

pub use render::{render_table, Format};
pub use stats::{stats, Stats};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("no samples")]
    EmptySamples,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("model {model:?} unsupported: {reason}")]
    ModelUnsupported { model: String, reason: String },
    #[error("repetition count must be positive")]
    ZeroRepetitions,
    #[error("{backend} failed on {model}: {detail}")]
    CycleFailed {
        backend: String,
        model: String,
        detail: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ProvingMs,
    VerificationMs,
    ProofBytes,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::ProvingMs, Metric::VerificationMs, Metric::ProofBytes];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ProvingMs => "proving_ms",
            Metric::VerificationMs => "verification_ms",
            Metric::ProofBytes => "proof_bytes",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub backend: String,
    pub model: String,
    pub metric: Metric,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub std: f64,
}

impl BenchResult {
    pub fn new(backend: &str, model: &str, metric: Metric, samples: Vec<f64>) -> Result<Self, BenchError> {
        let s = stats(&samples)?;
        Ok(BenchResult {
            backend: backend.to_string(),
            model: model.to_string(),
            metric,
            samples,
            mean: s.mean,
            max: s.max,
            min: s.min,
            std: s.std,
        })
    }
}

/// Layer widths written `d0-d1-...-dL`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub dims: Vec<usize>,
}

impl ModelSpec {
    pub fn label(&self) -> String {
        self.dims.iter().map(usize::to_string).collect::<Vec<_>>().join("-")
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModelSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unsupported = |reason: String| BenchError::ModelUnsupported {
            model: s.to_string(),
            reason,
        };
        let dims = s
            .split('-')
            .map(|d| d.trim().parse::<usize>().map_err(|e| unsupported(format!("{d:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        validate_dims(&dims).map_err(|e| unsupported(e.to_string()))?;
        Ok(ModelSpec { dims })
    }
}

pub fn parse_models(list: &str) -> Result<Vec<ModelSpec>, BenchError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse()).collect()
}

#[derive(Clone, Debug)]
pub enum Backend {
    /// The built-in MPC-in-the-head prover.
    Reference,
    /// Any workflow config; its steps run through the backend gateway.
    Workflow { name: String, config: Box<WorkflowConfig> },
}

impl Backend {
    /// `reference`, or `workflow:<path to config json>`.
    pub fn resolve(spec: &str) -> Result<Self, BenchError> {
        if spec == "reference" {
            return Ok(Backend::Reference);
        }
        let Some(path) = spec.strip_prefix("workflow:") else {
            return Err(BenchError::BackendUnavailable(format!(
                "{spec:?}: expected \"reference\" or \"workflow:<config.json>\""
            )));
        };
        Self::from_workflow_file(Path::new(path))
    }

    pub fn from_workflow_file(path: &Path) -> Result<Self, BenchError> {
        let bytes = std::fs::read(path)
            .map_err(|e| BenchError::BackendUnavailable(format!("{}: {e}", path.display())))?;
        let config = WorkflowConfig::from_json(&bytes)
            .map_err(|e| BenchError::BackendUnavailable(format!("{}: {e}", path.display())))?;
        Ok(Backend::Workflow {
            name: config.id.clone(),
            config: Box::new(config),
        })
    }

    pub fn name(&self) -> &str {
        match self {
            Backend::Reference => "reference",
            Backend::Workflow { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub repetitions: usize,
    /// MPC-in-the-head repetitions per proof.
    pub t: usize,
    pub seed: u64,
    /// Scratch root for workflow backends; a temporary directory if unset.
    pub scratch: Option<PathBuf>,
}

struct Cycle {
    proving_ms: f64,
    verification_ms: f64,
    proof_bytes: usize,
}

fn model_rng(seed: u64, model_index: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(model_index as u64);
    rng
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn reference_cycle(model: &QuantizedFnn, input: &[i8], t: usize, seed: [u8; 32]) -> Result<Cycle, ZkError> {
    let (pk, vk) = zkref::setup(
        model,
        SetupParams {
            repetitions: t,
            ..SetupParams::default()
        },
    )?;
    let start = Instant::now();
    let proved = pk.prove(model, input, seed)?;
    let proving_ms = ms(start);
    let start = Instant::now();
    let verdict = vk.verify(input, &proved.outputs, &proved.proof)?;
    let verification_ms = ms(start);
    if !verdict.accepted {
        return Err(ZkError::MalformedProof(format!("honest proof rejected: {}", verdict.detail)));
    }
    Ok(Cycle {
        proving_ms,
        verification_ms,
        proof_bytes: proved.proof.to_bytes().len(),
    })
}

fn workflow_cycle(
    gateway: &Gateway,
    config: &WorkflowConfig,
    model: &QuantizedFnn,
    input: &[i8],
    t: usize,
) -> Result<Cycle, String> {
    let mut artifacts: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    artifacts.insert("model".into(), model.to_json());
    artifacts.insert("model-input".into(), serde_json::to_vec(input).expect("input serializes"));
    artifacts.insert("setup-params".into(), format!("{{\"repetitions\": {t}}}").into_bytes());
    let mut proving_ms = 0.0;
    let mut verification_ms = 0.0;
    for step in StepName::CANONICAL {
        let spec = config.step(step);
        let inputs = spec
            .inputs
            .iter()
            .map(|k| {
                artifacts
                    .get(k)
                    .map(|b| (k.clone(), b.clone()))
                    .ok_or_else(|| format!("{step} needs {k:?}, which the harness does not supply"))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        let start = Instant::now();
        let outcome = gateway.execute_step(config, step.as_str(), &inputs).map_err(|e| e.to_string())?;
        match step {
            StepName::Prove => proving_ms = ms(start),
            StepName::Verify => verification_ms = ms(start),
            _ => {}
        }
        if let Some(v) = &outcome.verdict {
            if !v.accepted {
                return Err(format!("honest run rejected: {}", v.detail));
            }
        }
        artifacts.extend(outcome.produced);
    }
    let proof_bytes = artifacts
        .get("proof")
        .map(Vec::len)
        .ok_or("workflow produced no \"proof\" artifact")?;
    Ok(Cycle {
        proving_ms,
        verification_ms,
        proof_bytes,
    })
}

/// Runs `cfg.repetitions` fresh cycles per model, each with newly drawn
/// weights, input and prover randomness. Returns three results per model.
pub fn run_bench(backend: &Backend, models: &[ModelSpec], cfg: &BenchConfig) -> Result<Vec<BenchResult>, BenchError> {
    run_bench_with_progress(backend, models, cfg, |_, _| {})
}

/// As [`run_bench`], calling `progress(model, repetition)` after each cycle.
pub fn run_bench_with_progress(
    backend: &Backend,
    models: &[ModelSpec],
    cfg: &BenchConfig,
    mut progress: impl FnMut(&ModelSpec, usize),
) -> Result<Vec<BenchResult>, BenchError> {
    if cfg.repetitions == 0 || cfg.t == 0 {
        return Err(BenchError::ZeroRepetitions);
    }
    let mut scratch_guard = None;
    let gateway = match backend {
        Backend::Reference => {
            for m in models {
                compile_architecture(&m.dims, true).map_err(|e| BenchError::ModelUnsupported {
                    model: m.label(),
                    reason: e.to_string(),
                })?;
            }
            None
        }
        Backend::Workflow { .. } => {
            let root = match &cfg.scratch {
                Some(p) => p.clone(),
                None => {
                    let dir = tempfile::tempdir().map_err(|e| BenchError::BackendUnavailable(e.to_string()))?;
                    let path = dir.path().to_path_buf();
                    scratch_guard = Some(dir);
                    path
                }
            };
            Some(Gateway::new(root, 1).map_err(|e| BenchError::BackendUnavailable(e.to_string()))?)
        }
    };

    let mut results = Vec::with_capacity(models.len() * 3);
    for (index, spec) in models.iter().enumerate() {
        let mut rng = model_rng(cfg.seed, index);
        let mut proving = Vec::with_capacity(cfg.repetitions);
        let mut verification = Vec::with_capacity(cfg.repetitions);
        let mut sizes = Vec::with_capacity(cfg.repetitions);
        for rep in 0..cfg.repetitions {
            let model = QuantizedFnn::random(&spec.dims, &mut rng).map_err(|e| BenchError::ModelUnsupported {
                model: spec.label(),
                reason: e.to_string(),
            })?;
            let input: Vec<i8> = (0..spec.dims[0]).map(|_| rng.random()).collect();
            let seed: [u8; 32] = rng.random();
            let cycle = match (backend, &gateway) {
                (Backend::Workflow { config, .. }, Some(gw)) => workflow_cycle(gw, config, &model, &input, cfg.t),
                _ => reference_cycle(&model, &input, cfg.t, seed).map_err(|e| e.to_string()),
            }
            .map_err(|detail| BenchError::CycleFailed {
                backend: backend.name().to_string(),
                model: spec.label(),
                detail,
            })?;
            proving.push(cycle.proving_ms);
            verification.push(cycle.verification_ms);
            sizes.push(cycle.proof_bytes as f64);
            progress(spec, rep);
        }
        let label = spec.label();
        results.push(BenchResult::new(backend.name(), &label, Metric::ProvingMs, proving)?);
        results.push(BenchResult::new(backend.name(), &label, Metric::VerificationMs, verification)?);
        results.push(BenchResult::new(backend.name(), &label, Metric::ProofBytes, sizes)?);
    }
    drop(scratch_guard);
    Ok(results)
}
