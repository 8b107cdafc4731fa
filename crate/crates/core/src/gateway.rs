//! Uniform four-step backend interface with two adapters: external
//! processes driven by command templates, and the built-in reference
//! backend.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{mpsc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use zkref::fnn::{parse_input, parse_output};
use zkref::{Proof, ProvingKey, QuantizedFnn, SetupParams, VerificationKey, ZkError};

use crate::workflow::{parse_placeholder, placeholder_regex, ExecutorKind, Placeholder, StepName, StepSpec, WorkflowConfig};

/// Exit status an external verify script uses to reject.
pub const REJECT_EXIT_CODE: i32 = 10;
pub const SCRATCH_ENV: &str = "ZKMLOPS_SCRATCH";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendVerdict {
    pub accepted: bool,
    pub detail: String,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("step {step} timed out after {seconds} s")]
    Timeout { step: StepName, seconds: u64 },
    #[error("step {step} exited with status {code:?}: {stderr}")]
    NonZeroExit { step: StepName, code: Option<i32>, stderr: String },
    #[error("step {step} did not produce {kind:?}")]
    MissingOutput { step: StepName, kind: String },
    #[error("missing input {kind:?} for step {step}")]
    MissingInput { step: StepName, kind: String },
    #[error("unknown step {0:?}")]
    UnknownStep(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("reference backend: {0}")]
    Reference(#[from] ZkError),
    #[error("gateway I/O: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, GatewayError>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub produced: BTreeMap<String, Vec<u8>>,
    pub verdict: Option<BackendVerdict>,
}

/// Counting semaphore bounding concurrent external processes.
#[derive(Debug)]
struct ProcessPool {
    free: Mutex<usize>,
    cv: Condvar,
}

struct PoolPermit<'a>(&'a ProcessPool);

impl ProcessPool {
    fn new(size: usize) -> Self {
        ProcessPool {
            free: Mutex::new(size.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PoolPermit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PoolPermit(self)
    }
}

impl Drop for PoolPermit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct Gateway {
    scratch_root: PathBuf,
    pool: ProcessPool,
}

/// Inputs copied into a step's scratch directory.
#[derive(Debug)]
pub struct Materialized {
    pub scratch: PathBuf,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
}

impl Gateway {
    /// `default_scratch` is used unless `ZKMLOPS_SCRATCH` is set.
    pub fn new(default_scratch: impl Into<PathBuf>, max_processes: usize) -> io::Result<Self> {
        let scratch_root = std::env::var_os(SCRATCH_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| default_scratch.into());
        fs::create_dir_all(&scratch_root)?;
        Ok(Gateway {
            scratch_root,
            pool: ProcessPool::new(max_processes),
        })
    }

    pub fn scratch_root(&self) -> &Path {
        &self.scratch_root
    }

    pub fn execute_step(
        &self,
        config: &WorkflowConfig,
        step_name: &str,
        inputs: &BTreeMap<String, Vec<u8>>,
    ) -> Result<StepOutcome> {
        let name: StepName = step_name
            .parse()
            .map_err(|_| GatewayError::UnknownStep(step_name.to_string()))?;
        let step = config.step(name);
        if let Some(kind) = step.inputs.iter().find(|k| !inputs.contains_key(*k)) {
            return Err(GatewayError::MissingInput {
                step: name,
                kind: kind.clone(),
            });
        }
        let outcome = match step.executor {
            ExecutorKind::ReferenceBackend => run_reference_with_timeout(step, inputs)?,
            ExecutorKind::ExternalScript => self.run_external(step, inputs)?,
        };
        if let Some(kind) = step.outputs.iter().find(|k| !outcome.produced.contains_key(*k)) {
            return Err(GatewayError::MissingOutput {
                step: name,
                kind: kind.clone(),
            });
        }
        Ok(outcome)
    }

    /// Creates a fresh scratch directory and copies the step's inputs in.
    pub fn materialize(&self, step: &StepSpec, inputs: &BTreeMap<String, Vec<u8>>) -> Result<Materialized> {
        let scratch = tempfile::Builder::new()
            .prefix(&format!("{}-", step.step_name))
            .tempdir_in(&self.scratch_root)?
            .keep();
        fs::create_dir(scratch.join("in"))?;
        fs::create_dir(scratch.join("out"))?;
        let mut in_paths = BTreeMap::new();
        for kind in &step.inputs {
            let path = scratch.join("in").join(kind);
            fs::write(&path, &inputs[kind])?;
            in_paths.insert(kind.clone(), path);
        }
        let out_paths = step
            .outputs
            .iter()
            .map(|k| (k.clone(), scratch.join("out").join(k)))
            .collect();
        Ok(Materialized {
            scratch,
            inputs: in_paths,
            outputs: out_paths,
        })
    }

    fn run_external(&self, step: &StepSpec, inputs: &BTreeMap<String, Vec<u8>>) -> Result<StepOutcome> {
        let template = step
            .command_template
            .as_deref()
            .ok_or_else(|| GatewayError::SchemaError(format!("{}: no command_template", step.step_name)))?;
        let m = self.materialize(step, inputs)?;
        let result = self.run_in_scratch(step, template, &m);
        match &result {
            Ok(_) => {
                let _ = fs::remove_dir_all(&m.scratch);
            }
            Err(e) => tracing::warn!(scratch = %m.scratch.display(), error = %e, "step failed; scratch kept"),
        }
        result
    }

    fn run_in_scratch(&self, step: &StepSpec, template: &str, m: &Materialized) -> Result<StepOutcome> {
        let command = substitute(template, m)?;
        let stdout_path = m.scratch.join("stdout.log");
        let stderr_path = m.scratch.join("stderr.log");
        let _permit = self.pool.acquire();
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .current_dir(&m.scratch)
            .env(SCRATCH_ENV, &m.scratch)
            .stdin(Stdio::null())
            .stdout(fs::File::create(&stdout_path)?)
            .stderr(fs::File::create(&stderr_path)?)
            .spawn()?;
        let deadline = Instant::now() + Duration::from_secs(step.timeout_seconds);
        let mut poll = Duration::from_millis(1);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(GatewayError::Timeout {
                    step: step.step_name,
                    seconds: step.timeout_seconds,
                });
            }
            std::thread::sleep(poll);
            poll = (poll * 2).min(Duration::from_millis(25));
        };
        let tail = |p: &Path| {
            let text = fs::read_to_string(p).unwrap_or_default();
            let text = text.trim();
            let start = text.len().saturating_sub(2000);
            let start = (start..text.len()).find(|&i| text.is_char_boundary(i)).unwrap_or(text.len());
            text[start..].to_string()
        };
        let is_verify = step.step_name == StepName::Verify;
        let verdict = match status.code() {
            Some(0) => is_verify.then(|| BackendVerdict {
                accepted: true,
                detail: non_empty(tail(&stdout_path), "script accepted (exit 0)"),
            }),
            Some(REJECT_EXIT_CODE) if is_verify => Some(BackendVerdict {
                accepted: false,
                detail: non_empty(tail(&stdout_path), "script rejected (exit 10)"),
            }),
            code => {
                return Err(GatewayError::NonZeroExit {
                    step: step.step_name,
                    code,
                    stderr: tail(&stderr_path),
                })
            }
        };
        let mut produced = BTreeMap::new();
        for (kind, path) in &m.outputs {
            match fs::read(path) {
                Ok(bytes) => {
                    produced.insert(kind.clone(), bytes);
                }
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    return Err(GatewayError::MissingOutput {
                        step: step.step_name,
                        kind: kind.clone(),
                    })
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(StepOutcome { produced, verdict })
    }
}

fn non_empty(s: String, fallback: &str) -> String {
    if s.is_empty() {
        fallback.to_string()
    } else {
        s
    }
}

/// Replaces every placeholder; any token that cannot be resolved is a
/// schema error and nothing runs.
pub fn substitute(template: &str, m: &Materialized) -> Result<String> {
    let mut unresolved = None;
    let out = placeholder_regex().replace_all(template, |cap: &regex::Captures| {
        let path = match parse_placeholder(&cap[1]) {
            Some(Placeholder::Scratch) => Some(&m.scratch),
            Some(Placeholder::Input(k)) => m.inputs.get(&k),
            Some(Placeholder::Output(k)) => m.outputs.get(&k),
            None => None,
        };
        match path {
            Some(p) => p.display().to_string(),
            None => {
                unresolved.get_or_insert_with(|| cap[0].to_string());
                String::new()
            }
        }
    });
    match unresolved {
        Some(token) => Err(GatewayError::SchemaError(format!("unresolved placeholder {token}"))),
        None => Ok(out.into_owned()),
    }
}

/// Runs the reference step on a worker thread so the configured timeout
/// holds; a step that overruns is abandoned and its result discarded.
fn run_reference_with_timeout(step: &StepSpec, inputs: &BTreeMap<String, Vec<u8>>) -> Result<StepOutcome> {
    let (tx, rx) = mpsc::channel();
    let name = step.step_name;
    let owned = inputs.clone();
    std::thread::Builder::new()
        .name(format!("reference-{name}"))
        .spawn(move || {
            let _ = tx.send(run_reference(name, &owned));
        })?;
    match rx.recv_timeout(Duration::from_secs(step.timeout_seconds)) {
        Ok(result) => result,
        Err(mpsc::RecvTimeoutError::Timeout) => Err(GatewayError::Timeout {
            step: name,
            seconds: step.timeout_seconds,
        }),
        Err(mpsc::RecvTimeoutError::Disconnected) => Err(GatewayError::Io(io::Error::other("reference step panicked"))),
    }
}

#[derive(Serialize, Deserialize)]
pub struct VerificationReport {
    pub accepted: bool,
    pub detail: String,
    pub repetitions: usize,
}

pub fn run_reference(step: StepName, inputs: &BTreeMap<String, Vec<u8>>) -> Result<StepOutcome> {
    let get = |kind: &str| -> Result<&[u8]> {
        inputs.get(kind).map(Vec::as_slice).ok_or_else(|| GatewayError::MissingInput {
            step,
            kind: kind.to_string(),
        })
    };
    let mut produced = BTreeMap::new();
    let mut verdict = None;
    match step {
        StepName::Setup => {
            let model = QuantizedFnn::from_json(get("model")?)?;
            let params = match inputs.get("setup-params") {
                Some(bytes) => SetupParams::from_json(bytes)?,
                None => SetupParams::default(),
            };
            let (pk, vk) = zkref::setup(&model, params)?;
            produced.insert("proving-key".into(), pk.to_bytes());
            produced.insert("prover-verification-key".into(), vk.to_bytes());
        }
        StepName::KeyExchange => {
            let vk = get("prover-verification-key")?;
            VerificationKey::from_bytes(vk)?;
            produced.insert("verification-key".into(), vk.to_vec());
        }
        StepName::Prove => {
            let model = QuantizedFnn::from_json(get("model")?)?;
            let input = parse_input(get("model-input")?)?;
            let pk = ProvingKey::from_bytes(get("proving-key")?)?;
            let mut seed = [0u8; 32];
            rand::rng().fill_bytes(&mut seed);
            let run = pk.prove(&model, &input, seed)?;
            produced.insert("proof".into(), run.proof.to_bytes());
            produced.insert(
                "model-output".into(),
                serde_json::to_vec(&run.outputs).expect("outputs serialize"),
            );
        }
        StepName::Verify => {
            let vk = VerificationKey::from_bytes(get("verification-key")?)?;
            let input = parse_input(get("model-input")?)?;
            let output = parse_output(get("model-output")?)?;
            // A proof that does not even parse is a failed verification,
            // not a broken pipeline.
            let v = match Proof::from_bytes(get("proof")?).and_then(|p| vk.verify(&input, &output, &p)) {
                Ok(v) => BackendVerdict {
                    accepted: v.accepted,
                    detail: v.detail,
                },
                Err(ZkError::MalformedProof(m)) => BackendVerdict {
                    accepted: false,
                    detail: format!("malformed proof: {m}"),
                },
                Err(e) => return Err(e.into()),
            };
            let report = VerificationReport {
                accepted: v.accepted,
                detail: v.detail.clone(),
                repetitions: vk.params.repetitions,
            };
            produced.insert(
                "verification-report".into(),
                serde_json::to_vec_pretty(&report).expect("report serializes"),
            );
            verdict = Some(v);
        }
    }
    Ok(StepOutcome { produced, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::shipped_workflows;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn external(name: StepName, template: &str, inputs: &[&str], outputs: &[&str], timeout: u64) -> StepSpec {
        StepSpec {
            step_name: name,
            executor: ExecutorKind::ExternalScript,
            command_template: Some(template.into()),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            timeout_seconds: timeout,
        }
    }

    fn config_with(step: StepSpec) -> WorkflowConfig {
        let mut cfg = shipped_workflows().remove(0);
        let i = StepName::CANONICAL.iter().position(|n| *n == step.step_name).unwrap();
        cfg.steps[i] = step;
        cfg
    }

    fn gateway() -> (tempfile::TempDir, Gateway) {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::new(dir.path().join("scratch"), 2).unwrap();
        (dir, gw)
    }

    fn inputs(pairs: &[(&str, &[u8])]) -> BTreeMap<String, Vec<u8>> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()
    }

    #[test]
    fn materialized_paths_stay_in_scratch() {
        let (_d, gw) = gateway();
        let step = external(StepName::Prove, "true", &["model", "proving-key"], &["proof"], 5);
        let m = gw.materialize(&step, &inputs(&[("model", b"m"), ("proving-key", b"k")])).unwrap();
        assert!(m.scratch.starts_with(gw.scratch_root()));
        for p in m.inputs.values().chain(m.outputs.values()) {
            assert!(p.starts_with(&m.scratch), "{} escapes scratch", p.display());
        }
        assert_eq!(fs::read(&m.inputs["model"]).unwrap(), b"m");
    }

    #[test]
    fn substitution_is_total() {
        let (_d, gw) = gateway();
        let step = external(StepName::Prove, "x", &["model"], &["proof"], 5);
        let m = gw.materialize(&step, &inputs(&[("model", b"m")])).unwrap();
        let cmd = substitute("cp {in:model} {out:proof} # {scratch}", &m).unwrap();
        assert!(!cmd.contains('{'));
        assert!(matches!(substitute("cat {in:other}", &m), Err(GatewayError::SchemaError(_))));
    }

    #[test]
    fn external_prove_collects_outputs() {
        let (_d, gw) = gateway();
        let step = external(
            StepName::Prove,
            "cat {in:model} {in:model-input} > {out:proof} && echo done > {out:model-output}",
            &["model", "model-input", "proving-key"],
            &["proof", "model-output"],
            5,
        );
        let cfg = config_with(step);
        let out = gw
            .execute_step(&cfg, "prove", &inputs(&[("model", b"M"), ("model-input", b"I"), ("proving-key", b"K")]))
            .unwrap();
        assert_eq!(out.produced["proof"], b"MI");
        assert!(out.verdict.is_none());
    }

    #[test]
    fn verify_exit_codes() {
        let (_d, gw) = gateway();
        for (code, accepted) in [(0, true), (10, false)] {
            let step = external(
                StepName::Verify,
                &format!("echo report > {{out:verification-report}}; exit {code}"),
                &["proof"],
                &["verification-report"],
                5,
            );
            let out = gw.execute_step(&config_with(step), "verify", &inputs(&[("proof", b"p")])).unwrap();
            assert_eq!(out.verdict.unwrap().accepted, accepted);
        }
    }

    #[test]
    fn other_exit_codes_fail() {
        let (_d, gw) = gateway();
        let step = external(StepName::Verify, "echo oops >&2; exit 3", &["proof"], &["verification-report"], 5);
        let err = gw.execute_step(&config_with(step), "verify", &inputs(&[("proof", b"p")])).unwrap_err();
        match err {
            GatewayError::NonZeroExit { code, stderr, .. } => {
                assert_eq!(code, Some(3));
                assert_eq!(stderr, "oops");
            }
            e => panic!("unexpected {e}"),
        }
        // Exit 10 is a verdict only for verify.
        let step = external(StepName::Prove, "exit 10", &["model"], &["proof"], 5);
        let err = gw.execute_step(&config_with(step), "prove", &inputs(&[("model", b"m")])).unwrap_err();
        assert!(matches!(err, GatewayError::NonZeroExit { code: Some(10), .. }));
    }

    #[test]
    fn missing_output_reported_and_scratch_kept() {
        let (_d, gw) = gateway();
        let step = external(StepName::Prove, "true", &["model"], &["proof"], 5);
        let err = gw.execute_step(&config_with(step), "prove", &inputs(&[("model", b"m")])).unwrap_err();
        assert!(matches!(err, GatewayError::MissingOutput { ref kind, .. } if kind == "proof"));
        assert_eq!(fs::read_dir(gw.scratch_root()).unwrap().count(), 1);
    }

    #[test]
    fn scratch_removed_on_success() {
        let (_d, gw) = gateway();
        let step = external(StepName::Prove, "echo x > {out:proof}", &["model"], &["proof"], 5);
        gw.execute_step(&config_with(step), "prove", &inputs(&[("model", b"m")])).unwrap();
        assert_eq!(fs::read_dir(gw.scratch_root()).unwrap().count(), 0);
    }

    #[test]
    fn scratch_env_is_set() {
        let (_d, gw) = gateway();
        let step = external(StepName::Prove, "echo $ZKMLOPS_SCRATCH > {out:proof}", &["model"], &["proof"], 5);
        let out = gw.execute_step(&config_with(step), "prove", &inputs(&[("model", b"m")])).unwrap();
        let reported = String::from_utf8(out.produced["proof"].clone()).unwrap();
        assert!(Path::new(reported.trim()).starts_with(gw.scratch_root()));
    }

    #[test]
    fn timeout_kills_process() {
        let (_d, gw) = gateway();
        let step = external(StepName::Prove, "sleep 5", &["model"], &["proof"], 1);
        let start = Instant::now();
        let err = gw.execute_step(&config_with(step), "prove", &inputs(&[("model", b"m")])).unwrap_err();
        assert!(matches!(err, GatewayError::Timeout { .. }));
        assert!(start.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn unknown_step_and_missing_input() {
        let (_d, gw) = gateway();
        let cfg = shipped_workflows().remove(0);
        assert!(matches!(gw.execute_step(&cfg, "audit", &BTreeMap::new()), Err(GatewayError::UnknownStep(_))));
        assert!(matches!(
            gw.execute_step(&cfg, "setup", &BTreeMap::new()),
            Err(GatewayError::MissingInput { .. })
        ));
    }

    #[test]
    fn reference_steps_round_trip() {
        let (_d, gw) = gateway();
        let cfg = shipped_workflows().remove(0);
        let model = QuantizedFnn::random(&[4, 3, 2], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let model_json = model.to_json();
        let setup = gw
            .execute_step(
                &cfg,
                "setup",
                &inputs(&[("model", &model_json), ("setup-params", br#"{"repetitions": 4}"#)]),
            )
            .unwrap();
        let kx = gw
            .execute_step(
                &cfg,
                "key-exchange",
                &inputs(&[("prover-verification-key", &setup.produced["prover-verification-key"])]),
            )
            .unwrap();
        assert_eq!(kx.produced.len(), 1);
        assert_eq!(kx.produced["verification-key"], setup.produced["prover-verification-key"]);
        let x = b"[1, -2, 3, 4]";
        let prove = gw
            .execute_step(
                &cfg,
                "prove",
                &inputs(&[("model", &model_json), ("model-input", x), ("proving-key", &setup.produced["proving-key"])]),
            )
            .unwrap();
        assert!(prove.verdict.is_none());
        let verify = |output: &[u8], proof: &[u8]| {
            gw.execute_step(
                &cfg,
                "verify",
                &inputs(&[
                    ("verification-key", &kx.produced["verification-key"]),
                    ("proof", proof),
                    ("model-input", x),
                    ("model-output", output),
                ]),
            )
            .unwrap()
            .verdict
            .unwrap()
        };
        let proof = &prove.produced["proof"];
        assert!(verify(&prove.produced["model-output"], proof).accepted);
        let mut y: Vec<i64> = serde_json::from_slice(&prove.produced["model-output"]).unwrap();
        y[1] += 1;
        assert!(!verify(&serde_json::to_vec(&y).unwrap(), proof).accepted);
        assert!(!verify(&prove.produced["model-output"], b"garbage").accepted);
    }
}
