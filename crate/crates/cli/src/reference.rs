//! File-in, file-out wrappers around the reference prover. The verify
//! command follows the external adapter's exit-code contract: 0 accepts,
//! 10 rejects.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Subcommand;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use zkmlops_core::gateway::{VerificationReport, REJECT_EXIT_CODE};
use zkref::fnn::{parse_input, parse_output};
use zkref::{Proof, ProvingKey, QuantizedFnn, SetupParams, VerificationKey, ZkError};

#[derive(Subcommand)]
pub enum RefCommand {
    /// Derive proving and verification keys for a model.
    Setup {
        #[arg(long)]
        model: PathBuf,
        /// JSON such as `{"repetitions": 64}`; defaults apply when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        proving_key: PathBuf,
        #[arg(long)]
        verification_key: PathBuf,
    },
    /// Run the model on an input and prove the result.
    Prove {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        proving_key: PathBuf,
        #[arg(long)]
        proof: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Check a proof. Exits 0 if accepted and 10 if rejected.
    Verify {
        #[arg(long)]
        verification_key: PathBuf,
        #[arg(long)]
        proof: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a model with random 8-bit parameters, and optionally an input.
    RandomModel {
        /// Layer widths, e.g. `16-8-2`.
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        input_out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cmd: RefCommand) -> anyhow::Result<ExitCode> {
    match cmd {
        RefCommand::Setup {
            model,
            params,
            proving_key,
            verification_key,
        } => {
            let model = QuantizedFnn::from_json(&read(&model)?)?;
            let params = match params {
                Some(p) => SetupParams::from_json(&read(&p)?)?,
                None => SetupParams::default(),
            };
            let (pk, vk) = zkref::setup(&model, params)?;
            write(&proving_key, &pk.to_bytes())?;
            write(&verification_key, &vk.to_bytes())?;
        }
        RefCommand::Prove {
            model,
            input,
            proving_key,
            proof,
            output,
        } => {
            let model = QuantizedFnn::from_json(&read(&model)?)?;
            let x = parse_input(&read(&input)?)?;
            let pk = ProvingKey::from_bytes(&read(&proving_key)?)?;
            let run = pk.prove(&model, &x, rand::rng().random())?;
            write(&proof, &run.proof.to_bytes())?;
            write(&output, &serde_json::to_vec(&run.outputs)?)?;
        }
        RefCommand::Verify {
            verification_key,
            proof,
            input,
            output,
            report,
        } => {
            let vk = VerificationKey::from_bytes(&read(&verification_key)?)?;
            let x = parse_input(&read(&input)?)?;
            let y = parse_output(&read(&output)?)?;
            let (accepted, detail) = match Proof::from_bytes(&read(&proof)?).and_then(|p| vk.verify(&x, &y, &p)) {
                Ok(v) => (v.accepted, v.detail),
                Err(ZkError::MalformedProof(m)) => (false, format!("malformed proof: {m}")),
                Err(e) => return Err(e.into()),
            };
            println!("{detail}");
            if let Some(path) = report {
                let r = VerificationReport {
                    accepted,
                    detail,
                    repetitions: vk.params.repetitions,
                };
                write(&path, &serde_json::to_vec_pretty(&r)?)?;
            }
            if !accepted {
                return Ok(ExitCode::from(REJECT_EXIT_CODE as u8));
            }
        }
        RefCommand::RandomModel {
            dims,
            seed,
            out,
            input_out,
        } => {
            let dims = dims
                .split('-')
                .map(|d| d.parse::<usize>().with_context(|| format!("bad width {d:?}")))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let model = QuantizedFnn::random(&dims, &mut rng)?;
            write(&out, &model.to_json())?;
            if let Some(path) = input_out {
                let x: Vec<i8> = (0..dims[0]).map(|_| rng.random()).collect();
                write(&path, &serde_json::to_vec(&x)?)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
