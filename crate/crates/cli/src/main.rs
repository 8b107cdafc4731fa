mod reference;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use zkmlops_bench::{parse_models, render_table, run_bench_with_progress, Backend, BenchConfig, Format};
use zkmlops_core::selection::{KnowledgeBase, LifecyclePhase, ModelCategory};
use zkmlops_core::workflow::WorkflowConfig;
use zkmlops_core::Services;

#[derive(Parser)]
#[command(name = "zkmlops", version, about = "Zero-knowledge audits for machine-learning models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the REST API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value = "zkmlops-data")]
        data_dir: PathBuf,
    },
    /// Benchmark prove/verify cycles.
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Reference prover tools, usable as an external-script backend.
    #[command(name = "ref")]
    Reference {
        #[command(subcommand)]
        command: reference::RefCommand,
    },
    /// Rank candidate proof systems for a lifecycle phase and model category.
    Recommend {
        #[arg(long)]
        phase: String,
        #[arg(long)]
        category: String,
    },
    /// Workflow configuration tools.
    Workflow {
        #[command(subcommand)]
        command: WorkflowCommand,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    Run(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// `reference` or `workflow:<config.json>`.
    #[arg(long, default_value = "reference")]
    backend: String,
    /// Comma-separated layer widths, e.g. `16-8-2,64-32-10`.
    #[arg(long, default_value = "16-8-2,64-32-10")]
    models: String,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Parallel repetitions inside each proof.
    #[arg(long, default_value_t = zkref::mpc::DEFAULT_REPETITIONS)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "text")]
    format: Format,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress per-cycle progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum WorkflowCommand {
    /// Check a workflow config and print its steps.
    Validate { path: PathBuf },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve { listen, data_dir } => serve(listen, data_dir),
        Command::Bench {
            command: BenchCommand::Run(args),
        } => bench(args),
        Command::Reference { command } => reference::run(command),
        Command::Recommend { phase, category } => {
            let phase: LifecyclePhase = serde_json::from_value(serde_json::Value::String(phase.clone()))
                .with_context(|| format!("unknown phase {phase:?}"))?;
            let category: ModelCategory = serde_json::from_value(serde_json::Value::String(category.clone()))
                .with_context(|| format!("unknown model category {category:?}"))?;
            let ranked = KnowledgeBase::shipped().recommend(phase, category)?;
            println!("{}", serde_json::to_string_pretty(&ranked)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Workflow {
            command: WorkflowCommand::Validate { path },
        } => {
            let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = WorkflowConfig::from_json(&bytes)?;
            println!("{} ({}): valid", cfg.id, cfg.protocol);
            for s in &cfg.steps {
                println!("  {:<13} {:?} in={:?} out={:?}", s.step_name.as_str(), s.executor, s.inputs, s.outputs);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn serve(listen: SocketAddr, data_dir: PathBuf) -> anyhow::Result<ExitCode> {
    let services = Arc::new(Services::open(&data_dir).with_context(|| format!("opening {}", data_dir.display()))?);
    let app = zkmlops_api::router(services);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await?;
        tracing::info!(addr = %listener.local_addr()?, data_dir = %data_dir.display(), "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let backend = Backend::resolve(&args.backend)?;
    let models = parse_models(&args.models)?;
    let cfg = BenchConfig {
        repetitions: args.reps,
        t: args.t,
        seed: args.seed,
        scratch: None,
    };
    let quiet = args.quiet;
    let results = run_bench_with_progress(&backend, &models, &cfg, |m, rep| {
        if !quiet {
            eprintln!("{} {m}: run {}/{}", backend.name(), rep + 1, cfg.repetitions);
        }
    })?;
    let table = render_table(&results, args.format);
    match args.out {
        Some(path) => std::fs::write(&path, table).with_context(|| format!("writing {}", path.display()))?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&table)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
