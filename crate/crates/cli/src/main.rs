//! `pidp`: run the disclosure pipeline one phase at a time or end to end.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pidp_core::pipeline::{
    verify_manifest, Overrides, Phase, Pipeline, PipelineError, RunConfiguration,
    EXIT_NON_CONVERGENCE,
};

#[derive(Debug, Parser)]
#[command(
    name = "pidp",
    version,
    about = "Disclosure preprocessing, clustering, validation and maturity scoring"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for every random draw.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Filter expression, replacing the configured one.
    #[arg(long, global = true, value_name = "STR")]
    filter: Option<String>,

    /// Output root; the run goes to <DIR>/<config_id>.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Cap on preprocess/cluster/validate iterations.
    #[arg(long, global = true, value_name = "N")]
    max_iterations: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse disclosures and externals into a working set.
    Ingest,
    /// Apply the filter expression.
    Filter,
    /// Mitigate errors and encode the current iteration.
    Preprocess,
    /// Run ClusWiSARD, hierarchical and k-means.
    Cluster,
    /// Compare partitions and choose the next path.
    Validate,
    /// Grounded-theory rounds and case studies.
    Qualitative,
    /// Process indicators, ERM-L and answer quality.
    Maturity,
    /// Write the run summary.
    Report,
    /// Every phase, iterating while the loop drills down.
    RunAll,
    /// Recompute the digests recorded in the run manifest.
    VerifyManifest {
        /// Run directory; defaults to the configured one.
        dir: Option<PathBuf>,
    },
}

impl Command {
    fn phase(&self) -> Option<Phase> {
        Some(match self {
            Command::Ingest => Phase::Ingest,
            Command::Filter => Phase::Filter,
            Command::Preprocess => Phase::Preprocess,
            Command::Cluster => Phase::Cluster,
            Command::Validate => Phase::Validate,
            Command::Qualitative => Phase::Qualitative,
            Command::Maturity => Phase::Maturity,
            Command::Report => Phase::Report,
            _ => return None,
        })
    }
}

fn load_config(cli: &Cli) -> Result<RunConfiguration, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::Config("--config is required".into()))?;
    let mut cfg = RunConfiguration::load(path)?;
    cfg.apply(&Overrides {
        seed: cli.seed,
        filter: cli.filter.clone(),
        output_dir: cli.out.clone(),
        max_iterations: cli.max_iterations,
    });
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode, PipelineError> {
    if let Command::VerifyManifest { dir: Some(dir) } = &cli.command {
        return verify(dir.clone());
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::RunAll => {
            let mut p = Pipeline::new(cfg)?;
            let m = p.run_all()?;
            let outcome = m.outcome.map_or("none".to_string(), |o| o.to_string());
            println!(
                "{}: {} iteration(s), outcome {outcome}, {} file(s)",
                p.run_dir().display(),
                m.iterations.len(),
                m.files.len()
            );
            if !m.converged {
                eprintln!(
                    "error: the iteration loop did not reach a terminal path within max_iterations"
                );
                return Ok(ExitCode::from(EXIT_NON_CONVERGENCE as u8));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyManifest { .. } => verify(cfg.run_dir()),
        cmd => {
            let phase = cmd.phase().expect("phase subcommand");
            let mut p = Pipeline::resume(cfg)?;
            let r = p.run_phase(phase)?;
            let mut out = std::io::stdout().lock();
            for f in &r.files {
                let _ = writeln!(out, "{}", p.run_dir().join(f).display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn verify(dir: PathBuf) -> Result<ExitCode, PipelineError> {
    let r = verify_manifest(&dir)?;
    for f in &r.mismatched {
        eprintln!("mismatch: {f}");
    }
    for f in &r.missing {
        eprintln!("missing: {f}");
    }
    println!(
        "{}: {} file(s) checked, {} mismatched, {} missing",
        dir.display(),
        r.checked,
        r.mismatched.len(),
        r.missing.len()
    );
    Ok(if r.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
