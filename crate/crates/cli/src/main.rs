//! `rmllt`: runs the experiments of the library from a TOML config and writes
//! CSV/JSON artifacts plus a manifest into the output directory.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rmllt::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use commands::Artifacts;
use config::{ExperimentConfig, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "rmllt", version, about = "Robbins-Monro local limit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, Debug)]
enum Command {
    /// Check assumptions A-1 to A-5 on the configured model and schedule.
    Validate,
    /// Terminal values of the renormalized recursion and of the cut-off chain.
    Simulate,
    /// Limit, cut-off and backward-Euler flows.
    Flows,
    /// Coupling probabilities between the renormalized and cut-off chains.
    Couple,
    /// Stroock-Varadhan moments of the one-step kernel.
    Svdiag,
    /// Closed-form limit density against a KDE of the cut-off diffusion.
    Density,
    /// Parametrix series terms and the flowchart report.
    Parametrix,
    /// Rate fits of the two density bounds over the N list.
    Rate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Simulate => "simulate",
            Command::Flows => "flows",
            Command::Couple => "couple",
            Command::Svdiag => "svdiag",
            Command::Density => "density",
            Command::Parametrix => "parametrix",
            Command::Rate => "rate",
        }
    }
}

#[derive(Serialize)]
struct ArtifactEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    schema_version: u32,
    subcommand: &'static str,
    config_name: String,
    config_sha256: String,
    seed: u64,
    versions: Versions,
    artifacts: Vec<ArtifactEntry>,
}

#[derive(Serialize)]
struct Versions {
    rmllt: &'static str,
    rmllt_cli: &'static str,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn run(cli: &Cli) -> Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    // the hash covers the effective config, after overrides
    let canonical = serde_json::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    let config_sha256 = hex(&Sha256::digest(canonical.as_bytes()));

    let mut art = Artifacts::new(&cfg.out)?;
    let outcome = match cli.command {
        Command::Validate => commands::validate(&cfg, &mut art),
        Command::Simulate => commands::simulate(&cfg, &mut art),
        Command::Flows => commands::flows(&cfg, &mut art),
        Command::Couple => commands::couple(&cfg, &mut art),
        Command::Svdiag => commands::svdiag(&cfg, &mut art),
        Command::Density => commands::density(&cfg, &mut art),
        Command::Parametrix => commands::parametrix(&cfg, &mut art),
        Command::Rate => commands::rate(&cfg, &mut art),
    };

    let mut artifacts = Vec::new();
    for f in &art.files {
        let bytes = std::fs::read(f).map_err(commands::io)?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        artifacts.push(ArtifactEntry { path: name, sha256: hex(&Sha256::digest(&bytes)) });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        subcommand: cli.command.name(),
        config_name: cfg.name.clone(),
        config_sha256,
        seed: cfg.seed,
        versions: Versions { rmllt: rmllt::VERSION, rmllt_cli: env!("CARGO_PKG_VERSION") },
        artifacts,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(cfg.out.join(format!("manifest_{}.json", cli.command.name())), text + "\n").map_err(commands::io)?;
    outcome
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
