//! Command-line front end: configuration, orchestration, caching and CSV
//! output for the laboratory in `sprlab-core`.

pub mod commands;
pub mod config;
pub mod manifest;

use clap::{Parser, Subcommand};
use commands::{resolve_out, Command, Run};
use config::ExperimentConfig;
use manifest::{default_tolerances, ErrorRecord, RunManifest};
use sha2::{Digest, Sha256};
use sprlab_core::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "spr-lab",
    version,
    about = "Critical exponents, entropy at infinity and metric perturbations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Cap on enumerated orbit points, overriding `enumeration.word_cap`.
    #[arg(long, global = true, value_name = "WORDS")]
    pub budget: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Orbit cache file, reused when it covers the requested radius.
    #[arg(long, global = true, value_name = "PATH")]
    pub cache: Option<PathBuf>,
    /// Seed for sampled vectors and shadows.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Validate the group and print generator displacements.
    GroupValidate { config: PathBuf },
    /// Critical exponent by orbit counting.
    Exponent { config: PathBuf },
    /// Entropy-at-infinity ladder and SPR verdict.
    Spr { config: PathBuf },
    /// Geodesic stretch of sampled vectors for each eps.
    Stretch { config: PathBuf },
    /// Primitive length spectrum, perturbed lengths and band averages.
    Lengths { config: PathBuf },
    /// Shadow-lemma ratios of the Patterson measure.
    Shadows { config: PathBuf },
    /// Entropy derivative along the eps ladder.
    Derivative { config: PathBuf },
}

impl CliCommand {
    fn split(&self) -> (Command, &Path) {
        match self {
            CliCommand::GroupValidate { config } => (Command::GroupValidate, config),
            CliCommand::Exponent { config } => (Command::Exponent, config),
            CliCommand::Spr { config } => (Command::Spr, config),
            CliCommand::Stretch { config } => (Command::Stretch, config),
            CliCommand::Lengths { config } => (Command::Lengths, config),
            CliCommand::Shadows { config } => (Command::Shadows, config),
            CliCommand::Derivative { config } => (Command::Derivative, config),
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

fn prepare(cli: &Cli, command: Command, path: &Path) -> Result<Run> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(b) = cli.budget {
        config.enumeration.word_cap = b;
    }
    if let Some(s) = cli.seed {
        config.run.seed = s;
    }
    if let Some(t) = cli.threads {
        config.run.threads = Some(t);
    }
    config.validate()?;
    let out_dir = resolve_out(cli.out.as_deref(), &config);
    config.run.out = Some(out_dir.display().to_string());
    if let Some(t) = config.run.threads {
        // a second initialization in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let group = config.group.build()?;
    let config_hash = hex::encode(Sha256::digest(json(&config).as_bytes()));
    let manifest = RunManifest {
        tool: "spr-lab",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name().into(),
        config_path: path.display().to_string(),
        config_hash,
        group_hash: group.content_hash(),
        seed: config.run.seed,
        threads: rayon::current_num_threads(),
        stages: Vec::new(),
        cache: Vec::new(),
        outputs: Vec::new(),
        tolerances: default_tolerances(),
    };
    Ok(Run {
        config,
        group,
        out_dir,
        cache: cli.cache.clone(),
        manifest,
    })
}

fn execute(cli: &Cli, command: Command, path: &Path) -> Result<(Run, String)> {
    let mut run = prepare(cli, command, path)?;
    let text = run.execute(command)?;
    run.manifest.outputs.push("manifest.json".into());
    std::fs::write(run.out_dir.join("manifest.json"), json(&run.manifest) + "\n")?;
    Ok((run, text))
}

/// Runs one command and returns the process exit status.
pub fn run(cli: &Cli) -> i32 {
    let (command, path) = cli.command.split();
    match execute(cli, command, path) {
        Ok((_, text)) => {
            print!("{text}");
            0
        }
        Err(e) => report_error(cli, command, path, &e),
    }
}

/// Writes `error.json` where the outputs would have gone, when possible,
/// and prints the same record on stderr.
fn report_error(cli: &Cli, command: Command, path: &Path, e: &Error) -> i32 {
    let record = ErrorRecord::new(command.name(), e);
    let body = json(&record);
    let out = cli
        .out
        .clone()
        .or_else(|| ExperimentConfig::load(path).ok().map(|c| resolve_out(None, &c)));
    if let Some(dir) = out {
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), body.clone() + "\n");
        }
    }
    eprintln!("{body}");
    record.exit_code
}
