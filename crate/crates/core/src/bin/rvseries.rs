use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rvseries::harness::{self, ExperimentConfig, RunError};

/// Simulate regularly varying series and check their tail behaviour.
#[derive(Parser)]
#[command(name = "rvseries", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct RunFlags {
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the series panel of a config and write it.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Run the full pipeline for a config file or a preset name.
    Verify {
        target: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// List the presets.
    Presets,
    /// Print the summary of a finished run.
    Report {
        dir: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(target: &str) -> Result<ExperimentConfig, Failure> {
    let path = Path::new(target);
    let parsed = if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{target}: {e}")))?;
        harness::parse_config(&text)
    } else {
        harness::preset(target)
    };
    parsed.map_err(|e| Failure::Usage(e.to_string()))
}

fn apply(mut config: ExperimentConfig, flags: &RunFlags) -> Result<ExperimentConfig, Failure> {
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    if let Some(workers) = flags.workers {
        if workers == 0 {
            return Err(Failure::Usage("--workers must be at least 1".into()));
        }
        config.workers = workers;
    }
    if let Some(out) = &flags.out {
        config.out = Some(out.clone());
    }
    Ok(config)
}

fn simulate(path: &Path, flags: &RunFlags) -> Result<(), Failure> {
    let config = apply(load(&path.to_string_lossy())?, flags)?;
    if config.series_spec().ok().flatten().is_none() {
        return Err(Failure::Usage("simulate needs a series-mode config".into()));
    }
    let panel = harness::simulate_panel(&config)?;
    let (file, bytes) = match flags.format.unwrap_or(Format::Csv) {
        Format::Csv => ("panel.csv", panel.to_csv().into_bytes()),
        Format::Json => (
            "panel.json",
            serde_json::to_vec_pretty(&panel.entries).expect("panel serializes"),
        ),
    };
    let dir = harness::output_dir(&config);
    harness::publish(&dir, &[(file.to_string(), bytes)].into_iter().collect())?;
    println!("{} replicates, {} truncation failures", panel.len(), panel.failures());
    println!("wrote {}", dir.join(file).display());
    Ok(())
}

fn verify(target: &str, flags: &RunFlags) -> Result<(), Failure> {
    let config = apply(load(target)?, flags)?;
    let out = harness::run_experiment(&config)?;
    match flags.format {
        Some(Format::Json) => println!(
            "{}",
            serde_json::to_string_pretty(&out.report).expect("report serializes")
        ),
        Some(Format::Csv) => {
            println!("file,sha256");
            for (file, sum) in &out.manifest.checksums {
                println!("{file},{sum}");
            }
        }
        None => {
            let value = serde_json::to_value(&out.report).expect("report serializes");
            print!("{}", harness::summarize(&value));
        }
    }
    println!("wrote {}", out.dir.display());
    Ok(())
}

fn report(dir: &Path, format: Option<Format>) -> Result<(), Failure> {
    let path = dir.join(harness::REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    match format {
        Some(Format::Json) => println!("{text}"),
        Some(Format::Csv) => {
            let curve = fs::read_to_string(dir.join("tail_curve.csv")).unwrap_or_default();
            print!("{curve}");
        }
        None => print!("{}", harness::summarize(&value)),
    }
    if dir.join(harness::MANIFEST_FILE).exists() {
        let bad = harness::verify_checksums(dir)?;
        if !bad.is_empty() {
            return Err(Failure::Runtime(format!("checksum mismatch: {}", bad.join(", "))));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate { config, flags } => simulate(config, flags),
        Command::Verify { target, flags } => verify(target, flags),
        Command::Presets => {
            for name in harness::preset_names() {
                println!("{name}");
            }
            Ok(())
        }
        Command::Report { dir, format } => report(dir, *format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
