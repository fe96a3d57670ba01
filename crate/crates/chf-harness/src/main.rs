//! Command-line front end for the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use chf_harness::criteria;
use chf_harness::experiments;
use chf_harness::spec::{ExperimentResult, ExperimentSpec};

#[derive(Parser)]
#[command(name = "chf", about = "Run registered chf experiments and report verdicts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and print its verdicts.
    Run {
        /// Registered experiment name (see `list`).
        name: String,
        /// Seed for the run's random streams.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output directory; defaults to ./runs/<name>-seed<seed>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a parameter, `--param key=value`, repeatable. Values
        /// parse as JSON, falling back to a plain string.
        #[arg(long = "param", value_name = "KEY=VALUE")]
        params: Vec<String>,
    },
    /// List registered experiments and acceptance criteria.
    List,
    /// Check a JSON spec file without running it.
    Validate {
        /// Path to an experiment spec (JSON).
        path: PathBuf,
    },
}

fn parse_param(raw: &str) -> Result<(String, serde_json::Value)> {
    let Some((key, value)) = raw.split_once('=') else {
        bail!("--param needs key=value, got {raw:?}");
    };
    if key.is_empty() {
        bail!("--param needs a nonempty key, got {raw:?}");
    }
    let parsed = serde_json::from_str(value)
        .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    Ok((key.to_string(), parsed))
}

fn print_verdicts(result: &ExperimentResult) {
    for verdict in &result.verdicts {
        let mark = if verdict.passed { "PASS" } else { "FAIL" };
        println!("{mark} {}: {}", verdict.criterion, verdict.detail);
    }
    for file in &result.series_files {
        println!("series: {}", file.display());
    }
}

fn run(name: String, seed: u64, out: Option<PathBuf>, params: Vec<String>) -> Result<ExitCode> {
    let output_dir =
        out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{name}-seed{seed}")));
    let mut spec = ExperimentSpec::new(&name, seed, output_dir);
    for raw in &params {
        let (key, value) = parse_param(raw)?;
        spec.params.insert(key, value);
    }
    let result = experiments::run(&spec).with_context(|| format!("running {name}"))?;
    print_verdicts(&result);
    println!(
        "summary: {}",
        spec.output_dir.join("summary.json").display()
    );
    Ok(if result.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn list() {
    println!("experiments:");
    for name in experiments::names() {
        let about = experiments::about(name).unwrap_or("");
        let params = experiments::allowed_params(name).unwrap_or(&[]);
        println!("  {name}: {about}");
        if !params.is_empty() {
            println!("    params: {}", params.join(", "));
        }
    }
    println!("acceptance criteria:");
    for criterion in criteria::acceptance() {
        println!(
            "  {:2}. {} ({}): {}",
            criterion.number, criterion.id, criterion.experiment, criterion.description
        );
    }
}

fn validate(path: PathBuf) -> Result<()> {
    let spec = ExperimentSpec::load(&path)?;
    experiments::validate(&spec)?;
    println!(
        "ok: {} (seed {}, {} parameter(s))",
        spec.name,
        spec.seed,
        spec.params.len()
    );
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { name, seed, out, params } => run(name, seed, out, params),
        Command::List => {
            list();
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { path } => {
            validate(path)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
