//! `fieldsense`: run the sensor-placement pipeline whole or stage by stage.
//!
//! Every stage reads its inputs from and writes its outputs to the output
//! directory, so `gen`, `entropy`, `place`, `train`, `baseline`, `eval` and
//! `report` in sequence produce the same artifacts as `run`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fieldsense::pipeline::stages;
use fieldsense::pipeline::{run_pipeline, run_stage, verify_dir, Method, RunConfig};
use fieldsense::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fieldsense", version, about = "Entropy-initialized sensor placement for gridded fields")]
struct Cli {
    /// key = value run configuration; defaults apply to unset keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Global seed (overrides `seed`).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Initial sensor count k0 (overrides `sensors`).
    #[arg(long, global = true, value_name = "K")]
    sensors: Option<usize>,
    /// Patch side L' the entropy refers to (overrides `entropy.scale`).
    #[arg(long, global = true, value_name = "L")]
    scale: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic data set (or copy `input`) into the output directory.
    Gen,
    /// Estimate the entropy map of the training years.
    Entropy,
    /// Build the sensor prior and the initial mask.
    Place,
    /// Train a mask-and-decoder reconstruction.
    Train {
        #[arg(long, default_value = "st-mask", value_parser = parse_method)]
        method: Method,
    },
    /// Fit a baseline reconstruction.
    Baseline {
        #[arg(long, value_parser = parse_method)]
        method: Method,
    },
    /// Evaluate one fitted method on the test years.
    Eval {
        #[arg(long, value_parser = parse_method)]
        method: Method,
    },
    /// Assemble report.txt and report.csv from the evaluated methods.
    Report,
    /// Run every stage.
    Run,
    /// Check artifacts against the MANIFEST checksums.
    Verify,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.sensors {
        cfg.sensors = k;
    }
    if let Some(l) = cli.scale {
        cfg.entropy.scale = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    let dir = cfg.out_dir.as_path();
    match &cli.command {
        Command::Gen => {
            run_stage(dir, "gen", || stages::gen(&cfg, dir))?;
        }
        Command::Entropy => {
            run_stage(dir, "entropy", || stages::entropy(&cfg, dir))?;
        }
        Command::Place => {
            run_stage(dir, "place", || stages::place(&cfg, dir))?;
        }
        Command::Train { method } => {
            if !method.is_trained() {
                return Err(Error::Config(format!("{method} is a baseline; use `baseline --method {method}`")));
            }
            run_stage(dir, "train", || stages::train_method(&cfg, dir, *method))?;
        }
        Command::Baseline { method } => {
            if method.is_trained() {
                return Err(Error::Config(format!("{method} is trained; use `train --method {method}`")));
            }
            run_stage(dir, "baseline", || stages::baseline(&cfg, dir, *method))?;
        }
        Command::Eval { method } => {
            run_stage(dir, "eval", || stages::eval(&cfg, dir, *method))?;
        }
        Command::Report => {
            let mut table = String::new();
            run_stage(dir, "report", || {
                let (names, report) = stages::report(&cfg, dir)?;
                table = report.to_table();
                Ok(names)
            })?;
            print!("{table}");
        }
        Command::Run => {
            print!("{}", run_pipeline(&cfg)?.to_table());
        }
        Command::Verify => {
            let check = verify_dir(dir)?;
            for name in &check.missing {
                println!("missing   {name}");
            }
            for name in &check.mismatched {
                println!("changed   {name}");
            }
            if !check.is_ok() {
                return Err(Error::InsufficientData(format!(
                    "{} of {} artifacts failed verification",
                    check.missing.len() + check.mismatched.len(),
                    check.checked + check.missing.len()
                )));
            }
            println!("ok {} artifacts", check.checked);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
