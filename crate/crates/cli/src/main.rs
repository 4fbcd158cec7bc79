//! `hyperhit` command line.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{has_errors, validate, Diagnostic, ExperimentConfig, ExperimentKind};
use output::{meta_path, resolve_path, write_meta};
use run::RunError;

#[derive(Parser)]
#[command(name = "hyperhit", version, about = "Shrinking-target experiments on hyperbolic lattice quotients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set target.eta=1.5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        workers: Option<usize>,
        /// Data file path; defaults to `<experiment>-<hash>.<ext>` in $HYPERHIT_OUTPUT_DIR or `.`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_parser = ["csv", "jsonl"])]
        format: Option<String>,
    },
    /// Check a config and print diagnostics without running it.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Print the data columns an experiment writes.
    Columns { experiment: String },
}

fn load_config(path: &PathBuf, overrides: &[String]) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    config::load(&text, overrides).map_err(|e| RunError::Config(e.0))
}

fn print_diagnostics(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{d}");
    }
}

fn run_command(
    path: &PathBuf,
    mut overrides: Vec<String>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    format: Option<String>,
) -> Result<(), RunError> {
    if let Some(w) = workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(f) = format {
        overrides.push(format!("output.format=\"{f}\""));
    }
    let cfg = load_config(path, &overrides)?;
    let mut diags = validate(&cfg);
    if has_errors(&diags) {
        print_diagnostics(&diags);
        return Err(RunError::Config("config violates the experiment contract".into()));
    }
    let built = run::build(&cfg)?;
    diags.extend(run::regime_warnings(&cfg, &built));
    print_diagnostics(&diags);

    let started = Instant::now();
    let outcome = run::run(&cfg, &built)?;
    let elapsed = started.elapsed().as_secs_f64();

    let hash = cfg.hash();
    let explicit = out.or_else(|| cfg.output.path.clone());
    let data = resolve_path(explicit.as_deref(), cfg.experiment.name(), &hash, cfg.output.format);
    outcome.table.write(&data, cfg.output.format)?;
    let aggregate = outcome.aggregate.to_json();
    let meta = json!({
        "config_hash": hash,
        "experiment": cfg.experiment.name(),
        "data_file": data.file_name().map(|f| f.to_string_lossy().into_owned()),
        "format": cfg.output.format.extension(),
        "columns": outcome.table.columns,
        "rows": outcome.table.rows.len(),
        "config": cfg,
        "aggregate": aggregate,
        "trend": outcome.trend,
        "diagnostics": diags.iter().map(|d| d.to_string()).collect::<Vec<_>>(),
        "runtime": {
            "elapsed_seconds": elapsed,
            "workers": cfg.workers,
            "version": env!("CARGO_PKG_VERSION"),
        },
    });
    write_meta(&meta_path(&data), &meta)?;
    println!("{aggregate}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, set, workers, output, format } => run_command(&config, set, workers, output, format),
        Command::Validate { config, set } => load_config(&config, &set).and_then(|cfg| {
            let mut diags = validate(&cfg);
            if !has_errors(&diags) {
                let built = run::build(&cfg)?;
                diags.extend(run::regime_warnings(&cfg, &built));
            }
            print_diagnostics(&diags);
            if has_errors(&diags) {
                Err(RunError::Config("config violates the experiment contract".into()))
            } else {
                Ok(())
            }
        }),
        Command::Columns { experiment } => match ExperimentKind::parse(&experiment) {
            Some(kind) => {
                println!("{}", run::columns(kind).join(","));
                Ok(())
            }
            None => Err(RunError::Config(format!(
                "unknown experiment `{experiment}`; expected one of {}",
                ExperimentKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
            ))),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
