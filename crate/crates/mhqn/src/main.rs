use std::fs::{self, File};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mhqn::harness::{csv_rows, run_file, write_csv, RunReport};
use mhqn::io::{read_json, write_dataset_csv, write_json_lines};
use mhqn::validate_files;

/// Simulate and control a switched entanglement-distribution network.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report, event log and datasets.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check scenario, topology, allocation and policy files.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print a saved report.
    Report {
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        file: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MHQN_LOG", "warn")).init();
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let output = run_file(&scenario, seed)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            fs::write(out.join("report.json"), output.report.to_canonical_json()?)?;
            write_csv(File::create(out.join("report.csv"))?, &csv_rows(&output.report))?;
            write_json_lines(File::create(out.join("events.jsonl"))?, &output.report.events)?;
            let dir = out.join("datasets");
            fs::create_dir_all(&dir)?;
            for (label, ds) in &output.datasets {
                let name: String = label
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                    .collect();
                write_dataset_csv(File::create(dir.join(format!("{name}.csv")))?, ds)?;
            }
            println!("wrote {} measurement(s) to {}", output.report.measurements.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { files } => {
            let diags = validate_files(&files);
            for d in &diags {
                println!("{d}");
            }
            if diags.is_empty() {
                println!("ok: {} file(s)", files.len());
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Report { format, file } => {
            let report: RunReport = read_json(&file)?;
            match format {
                Format::Json => print!("{}", report.to_canonical_json()?),
                Format::Csv => write_csv(std::io::stdout().lock(), &csv_rows(&report))?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
