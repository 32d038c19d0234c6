use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csfg_core::experiment::{export_pumps, run, run_gates, RunOptions, SweepConfig, VerifyOptions};
use csfg_core::Error;

#[derive(Parser)]
#[command(name = "csfg", version, about = "Cavity sum-frequency frequency-bin gate simulator")]
struct Cli {
    /// Worker threads for sweep points and kernel columns.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Use the 101-bin grid instead of the configured one.
    #[arg(long)]
    full: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run {
        #[command(flatten)]
        common: Common,
        /// Run the oracle gates first and abort if any fails.
        #[arg(long)]
        verify: bool,
        /// Stream kernel columns instead of materialising them.
        #[arg(long)]
        stream: bool,
        /// Write 0 for every runtime column.
        #[arg(long)]
        no_timing: bool,
    },
    /// Run the oracle gate matrix.
    Verify {
        #[arg(long, default_value_t = 16)]
        oversample: usize,
        /// Check the loss coefficient without its window factor.
        #[arg(long)]
        uncorrected_upsilon: bool,
        /// Emit the gate table as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Write the configured pump envelopes as CSV.
    ExportPump {
        #[command(flatten)]
        common: Common,
    },
}

fn fail(err: &Error) -> ExitCode {
    let body = serde_json::json!({ "error": err.kind(), "message": err.to_string() });
    eprintln!("{body}");
    ExitCode::FAILURE
}

fn options(common: &Common) -> RunOptions {
    RunOptions {
        out_dir: common.out.clone(),
        config_dir: common
            .config
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
        full: common.full,
        ..RunOptions::default()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            return fail(&Error::InvalidParams(format!("thread pool: {e}")));
        }
    }
    match cli.command {
        Command::Run {
            common,
            verify,
            stream,
            no_timing,
        } => {
            let cfg = match SweepConfig::load(&common.config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let opts = RunOptions {
                verify,
                stream,
                timing: !no_timing,
                ..options(&common)
            };
            match run(&cfg, &opts) {
                Ok(summary) => {
                    for f in &summary.files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify {
            oversample,
            uncorrected_upsilon,
            json,
        } => {
            let opts = VerifyOptions {
                oversample,
                uncorrected_upsilon,
                ..VerifyOptions::default()
            };
            let gates = run_gates(&opts);
            if json {
                println!("{}", serde_json::to_string_pretty(&gates).expect("serialisable"));
            } else {
                for g in &gates {
                    let tag = if g.passed { "PASS" } else { "FAIL" };
                    println!(
                        "{tag} {:<36} residual={:.3e} tol={:.1e}",
                        g.name, g.residual, g.tolerance
                    );
                }
            }
            if gates.iter().all(|g| g.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::ExportPump { common } => {
            let cfg = match SweepConfig::load(&common.config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            match export_pumps(&cfg, &options(&common)) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
