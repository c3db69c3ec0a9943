use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use dcs_experiment::config::{self, ExperimentConfig, OutputConfig, ResolvedConfig};
use dcs_experiment::{output, presets, runner, verify, ExperimentError, Result};

#[derive(Parser)]
#[command(name = "dcs", version, about = "Dynamical control switching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides [output].directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a built-in figure preset.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run a preset and check it; exits 1 if any check fails.
    Verify {
        name: String,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the built-in presets.
    ListPresets,
}

fn execute(cfg: ResolvedConfig, out: Option<PathBuf>, workers: Option<usize>) -> Result<()> {
    let dir = out.unwrap_or_else(|| PathBuf::from(cfg.output.directory.clone().unwrap_or_else(|| "out".into())));
    let start = Instant::now();
    let result = runner::run(&cfg, workers)?;
    let files = output::write_outputs(&result, &dir, start.elapsed().as_secs_f64())?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, workers } => execute(config::load_config(&config)?, out, workers),
        Command::Preset { name, out, workers } => {
            let cfg = config::resolve(ExperimentConfig {
                preset: Some(name),
                output: Some(OutputConfig::default()),
                ..Default::default()
            })?;
            execute(cfg, out, workers)
        }
        Command::Verify { name, workers } => {
            let report = verify::verify(&name, workers)?;
            print!("{}", report.render());
            if report.passed() {
                Ok(())
            } else {
                let failed = report.checks.iter().filter(|c| !c.pass).count();
                Err(ExperimentError::Verification(format!("{failed} check(s) failed for {name}")))
            }
        }
        Command::ListPresets => {
            for n in presets::names() {
                println!("{n}\t{}", presets::summary(n).unwrap_or(""));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
