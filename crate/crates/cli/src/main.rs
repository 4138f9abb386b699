//! `homlinf`: cell solves, convergence studies, graded design runs and reports.
//!
//! Exit codes: 0 success, 2 config error, 3 solver failure, 4 schedule error,
//! 5 infeasible design problem, 1 anything else.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use homlinf::{Error, Result};

use crate::config::RunConfig;
use crate::output::{sha256_hex, Manifest, Outputs};

#[derive(Debug, Parser)]
#[command(name = "homlinf", version, about = "Periodic homogenization and per-phase gradient bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = one per core); overrides the config.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Leave timing out of the manifest so repeated runs are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Solve the cell problems; write the effective tensor and corrector fields.
    Cell,
    /// Compare fine-scale and homogenized solutions along an n-schedule.
    Converge,
    /// Optimize a graded laminate design and realize it at a fine scale.
    Design,
    /// Summarize the result files in the output directory as markdown.
    Report,
    /// Print the complete default config.
    PrintDefaults,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Cell => "cell",
            Command::Converge => "converge",
            Command::Design => "design",
            Command::Report => "report",
            Command::PrintDefaults => "print-defaults",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::SolverFailure { .. } => 3,
        Error::Schedule(_) => 4,
        Error::Infeasible(_) => 5,
        _ => 1,
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<(RunConfig, String)> {
    match path {
        None => Ok((RunConfig::default(), config::defaults_toml())),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            Ok((config::parse(&text)?, text))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if cli.command == Command::PrintDefaults {
        print!("{}", config::defaults_toml());
        return Ok(());
    }
    let started = Instant::now();
    let (cfg, text) = load_config(cli.config.as_ref())?;
    let threads = cli.threads.unwrap_or(cfg.threads);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot start {threads} threads: {e}")))?;
    let mut out = Outputs::create(&cli.out)?;
    let record = match cli.command {
        Command::Cell => commands::run_cell(&cfg, &mut out)?,
        Command::Converge => commands::run_converge(&cfg, &mut out)?,
        Command::Design => commands::run_design(&cfg, &mut out)?,
        Command::Report => {
            commands::run_report(&mut out)?;
            Default::default()
        }
        Command::PrintDefaults => unreachable!("handled above"),
    };
    // a report sits next to the outputs of another run; keep that run's records
    let manifest_name = if cli.command == Command::Report {
        "report_manifest.json"
    } else {
        out.write_json("run_record.json", &record)?;
        "manifest.json"
    };
    let mut outputs = out.written().to_vec();
    outputs.push(manifest_name.into());
    outputs.sort();
    let manifest = Manifest {
        tool: "homlinf",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name().into(),
        config_sha256: sha256_hex(text.as_bytes()),
        threads,
        deterministic: cli.deterministic,
        wall_time_s: (!cli.deterministic).then(|| started.elapsed().as_secs_f64()),
        outputs,
    };
    out.write_json(manifest_name, &manifest)?;
    println!("{}: wrote {} files to {}", cli.command.name(), manifest.outputs.len(), out.dir().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("homlinf {}: {e}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
