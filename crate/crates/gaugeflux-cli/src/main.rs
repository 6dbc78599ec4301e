use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use gaugeflux::noether::FluxKind;
use gaugeflux_cli::{emit, noether_summary, verify, with_workers, CliError, Format, SuiteConfig};

#[derive(Parser)]
#[command(name = "gaugeflux", version, about = "Numerical checks for matrix gauge fields and Noether fluxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set grid.period=3.0`
    #[arg(long = "set", value_name = "PATH=VALUE")]
    sets: Vec<String>,
    /// Worker threads (0 = one per core); never changes results
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a verification suite (`all` runs every suite)
    Verify {
        suite: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Add the wall time to the report
        #[arg(long)]
        timing: bool,
    },
    /// Divergence report for one flux kind
    Noether {
        #[arg(long)]
        kind: FluxKind,
        #[command(flatten)]
        common: Common,
    },
    /// List the suite names
    Suites,
}

fn load(common: &Common) -> Result<(SuiteConfig, serde_json::Value), CliError> {
    let file = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    SuiteConfig::load(file.as_ref(), &common.sets)
}

fn write(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Verify { suite, common, format, timing } => {
            let (cfg, echo) = load(&common)?;
            let start = Instant::now();
            let mut report = with_workers(common.workers, || verify(&suite, &cfg, echo))??;
            if timing {
                report.wall_time_s = Some(start.elapsed().as_secs_f64());
            }
            write(&common.out, &emit(&report, format))?;
            Ok(report.pass)
        }
        Command::Noether { kind, common } => {
            let (cfg, _) = load(&common)?;
            let summary = with_workers(common.workers, || noether_summary(kind, &cfg))??;
            let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            text.push('\n');
            write(&common.out, &text)?;
            Ok(summary.pass)
        }
        Command::Suites => {
            println!("all");
            for s in gaugeflux_cli::suites::suite_names() {
                println!("{s}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
