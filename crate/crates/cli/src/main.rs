use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sgd_landscape::experiment::{run, write_outputs, Command, ExperimentConfig};
use sgd_landscape::verify::Suite;
use sgd_landscape::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Simulate,
    Spectrum,
    Morse,
    Fp,
    DecayStudy,
    Verify,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Spectrum => Command::Spectrum,
            Sub::Morse => Command::Morse,
            Sub::Fp => Command::Fp,
            Sub::DecayStudy => Command::DecayStudy,
            Sub::Verify => Command::Verify,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Fast,
    Full,
}

/// SDE, Fokker-Planck, spectral and Morse experiments on small landscapes.
#[derive(Debug, Parser)]
#[command(name = "sgd-landscape", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    suite: Option<SuiteArg>,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let command = Command::from(cli.command);
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::new(command),
    };
    if cfg.command != command {
        return Err(Error::Config(format!(
            "config is for `{:?}` but `{:?}` was requested",
            cfg.command, command
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(suite) = cli.suite {
        cfg.verify.suite = match suite {
            SuiteArg::Fast => Suite::Fast,
            SuiteArg::Full => Suite::Full,
        };
    }
    sgd_landscape::objective::catalog(&cfg.field)?;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    eprintln!("{:?}: seed {} -> {}", cfg.command, cfg.seed, out.display());
    let result = run(&cfg, &out, |line| println!("{line}"))
        .and_then(|(report, timing)| write_outputs(&out, &report, &timing).map(|_| report));
    match result {
        Ok(report) => {
            for a in report.assertions.iter().filter(|a| !a.passed) {
                eprintln!("FAILED {}: {}", a.name, a.invariant);
            }
            eprintln!("wrote {}", out.join("report.json").display());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
        Err(e @ (Error::Config(_) | Error::Catalog { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
