use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftcal::calibration::{render_report, run_blind, run_semiblind, run_simulation};
use driftcal::config::{parse_config, parse_config_str};
use driftcal::neural::gradcheck::{check_random_networks, FD_STEP};
use driftcal::{Error, ExperimentConfig, Flavour};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Sensor drift calibration workbench.
///
/// Exit codes: 0 success, 2 usage, 3 configuration, 4 invalid argument,
/// 5 I/O, 6 numerical failure, 7 data shape, 8 training divergence,
/// 9 gradient check above tolerance.
#[derive(Parser, Debug)]
#[command(name = "driftcal", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the RC and UC chains and write signals_rc.csv / signals_uc.csv.
    Simulate(RunArgs),
    /// Semi-blind calibration with a known event.
    Semiblind(RunArgs),
    /// Blind calibration with the two-stage autoencoder.
    Blind(RunArgs),
    /// Compare analytic gradients with central finite differences on random networks.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        networks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a summary of the report saved in an output directory.
    Report {
        #[arg(long, value_name = "DIR", env = "DRIFTCAL_OUT")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Flat `key = value` configuration file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory [default: experiment.output_dir from the config].
    #[arg(long, value_name = "DIR", env = "DRIFTCAL_OUT")]
    out: Option<PathBuf>,
    /// Master seed, overriding experiment.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn load(&self, flavour: Option<Flavour>) -> Result<(ExperimentConfig, PathBuf), Error> {
        let mut overrides = self.overrides.clone();
        if let Some(f) = flavour {
            overrides.push(format!("experiment.flavour={f}"));
        }
        if let Some(seed) = self.seed {
            overrides.push(format!("experiment.seed={seed}"));
        }
        let cfg = match &self.config {
            Some(path) => parse_config(path, &overrides)?,
            None => parse_config_str("", Path::new("<defaults>"), &overrides)?,
        };
        let out = self.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok((cfg, out))
    }
}

enum Failure {
    Error(Error),
    Gradcheck(f64),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn category(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Parse { .. } | Error::Validation(_) => ("config", 3),
        Error::InvalidArgument(_) => ("argument", 4),
        Error::Io { .. } => ("io", 5),
        Error::NonInvertibleModel(_)
        | Error::NoConvergence { .. }
        | Error::IllConditioned { .. }
        | Error::InsufficientData(_)
        | Error::DegenerateInput(_)
        | Error::ZeroFilter => ("numerical", 6),
        Error::ShapeMismatch { .. } | Error::LengthMismatch { .. } | Error::EmptyDataset => ("data", 7),
        Error::Diverged { .. } => ("training", 8),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(args) => {
            let (cfg, out) = args.load(None)?;
            let (rc, uc) = run_simulation(&cfg, &out)?;
            println!(
                "wrote {} RC and {} UC samples to {} (seed {})",
                rc.event.len(),
                uc.event.len(),
                out.display(),
                cfg.seed
            );
        }
        Command::Semiblind(args) => {
            let (cfg, out) = args.load(Some(Flavour::Semiblind))?;
            run_semiblind(&cfg)?.emit(&out)?;
            print!("{}", render_report(&out)?);
        }
        Command::Blind(args) => {
            let (cfg, out) = args.load(Some(Flavour::Blind))?;
            run_blind(&cfg)?.emit(&cfg.train, &out)?;
            print!("{}", render_report(&out)?);
        }
        Command::Gradcheck { networks, seed } => {
            let s = check_random_networks(networks, seed)?;
            println!(
                "checked {} networks ({} parameters), step {FD_STEP:e}",
                s.networks, s.parameters_checked
            );
            println!("max relative error: {:e}", s.max_relative_error);
            if !(s.max_relative_error < GRADCHECK_TOLERANCE) {
                return Err(Failure::Gradcheck(s.max_relative_error));
            }
        }
        Command::Report { out } => print!("{}", render_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            let (name, code) = category(&e);
            eprintln!("error[{name}]: {e}");
            ExitCode::from(code)
        }
        Err(Failure::Gradcheck(err)) => {
            eprintln!("error[gradcheck]: max relative error {err:e} exceeds {GRADCHECK_TOLERANCE:e}");
            ExitCode::from(9)
        }
    }
}
