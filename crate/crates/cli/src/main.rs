use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use priorcal::harness::{
    cmd_check_coverage, cmd_decode, cmd_eval, cmd_fit, cmd_gen, cmd_sweep_cycles, cmd_train, RunConfig, ShotFormat,
};
use priorcal::{Error, Result};

#[derive(Parser)]
#[command(name = "priorcal", version, about = "Decoder-prior calibration with sensor codes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed of the configuration with streams derived from this value.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the template and planted models and the shot splits.
    Gen(Common),
    /// Fit the parameter vector from pairwise correlations.
    Fit(Common),
    /// Train the parameter vector with the multi-agent optimiser.
    Train(Common),
    /// Compare priors on the held-out test shots.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Parameter files to evaluate besides the uninformative prior.
        params: Vec<PathBuf>,
    },
    /// Extrapolate learned parameters to other durations.
    SweepCycles {
        #[command(flatten)]
        common: Common,
        /// Parameter file learned at the configured duration.
        params: PathBuf,
    },
    /// List target classes that no sensor parametrizes.
    CheckCoverage(Common),
    /// Decode a shot file with a model file.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dem: PathBuf,
        #[arg(long)]
        shots: PathBuf,
        /// Predictions file, one observable mask per shot.
        #[arg(long)]
        predictions: PathBuf,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        cfg.reseed(s);
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = load(&c)?;
            let g = cmd_gen(&cfg)?;
            println!("wrote {} train, {} validation, {} test shots to {}", g.train, g.validation, g.test, display(&cfg.out_dir));
        }
        Command::Fit(c) => {
            let cfg = load(&c)?;
            let theta = cmd_fit(&cfg)?;
            println!("fitted {} parameters", theta.len());
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let out = cmd_train(&cfg)?;
            if let (Some(first), Some(last)) = (out.history.first(), out.history.last()) {
                println!(
                    "trained {} epochs, mean reward {:.4} -> {:.4}",
                    out.history.len(),
                    first.mean_reward,
                    last.mean_reward
                );
            }
        }
        Command::Eval { common, params } => {
            let cfg = load(&common)?;
            let report = cmd_eval(&cfg, &params)?;
            for row in &report.rows {
                let e = &row.estimate;
                println!("{:<16} ler {:.4e} [{:.4e}, {:.4e}] ({} / {})", row.label, e.ler, e.ci_low, e.ci_high, e.failures, e.shots);
            }
        }
        Command::SweepCycles { common, params } => {
            let cfg = load(&common)?;
            let rep = cmd_sweep_cycles(&cfg, &params)?;
            println!(
                "epsilon extrapolated {:.4e} +- {:.1e}, direct {:.4e} +- {:.1e}",
                rep.fit.epsilon, rep.fit.epsilon_stderr, rep.direct_fit.epsilon, rep.direct_fit.epsilon_stderr
            );
        }
        Command::CheckCoverage(c) => {
            let cfg = load(&c)?;
            let missing = cmd_check_coverage(&cfg)?;
            if missing.is_empty() {
                println!("all target classes covered");
            } else {
                for k in &missing {
                    println!("uncovered {k}");
                }
            }
        }
        Command::Decode { common, dem, shots, predictions } => {
            let cfg = load(&common)?;
            let format: ShotFormat = cfg.shot_format;
            let e = cmd_decode(&dem, &shots, format, &predictions)?;
            println!("ler {:.4e} ({} / {})", e.ler, e.failures, e.shots);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
