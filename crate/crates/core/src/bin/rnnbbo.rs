use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use rnnbbo::harness::{self, check, timing, CompareConfig, Manifest, OptimizeConfig, TimeConfig};
use rnnbbo::training::{train, write_history_csv};
use rnnbbo::{Checkpoint, Clock, Error, TrainConfig};

#[derive(Parser)]
#[command(name = "rnnbbo", version, about = "Meta-trained recurrent black-box optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Meta-train a policy on GP prior samples.
    Train(Args),
    /// Run one optimizer on one objective instance.
    Optimize(Args),
    /// Compare optimizers on shared objective instances.
    Compare(Args),
    /// Time per-step proposal cost.
    Time(Args),
    /// Run the built-in oracle checks.
    Check(CheckArgs),
}

#[derive(clap::Args)]
struct Args {
    /// TOML configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct CheckArgs {
    /// Optional TOML file with a `seed` key.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CheckConfig {
    #[serde(default)]
    seed: u64,
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train(a) => {
            let (cfg, hash): (TrainConfig, _) = harness::load_config(&a.config)?;
            std::fs::create_dir_all(&a.out)?;
            let policy = cfg.initial_policy()?;
            let trained = train(&cfg, policy, Some(&a.out))?;
            Checkpoint::from_training(&trained.policy, &cfg).save(&a.out.join("checkpoint.toml"))?;
            write_history_csv(&trained.history, std::fs::File::create(a.out.join("history.csv"))?)?;
            let mut m = Manifest::new("train", hash, cfg.seed, cfg.clock);
            m.outputs = vec!["checkpoint.toml".into(), "history.csv".into()];
            m.write(&a.out)?;
            eprintln!(
                "trained {} outer steps; final mean loss {}",
                trained.history.len(),
                trained.history.last().map(|r| r.mean_loss.to_string()).unwrap_or_else(|| "n/a".into())
            );
        }
        Command::Optimize(a) => {
            let (mut cfg, hash): (OptimizeConfig, _) = harness::load_config(&a.config)?;
            cfg.resolve(&base_dir(&a.config));
            std::fs::create_dir_all(&a.out)?;
            let traj = cfg.run()?;
            traj.write_csv(std::fs::File::create(a.out.join("trajectory.csv"))?)?;
            let mut m = Manifest::new("optimize", hash, cfg.seed, cfg.clock);
            m.outputs = vec!["trajectory.csv".into()];
            m.write(&a.out)?;
            if let Some(b) = traj.best() {
                eprintln!("best y = {} at {:?}", b.y, b.x);
            }
        }
        Command::Compare(a) => {
            let (mut cfg, hash): (CompareConfig, _) = harness::load_config(&a.config)?;
            cfg.resolve(&base_dir(&a.config));
            std::fs::create_dir_all(&a.out)?;
            let report = cfg.run()?;
            let mut m = Manifest::new("compare", hash, cfg.seed, cfg.clock);
            m.outputs = report.write_csvs(&a.out)?;
            m.write(&a.out)?;
            for agg in &report.aggregates {
                let last = agg.mean.last().map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
                eprintln!("{}: n={} failures={} mean m_T={last}", agg.optimizer, agg.n, agg.failures);
            }
        }
        Command::Time(a) => {
            let (mut cfg, hash): (TimeConfig, _) = harness::load_config(&a.config)?;
            cfg.resolve(&base_dir(&a.config));
            std::fs::create_dir_all(&a.out)?;
            let tables = cfg.run()?;
            timing::write_timing_csv(&tables, &a.out.join("timing.csv"))?;
            let mut m = Manifest::new("time", hash, cfg.seed, cfg.clock);
            m.outputs = vec!["timing.csv".into()];
            m.write(&a.out)?;
        }
        Command::Check(a) => {
            let (cfg, hash) = match &a.config {
                Some(p) => harness::load_config::<CheckConfig>(p)?,
                None => (CheckConfig::default(), harness::sha256_hex(b"")),
            };
            std::fs::create_dir_all(&a.out)?;
            let results = check::run_all(cfg.seed)?;
            check::write_check_csv(&results, &a.out.join("check.csv"))?;
            let mut m = Manifest::new("check", hash, cfg.seed, Clock::Off);
            m.outputs = vec!["check.csv".into()];
            m.write(&a.out)?;
            let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            for r in &results {
                eprintln!("{} {} (measured {}, tolerance {})", if r.passed { "PASS" } else { "FAIL" }, r.name, r.measured, r.tolerance);
            }
            if !failed.is_empty() {
                return Err(Error::Invalid(format!("checks failed: {}", failed.join(", "))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
