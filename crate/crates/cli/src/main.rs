use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wirebeam_core::config::Overrides;
use wirebeam_core::experiment::{run_eval, run_pattern, run_sweep, run_train, run_trajectory};
use wirebeam_core::{Error, ExperimentConfig, PolicyKind};

/// Beam-tracking experiments for a mmWave node on an overhead messenger wire.
#[derive(Debug, Parser)]
#[command(name = "wirebeam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a DQN agent and write a checkpoint and training log.
    Train(Common),
    /// Evaluate a policy on the configured episode seeds.
    Eval(Common),
    /// Sweep wire mass, spring constant, or look-back time.
    Sweep(Common),
    /// Export the transmit beam pattern.
    Pattern(Common),
    /// Export a wire trajectory after an impulse.
    Trajectory(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Config file (dotted keys); built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Trained network for `eval --policy dqn`; resume point for `train`.
    #[arg(long, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Reduced-scale training and evaluation profile.
    #[arg(long)]
    smoke: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Oracle,
    Fixed,
    Dqn,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Oracle => PolicyKind::Oracle,
            PolicyArg::Fixed => PolicyKind::FixedBeam,
            PolicyArg::Dqn => PolicyKind::DqnGreedy,
        }
    }
}

fn load(args: &Common) -> Result<ExperimentConfig, Error> {
    let mut ov = Overrides::new();
    if args.smoke {
        ov = ov.smoke();
    }
    if let Some(seed) = args.seed {
        if seed > i64::MAX as u64 {
            return Err(Error::Validation(format!(
                "--seed must be at most {}",
                i64::MAX
            )));
        }
        ov = ov.seed(seed);
    }
    if let Some(dir) = &args.out {
        ov = ov.output_dir(dir);
    }
    if let Some(ck) = args.checkpoint.as_deref().filter(|p| !p.is_file()) {
        return Err(Error::Validation(format!(
            "--checkpoint {} is not a file",
            show(ck)
        )));
    }
    if let Some(cfg) = args.config.as_deref().filter(|p| !p.is_file()) {
        return Err(Error::Validation(format!(
            "--config {} is not a file",
            show(cfg)
        )));
    }
    match &args.config {
        Some(path) => ExperimentConfig::load(path, &ov),
        None => ExperimentConfig::parse("", &ov),
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Train(args) => {
            let cfg = load(&args)?;
            let art = run_train(&cfg, args.checkpoint.as_deref())?;
            println!("checkpoint {}", show(&art.checkpoint));
            println!("log        {}", show(&art.log));
            println!("summary    {}", show(&art.summary));
            if let Some(last) = art.outcome.log.last() {
                println!(
                    "phases {}  final eval power {:.2} dBm  loss {:.4e}",
                    art.outcome.log.len(),
                    last.mean_eval_power_dbm,
                    last.loss
                );
            }
        }
        Command::Eval(args) => {
            let cfg = load(&args)?;
            let policy = args.policy.map_or(PolicyKind::Oracle, PolicyKind::from);
            let art = run_eval(&cfg, policy, args.checkpoint.as_deref())?;
            let m = &art.metrics;
            println!("metrics {}", show(&art.metrics_path));
            println!(
                "{}: {} episodes, mean power {:.2} dBm, mean angle error {:.3} deg",
                m.policy, m.episodes, m.mean_power_dbm, m.mean_angle_error_deg
            );
            if let Some(p) = m.mean_power_post_impulse_dbm {
                println!(
                    "post-impulse mean power {p:.2} dBm over {} episodes",
                    m.post_impulse_episodes
                );
            }
        }
        Command::Sweep(args) => {
            let mut cfg = load(&args)?;
            if let Some(p) = args.policy {
                cfg.sweep.policies = vec![p.into()];
            }
            let res = run_sweep(&cfg)?;
            println!(
                "{} cells ({} reused), {} failures",
                res.cells.len(),
                res.reused,
                res.failures.len()
            );
            for row in &res.summary {
                println!(
                    "{} = {:<8} {:<7} {:.2} +/- {:.2} dBm",
                    res.axis.as_str(),
                    row.value,
                    row.policy,
                    row.mean_power_dbm,
                    row.std_power_dbm
                );
            }
            for f in &res.failures {
                eprintln!(
                    "failed: value {} rep {} {}: {}",
                    f.value, f.repetition, f.policy, f.error
                );
            }
        }
        Command::Pattern(args) => {
            let cfg = load(&args)?;
            println!("{}", show(&run_pattern(&cfg)?));
        }
        Command::Trajectory(args) => {
            let cfg = load(&args)?;
            println!("{}", show(&run_trajectory(&cfg)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
