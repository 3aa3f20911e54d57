use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factsim::pipelines::{cmd_compare, cmd_penalty_curve, cmd_sweep, cmd_train};
use factsim::verify::{cmd_verify, VerifyOptions};
use factsim::{Artifacts, HarnessError, Overrides, Scenario};

#[derive(Parser)]
#[command(
    name = "factsim",
    version,
    about = "Scenario runner for the free-rider mechanism simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every invariant check; exit 1 if any fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Debug only: scale every penalty scalar (negative control).
        #[arg(long, default_value_t = 1.0)]
        debug_lambda_scale: f64,
    },
    /// Misreport sweep for the focal agent (sweep.csv).
    Sweep(Common),
    /// Penalty plus data cost over [0, 2m*] (penalty.csv).
    PenaltyCurve(Common),
    /// Local, federated and mechanism losses per agent (compare.csv).
    Compare(Common),
    /// End-to-end training with settlement (train.csv, agents.csv, ledger.json).
    Train(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the full trial count instead of the desk-scale default.
    #[arg(long)]
    paper_scale: bool,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Also write SVG charts.
    #[arg(long)]
    svg: bool,
}

impl Common {
    fn scenario(&self) -> factsim::Result<Scenario> {
        let o = Overrides {
            seed: self.seed,
            trials: self.trials,
            out: self.out.clone(),
            paper_scale: self.paper_scale,
        };
        Scenario::load(&self.config, &o)
    }
}

fn emit(s: &Scenario, common: &Common, artifacts: Artifacts) -> factsim::Result<bool> {
    artifacts.write(&s.config.output.dir, common.svg || s.config.output.svg)?;
    for t in &artifacts.tables {
        println!(
            "wrote {}",
            s.config
                .output
                .dir
                .join(format!("{}.csv", t.name()))
                .display()
        );
    }
    Ok(true)
}

fn run(cmd: &Command) -> factsim::Result<bool> {
    match cmd {
        Command::Verify {
            common,
            debug_lambda_scale,
        } => {
            let s = common.scenario()?;
            let report = cmd_verify(
                &s,
                VerifyOptions {
                    lambda_scale: *debug_lambda_scale,
                },
            )?;
            for c in &report.checks {
                println!(
                    "{} {:<40} residual {:<12.4e} tolerance {:.1e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.residual,
                    c.tolerance
                );
            }
            let artifacts = Artifacts {
                json: vec![("verify".into(), serde_json::to_value(&report)?)],
                ..Artifacts::default()
            };
            artifacts.write(&s.config.output.dir, false)?;
            Ok(report.passed)
        }
        Command::Sweep(c) => c.scenario().and_then(|s| emit(&s, c, cmd_sweep(&s)?)),
        Command::PenaltyCurve(c) => c
            .scenario()
            .and_then(|s| emit(&s, c, cmd_penalty_curve(&s)?)),
        Command::Compare(c) => c.scenario().and_then(|s| emit(&s, c, cmd_compare(&s)?)),
        Command::Train(c) => c.scenario().and_then(|s| emit(&s, c, cmd_train(&s)?)),
    }
}

fn threads(cmd: &Command) -> usize {
    match cmd {
        Command::Verify { common, .. } => common.threads,
        Command::Sweep(c) | Command::PenaltyCurve(c) | Command::Compare(c) | Command::Train(c) => {
            c.threads
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(&cli.command))
        .build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(&cli.command)),
        Err(e) => Err(HarnessError::Config(format!("thread pool: {e}"))),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
