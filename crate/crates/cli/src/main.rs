use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellflow_core::config::RunConfig;
use cellflow_core::runner::{
    output_dir, run_convergence, run_simulate, run_stability, run_validate, Status,
};
use cellflow_core::Error;
use clap::{Args, Parser, Subcommand};

/// Stem, proliferating and damaged cell populations: simulation and
/// stability checks.
#[derive(Debug, Parser)]
#[command(name = "cellflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the modelling assumptions on the configured rates and data.
    Validate(Common),
    /// Solve for N, P, C and write fields and Picard traces.
    Simulate(Common),
    /// Stability index, decay fits and contraction estimate.
    Stability(Common),
    /// Self-convergence study under nested grid refinement.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Number of refinement levels (at least 3); overrides the config.
        #[arg(long)]
        refinements: Option<usize>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Random seed; overrides `solver.seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::from_file(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), String> {
    let Some(n) = threads else {
        return Ok(());
    };
    if n == 0 {
        return Err("--threads must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<Status, Error> {
    match cli.command {
        Command::Validate(common) => {
            let cfg = common.load()?;
            let out = output_dir(&cfg, common.out.as_deref());
            let (report, status) = run_validate(&cfg, &out)?;
            println!("{report}");
            Ok(status)
        }
        Command::Simulate(common) => {
            let cfg = common.load()?;
            let out = output_dir(&cfg, common.out.as_deref());
            let outcome = run_simulate(&cfg, &out)?;
            for s in &outcome.solution.stages {
                println!(
                    "{}: {} after {} iterations, terminal rate {}",
                    s.which,
                    if s.trace.converged { "converged" } else { "not converged" },
                    s.trace.iterations,
                    s.trace
                        .terminal_rate()
                        .map_or_else(|| "undefined".to_string(), |r| format!("{r:.6}")),
                );
            }
            report_dir(&out);
            Ok(outcome.status)
        }
        Command::Stability(common) => {
            let cfg = common.load()?;
            let out = output_dir(&cfg, common.out.as_deref());
            let outcome = run_stability(&cfg, &out)?;
            match &outcome.report {
                Some(r) => {
                    println!("A = {:.6}", r.index.index_a);
                    println!("verdict: {}", r.verdict);
                    for w in &r.warnings {
                        println!("warning: {w}");
                    }
                }
                None => println!("solver did not converge; no report"),
            }
            report_dir(&out);
            Ok(outcome.status)
        }
        Command::Convergence {
            common,
            refinements,
        } => {
            let mut cfg = common.load()?;
            if let Some(r) = refinements {
                cfg.convergence.refinements = r;
            }
            let out = output_dir(&cfg, common.out.as_deref());
            let (rows, status) = run_convergence(&cfg, &out)?;
            for r in &rows {
                println!(
                    "h = {:.6e}  error = {:.6e}  order = {}",
                    r.h,
                    r.error,
                    r.observed_order
                        .map_or_else(|| "-".to_string(), |p| format!("{p:.3}"))
                );
            }
            report_dir(&out);
            Ok(status)
        }
    }
}

fn report_dir(out: &Path) {
    println!("outputs in {}", out.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Validate(c) | Command::Simulate(c) | Command::Stability(c) => c.threads,
        Command::Convergence { common, .. } => common.threads,
    };
    if let Err(e) = set_threads(threads) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(status) => ExitCode::from(status.code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(Status::Fault.code() as u8)
        }
    }
}
