use std::path::PathBuf;
use std::process::ExitCode;

use aoii_cli::commands::{self, ChainTarget};
use aoii_cli::{CliError, ExperimentConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aoii", version, about = "AoII-optimal sampling and transmission experiments")]
struct Cli {
    /// Experiment configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the MDP with relative value iteration.
    Solve {
        /// Cross-check against exhaustive policy enumeration.
        #[arg(long)]
        oracle: bool,
    },
    /// Monte Carlo simulation of the configured policy.
    Simulate {
        /// Also write the first N slots of replication 0.
        #[arg(long, value_name = "N")]
        trace: Option<u64>,
    },
    /// Optimal average AoII as a function of the truncation N.
    SweepN,
    /// Real-time error of the AoII-optimal policy against the baseline.
    Compare,
    /// Recurrent/transient class structure of an induced chain.
    AnalyzeChain {
        #[arg(long, value_enum, default_value = "union")]
        target: ChainTarget,
        /// Battery level for the counterexample policy.
        #[arg(long, default_value_t = 3)]
        level: u32,
    },
    /// Belief vector at a given AoI.
    Belief {
        #[arg(long)]
        theta: u32,
    },
    /// Every transition of the MDP kernel.
    KernelDump,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }

    match cli.command {
        Command::Solve { oracle } => {
            let out = commands::cmd_solve(&cfg, oracle)?;
            let s = &out.summary;
            println!(
                "gain {} after {} iterations (span {:.3e})",
                s.gain, s.iterations, s.residual_span
            );
            if let Some(o) = &s.oracle {
                println!(
                    "oracle best {} over {} policies ({} skipped): {}",
                    o.best_gain,
                    o.evaluated,
                    o.skipped,
                    if o.agree { "agrees" } else { "DISAGREES" }
                );
            }
        }
        Command::Simulate { trace } => {
            let s = commands::cmd_simulate(&cfg, trace)?;
            let m = &s.metrics;
            println!("avg_aoii {} ± {}", m.avg_aoii.mean, m.avg_aoii.half_width);
            println!(
                "real_time_error {} ± {}",
                m.real_time_error.mean, m.real_time_error.half_width
            );
        }
        Command::SweepN => {
            for p in commands::cmd_sweep_n(&cfg)?.points {
                println!("N={:<4} gain {} gap {:.3e}", p.n_max, p.gain, p.gap_to_max);
            }
        }
        Command::Compare => {
            for p in commands::cmd_compare(&cfg)?.points {
                println!(
                    "p={} aoii_opt {:.5} ± {:.5}  baseline {:.5} ± {:.5}  gap {:.5}",
                    p.p,
                    p.aoii_opt.real_time_error.mean,
                    p.aoii_opt.real_time_error.half_width,
                    p.baseline.real_time_error.mean,
                    p.baseline.real_time_error.half_width,
                    p.gap
                );
            }
        }
        Command::AnalyzeChain { target, level } => {
            let (_, json) = commands::cmd_analyze_chain(&cfg, target, level)?;
            print!("{json}");
        }
        Command::Belief { theta } => print!("{}", commands::cmd_belief(&cfg, theta)?),
        Command::KernelDump => {
            let path = commands::cmd_kernel_dump(&cfg)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
