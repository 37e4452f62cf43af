use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dngd_bench::config::ExperimentConfig;
use dngd_bench::experiment::{self, SweepAxis};
use dngd_bench::verify::{self, Goldens};
use dngd_bench::{report, CliError};

#[derive(Debug, Parser)]
#[command(name = "dngd-bench", version, about = "Distributed Nesterov gradient descent experiments")]
struct Cli {
    /// Directory for output files (a config's "output_dir" takes precedence).
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Worker threads for independent runs; 0 picks the CPU count.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    /// Suppress progress and result tables.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured algorithm on a shared graph and problem.
    Run { config: PathBuf },
    /// Integrate a continuous-time flow.
    Flow { config: PathBuf },
    /// Repeat an experiment along one axis.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
    },
    /// Run the built-in invariant suite.
    Verify {
        /// Spectrum goldens replacing the built-in ones.
        #[arg(long)]
        goldens: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Kappa,
    Epsilon,
    R,
}

impl From<Axis> for SweepAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::Kappa => SweepAxis::Kappa,
            Axis::Epsilon => SweepAxis::Epsilon,
            Axis::R => SweepAxis::R,
        }
    }
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir.as_ref().map_or_else(|| cli.out_dir.clone(), PathBuf::from)
}

fn announce(quiet: bool, paths: &[PathBuf]) {
    if !quiet {
        for p in paths {
            println!("wrote {}", p.display());
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))
}

fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::load(path).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config)?;
            let report = experiment::run_experiment(&cfg, &pool(cli.workers)?)?;
            if !cli.quiet {
                for a in &report.algorithms {
                    let cross = a
                        .epsilon_crossing
                        .map_or("not reached".to_string(), |c| format!("k = {}, comm = {}", c.k, c.comm_scalars));
                    println!("{:<20} final Σ subopt {:.3e}  ε crossing: {cross}", a.label, a.final_sample.sum_subopt);
                }
            }
            announce(cli.quiet, &report::write_run(&out_dir(cli, &cfg), &report)?);
        }
        Command::Flow { config } => {
            let cfg = load(config)?;
            let report = experiment::flow_experiment(&cfg)?;
            if !cli.quiet {
                if let Some(status) = report.flow.lyapunov_status {
                    println!("lyapunov: {status}");
                }
                if let Some(v) = report.flow.fit.value() {
                    println!("fit: {v:.4}");
                }
            }
            announce(cli.quiet, &report::write_flow(&out_dir(cli, &cfg), &report)?);
        }
        Command::Sweep { config, axis } => {
            let cfg = load(config)?;
            let report = experiment::sweep_experiment(&cfg, (*axis).into(), &pool(cli.workers)?)?;
            if !cli.quiet {
                if let Some(e) = report.summary_exponent {
                    println!("summary exponent: {e:.4}");
                }
            }
            announce(cli.quiet, &report::write_sweep(&out_dir(cli, &cfg), &report)?);
        }
        Command::Verify { goldens } => {
            let goldens = match goldens {
                Some(p) => Goldens::load(p)?,
                None => Goldens::default(),
            };
            verify::verify(&goldens, cli.quiet)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
