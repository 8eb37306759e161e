use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use glad_core::baselines::SolverKind;

use crate::commands::{cmd_eval, cmd_gen, cmd_solve, cmd_sweep, cmd_train, cmd_verify, RunOutcome};
use crate::config::{
    experiment_hash, load_config, CommandConfig, EvalConfig, GenConfig, Overrides, SolveConfig, Suite, SweepConfig,
    TrainCommandConfig, VerifyConfig,
};
use crate::error::{HarnessError, Result, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "glad", version, about = "Sparse precision-matrix recovery experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file; defaults apply to missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for instance-level parallelism.
    #[arg(long, env = "GLAD_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Gen(Common),
    /// Run one classic solver over a dataset.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solver: Option<SolverKind>,
    },
    /// Grid-search (ρ, λ) for one solver.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solver: Option<SolverKind>,
    },
    /// Train GLAD parameters.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate a GLAD checkpoint per unrolled iteration.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        num_unrolls: Option<usize>,
    },
    /// Run the numerical property suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Restrict to these suites (repeatable); all by default.
        #[arg(long = "suite", value_enum)]
        suites: Vec<Suite>,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Gen(c) => c,
            Command::Solve { common, .. }
            | Command::Sweep { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Verify { common, .. } => common,
        }
    }
}

fn effective<C: CommandConfig>(common: &Common, tweak: impl FnOnce(&mut C)) -> Result<C> {
    let mut cfg: C = load_config(common.config.as_deref())?;
    cfg.apply(&Overrides { seed: common.seed, out: common.out.clone() });
    tweak(&mut cfg);
    let hash = experiment_hash(&cfg)?;
    eprintln!("config sha256 {hash}");
    Ok(cfg)
}

fn report_run(label: &str, run: &RunOutcome) {
    let failed = run.rows.iter().filter(|r| !r.error.is_empty()).count();
    println!("{label}: {} rows written to {}", run.rows.len(), run.dir.join(crate::commands::RESULTS_FILE).display());
    if failed > 0 {
        println!("{failed} instance failures recorded as NA");
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Gen(common) => {
            let cfg: GenConfig = effective(common, |_| {})?;
            let out = cmd_gen(&cfg)?;
            println!("wrote {} instances to {}", out.manifest.instances.len(), out.dir.display());
        }
        Command::Solve { common, solver } => {
            let cfg: SolveConfig = effective(common, |c: &mut SolveConfig| {
                if let Some(s) = solver {
                    c.solver = *s;
                }
            })?;
            report_run("solve", &cmd_solve(&cfg)?);
        }
        Command::Sweep { common, solver } => {
            let cfg: SweepConfig = effective(common, |c: &mut SweepConfig| {
                if let Some(s) = solver {
                    c.solver = *s;
                }
            })?;
            let out = cmd_sweep(&cfg)?;
            report_run("sweep", &out.run);
            if let Some((rho, lambda, db)) = out.best {
                println!("best cell: rho={rho} lambda={lambda} nmse_db={db:.3}");
            }
        }
        Command::Train { common, epochs } => {
            let cfg: TrainCommandConfig = effective(common, |c: &mut TrainCommandConfig| {
                if let Some(e) = epochs {
                    c.training.epochs = *e;
                }
            })?;
            let out = cmd_train(&cfg)?;
            println!(
                "trained {} epochs; best epoch {} ({}); checkpoints in {}",
                out.summary.epochs_run,
                out.summary.best_epoch,
                out.summary.best_val_nmse_db.map_or("no validation set".into(), |v| format!("{v:.3} dB")),
                out.dir.display()
            );
        }
        Command::Eval { common, checkpoint, num_unrolls } => {
            let cfg: EvalConfig = effective(common, |c: &mut EvalConfig| {
                if let Some(p) = checkpoint {
                    c.checkpoint = Some(p.clone());
                }
                if let Some(k) = num_unrolls {
                    c.num_unrolls = *k;
                }
            })?;
            report_run("eval", &cmd_eval(&cfg)?);
        }
        Command::Verify { common, suites } => {
            let cfg: VerifyConfig = effective(common, |c: &mut VerifyConfig| {
                if !suites.is_empty() {
                    c.suites = suites.clone();
                }
            })?;
            let report = cmd_verify(&cfg)?;
            for s in &report.suites {
                println!(
                    "{} {}: {} cases, {} violations",
                    if s.passed { "PASS" } else { "FAIL" },
                    s.suite,
                    s.cases,
                    s.violations
                );
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = cli.command.common().threads;
    let result = match threads {
        Some(0) => Err(HarnessError::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(HarnessError::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
