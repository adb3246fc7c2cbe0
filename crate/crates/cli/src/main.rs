//! `growfrag`: sweeps, theorem checks and single-cell solves from the command line.
//!
//! Settings resolve as flag > environment variable > config file > default.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use growfrag_core::experiments::{exit_code, render_report, simulation_limits, write_outputs};
use growfrag_core::extinction::solve_with_diagnostics;
use growfrag_core::simulation::{martingale_check, write_event_log};
use growfrag_core::{
    check_consistency, check_monotonicity, estimate_survival, load_config, principal_eigenpair, run_sweep,
    validate_assumptions, ConfigError, RunConfig, Simulator,
};

#[derive(Parser, Debug)]
#[command(name = "growfrag", version, about = "Extinction and growth of structured cell populations")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// INI file, or `builtin:NAME` for a shipped model.
    #[arg(long, global = true, env = "GROWFRAG_CONFIG")]
    config: Option<String>,
    #[arg(long, global = true, env = "GROWFRAG_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "GROWFRAG_OUT")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "GROWFRAG_THREADS")]
    threads: Option<usize>,
    /// Mass grid size.
    #[arg(long, global = true, env = "GROWFRAG_GRID")]
    grid: Option<usize>,
    /// Monte Carlo trials per cell.
    #[arg(long, global = true, env = "GROWFRAG_TRIALS")]
    trials: Option<usize>,
}

#[derive(Args, Debug, Clone, Copy)]
struct Cell {
    /// Substrate level; defaults to the first in the config.
    #[arg(long)]
    s: Option<f64>,
    /// Death rate; defaults to the first in the config.
    #[arg(long)]
    d: Option<f64>,
    /// Initial mass; defaults to the config value.
    #[arg(long)]
    x0: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the model assumptions over the environment range.
    Validate,
    /// Run the full sweep and write sweep.csv, report.txt and profiles.
    Sweep,
    /// Run the sweep and print the consistency and monotonicity reports.
    Check,
    /// Monte Carlo martingale diagnostic at one cell.
    Martingale(Cell),
    /// Extinction probability profile at one cell.
    Extinction(Cell),
    /// Principal eigenpair at one cell.
    Spectral(Cell),
    /// Survival estimate at one cell.
    Simulate {
        #[command(flatten)]
        cell: Cell,
        /// Write the binary per-trial event log here.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
}

enum Failure {
    Config(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn resolve(common: &Common) -> Result<RunConfig, Failure> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("no configuration given (--config or GROWFRAG_CONFIG)".into()))?;
    let mut cfg = load_config(Path::new(path))?;
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(grid) = common.grid {
        cfg.solver.grid = grid;
    }
    if let Some(trials) = common.trials {
        cfg.simulation.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cell(cfg: &RunConfig, c: &Cell) -> (f64, f64, f64) {
    (
        c.s.unwrap_or(cfg.environment.substrates[0]),
        c.d.unwrap_or(cfg.environment.death_rates[0]),
        c.x0.unwrap_or(cfg.x0),
    )
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let cfg = resolve(&cli.common)?;
    let solver = &cfg.solver;
    let sim = &cfg.simulation;
    let code = match &cli.command {
        Command::Validate => {
            let report = validate_assumptions(&cfg.model, &cfg.environment, solver.probe);
            print!("{report}");
            u8::from(!report.standing())
        }
        Command::Sweep | Command::Check => {
            let result = run_sweep(&cfg);
            let consistency = check_consistency(&result.rows, sim.epsilon_lambda, sim.epsilon_p);
            let mono = check_monotonicity(&result);
            if matches!(cli.command, Command::Sweep) {
                let dir = out_dir(&cli.common);
                write_outputs(&dir, &result, &consistency, &mono).map_err(|e| Failure::Io(e.to_string()))?;
                println!("wrote {} rows to {}", result.rows.len(), dir.join("sweep.csv").display());
            }
            print!("{}", render_report(&result, &consistency, &mono));
            exit_code(&result, &consistency, &mono) as u8
        }
        Command::Martingale(c) => {
            let (s, d, x0) = cell(&cfg, c);
            let spectral = principal_eigenpair(&cfg.model, s, d, solver.grid, solver.eigen_tol, solver.max_iterations);
            let report = martingale_check(
                &cfg.model,
                x0,
                s,
                d,
                &spectral,
                &sim.martingale_times,
                sim.trials,
                sim.seed,
                solver.ode_rtol,
            );
            println!("Lambda = {}  v(x0) = {}  trials = {}", report.lambda, report.expected, report.trials);
            println!("t,mean,std_error,z");
            for c in &report.checkpoints {
                println!("{},{},{},{}", c.time, c.mean, c.std_error, c.z);
            }
            if report.truncated > 0 {
                println!("{} trials stopped by the population guard", report.truncated);
            }
            u8::from(!spectral.converged || report.max_abs_z() > 4.0)
        }
        Command::Extinction(c) => {
            let (s, d, x0) = cell(&cfg, c);
            let sol = solve_with_diagnostics(
                &cfg.model,
                s,
                d,
                solver.grid,
                solver.tol,
                solver.max_generations,
                solver.from_above,
            );
            let path = out_dir(&cli.common).join(format!("extinction_S{s}_D{d}.csv"));
            let mut w = create(&path)?;
            sol.profile.write_csv(&mut w, sol.residual)?;
            w.flush()?;
            println!(
                "p(x0) = {}  generations = {}  state = {}  residual = {:e}",
                sol.profile.at(x0),
                sol.profile.generations,
                sol.profile.state,
                sol.residual
            );
            if let Some(gap) = sol.limits_differ {
                println!("iteration from above differs by {gap:e}");
            }
            println!("profile written to {}", path.display());
            u8::from(!sol.profile.converged())
        }
        Command::Spectral(c) => {
            let (s, d, _) = cell(&cfg, c);
            let sol = principal_eigenpair(&cfg.model, s, d, solver.grid, solver.eigen_tol, solver.max_iterations);
            let path = out_dir(&cli.common).join(format!("spectral_S{s}_D{d}.csv"));
            let mut w = create(&path)?;
            sol.write_csv(&mut w)?;
            w.flush()?;
            println!(
                "Lambda = {}  residuals = {:e} / {:e}  converged = {}",
                sol.lambda, sol.primal_residual, sol.adjoint_residual, sol.converged
            );
            println!("eigenvectors written to {}", path.display());
            u8::from(!sol.converged)
        }
        Command::Simulate { cell: c, event_log } => {
            let (s, d, x0) = cell(&cfg, c);
            let limits = simulation_limits(&cfg);
            let est = estimate_survival(&cfg.model, x0, s, d, sim.trials, limits, sim.seed, solver.ode_rtol);
            println!(
                "survival = {} [{}, {}]  trials = {}  censored (generation, population, time, immortal) = {:?}",
                est.estimate, est.lower, est.upper, est.trials, est.censored
            );
            if let Some(path) = event_log {
                let simulator = Simulator::new(&cfg.model, s, d, solver.ode_rtol);
                let mut w = create(path)?;
                write_event_log(&simulator, x0, &limits, sim.trials, sim.seed, &mut w)?;
                w.flush()?;
            }
            0
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
