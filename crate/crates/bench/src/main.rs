use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use drro_bench::config::ScenarioConfig;
use drro_bench::profit::{heatmap_erm_vs_dro, heatmap_grid};
use drro_bench::scenario::{fit_gaussian, generate_samples, newsvendor_instance, scenario_problem};
use drro_bench::sweep::{run_sweep, write_sweep_csv, SweepOptions};
use drro_bench::table::{performance_table, write_table_csv};
use drro_core::{
    regret_eval, solve_dro, solve_drro_newsvendor, solve_drro_relaxed, solve_erm, DrroError, RegretMode,
};

#[derive(Parser)]
#[command(name = "drro", about = "Wasserstein distributionally robust regret optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the radius grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Bisection tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    HillClimb,
    Multistart,
    Grid,
}

#[derive(Subcommand)]
enum Command {
    /// Empirical risk minimizer.
    Erm(Common),
    /// Wasserstein DRO decision per radius.
    Dro(Common),
    /// Exact single-item DRRO decision per radius.
    DrroNewsvendor(Common),
    /// Relaxed DRRO decision per radius.
    DrroRelax(Common),
    /// Regret of a given decision per radius.
    RegretEval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Multistart)]
        mode: Mode,
        /// Restarts for multistart, points per coordinate for grid.
        #[arg(long, default_value_t = 8)]
        k: usize,
    },
    /// All policies over the radius grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Record wall time per row.
        #[arg(long)]
        timing: bool,
    },
    /// ERM-vs-DRO expected profit over Gaussian demand models.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 41)]
        grid: usize,
    },
    /// Worst-case, best-case and regret report at one radius.
    Table(Common),
    /// Sweep of the two-item scenario (default scenario when no config is given).
    TwoItem {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        timing: bool,
    },
}

enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
}

impl From<DrroError> for Failure {
    fn from(e: DrroError) -> Self {
        match e {
            DrroError::InvalidArgument(_) => Failure::Config(e.into()),
            _ => Failure::Solver(e.into()),
        }
    }
}

fn load(common: &Common, fallback: Option<ScenarioConfig>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::Config)?;
            ScenarioConfig::from_toml(&text)?
        }
        (None, Some(cfg)) => cfg,
        (None, None) => return Err(Failure::Config(anyhow::anyhow!("--config is required"))),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(d) = &common.delta {
        cfg.delta_grid = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(common: &Common) -> Result<Box<dyn Write>, Failure> {
    match &common.out {
        Some(p) => Ok(Box::new(
            File::create(p).with_context(|| format!("creating {}", p.display())).map_err(Failure::Config)?,
        )),
        None => Ok(Box::new(io::stdout())),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Erm(c) => {
            let cfg = load(&c, None)?;
            let data = generate_samples(&cfg)?;
            let prob = scenario_problem(&cfg, &data, 0.0)?;
            let erm = solve_erm(&prob.loss, &data, &prob.theta_set)?;
            println!("theta={} value={}", fmt_vec(&erm.theta), erm.value);
        }
        Command::Dro(c) => {
            let cfg = load(&c, None)?;
            let data = generate_samples(&cfg)?;
            for &delta in &cfg.delta_grid {
                let prob = scenario_problem(&cfg, &data, delta)?;
                let s = solve_dro(&prob.loss, &data, &prob.ball, &prob.theta_set, &prob.xi_set)?;
                println!("delta={delta} theta={} worst_case={}", fmt_vec(&s.theta), s.value);
            }
        }
        Command::DrroNewsvendor(c) => {
            let cfg = load(&c, None)?;
            let data = generate_samples(&cfg)?;
            let inst = newsvendor_instance(&cfg, &data)?;
            for &delta in &cfg.delta_grid {
                let (theta, cert) = solve_drro_newsvendor(&inst, &cfg.ball_for(delta)?, c.tol)?;
                println!("delta={delta} theta={theta} regret={}", cert.value);
            }
        }
        Command::DrroRelax(c) => {
            let cfg = load(&c, None)?;
            let data = generate_samples(&cfg)?;
            for &delta in &cfg.delta_grid {
                let s = solve_drro_relaxed(&scenario_problem(&cfg, &data, delta)?)?;
                println!("delta={delta} theta={} relaxed_regret={}", fmt_vec(&s.theta), s.objective);
            }
        }
        Command::RegretEval { common, theta, mode, k } => {
            let cfg = load(&common, None)?;
            let data = generate_samples(&cfg)?;
            let mode = match mode {
                Mode::HillClimb => RegretMode::HillClimb,
                Mode::Multistart => RegretMode::Multistart(k),
                Mode::Grid => RegretMode::GridCertified { points_per_dim: k },
            };
            for &delta in &cfg.delta_grid {
                let cert = regret_eval(&theta, &scenario_problem(&cfg, &data, delta)?, mode)?;
                println!(
                    "delta={delta} regret={} beta={} status={:?}",
                    cert.value,
                    fmt_vec(&cert.beta_star),
                    cert.status
                );
            }
        }
        Command::Sweep { common, timing } => sweep(&common, timing, None)?,
        Command::TwoItem { common, timing } => {
            let fallback = ScenarioConfig::two_item(100, 42, (1..=10).map(f64::from).collect());
            sweep(&common, timing, Some(fallback))?
        }
        Command::Heatmap { common, grid } => {
            let cfg = load(&common, None)?;
            let delta = *cfg.delta_grid.last().ok_or_else(|| Failure::Config(anyhow::anyhow!("empty radius grid")))?;
            let data = generate_samples(&cfg)?;
            let inst = newsvendor_instance(&cfg, &data)?;
            let prob = scenario_problem(&cfg, &data, delta)?;
            let dro = solve_dro(&prob.loss, &data, &prob.ball, &prob.theta_set, &prob.xi_set)?.theta[0];
            let reference = fit_gaussian(&data);
            let rows = heatmap_erm_vs_dro(
                inst.b(),
                inst.s(),
                reference,
                delta,
                inst.erm(),
                dro,
                &heatmap_grid(reference, delta, grid),
            );
            let mut w = csv::Writer::from_writer(output(&common)?);
            for r in &rows {
                w.serialize(r).map_err(|e| Failure::Solver(e.into()))?;
            }
            w.flush().map_err(|e| Failure::Solver(e.into()))?;
        }
        Command::Table(c) => {
            let cfg = load(&c, None)?;
            let delta = *cfg.delta_grid.last().ok_or_else(|| Failure::Config(anyhow::anyhow!("empty radius grid")))?;
            let rows = performance_table(&cfg, delta, c.tol)?;
            write_table_csv(&rows, output(&c)?)?;
        }
    }
    Ok(())
}

fn sweep(common: &Common, timing: bool, fallback: Option<ScenarioConfig>) -> Result<(), Failure> {
    let cfg = load(common, fallback)?;
    let opts = SweepOptions { workers: common.workers, timing, tol: common.tol, ..SweepOptions::default() };
    let rows = run_sweep(&cfg, &opts)?;
    write_sweep_csv(&rows, output(common)?)?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("invalid configuration: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(3)
        }
    }
}
