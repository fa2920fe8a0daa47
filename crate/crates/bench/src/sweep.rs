//! Radius sweeps comparing ERM, DRO, exact DRRO and relaxed DRRO policies.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use drro_core::{
    column_generation, regret_newsvendor, seeded_regret, solve_dro, solve_drro_newsvendor, solve_drro_relaxed,
    solve_erm, ColumnGenOptions, ColumnGenResult, DrroError, EmpiricalDataset, RegretProblem, Result,
};
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::scenario::{generate_samples, newsvendor_instance, scenario_problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Erm,
    Dro,
    DrroExact,
    DrroRelax,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Erm, Method::Dro, Method::DrroExact, Method::DrroRelax];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Erm => "ERM",
            Method::Dro => "DRO",
            Method::DrroExact => "DRRO-exact",
            Method::DrroRelax => "DRRO-relax",
        })
    }
}

impl FromStr for Method {
    type Err = DrroError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| DrroError::InvalidArgument(format!("unknown method tag {s}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub method: Method,
    pub theta: Vec<f64>,
    pub regret: f64,
    /// `ok`, `bound-pair`, or `error: <message>`.
    pub status: String,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Record wall time. Off by default so output is byte-for-byte reproducible.
    pub timing: bool,
    /// Bisection tolerance of the single-item exact solver.
    pub tol: f64,
    /// Exact solver settings for multi-dimensional decisions.
    pub colgen: ColumnGenOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { workers: None, timing: false, tol: 1e-6, colgen: ColumnGenOptions::default() }
    }
}

/// Relative width below which a regret bracket counts as closed.
pub const BRACKET_RTOL: f64 = 1e-4;

/// Regret of a fixed policy with its status tag.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRegret {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub status: &'static str,
}

impl PolicyRegret {
    fn from_bracket(lower: f64, upper: f64) -> Self {
        let upper = upper.max(lower);
        if upper - lower <= BRACKET_RTOL * (1.0 + lower.abs()) {
            PolicyRegret { value: lower, lower, upper, status: "ok" }
        } else {
            PolicyRegret { value: 0.5 * (lower + upper), lower, upper, status: "bound-pair" }
        }
    }
}

/// Regret bracket for `d ≥ 2`: seeded hill climbing (also started from the
/// best of `comparators`) and `floor` from below, the relaxation from above.
/// The midpoint is reported when the bracket stays open.
pub fn bracket_regret(
    theta: &[f64],
    prob: &RegretProblem,
    comparators: &[Vec<f64>],
    floor: f64,
    opts: ColumnGenOptions,
) -> Result<PolicyRegret> {
    let r = seeded_regret(theta, prob, comparators, opts)?;
    Ok(PolicyRegret::from_bracket(r.value.max(floor), r.upper))
}

/// Exact regret in one dimension, [`bracket_regret`] otherwise.
pub fn policy_regret(
    theta: &[f64],
    config: &ScenarioConfig,
    data: &EmpiricalDataset,
    prob: &RegretProblem,
    opts: ColumnGenOptions,
) -> Result<PolicyRegret> {
    if config.dim() == 1 {
        let inst = newsvendor_instance(config, data)?;
        let v = regret_newsvendor(theta[0], &inst, &prob.ball)?.value;
        return Ok(PolicyRegret { value: v, lower: v, upper: v, status: "ok" });
    }
    bracket_regret(theta, prob, &[], f64::NEG_INFINITY, opts)
}

/// Exact DRRO for `d ≥ 2`. The reported regret is the climbed value at the
/// returned decision, tagged `ok` when it meets the certified lower bound on
/// the optimal regret; otherwise the midpoint of that bound and the
/// relaxation value at the decision.
pub fn exact_drro_multi(prob: &RegretProblem, initial: &[Vec<f64>], opts: ColumnGenOptions) -> Result<(ColumnGenResult, PolicyRegret)> {
    let cg = column_generation(prob, initial, opts)?;
    let closed = cg.value - cg.lower <= opts.tol * (1.0 + cg.value.abs());
    let r = if closed {
        PolicyRegret { value: cg.value, lower: cg.lower, upper: cg.upper, status: "ok" }
    } else {
        PolicyRegret::from_bracket(cg.lower, cg.upper)
    };
    Ok((cg, r))
}

fn timed<T>(timing: bool, f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    let ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    (out, ms)
}

fn rows_for_delta(
    config: &ScenarioConfig,
    data: &EmpiricalDataset,
    erm: &[f64],
    delta: f64,
    opts: &SweepOptions,
) -> Vec<SweepRow> {
    let d = config.dim();
    let failed = |method, ms, e: DrroError| SweepRow {
        delta,
        method,
        theta: vec![f64::NAN; d],
        regret: f64::NAN,
        status: format!("error: {e}"),
        wall_ms: ms,
    };
    let prob = match scenario_problem(config, data, delta) {
        Ok(p) => p,
        Err(e) => return Method::ALL.iter().map(|&m| failed(m, 0.0, e.clone())).collect(),
    };
    let relaxed = timed(opts.timing, || solve_drro_relaxed(&prob).map(|s| s.theta));
    let dro = timed(opts.timing, || {
        solve_dro(&prob.loss, data, &prob.ball, &prob.theta_set, &prob.xi_set).map(|s| s.theta)
    });
    let to_row = |method, theta: Vec<f64>, ms, r: Result<PolicyRegret>| match r {
        Ok(r) => SweepRow { delta, method, theta, regret: r.value, status: r.status.into(), wall_ms: ms },
        Err(e) => SweepRow { theta, ..failed(method, ms, e) },
    };
    let mut rows = Vec::with_capacity(4);
    if d == 1 {
        let exact = timed(opts.timing, || {
            let inst = newsvendor_instance(config, data)?;
            Ok(vec![solve_drro_newsvendor(&inst, &prob.ball, opts.tol)?.0])
        });
        for (method, (theta, ms)) in [
            (Method::Erm, (Ok(erm.to_vec()), 0.0)),
            (Method::Dro, dro),
            (Method::DrroExact, exact),
            (Method::DrroRelax, relaxed),
        ] {
            rows.push(match theta {
                Err(e) => failed(method, ms, e),
                Ok(t) => {
                    let r = policy_regret(&t, config, data, &prob, opts.colgen);
                    to_row(method, t, ms, r)
                }
            });
        }
        return rows;
    }
    let initial: Vec<Vec<f64>> = relaxed.0.iter().cloned().collect();
    let (exact, ms) = timed(opts.timing, || exact_drro_multi(&prob, &initial, opts.colgen));
    let (comparators, floor) = match &exact {
        Ok((cg, _)) => (cg.comparators.clone(), cg.lower),
        Err(_) => (Vec::new(), f64::NEG_INFINITY),
    };
    let bracket = |t: &[f64]| bracket_regret(t, &prob, &comparators, floor, opts.colgen);
    rows.push(to_row(Method::Erm, erm.to_vec(), 0.0, bracket(erm)));
    rows.push(match dro {
        (Ok(t), ms) => {
            let r = bracket(&t);
            to_row(Method::Dro, t, ms, r)
        }
        (Err(e), ms) => failed(Method::Dro, ms, e),
    });
    rows.push(match exact {
        Ok((cg, r)) => to_row(Method::DrroExact, cg.theta, ms, Ok(r)),
        Err(e) => failed(Method::DrroExact, ms, e),
    });
    rows.push(match relaxed {
        (Ok(t), ms) => {
            let r = bracket(&t);
            to_row(Method::DrroRelax, t, ms, r)
        }
        (Err(e), ms) => failed(Method::DrroRelax, ms, e),
    });
    rows
}

/// Runs every method at every radius of the configuration. Rows are ordered
/// by radius, then by method, independent of scheduling.
pub fn run_sweep(config: &ScenarioConfig, opts: &SweepOptions) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let data = generate_samples(config)?;
    let erm = if config.dim() == 1 {
        vec![newsvendor_instance(config, &data)?.erm()]
    } else {
        let prob = scenario_problem(config, &data, 0.0)?;
        solve_erm(&prob.loss, &data, &prob.theta_set)?.theta
    };
    let work = || -> Vec<SweepRow> {
        config
            .delta_grid
            .par_iter()
            .map(|&delta| rows_for_delta(config, &data, &erm, delta, opts))
            .collect::<Vec<_>>()
            .concat()
    };
    match opts.workers {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| DrroError::InvalidArgument(e.to_string()))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let d = rows.iter().map(|r| r.theta.len()).max().unwrap_or(1);
    let io = |e: csv::Error| DrroError::InvalidArgument(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["delta".to_string(), "method".to_string()];
    header.extend((1..=d).map(|j| format!("theta_{j}")));
    header.extend(["regret", "status", "wall_ms"].map(String::from));
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.delta.to_string(), r.method.to_string()];
        rec.extend((0..d).map(|j| r.theta.get(j).copied().unwrap_or(f64::NAN).to_string()));
        rec.extend([r.regret.to_string(), r.status.clone(), r.wall_ms.to_string()]);
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| DrroError::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let bad = |m: String| DrroError::InvalidArgument(format!("csv: {m}"));
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let d = header.iter().filter(|h| h.starts_with("theta_")).count();
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != d + 5 {
            return Err(bad(format!("expected {} fields, got {}", d + 5, rec.len())));
        }
        rows.push(SweepRow {
            delta: num(&rec[0])?,
            method: rec[1].parse()?,
            theta: (0..d).map(|j| num(&rec[2 + j])).collect::<Result<_>>()?,
            regret: num(&rec[d + 2])?,
            status: rec[d + 3].to_string(),
            wall_ms: num(&rec[d + 4])?,
        });
    }
    Ok(rows)
}
