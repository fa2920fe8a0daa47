//! Outer minimization of the regret over the decision set.

use crate::certificate::RegretStatus;
use crate::conic::{Lin, Model, SolverOptions};
use crate::error::{invalid, DrroError, Result};
use crate::newsvendor::{regret_newsvendor, NewsvendorInstance};
use crate::regret::{regret_eval, RegretMode, RegretProblem};
use crate::types::{dot, Polyhedron, WassersteinBall};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub subgradient: Vec<f64>,
    pub status: RegretStatus,
}

/// Value and subgradient of a convex function of the decision.
pub trait RegretOracle: Sync {
    fn eval(&self, theta: &[f64]) -> Result<OracleResult>;
}

fn checked(r: OracleResult) -> Result<OracleResult> {
    if !r.value.is_finite() || r.subgradient.iter().any(|g| !g.is_finite()) {
        return Err(DrroError::NumericalFailure {
            status: "oracle returned a non-finite value".into(),
            r_prim: f64::NAN,
            r_dual: f64::NAN,
        });
    }
    Ok(r)
}

/// Wraps a closure returning `(value, subgradient)`.
pub struct FnOracle<F>(pub F);

impl<F> RegretOracle for FnOracle<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    fn eval(&self, theta: &[f64]) -> Result<OracleResult> {
        let (value, subgradient) = (self.0)(theta);
        checked(OracleResult { value, subgradient, status: RegretStatus::Optimal })
    }
}

/// Exact single-item newsvendor regret.
pub struct NewsvendorOracle {
    pub inst: NewsvendorInstance,
    pub ball: WassersteinBall,
}

impl RegretOracle for NewsvendorOracle {
    fn eval(&self, theta: &[f64]) -> Result<OracleResult> {
        if theta.len() != 1 {
            return invalid("newsvendor decisions are scalar");
        }
        let c = regret_newsvendor(theta[0], &self.inst, &self.ball)?;
        checked(OracleResult { value: c.value, subgradient: c.subgradient, status: c.status })
    }
}

/// General regret through [`regret_eval`].
pub struct ProblemOracle {
    pub prob: RegretProblem,
    pub mode: RegretMode,
}

impl RegretOracle for ProblemOracle {
    fn eval(&self, theta: &[f64]) -> Result<OracleResult> {
        let c = regret_eval(theta, &self.prob, self.mode)?;
        checked(OracleResult { value: c.value, subgradient: c.subgradient, status: c.status })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `θ ← P(θ − c/√t · g)`.
    InvSqrt { c: f64 },
    /// `θ ← P(θ − c/√t · g/‖g‖)`.
    NormalizedInvSqrt { c: f64 },
    /// `θ ← P(θ − c·ratioᵗ · g/‖g‖)`.
    Geometric { c: f64, ratio: f64 },
}

impl StepRule {
    /// `c/√t` with `c` the diameter of the bounding box of `Θ` (1 if unbounded).
    pub fn default_for(theta_set: &Polyhedron) -> Result<StepRule> {
        let (lo, hi) = theta_set.bounding_box()?;
        let diam = lo.iter().zip(&hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
        let c = if diam.is_finite() && diam > 0.0 { diam } else { 1.0 };
        Ok(StepRule::InvSqrt { c })
    }

    fn step(&self, t: usize, g: &[f64]) -> f64 {
        let gn = dot(g, g).sqrt();
        let t = t as f64;
        match *self {
            StepRule::InvSqrt { c } => c / t.sqrt(),
            StepRule::NormalizedInvSqrt { c } => c / t.sqrt() / gn,
            StepRule::Geometric { c, ratio } => c * ratio.powf(t - 1.0) / gn,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub theta: Vec<f64>,
    pub value: f64,
    /// Running best value after each oracle call.
    pub history: Vec<f64>,
    pub status: OptimizeStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizeStatus {
    Converged,
    IterationLimit,
    Stalled,
    /// The method stopped early for a numerical reason.
    Degraded(String),
}

/// Projected subgradient descent returning the best iterate.
pub fn subgradient_descent(
    oracle: &dyn RegretOracle,
    theta0: &[f64],
    theta_set: &Polyhedron,
    steps: usize,
    rule: StepRule,
) -> Result<OptimizeResult> {
    if !theta_set.contains(theta0, 1e-9) {
        return invalid("starting point lies outside the decision set");
    }
    let mut theta = theta0.to_vec();
    let mut best = (f64::INFINITY, theta.clone());
    let mut history = Vec::with_capacity(steps);
    let mut status = OptimizeStatus::IterationLimit;
    for t in 1..=steps.max(1) {
        let r = oracle.eval(&theta)?;
        if r.value < best.0 {
            best = (r.value, theta.clone());
        }
        history.push(best.0);
        if r.subgradient.iter().all(|&g| g == 0.0) {
            status = OptimizeStatus::Converged;
            break;
        }
        let h = rule.step(t, &r.subgradient);
        let next: Vec<f64> = theta.iter().zip(&r.subgradient).map(|(x, g)| x - h * g).collect();
        theta = theta_set.project(&next)?;
    }
    Ok(OptimizeResult { theta: best.1, value: best.0, history, status })
}

/// Center and radius of the largest Euclidean ball inside `poly`.
pub fn chebyshev_center(poly: &Polyhedron) -> Result<(Vec<f64>, f64)> {
    let d = poly.dim();
    let mut m = Model::new();
    let x = m.add_vars(d);
    let r = m.add_nonneg_var();
    for (row, &b) in poly.rows().iter().zip(poly.rhs()) {
        let norm = dot(row, row).sqrt();
        m.add_le0(poly.row_expr(row, &x).with_term(r, norm).with_const(-b));
    }
    m.set_objective(Lin::term(r, -1.0));
    let s = m.solve(&SolverOptions::tight())?;
    Ok((x.iter().map(|&v| s.x[v]).collect(), s.x[r]))
}

/// Default iteration cap of [`cutting_plane`].
pub const CUTTING_PLANE_MAX_ITER: usize = 200;
const STALL_ITERS: usize = 20;
const STALL_IMPROVEMENT: f64 = 1e-7;

/// Localization by Chebyshev centers with level cuts.
///
/// Every query `θ_c` yields `R(θ) ≥ R(θ_c) + gᵀ(θ − θ_c)`, so points with
/// `R(θ) ≤ best` satisfy `gᵀ(θ − θ_c) ≤ best − R(θ_c)`. All cuts are
/// re-tightened whenever the best value improves.
pub fn cutting_plane(
    oracle: &dyn RegretOracle,
    theta_box: &Polyhedron,
    tol: f64,
    max_iter: usize,
) -> Result<(OptimizeResult, Polyhedron)> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let mut cuts: Vec<(Vec<f64>, f64, f64, f64)> = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut history = Vec::new();
    let mut since_improvement = 0;
    let mut localizer = theta_box.clone();
    let mut status = OptimizeStatus::IterationLimit;
    for _ in 0..max_iter {
        let (center, radius) = match chebyshev_center(&localizer) {
            Ok(c) => c,
            Err(DrroError::Unbounded(m)) if best.is_none() => return Err(DrroError::Unbounded(m)),
            Err(e) if best.is_some() => {
                status = OptimizeStatus::Degraded(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        if radius < tol && best.is_some() {
            status = OptimizeStatus::Converged;
            break;
        }
        let r = oracle.eval(&center)?;
        let prev = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if r.value < prev {
            best = Some((r.value, center.clone()));
        }
        let best_v = best.as_ref().unwrap().0;
        history.push(best_v);
        if prev - best_v > STALL_IMPROVEMENT * (1.0 + best_v.abs()) {
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= STALL_ITERS {
                status = OptimizeStatus::Stalled;
                break;
            }
        }
        let gn = dot(&r.subgradient, &r.subgradient).sqrt();
        if gn == 0.0 {
            status = OptimizeStatus::Converged;
            break;
        }
        let a: Vec<f64> = r.subgradient.iter().map(|g| g / gn).collect();
        cuts.push((a.clone(), dot(&a, &center), r.value, gn));
        if radius < tol {
            status = OptimizeStatus::Converged;
            break;
        }
        let mut loc = theta_box.clone();
        for (a, ac, v, gn) in &cuts {
            loc = loc.with_cut(a.clone(), ac + (best_v - v) / gn);
        }
        localizer = loc;
    }
    let (value, theta) = match best {
        Some(b) => b,
        None => return invalid("no iterations were run"),
    };
    Ok((OptimizeResult { theta, value, history, status }, localizer))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BisectionResult {
    pub theta: f64,
    pub value: f64,
    /// Bracket widths, one per iteration.
    pub widths: Vec<f64>,
    pub warning: Option<String>,
}

const MAX_EXPANSIONS: usize = 40;

/// Bisection on the sign of a scalar subgradient.
pub fn bisection_1d(oracle: &dyn RegretOracle, bracket: (f64, f64), tol: f64) -> Result<BisectionResult> {
    let (mut lo, mut hi) = bracket;
    if !(lo < hi) || !(tol > 0.0) {
        return invalid("bracket must satisfy lo < hi and tol > 0");
    }
    let eval = |t: f64| -> Result<OracleResult> {
        let r = oracle.eval(&[t])?;
        if r.subgradient.len() != 1 {
            return invalid("bisection needs a scalar oracle");
        }
        Ok(r)
    };
    let mut at_lo = eval(lo)?;
    let mut at_hi = eval(hi)?;
    let mut expansions = 0;
    while (at_lo.subgradient[0] >= 0.0 || at_hi.subgradient[0] <= 0.0) && expansions < MAX_EXPANSIONS {
        let w = hi - lo;
        expansions += 1;
        if at_lo.subgradient[0] >= 0.0 {
            match eval(lo - w) {
                Ok(r) => {
                    lo -= w;
                    at_lo = r;
                }
                Err(_) => break,
            }
        } else {
            match eval(hi + w) {
                Ok(r) => {
                    hi += w;
                    at_hi = r;
                }
                Err(_) => break,
            }
        }
    }
    if at_lo.subgradient[0] >= 0.0 || at_hi.subgradient[0] <= 0.0 {
        let (theta, value) = if at_lo.value <= at_hi.value { (lo, at_lo.value) } else { (hi, at_hi.value) };
        return Ok(BisectionResult {
            theta,
            value,
            widths: vec![hi - lo],
            warning: Some("no sign change of the subgradient in the bracket".into()),
        });
    }
    let mut widths = vec![hi - lo];
    let mut best = if at_lo.value <= at_hi.value { (lo, at_lo.value) } else { (hi, at_hi.value) };
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        let r = eval(mid)?;
        if r.value <= best.1 {
            best = (mid, r.value);
        }
        let g = r.subgradient[0];
        if g == 0.0 {
            return Ok(BisectionResult { theta: mid, value: r.value, widths, warning: None });
        }
        if g < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        widths.push(hi - lo);
    }
    let mid = 0.5 * (lo + hi);
    let r = eval(mid)?;
    let (theta, value) = if r.value <= best.1 { (mid, r.value) } else { best };
    Ok(BisectionResult { theta, value, widths, warning: None })
}
