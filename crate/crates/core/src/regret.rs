//! Regret evaluation for general max-affine losses.
//!
//! `R(θ) = sup_β sup_P E_P[ℓ(θ,X) − ℓ(β,X)]` is a bilinear program in
//! `(β, γ)`. It is attacked by alternating convex solves (hill climbing),
//! optional random restarts, and a brute-force grid lower bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::certificate::{RegretCertificate, RegretStatus};
use crate::conic::{Lin, Model, SolverOptions};
use crate::engine::{
    add_perspective_cost, check_inputs, extract_worst_case_distribution, repair,
    worst_case_expectation, CompositeLoss, GAMMA_EPS,
};
use crate::erm::solve_erm_with;
use crate::error::{invalid, DrroError, Result};
use crate::relaxation::relax_regret_eval;
use crate::types::{dot, EmpiricalDataset, MaxAffineLoss, Polyhedron, WassersteinBall};

/// Everything that defines `R(·)` apart from the decision.
#[derive(Debug, Clone)]
pub struct RegretProblem {
    pub loss: MaxAffineLoss,
    pub data: EmpiricalDataset,
    pub ball: WassersteinBall,
    pub theta_set: Polyhedron,
    pub xi_set: Polyhedron,
    pub opts: SolverOptions,
    /// Seed for multistart sampling.
    pub seed: u64,
}

impl RegretProblem {
    pub fn new(
        loss: MaxAffineLoss,
        data: EmpiricalDataset,
        ball: WassersteinBall,
        theta_set: Polyhedron,
        xi_set: Polyhedron,
    ) -> Result<Self> {
        if theta_set.dim() != loss.dim() {
            return invalid("decision set dimension differs from loss");
        }
        check_inputs(loss.n(), &data, &xi_set)?;
        Ok(RegretProblem { loss, data, ball, theta_set, xi_set, opts: SolverOptions::tight(), seed: 0 })
    }

    pub fn with_ball(&self, ball: WassersteinBall) -> Self {
        RegretProblem { ball, ..self.clone() }
    }

    /// ERM decision, the default comparator start.
    pub fn erm(&self) -> Result<Vec<f64>> {
        Ok(solve_erm_with(&self.loss, &self.data, &self.theta_set, &self.opts)?.theta)
    }

    /// Objective of the bilinear program at a feasible point.
    pub fn objective(&self, theta: &[f64], beta: &[f64], gamma: &[Vec<f64>], q: &[Vec<Vec<f64>>]) -> f64 {
        CompositeLoss::regret_difference(&self.loss, theta, beta).objective(&self.data, gamma, q)
    }

    /// Search box for comparator starts and grids: the bounding box of `Θ`,
    /// truncated around the ERM decision where `Θ` is unbounded.
    pub fn search_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut lo, mut hi) = self.theta_set.bounding_box()?;
        if lo.iter().chain(&hi).all(|v| v.is_finite()) {
            return Ok((lo, hi));
        }
        let erm = self.erm()?;
        let n = self.data.len() as f64;
        let reach = if self.ball.p == 1.0 { n * self.ball.delta } else { n.powf(1.0 / self.ball.p) * self.ball.delta };
        let spread = (0..self.data.dim())
            .map(|j| {
                let c = self.data.column(j);
                let (a, b) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                b - a + c.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0f64, f64::max);
        let span = spread + reach + 1.0;
        for j in 0..lo.len() {
            if !lo[j].is_finite() {
                lo[j] = erm[j] - span;
            }
            if !hi[j].is_finite() {
                hi[j] = erm[j] + span;
            }
        }
        Ok((lo, hi))
    }
}

/// Feasible point of the bilinear regret program.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearProgramState {
    pub beta: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub q: Vec<Vec<Vec<f64>>>,
    /// Epigraph values `t_ik = max_m [γ_ik(a_mᵀξ̂_i + b_mᵀβ + c_m) + ...]`.
    pub t: Vec<Vec<f64>>,
    /// Products `γ_ik β`, the lifting used by the relaxation.
    pub z: Vec<Vec<Vec<f64>>>,
    pub objective: f64,
    /// Budget multiplier from the last `β`-fixed solve.
    pub lambda: f64,
}

impl BilinearProgramState {
    fn assemble(prob: &RegretProblem, theta: &[f64], beta: Vec<f64>, gamma: Vec<Vec<f64>>, q: Vec<Vec<Vec<f64>>>, lambda: f64) -> Self {
        let loss = &prob.loss;
        let mut t = Vec::with_capacity(gamma.len());
        let mut z = Vec::with_capacity(gamma.len());
        for (i, xi) in prob.data.points().iter().enumerate() {
            let mut ti = Vec::new();
            let mut zi = Vec::new();
            for k in 0..loss.num_pieces() {
                let g = gamma[i][k];
                let v = (0..loss.num_pieces())
                    .map(|m| g * loss.piece(m, &beta, xi) + dot(&loss.slope(m, &beta), &q[i][k]))
                    .fold(f64::NEG_INFINITY, f64::max);
                ti.push(v);
                zi.push(beta.iter().map(|b| g * b).collect());
            }
            t.push(ti);
            z.push(zi);
        }
        let objective = prob.objective(theta, &beta, &gamma, &q);
        BilinearProgramState { beta, gamma, q, t, z, objective, lambda }
    }
}

/// Trace of a hill-climbing run.
#[derive(Debug, Clone)]
pub struct HillClimbResult {
    pub state: BilinearProgramState,
    /// Objective after each full round (index 0 is after the first `β`-fixed solve).
    pub history: Vec<f64>,
}

const MAX_ROUNDS: usize = 50;
const MIN_INCREASE: f64 = 1e-8;

/// Solves for `(γ, q)` with `β` fixed.
pub(crate) fn step_beta_fixed(prob: &RegretProblem, theta: &[f64], beta: &[f64]) -> Result<BilinearProgramState> {
    let comp = CompositeLoss::regret_difference(&prob.loss, theta, beta);
    let sol = worst_case_expectation(&comp, &prob.data, &prob.ball, &prob.xi_set, &prob.opts)?;
    Ok(BilinearProgramState::assemble(prob, theta, beta.to_vec(), sol.gamma, sol.q, sol.lambda))
}

/// Solves for `(β, q, t)` with `γ` fixed. With bilinear terms `q` is held
/// fixed as well, since `(d⊙β)ᵀq` would otherwise be bilinear.
fn step_gamma_fixed(prob: &RegretProblem, theta: &[f64], cur: &BilinearProgramState) -> Result<BilinearProgramState> {
    let loss = &prob.loss;
    let n = loss.n();
    let d = loss.dim();
    let kk = loss.num_pieces();
    let nn = prob.data.len();
    let inv_n = 1.0 / nn as f64;
    let free_q = !loss.has_bilinear() && prob.ball.delta > 0.0;
    let mut m = Model::new();
    let beta = m.add_vars(d);
    prob.theta_set.constrain(&mut m, &beta);
    let mut obj = Lin::zero();
    let mut budget = Lin::zero();
    let mut qvars: Vec<Vec<Option<Vec<usize>>>> = vec![vec![None; kk]; nn];
    for (i, xi) in prob.data.points().iter().enumerate() {
        for k in 0..kk {
            let g = cur.gamma[i][k];
            let alpha = loss.slope(k, theta);
            obj.add_const(-inv_n * g * (dot(&alpha, xi) + loss.intercept(k, theta)));
            let movable = free_q && (g > GAMMA_EPS || prob.ball.p == 1.0);
            let q: Vec<Lin> = if movable {
                let qv = m.add_vars(n);
                for j in 0..n {
                    obj.add_term(qv[j], -inv_n * alpha[j]);
                }
                for (row, &r) in prob.xi_set.rows().iter().zip(prob.xi_set.rhs()) {
                    let mut e = Lin::constant(g * (dot(row, xi) - r));
                    for j in 0..n {
                        e.add_term(qv[j], row[j]);
                    }
                    m.add_le0(e);
                }
                let ql: Vec<Lin> = qv.iter().map(|&v| Lin::var(v)).collect();
                let term = add_perspective_cost(&mut m, &prob.ball, Lin::constant(g), &ql)?;
                budget.add_lin(&term.cost, 1.0);
                qvars[i][k] = Some(qv);
                ql
            } else {
                let fixed = if free_q { vec![0.0; n] } else { cur.q[i][k].clone() };
                obj.add_const(-inv_n * dot(&alpha, &fixed));
                fixed.iter().map(|&v| Lin::constant(v)).collect()
            };
            let t = m.add_var();
            obj.add_term(t, inv_n);
            for mm in 0..kk {
                // γ(a_mᵀξ + b_mᵀβ + c_m + (d_m⊙β)ᵀξ) + (a_m + d_m⊙β)ᵀq
                let mut e = Lin::constant(g * (dot(&loss.a()[mm], xi) + loss.c()[mm]));
                for j in 0..d {
                    e.add_term(beta[j], g * loss.b()[mm][j]);
                }
                for j in 0..n {
                    e.add_lin(&q[j], loss.a()[mm][j]);
                }
                if loss.has_bilinear() {
                    for j in 0..n {
                        let qj = q[j].constant;
                        e.add_term(beta[j], loss.d()[mm][j] * (g * xi[j] + qj));
                    }
                }
                m.add_le(e, &Lin::var(t));
            }
        }
    }
    if free_q {
        m.add_le0(budget.with_const(-(nn as f64) * prob.ball.delta.powf(prob.ball.p)));
    }
    m.set_objective(obj);
    let sol = m.solve(&prob.opts)?;
    let beta_v: Vec<f64> = beta.iter().map(|&v| sol.x[v]).collect();
    let beta_v = prob.theta_set.project(&beta_v)?;
    let mut gamma = cur.gamma.clone();
    let mut q = cur.q.clone();
    for i in 0..nn {
        for k in 0..kk {
            if let Some(qv) = &qvars[i][k] {
                q[i][k] = qv.iter().map(|&v| sol.x[v]).collect();
            } else if free_q {
                q[i][k] = vec![0.0; n];
            }
        }
    }
    repair(&mut gamma, &mut q, &prob.ball, true);
    Ok(BilinearProgramState::assemble(prob, theta, beta_v, gamma, q, cur.lambda))
}

/// Alternating maximization from `beta_init` (the ERM decision when `None`).
pub fn hill_climb(theta: &[f64], prob: &RegretProblem, beta_init: Option<&[f64]>) -> Result<HillClimbResult> {
    if theta.len() != prob.loss.dim() {
        return invalid("decision has wrong dimension");
    }
    let beta0 = match beta_init {
        Some(b) => {
            if !prob.theta_set.contains(b, 1e-7) {
                return invalid("initial comparator lies outside the decision set");
            }
            b.to_vec()
        }
        None => prob.erm()?,
    };
    climb(theta, prob, &beta0, MAX_ROUNDS)
}

pub(crate) fn climb(theta: &[f64], prob: &RegretProblem, beta0: &[f64], max_rounds: usize) -> Result<HillClimbResult> {
    let mut state = step_beta_fixed(prob, theta, beta0)?;
    let mut history = vec![state.objective];
    for _ in 0..max_rounds {
        let before = state.objective;
        match step_gamma_fixed(prob, theta, &state) {
            Ok(c) if c.objective > state.objective => state = c,
            Ok(_) => {}
            Err(DrroError::NumericalFailure { .. }) if history.len() > 1 => break,
            Err(e) => return Err(e),
        }
        match step_beta_fixed(prob, theta, &state.beta) {
            Ok(c) if c.objective > state.objective => state = c,
            Ok(_) => {}
            Err(DrroError::NumericalFailure { .. }) if history.len() > 1 => break,
            Err(e) => return Err(e),
        }
        history.push(state.objective);
        if state.objective - before < MIN_INCREASE {
            break;
        }
    }
    Ok(HillClimbResult { state, history })
}

/// Compass search on `β ↦ sup_P E_P[ℓ(θ,X) − ℓ(β,X)]`, accepting only
/// improvements. Escapes stationary points of the alternating scheme where
/// neither block can improve alone.
pub fn polish(theta: &[f64], prob: &RegretProblem, state: BilinearProgramState) -> Result<BilinearProgramState> {
    let (lo, hi) = prob.search_box()?;
    let width = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0f64, f64::max);
    let mut step = (0.05 * width).max(1e-3);
    let mut best = state;
    let mut evals = 0;
    while evals < POLISH_MAX_EVALS {
        let scale = 1.0 + best.beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if step < 1e-9 * scale {
            break;
        }
        let mut improved = false;
        'dirs: for j in 0..best.beta.len() {
            for sign in [1.0, -1.0] {
                let mut cand = best.beta.clone();
                cand[j] += sign * step;
                let cand = prob.theta_set.project(&cand)?;
                if cand.iter().zip(&best.beta).all(|(a, b)| (a - b).abs() < 1e-15 * scale) {
                    continue;
                }
                evals += 1;
                let next = step_beta_fixed(prob, theta, &cand)?;
                if next.objective > best.objective + 1e-13 * (1.0 + best.objective.abs()) {
                    best = next;
                    improved = true;
                    break 'dirs;
                }
            }
        }
        if improved {
            step *= 2.0;
        } else {
            step *= 0.5;
        }
    }
    Ok(best)
}

const POLISH_MAX_EVALS: usize = 400;

/// Danskin subgradient `(1/N) ΣΣ [γ_ik b_k + d_k⊙(γ_ik ξ̂_i + q_ik)]`.
pub fn regret_subgradient(prob: &RegretProblem, state: &BilinearProgramState) -> Vec<f64> {
    let loss = &prob.loss;
    let d = loss.dim();
    let mut g = vec![0.0; d];
    for (i, xi) in prob.data.points().iter().enumerate() {
        for k in 0..loss.num_pieces() {
            let gam = state.gamma[i][k];
            for j in 0..d {
                g[j] += gam * loss.b()[k][j];
            }
            if loss.has_bilinear() {
                for j in 0..d {
                    g[j] += loss.d()[k][j] * (gam * xi[j] + state.q[i][k][j]);
                }
            }
        }
    }
    let n = prob.data.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegretMode {
    HillClimb,
    /// ERM start plus this many seeded random starts.
    Multistart(usize),
    /// Hill climb plus a grid lower bound, paired with the relaxation upper bound.
    GridCertified { points_per_dim: usize },
}

/// Default number of random restarts.
pub const DEFAULT_MULTISTART: usize = 8;

fn certificate(prob: &RegretProblem, theta: &[f64], state: &BilinearProgramState, status: RegretStatus) -> Result<RegretCertificate> {
    let sol = crate::types::WorstCaseSolution {
        value: state.objective,
        gamma: state.gamma.clone(),
        q: state.q.clone(),
        lambda: state.lambda,
    };
    let dist = extract_worst_case_distribution(&sol, &prob.data, &prob.xi_set)?;
    let _ = theta;
    Ok(RegretCertificate {
        value: state.objective,
        beta_star: state.beta.clone(),
        side: None,
        worst_case: vec![dist],
        lambda: state.lambda,
        status,
        subgradient: regret_subgradient(prob, state),
    })
}

/// Uniform starts in the search box, projected onto `Θ`.
pub fn random_starts(prob: &RegretProblem, k: usize) -> Result<Vec<Vec<f64>>> {
    let (lo, hi) = prob.search_box()?;
    let mut rng = ChaCha8Rng::seed_from_u64(prob.seed);
    (0..k)
        .map(|_| {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(&a, &b)| if b > a { rng.gen_range(a..=b) } else { a }).collect();
            prob.theta_set.project(&x)
        })
        .collect()
}

fn best_of(runs: Vec<Result<HillClimbResult>>) -> Result<BilinearProgramState> {
    let mut best: Option<BilinearProgramState> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(h) => {
                if best.as_ref().map_or(true, |b| h.state.objective > b.objective) {
                    best = Some(h.state);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap())
}

/// Evaluates `R(θ)` in the requested mode.
pub fn regret_eval(theta: &[f64], prob: &RegretProblem, mode: RegretMode) -> Result<RegretCertificate> {
    match mode {
        RegretMode::HillClimb => {
            let h = hill_climb(theta, prob, None)?;
            let state = polish(theta, prob, h.state)?;
            certificate(prob, theta, &state, RegretStatus::LocalOnly)
        }
        RegretMode::Multistart(k) => {
            let mut starts = vec![prob.erm()?];
            starts.extend(random_starts(prob, k)?);
            let runs: Vec<_> = starts
                .par_iter()
                .map(|b| {
                    let h = hill_climb(theta, prob, Some(b))?;
                    let history = h.history;
                    Ok(HillClimbResult { state: polish(theta, prob, h.state)?, history })
                })
                .collect();
            let best = best_of(runs)?;
            certificate(prob, theta, &best, RegretStatus::LocalOnly)
        }
        RegretMode::GridCertified { points_per_dim } => {
            let d = prob.loss.dim();
            if d > 3 {
                return Err(DrroError::UnsupportedConfiguration(format!(
                    "grid certification refuses decision dimension {d} > 3"
                )));
            }
            let h = hill_climb(theta, prob, None)?;
            let grid = grid_points(prob, points_per_dim)?;
            let (lower, beta) = lower_bound_with_argmax(theta, prob, &grid)?;
            let mut state = polish(theta, prob, h.state)?;
            if lower > state.objective {
                state = polish(theta, prob, step_beta_fixed(prob, theta, &beta)?)?;
            }
            let upper = if prob.loss.has_bilinear() {
                f64::INFINITY
            } else {
                relax_regret_eval(theta, prob)?.objective
            };
            let lower = state.objective.max(lower);
            certificate(prob, theta, &state, RegretStatus::BoundPair { lower, upper })
        }
    }
}

/// Regular grid over the search box with `k` points per coordinate.
pub fn grid_points(prob: &RegretProblem, k: usize) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return invalid("grid needs at least one point per coordinate");
    }
    let (lo, hi) = prob.search_box()?;
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(&hi)
        .map(|(&a, &b)| {
            if k == 1 {
                vec![0.5 * (a + b)]
            } else {
                (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
            }
        })
        .collect();
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for axis in &axes {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    Ok(pts.into_iter().filter(|p| prob.theta_set.contains(p, 1e-9)).collect())
}

fn lower_bound_with_argmax(theta: &[f64], prob: &RegretProblem, grid: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    if grid.is_empty() {
        return invalid("comparator grid is empty");
    }
    if let Some(bad) = grid.iter().find(|b| !prob.theta_set.contains(b, 1e-7)) {
        return invalid(format!("grid point {bad:?} lies outside the decision set"));
    }
    let vals: Vec<Result<f64>> = grid
        .par_iter()
        .map(|beta| {
            let comp = CompositeLoss::regret_difference(&prob.loss, theta, beta);
            worst_case_expectation(&comp, &prob.data, &prob.ball, &prob.xi_set, &prob.opts).map(|s| s.value)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, grid[0].clone());
    for (v, b) in vals.into_iter().zip(grid) {
        let v = v?;
        if v > best.0 {
            best = (v, b.clone());
        }
    }
    Ok(best)
}

/// `max_{β ∈ grid} sup_P E_P[ℓ(θ,X) − ℓ(β,X)]`, a certified lower bound on `R(θ)`.
pub fn regret_lower_bound_bruteforce(theta: &[f64], prob: &RegretProblem, grid: &[Vec<f64>]) -> Result<f64> {
    Ok(lower_bound_with_argmax(theta, prob, grid)?.0)
}

/// Worst-case expectation of the pointwise regret `ℓ(θ,x) − inf_β ℓ(β,x)`,
/// supplied in max-affine form.
pub fn ex_post_regret(
    theta: &[f64],
    regret_loss: &MaxAffineLoss,
    data: &EmpiricalDataset,
    ball: &WassersteinBall,
    xi_set: &Polyhedron,
) -> Result<f64> {
    let comp = CompositeLoss::from_loss(regret_loss, theta);
    Ok(worst_case_expectation(&comp, data, ball, xi_set, &SolverOptions::tight())?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Norm;

    fn newsvendor(b: f64, s: f64, xs: &[f64], p: f64, delta: f64) -> RegretProblem {
        let loss = MaxAffineLoss::new(
            vec![vec![0.0], vec![-s]],
            vec![vec![b - s], vec![b]],
            vec![0.0, 0.0],
            None,
        )
        .unwrap();
        RegretProblem::new(
            loss,
            EmpiricalDataset::from_scalars(xs).unwrap(),
            WassersteinBall::new(p, Norm::L2, delta).unwrap(),
            Polyhedron::nonneg(1),
            Polyhedron::nonneg(1),
        )
        .unwrap()
    }

    #[test]
    fn zero_radius_gives_erm_gap_in_one_round() {
        let prob = newsvendor(0.5, 2.0, &[1.0, 3.0, 4.0, 8.0], 2.0, 0.0);
        let theta = [1.0];
        let h = hill_climb(&theta, &prob, None).unwrap();
        let erm = prob.erm().unwrap();
        let gap = prob.loss.empirical_mean(&theta, &prob.data).unwrap()
            - prob.loss.empirical_mean(&erm, &prob.data).unwrap();
        assert!((h.history[0] - gap).abs() < 1e-7, "{} vs {gap}", h.history[0]);
        assert!((h.state.objective - gap).abs() < 1e-7, "{:?} {gap}", h.history);
    }

    #[test]
    fn history_is_monotone() {
        let prob = newsvendor(0.3, 2.0, &[1.0, 3.0, 4.0, 8.0], 2.0, 1.5);
        let h = hill_climb(&[5.0], &prob, Some(&[0.5])).unwrap();
        assert!(h.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn grid_is_inside_decision_set() {
        let prob = newsvendor(0.3, 2.0, &[1.0, 3.0], 1.0, 1.0);
        let g = grid_points(&prob, 11).unwrap();
        assert_eq!(g.len(), 11);
        assert!(g.iter().all(|p| p[0] >= 0.0));
    }

    #[test]
    fn ex_post_single_sample() {
        let prob = newsvendor(0.3, 2.0, &[4.0], 2.0, 0.0);
        let r = MaxAffineLoss::new(
            vec![vec![-0.3], vec![1.7]],
            vec![vec![0.3], vec![-1.7]],
            vec![0.0, 0.0],
            None,
        )
        .unwrap();
        let v = ex_post_regret(&[4.0], &r, &prob.data, &prob.ball, &prob.xi_set).unwrap();
        assert!(v.abs() < 1e-12);
        let v = ex_post_regret(&[6.0], &r, &prob.data, &prob.ball, &prob.xi_set).unwrap();
        assert!((v - 0.6).abs() < 1e-12);
    }
}
