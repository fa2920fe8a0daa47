//! Worst-case expectation over a Wasserstein ball for losses of the form
//! `max_k [α_kᵀx + κ_k − max_m (g_kmᵀx + h_km)]`.

use crate::conic::{Lin, Model, RowId, SolverOptions};
use crate::error::{invalid, DrroError, Result};
use crate::types::{
    dot, DiscreteDistribution, EmpiricalDataset, MaxAffineLoss, Norm, Polyhedron,
    WassersteinBall, WorstCaseSolution,
};

/// Affine function `gᵀx + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub g: Vec<f64>,
    pub h: f64,
}

impl Affine {
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.g, x) + self.h
    }
}

/// One concave piece `αᵀx + κ − max_m sub_m(x)`; an empty `sub` means no subtrahend.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcavePiece {
    pub alpha: Vec<f64>,
    pub kappa: f64,
    pub sub: Vec<Affine>,
}

impl ConcavePiece {
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.alpha, x) + self.kappa - self.sub_max(x)
    }

    fn sub_max(&self, x: &[f64]) -> f64 {
        if self.sub.is_empty() {
            0.0
        } else {
            self.sub.iter().map(|s| s.eval(x)).fold(f64::NEG_INFINITY, f64::max)
        }
    }

    /// Perspective `γ·piece(ξ + q/γ)`, read as its upper limit when `γ = 0`.
    pub fn perspective(&self, gamma: f64, xi: &[f64], q: &[f64]) -> f64 {
        let lin = gamma * (dot(&self.alpha, xi) + self.kappa) + dot(&self.alpha, q);
        let sub = if self.sub.is_empty() {
            0.0
        } else {
            self.sub
                .iter()
                .map(|s| gamma * s.eval(xi) + dot(&s.g, q))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        lin - sub
    }
}

/// Pointwise maximum of concave pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    pub pieces: Vec<ConcavePiece>,
}

impl CompositeLoss {
    pub fn new(pieces: Vec<ConcavePiece>) -> Result<Self> {
        if pieces.is_empty() {
            return invalid("composite loss needs at least one piece");
        }
        let n = pieces[0].alpha.len();
        if pieces.iter().any(|p| p.alpha.len() != n || p.sub.iter().any(|s| s.g.len() != n)) {
            return invalid("composite pieces must share the dimension");
        }
        Ok(CompositeLoss { pieces })
    }

    /// `ℓ(θ,·) − ℓ(β,·)` for a max-affine loss.
    pub fn regret_difference(loss: &MaxAffineLoss, theta: &[f64], beta: &[f64]) -> Self {
        let sub: Vec<Affine> = (0..loss.num_pieces())
            .map(|m| Affine { g: loss.slope(m, beta), h: loss.intercept(m, beta) })
            .collect();
        let pieces = (0..loss.num_pieces())
            .map(|k| ConcavePiece {
                alpha: loss.slope(k, theta),
                kappa: loss.intercept(k, theta),
                sub: sub.clone(),
            })
            .collect();
        CompositeLoss { pieces }
    }

    /// `ℓ(θ,·)` itself (affine pieces, no subtrahend).
    pub fn from_loss(loss: &MaxAffineLoss, theta: &[f64]) -> Self {
        let pieces = (0..loss.num_pieces())
            .map(|k| ConcavePiece {
                alpha: loss.slope(k, theta),
                kappa: loss.intercept(k, theta),
                sub: Vec::new(),
            })
            .collect();
        CompositeLoss { pieces }
    }

    /// `−ℓ(θ,·)` as a single concave piece.
    pub fn negated_loss(loss: &MaxAffineLoss, theta: &[f64]) -> Self {
        let sub = (0..loss.num_pieces())
            .map(|m| Affine { g: loss.slope(m, theta), h: loss.intercept(m, theta) })
            .collect();
        CompositeLoss {
            pieces: vec![ConcavePiece { alpha: vec![0.0; loss.n()], kappa: 0.0, sub }],
        }
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].alpha.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.pieces.iter().map(|p| p.eval(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut val = f64::NEG_INFINITY;
        for (k, p) in self.pieces.iter().enumerate() {
            let v = p.eval(x);
            if v > val {
                val = v;
                best = k;
            }
        }
        best
    }

    /// Objective of the finite program at `(γ, q)`.
    pub fn objective(&self, data: &EmpiricalDataset, gamma: &[Vec<f64>], q: &[Vec<Vec<f64>>]) -> f64 {
        let mut total = 0.0;
        for (i, xi) in data.points().iter().enumerate() {
            for (k, p) in self.pieces.iter().enumerate() {
                total += p.perspective(gamma[i][k], xi, &q[i][k]);
            }
        }
        total / data.len() as f64
    }
}

/// Variables for the transport budget of one `(i, k)` cell.
pub(crate) struct BudgetTerm {
    /// Contribution to the budget sum, already in units of `δ^p`.
    pub(crate) cost: Lin,
}

/// Adds `cost ≥ γ ‖q/γ‖^p` (or `cost ≥ ‖q‖` when `p = 1`).
pub(crate) fn add_perspective_cost(
    model: &mut Model,
    ball: &WassersteinBall,
    gamma: Lin,
    q: &[Lin],
) -> Result<BudgetTerm> {
    let v = model.add_var();
    add_norm_epigraph(model, ball.norm, Lin::var(v), q);
    if ball.p == 1.0 {
        return Ok(BudgetTerm { cost: Lin::var(v) });
    }
    let w = model.add_var();
    if ball.p == 2.0 {
        model.add_rsoc(gamma, Lin::var(w), vec![Lin::var(v)]);
    } else {
        model.add_pow(Lin::var(w), gamma, Lin::var(v), 1.0 / ball.p);
    }
    Ok(BudgetTerm { cost: Lin::var(w) })
}

/// `‖v‖ ≤ t` for the given norm.
pub(crate) fn add_norm_epigraph(model: &mut Model, norm: Norm, t: Lin, v: &[Lin]) {
    norm.add_bound(model, t, v.to_vec());
}

pub(crate) fn check_inputs(
    n: usize,
    data: &EmpiricalDataset,
    xi_set: &Polyhedron,
) -> Result<()> {
    if data.dim() != n {
        return invalid("dataset dimension differs from loss");
    }
    if xi_set.dim() != n {
        return invalid("support dimension differs from loss");
    }
    if let Some(i) = data.points().iter().position(|p| !xi_set.contains(p, 1e-7)) {
        return Err(DrroError::Infeasible(format!("sample {i} lies outside the support")));
    }
    Ok(())
}

/// Clips `γ` into the simplex and shrinks `q` until the budget holds exactly.
pub(crate) fn repair(
    gamma: &mut [Vec<f64>],
    q: &mut [Vec<Vec<f64>>],
    ball: &WassersteinBall,
    fixed_gamma: bool,
) {
    if !fixed_gamma {
        for (gi, qi) in gamma.iter_mut().zip(q.iter_mut()) {
            for (g, qk) in gi.iter_mut().zip(qi.iter_mut()) {
                if *g <= GAMMA_EPS {
                    *g = 0.0;
                    let tiny = qk.iter().all(|v| v.abs() <= 1e-9);
                    if ball.p > 1.0 || tiny {
                        qk.iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            }
            let s: f64 = gi.iter().sum();
            if s > 0.0 {
                for (g, qk) in gi.iter_mut().zip(qi.iter_mut()) {
                    *g /= s;
                    qk.iter_mut().for_each(|v| *v /= s);
                }
            }
        }
    }
    if ball.p > 1.0 {
        // zero-weight cells cannot carry mass for p > 1
        for (gi, qi) in gamma.iter().zip(q.iter_mut()) {
            for (&g, qk) in gi.iter().zip(qi.iter_mut()) {
                if g <= 0.0 {
                    qk.iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
    }
    let limit = ball.delta.powf(ball.p);
    let cost = WorstCaseSolution {
        value: 0.0,
        gamma: gamma.to_vec(),
        q: q.to_vec(),
        lambda: 0.0,
    }
    .transport_cost(ball);
    if cost > limit && cost > 0.0 {
        // scaling q by c scales the cost by c^p and keeps support feasibility
        let c = (limit / cost).powf(1.0 / ball.p) * (1.0 - 1e-14);
        for qi in q.iter_mut() {
            for qk in qi.iter_mut() {
                qk.iter_mut().for_each(|v| *v *= c);
            }
        }
    }
}

/// `δ = 0`: the sample mean, with all mass on the first maximizing piece.
fn zero_radius(loss: &CompositeLoss, data: &EmpiricalDataset) -> WorstCaseSolution {
    let n = loss.dim();
    let kk = loss.pieces.len();
    let mut gamma = vec![vec![0.0; kk]; data.len()];
    let q = vec![vec![vec![0.0; n]; kk]; data.len()];
    for (i, xi) in data.points().iter().enumerate() {
        gamma[i][loss.argmax(xi)] = 1.0;
    }
    let value = data.points().iter().map(|x| loss.eval(x)).sum::<f64>() / data.len() as f64;
    WorstCaseSolution { value, gamma, q, lambda: 0.0 }
}

/// `sup_{P ∈ B} E_P[ℓ̃(X)]` with a feasible `(γ, q)` certificate.
///
/// The reported value is recomputed from the primal point, so it is attained
/// by the extracted distribution.
pub fn worst_case_expectation(
    loss: &CompositeLoss,
    data: &EmpiricalDataset,
    ball: &WassersteinBall,
    xi_set: &Polyhedron,
    opts: &SolverOptions,
) -> Result<WorstCaseSolution> {
    check_inputs(loss.dim(), data, xi_set)?;
    if ball.delta == 0.0 {
        return Ok(zero_radius(loss, data));
    }
    let n = loss.dim();
    let nn = data.len();
    let kk = loss.pieces.len();
    let inv_n = 1.0 / nn as f64;
    let mut model = Model::new();
    let mut gvars = vec![vec![0usize; kk]; nn];
    let mut qvars = vec![vec![Vec::new(); kk]; nn];
    let mut obj = Lin::zero();
    let mut budget = Lin::zero();
    for (i, xi) in data.points().iter().enumerate() {
        let mut row_sum = Lin::zero();
        for (k, piece) in loss.pieces.iter().enumerate() {
            let g = model.add_nonneg_var();
            let q = model.add_vars(n);
            gvars[i][k] = g;
            row_sum.add_term(g, 1.0);
            // maximize => minimize the negative
            obj.add_term(g, -inv_n * (dot(&piece.alpha, xi) + piece.kappa));
            for j in 0..n {
                obj.add_term(q[j], -inv_n * piece.alpha[j]);
            }
            if !piece.sub.is_empty() {
                let t = model.add_var();
                obj.add_term(t, inv_n);
                for s in &piece.sub {
                    let mut e = Lin::term(g, s.eval(xi));
                    for j in 0..n {
                        e.add_term(q[j], s.g[j]);
                    }
                    model.add_le(e, &Lin::var(t));
                }
            }
            for (row, &r) in xi_set.rows().iter().zip(xi_set.rhs()) {
                let mut e = Lin::term(g, dot(row, xi) - r);
                for j in 0..n {
                    e.add_term(q[j], row[j]);
                }
                model.add_le0(e);
            }
            let ql: Vec<Lin> = q.iter().map(|&v| Lin::var(v)).collect();
            let term = add_perspective_cost(&mut model, ball, Lin::var(g), &ql)?;
            budget.add_lin(&term.cost, 1.0);
            qvars[i][k] = q;
        }
        model.add_eq0(row_sum.with_const(-1.0));
    }
    let budget_row: RowId = model.add_le0(budget.with_const(-(nn as f64) * ball.delta.powf(ball.p)));
    model.set_objective(obj);
    let sol = model.solve(opts)?;
    let mut gamma: Vec<Vec<f64>> =
        gvars.iter().map(|r| r.iter().map(|&g| sol.x[g]).collect()).collect();
    let mut q: Vec<Vec<Vec<f64>>> = qvars
        .iter()
        .map(|r| r.iter().map(|qv| qv.iter().map(|&v| sol.x[v]).collect()).collect())
        .collect();
    repair(&mut gamma, &mut q, ball, false);
    let value = loss.objective(data, &gamma, &q);
    let lambda = (sol.dual(budget_row)[0] * nn as f64).max(0.0);
    Ok(WorstCaseSolution { value, gamma, q, lambda })
}

/// Threshold below which a cell weight is read as zero during extraction.
pub const GAMMA_EPS: f64 = 1e-12;

/// Atoms `ξ̂_i + q_ik/γ_ik` with weights `γ_ik/N`, plus residual mass at `ξ̂_i`.
///
/// A cell with `γ_ik ≈ 0` and `q_ik ≠ 0` is accepted as a recession direction
/// (carrying no mass) only if `xi_set` is unbounded along `q_ik`.
pub fn extract_worst_case_distribution(
    sol: &WorstCaseSolution,
    data: &EmpiricalDataset,
    xi_set: &Polyhedron,
) -> Result<DiscreteDistribution> {
    let nn = data.len();
    if sol.gamma.len() != nn || sol.q.len() != nn {
        return invalid("certificate size differs from dataset");
    }
    let inv_n = 1.0 / nn as f64;
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (i, xi) in data.points().iter().enumerate() {
        let mut used = 0.0;
        for (&g, q) in sol.gamma[i].iter().zip(&sol.q[i]) {
            let qn = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if g <= GAMMA_EPS {
                if qn > 1e-9 && !xi_set.is_recession_direction(q, 1e-7) {
                    return Err(DrroError::InvalidCertificate(format!(
                        "cell of sample {i} has zero weight but a displacement outside the recession cone"
                    )));
                }
                continue;
            }
            let g = g.min(1.0);
            atoms.push(xi.iter().zip(q).map(|(x, v)| x + v / g).collect());
            weights.push(g * inv_n);
            used += g;
        }
        if used < 1.0 - 1e-15 {
            atoms.push(xi.clone());
            weights.push((1.0 - used) * inv_n);
        }
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(DrroError::InvalidCertificate(format!("weights sum to {total}")));
    }
    // absorb rounding into the largest weight
    if let Some((j, _)) = weights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
    {
        weights[j] += 1.0 - total;
    }
    DiscreteDistribution::new(atoms, weights)
}
