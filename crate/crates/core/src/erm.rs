//! Empirical risk minimization as an epigraph LP.

use crate::conic::{Lin, Model, SolverOptions};
use crate::error::{invalid, DrroError, Result};
use crate::types::{dot, EmpiricalDataset, MaxAffineLoss, Polyhedron};

#[derive(Debug, Clone, PartialEq)]
pub struct ErmSolution {
    pub theta: Vec<f64>,
    /// `(1/N) Σ ℓ(θ, ξ̂_i)` evaluated at the returned `θ`.
    pub value: f64,
}

/// Pieces of `ℓ(·, ξ)` as affine functions of `θ`: `(slope, offset)`.
pub(crate) fn theta_pieces(loss: &MaxAffineLoss, x: &[f64]) -> Vec<(Vec<f64>, f64)> {
    (0..loss.num_pieces())
        .map(|k| {
            let slope: Vec<f64> = if loss.has_bilinear() {
                (0..loss.dim()).map(|j| loss.b()[k][j] + loss.d()[k][j] * x[j]).collect()
            } else {
                loss.b()[k].clone()
            };
            (slope, dot(&loss.a()[k], x) + loss.c()[k])
        })
        .collect()
}

fn build(
    loss: &MaxAffineLoss,
    data: &EmpiricalDataset,
    theta_set: &Polyhedron,
) -> (Model, Vec<usize>, Lin) {
    let mut m = Model::new();
    let theta = m.add_vars(loss.dim());
    theta_set.constrain(&mut m, &theta);
    let inv_n = 1.0 / data.len() as f64;
    let mut obj = Lin::zero();
    for x in data.points() {
        let t = m.add_var();
        obj.add_term(t, inv_n);
        for (slope, off) in theta_pieces(loss, x) {
            let mut e = Lin::constant(off);
            for (j, &v) in theta.iter().enumerate() {
                e.add_term(v, slope[j]);
            }
            m.add_le(e, &Lin::var(t));
        }
    }
    (m, theta, obj)
}

/// Minimizes the sample-average loss over `Θ`, returning the lexicographically
/// smallest minimizer.
pub fn solve_erm(
    loss: &MaxAffineLoss,
    data: &EmpiricalDataset,
    theta_set: &Polyhedron,
) -> Result<ErmSolution> {
    solve_erm_with(loss, data, theta_set, &SolverOptions::tight())
}

pub fn solve_erm_with(
    loss: &MaxAffineLoss,
    data: &EmpiricalDataset,
    theta_set: &Polyhedron,
    opts: &SolverOptions,
) -> Result<ErmSolution> {
    if data.dim() != loss.n() {
        return invalid("dataset dimension differs from loss");
    }
    if theta_set.dim() != loss.dim() {
        return invalid("decision set dimension differs from loss");
    }
    let (mut m, theta, obj) = build(loss, data, theta_set);
    m.set_objective(obj.clone());
    let first = m.solve(opts)?;
    let vstar = first.objective;
    let mut best: Vec<f64> = theta.iter().map(|&v| first.x[v]).collect();

    // lexicographic refinement over the optimal face
    m.add_le0(obj.with_const(-(vstar + 1e-9 * (1.0 + vstar.abs()))));
    for j in 0..theta.len() {
        m.set_objective(Lin::var(theta[j]));
        match m.solve(opts) {
            Ok(s) => {
                let cand: Vec<f64> = theta.iter().map(|&v| s.x[v]).collect();
                let bj = cand[j];
                best = cand;
                m.add_le0(Lin::var(theta[j]).with_const(-(bj + 1e-9 * (1.0 + bj.abs()))));
            }
            Err(DrroError::Unbounded(_)) => break,
            Err(DrroError::NumericalFailure { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    let value = loss.empirical_mean(&best, data)?;
    Ok(ErmSolution { theta: best, value })
}
