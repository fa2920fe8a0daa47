//! Wasserstein distances between discrete distributions.

use crate::conic::{Lin, Model, SolverOptions};
use crate::error::{invalid, Result};
use crate::types::{DiscreteDistribution, Norm};

/// Above this many coupling variables a 1-D pair is handled by the quantile formula.
const LP_SIZE_LIMIT: usize = 40_000;

/// `W_p(P, Q)` under the given ground norm.
///
/// Uses the transport LP, except for large one-dimensional pairs where the
/// monotone coupling is optimal and computed directly.
pub fn wasserstein_distance_discrete(
    p_dist: &DiscreteDistribution,
    q_dist: &DiscreteDistribution,
    p: f64,
    norm: Norm,
) -> Result<f64> {
    let a = p_dist.pruned();
    let b = q_dist.pruned();
    if a.dim() != b.dim() {
        return invalid("distributions have different dimensions");
    }
    if a.dim() == 1 && a.len() * b.len() > LP_SIZE_LIMIT {
        return wasserstein_distance_1d(&a, &b, p);
    }
    wasserstein_distance_lp(&a, &b, p, norm)
}

/// Transport LP `min Σ π_ij ‖x_i − y_j‖^p` over couplings.
pub fn wasserstein_distance_lp(
    p_dist: &DiscreteDistribution,
    q_dist: &DiscreteDistribution,
    p: f64,
    norm: Norm,
) -> Result<f64> {
    if !(p >= 1.0) {
        return invalid("Wasserstein order must be >= 1");
    }
    let a = p_dist.pruned();
    let b = q_dist.pruned();
    if a.dim() != b.dim() {
        return invalid("distributions have different dimensions");
    }
    let (na, nb) = (a.len(), b.len());
    let mut m = Model::new();
    let pi = m.add_nonneg_vars(na * nb);
    let mut obj = Lin::zero();
    for i in 0..na {
        for j in 0..nb {
            let diff: Vec<f64> =
                a.atoms()[i].iter().zip(&b.atoms()[j]).map(|(x, y)| x - y).collect();
            obj.add_term(pi[i * nb + j], norm.eval(&diff).powf(p));
        }
    }
    for i in 0..na {
        let mut e = Lin::constant(-a.weights()[i]);
        for j in 0..nb {
            e.add_term(pi[i * nb + j], 1.0);
        }
        m.add_eq0(e);
    }
    // the last column constraint is implied by the others
    for j in 0..nb.saturating_sub(1) {
        let mut e = Lin::constant(-b.weights()[j]);
        for i in 0..na {
            e.add_term(pi[i * nb + j], 1.0);
        }
        m.add_eq0(e);
    }
    m.set_objective(obj);
    let s = m.solve(&SolverOptions::tight())?;
    Ok(s.objective.max(0.0).powf(1.0 / p))
}

/// Exact `W_p` on the real line via the quantile coupling.
pub fn wasserstein_distance_1d(
    p_dist: &DiscreteDistribution,
    q_dist: &DiscreteDistribution,
    p: f64,
) -> Result<f64> {
    if p_dist.dim() != 1 || q_dist.dim() != 1 {
        return invalid("quantile formula needs one-dimensional atoms");
    }
    let sorted = |d: &DiscreteDistribution| {
        let mut v: Vec<(f64, f64)> =
            d.atoms().iter().zip(d.weights()).map(|(a, &w)| (a[0], w)).filter(|x| x.1 > 0.0).collect();
        v.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        v
    };
    let a = sorted(p_dist);
    let b = sorted(q_dist);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        cost += m * (a[i].0 - b[j].0).abs().powf(p);
        ra -= m;
        rb -= m;
        if ra <= 1e-15 {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        }
        if rb <= 1e-15 {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    Ok(cost.max(0.0).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diracs() {
        let x = DiscreteDistribution::dirac(vec![1.0, 2.0]);
        let y = DiscreteDistribution::dirac(vec![4.0, 6.0]);
        for (norm, want) in [(Norm::L1, 7.0), (Norm::L2, 5.0), (Norm::Linf, 4.0)] {
            let w = wasserstein_distance_discrete(&x, &y, 2.0, norm).unwrap();
            assert!((w - want).abs() < 1e-6, "{norm:?}: {w}");
        }
        assert!(wasserstein_distance_discrete(&x, &x, 1.0, Norm::L2).unwrap() < 1e-6);
    }

    #[test]
    fn lp_matches_quantile_formula() {
        let a = DiscreteDistribution::new(
            vec![vec![0.0], vec![1.0], vec![5.0]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let b = DiscreteDistribution::new(vec![vec![2.0], vec![-1.0]], vec![0.6, 0.4]).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let lp = wasserstein_distance_lp(&a, &b, p, Norm::L2).unwrap();
            let exact = wasserstein_distance_1d(&a, &b, p).unwrap();
            assert!((lp - exact).abs() < 1e-6, "p={p}: {lp} vs {exact}");
        }
    }
}
