//! Wasserstein DRO baseline, solved as one conic program in `(θ, λ, s, ζ)`.

use crate::conic::{Lin, Model, SolverOptions};
use crate::erm::solve_erm_with;
use crate::error::{invalid, Result};
use crate::types::{dot, phi, EmpiricalDataset, MaxAffineLoss, Polyhedron, WassersteinBall};

#[derive(Debug, Clone, PartialEq)]
pub struct DroSolution {
    pub theta: Vec<f64>,
    /// Worst-case expected loss at `θ`.
    pub value: f64,
    pub lambda: f64,
}

pub fn solve_dro(
    loss: &MaxAffineLoss,
    data: &EmpiricalDataset,
    ball: &WassersteinBall,
    theta_set: &Polyhedron,
    xi_set: &Polyhedron,
) -> Result<DroSolution> {
    solve_dro_with(loss, data, ball, theta_set, xi_set, &SolverOptions::tight())
}

pub fn solve_dro_with(
    loss: &MaxAffineLoss,
    data: &EmpiricalDataset,
    ball: &WassersteinBall,
    theta_set: &Polyhedron,
    xi_set: &Polyhedron,
    opts: &SolverOptions,
) -> Result<DroSolution> {
    if theta_set.dim() != loss.dim() || xi_set.dim() != loss.n() || data.dim() != loss.n() {
        return invalid("dimension mismatch between loss, data and sets");
    }
    if ball.delta == 0.0 {
        let erm = solve_erm_with(loss, data, theta_set, opts)?;
        return Ok(DroSolution { theta: erm.theta, value: erm.value, lambda: 0.0 });
    }
    let n = loss.n();
    let d = loss.dim();
    let nn = data.len();
    let mut m = Model::new();
    let theta = m.add_vars(d);
    theta_set.constrain(&mut m, &theta);
    let lambda = m.add_nonneg_var();
    let s = m.add_vars(nn);
    let q = ball.conjugate();
    let mut obj = Lin::term(lambda, ball.delta.powf(ball.p));
    for &si in &s {
        obj.add_term(si, 1.0 / nn as f64);
    }
    for (i, xi) in data.points().iter().enumerate() {
        for k in 0..loss.num_pieces() {
            // α_k(θ) = a_k + d_k⊙θ, componentwise affine in θ
            let alpha: Vec<Lin> = (0..n)
                .map(|j| {
                    let mut e = Lin::constant(loss.a()[k][j]);
                    if loss.has_bilinear() {
                        e.add_term(theta[j], loss.d()[k][j]);
                    }
                    e
                })
                .collect();
            let mut row = Lin::constant(loss.c()[k]);
            for j in 0..d {
                row.add_term(theta[j], loss.b()[k][j]);
            }
            for j in 0..n {
                row.add_lin(&alpha[j], xi[j]);
            }
            // dual of the support constraint
            let zeta = m.add_nonneg_vars(xi_set.num_rows());
            let mut v = alpha;
            for (l, (prow, &r)) in xi_set.rows().iter().zip(xi_set.rhs()).enumerate() {
                row.add_term(zeta[l], r - dot(prow, xi));
                for j in 0..n {
                    v[j].add_term(zeta[l], -prow[j]);
                }
            }
            if ball.p == 1.0 {
                ball.norm.dual().add_bound(&mut m, Lin::var(lambda), v);
            } else {
                let u = m.add_var();
                let w = m.add_var();
                ball.norm.dual().add_bound(&mut m, Lin::var(u), v);
                if ball.p == 2.0 {
                    // w ≥ u²/(4λ)
                    m.add_rsoc(Lin::var(lambda), Lin::term(w, 4.0), vec![Lin::var(u)]);
                } else {
                    // w/φ ≥ u^q / λ^(q−1)
                    m.add_pow(Lin::term(w, 1.0 / phi(q)), Lin::var(lambda), Lin::var(u), 1.0 / q);
                }
                row.add_term(w, 1.0);
            }
            m.add_le(row, &Lin::var(s[i]));
        }
    }
    m.set_objective(obj);
    let sol = m.solve(opts)?;
    Ok(DroSolution {
        theta: theta.iter().map(|&v| sol.x[v]).collect(),
        value: sol.objective,
        lambda: sol.x[lambda],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{worst_case_expectation, CompositeLoss};
    use crate::types::Norm;

    #[test]
    fn value_matches_worst_case_engine() {
        let loss = MaxAffineLoss::new(
            vec![vec![0.0], vec![-2.0]],
            vec![vec![-1.0], vec![1.0]],
            vec![0.0, 0.0],
            None,
        )
        .unwrap();
        let data = EmpiricalDataset::from_scalars(&[1.0, 2.0, 4.0, 7.0]).unwrap();
        for p in [1.0, 2.0] {
            let ball = WassersteinBall::new(p, Norm::L2, 0.7).unwrap();
            let xi = Polyhedron::nonneg(1);
            let dro = solve_dro(&loss, &data, &ball, &Polyhedron::nonneg(1), &xi).unwrap();
            let wc = worst_case_expectation(
                &CompositeLoss::from_loss(&loss, &dro.theta),
                &data,
                &ball,
                &xi,
                &SolverOptions::tight(),
            )
            .unwrap();
            assert!((wc.value - dro.value).abs() < 1e-5, "p={p}: {} vs {}", wc.value, dro.value);
        }
    }
}
