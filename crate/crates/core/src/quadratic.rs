//! Closed-form regret for quadratic losses and the small-radius sensitivity bound.
//!
//! For `ℓ(θ,x) = [θ;x]ᵀ [[Q, Sᵀ], [S, R]] [θ;x] + 2θᵀq + 2xᵀr` with `Q ≻ 0`,
//! the regret under a distribution depends on it only through its mean, the
//! minimizer is `θ* = −Q⁻¹(Sᵀμ̂ + q)` for every radius, and
//! `R(δ, θ*) = δ² λ_max(S Q⁻¹ Sᵀ)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{invalid, DrroError, Result};
use crate::types::{EmpiricalDataset, WassersteinBall};

#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    q_mat: DMatrix<f64>,
    s_mat: DMatrix<f64>,
    r_mat: DMatrix<f64>,
    q_vec: DVector<f64>,
    r_vec: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

const SYMMETRY_TOL: f64 = 1e-10;

fn symmetric(m: &DMatrix<f64>) -> bool {
    m.is_square() && (m - m.transpose()).amax() <= SYMMETRY_TOL * (1.0 + m.amax())
}

impl QuadraticLoss {
    /// `q_mat` is `d×d`, `s_mat` is `n×d`, `r_mat` is `n×n`.
    pub fn new(
        q_mat: DMatrix<f64>,
        s_mat: DMatrix<f64>,
        r_mat: DMatrix<f64>,
        q_vec: DVector<f64>,
        r_vec: DVector<f64>,
    ) -> Result<Self> {
        let d = q_mat.nrows();
        let n = r_mat.nrows();
        if s_mat.shape() != (n, d) || q_vec.len() != d || r_vec.len() != n {
            return invalid("inconsistent block dimensions");
        }
        if !symmetric(&q_mat) || !symmetric(&r_mat) {
            return invalid("Q and R must be symmetric");
        }
        let chol = Cholesky::new(q_mat.clone()).ok_or_else(|| {
            DrroError::InvalidArgument("Q is not positive definite".into())
        })?;
        Ok(QuadraticLoss { q_mat, s_mat, r_mat, q_vec, r_vec, chol })
    }

    pub fn dim(&self) -> usize {
        self.q_mat.nrows()
    }

    pub fn n(&self) -> usize {
        self.r_mat.nrows()
    }

    pub fn eval(&self, theta: &DVector<f64>, x: &DVector<f64>) -> f64 {
        theta.dot(&(&self.q_mat * theta))
            + 2.0 * x.dot(&(&self.s_mat * theta))
            + x.dot(&(&self.r_mat * x))
            + 2.0 * theta.dot(&self.q_vec)
            + 2.0 * x.dot(&self.r_vec)
    }

    /// `∇_x ℓ(θ, x) = 2(Sθ + Rx + r)`.
    pub fn grad_x(&self, theta: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.s_mat * theta + &self.r_mat * x + &self.r_vec)
    }

    fn linear_term(&self, mu: &DVector<f64>) -> DVector<f64> {
        self.s_mat.transpose() * mu + &self.q_vec
    }

    /// Minimizer of the expected loss under any distribution with mean `mu`.
    pub fn minimizer(&self, mu: &DVector<f64>) -> DVector<f64> {
        -self.chol.solve(&self.linear_term(mu))
    }

    /// `E ℓ(θ) − min_β E ℓ(β)` under a distribution with mean `mu`:
    /// `θᵀQθ + 2θᵀ(Sᵀμ+q) + (Sᵀμ+q)ᵀQ⁻¹(Sᵀμ+q)`.
    pub fn mean_regret(&self, theta: &DVector<f64>, mu: &DVector<f64>) -> f64 {
        let l = self.linear_term(mu);
        theta.dot(&(&self.q_mat * theta)) + 2.0 * theta.dot(&l) + l.dot(&self.chol.solve(&l))
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticSolution {
    pub theta_star: DVector<f64>,
    /// `λ_max(S Q⁻¹ Sᵀ)`, the coefficient of `δ²` in the regret.
    pub lambda_max: f64,
    /// Unit eigenvector for `lambda_max`.
    pub v_max: DVector<f64>,
    pub mu_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
}

/// Lexicographic comparison of two vectors.
fn lex_greater(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x != y {
            return x > y;
        }
    }
    false
}

pub fn quadratic_drro(loss: &QuadraticLoss, mu_hat: &DVector<f64>, sigma_hat: &DMatrix<f64>) -> Result<QuadraticSolution> {
    let n = loss.n();
    if mu_hat.len() != n || sigma_hat.shape() != (n, n) {
        return invalid("moment dimensions differ from the loss");
    }
    let theta_star = loss.minimizer(mu_hat);
    let x = loss.chol.solve(&loss.s_mat.transpose());
    let m = &loss.s_mat * x;
    let m = 0.5 * (&m + m.transpose());
    let eig = SymmetricEigen::new(m);
    let lambda_max = eig.eigenvalues.max().max(0.0);
    let tie = 1e-10 * (1.0 + lambda_max.abs());
    let mut v_max: Option<DVector<f64>> = None;
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if (ev.max(0.0) - lambda_max).abs() > tie {
            continue;
        }
        let v = eig.eigenvectors.column(i).normalize();
        for cand in [v.clone(), -v] {
            if v_max.as_ref().map_or(true, |b| lex_greater(&cand, b)) {
                v_max = Some(cand);
            }
        }
    }
    Ok(QuadraticSolution {
        theta_star,
        lambda_max,
        v_max: v_max.expect("a symmetric matrix has an eigenvector"),
        mu_hat: mu_hat.clone(),
        sigma_hat: sigma_hat.clone(),
    })
}

#[derive(Debug, Clone)]
pub struct QuadraticRegret {
    pub value: f64,
    /// The two worst-case means `μ̂ ± δ v_max`.
    pub worst_means: [DVector<f64>; 2],
}

pub fn quadratic_regret(delta: f64, sol: &QuadraticSolution) -> Result<QuadraticRegret> {
    if !(delta >= 0.0) {
        return invalid("radius must be nonnegative");
    }
    Ok(QuadraticRegret {
        value: delta * delta * sol.lambda_max,
        worst_means: [&sol.mu_hat + delta * &sol.v_max, &sol.mu_hat - delta * &sol.v_max],
    })
}

/// `min_θ max_β (mean_i ‖∇ₓℓ(θ,ξ̂_i) − ∇ₓℓ(β,ξ̂_i)‖_*^q)^{1/q}` over finite
/// candidate sets, with `q = p/(p−1)`.
pub fn sensitivity_rhs<F>(
    grad_x: F,
    theta_candidates: &[Vec<f64>],
    beta_candidates: &[Vec<f64>],
    data: &EmpiricalDataset,
    ball: &WassersteinBall,
) -> Result<f64>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    if ball.p == 1.0 {
        return Err(DrroError::UnsupportedConfiguration(
            "the sensitivity bound needs p > 1".into(),
        ));
    }
    if theta_candidates.is_empty() || beta_candidates.is_empty() {
        return invalid("candidate sets must be nonempty");
    }
    let q = ball.conjugate();
    let dual = ball.norm.dual();
    let n = data.len() as f64;
    let mut best = f64::INFINITY;
    for theta in theta_candidates {
        let mut worst: f64 = 0.0;
        for beta in beta_candidates {
            let mut acc = 0.0;
            for xi in data.points() {
                let diff: Vec<f64> = grad_x(theta, xi).iter().zip(grad_x(beta, xi)).map(|(a, b)| a - b).collect();
                acc += dual.eval(&diff).powf(q);
            }
            worst = worst.max((acc / n).powf(1.0 / q));
        }
        best = best.min(worst);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Norm;

    fn squared_error() -> QuadraticLoss {
        QuadraticLoss::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DVector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn squared_error_closed_form() {
        let loss = squared_error();
        let mu = DVector::from_element(1, 3.0);
        let sol = quadratic_drro(&loss, &mu, &DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert!((sol.theta_star[0] - 3.0).abs() < 1e-12);
        assert!((sol.lambda_max - 1.0).abs() < 1e-12);
        assert_eq!(quadratic_regret(0.0, &sol).unwrap().value, 0.0);
        assert!((quadratic_regret(2.0, &sol).unwrap().value - 4.0).abs() < 1e-12);
        let t = DVector::from_element(1, 1.0);
        let x = DVector::from_element(1, 4.0);
        assert!((loss.eval(&t, &x) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn decoupled_has_zero_regret() {
        let loss = QuadraticLoss::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(3, 2),
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![1.0, -1.0]),
            DVector::zeros(3),
        )
        .unwrap();
        let sol = quadratic_drro(&loss, &DVector::zeros(3), &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(sol.lambda_max, 0.0);
        assert!((sol.v_max.norm() - 1.0).abs() < 1e-12);
        assert_eq!(sol.v_max[0], 1.0);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let bad = QuadraticLoss::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DVector::zeros(1),
            DVector::zeros(1),
        );
        assert!(matches!(bad, Err(DrroError::InvalidArgument(_))));
        let asym = QuadraticLoss::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
            DVector::zeros(2),
            DVector::zeros(1),
        );
        assert!(asym.is_err());
    }

    #[test]
    fn sensitivity_cases() {
        let data = EmpiricalDataset::new(vec![vec![1.0, 0.0], vec![2.0, 3.0]]).unwrap();
        let ball = WassersteinBall::new(2.0, Norm::L2, 0.1).unwrap();
        let g = |t: &[f64], _x: &[f64]| vec![t[0], 2.0 * t[0]];
        let one = vec![vec![1.0]];
        assert_eq!(sensitivity_rhs(g, &one, &one, &data, &ball).unwrap(), 0.0);
        let two = vec![vec![1.0], vec![3.0]];
        let v = sensitivity_rhs(g, &one, &two, &data, &ball).unwrap();
        assert!((v - (4.0f64 + 16.0).sqrt()).abs() < 1e-12);
        let l1 = WassersteinBall::new(1.0, Norm::L2, 0.1).unwrap();
        assert!(matches!(
            sensitivity_rhs(g, &one, &two, &data, &l1),
            Err(DrroError::UnsupportedConfiguration(_))
        ));
    }
}
