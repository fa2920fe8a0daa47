//! Convex upper bound on the regret obtained by lifting `z_ik = γ_ik β`.
//!
//! The dual of the lifted program is a single conic minimization in which the
//! decision enters linearly, so the relaxed regret can also be minimized
//! jointly over `θ ∈ Θ`.

use crate::conic::{Lin, Model};
use crate::engine::add_perspective_cost;
use crate::error::{invalid, DrroError, Result};
use crate::regret::RegretProblem;
use crate::types::{dot, phi};

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationSolution {
    pub theta: Vec<f64>,
    /// Upper bound on the regret at `theta`.
    pub objective: f64,
    pub lambda: f64,
    pub s: Vec<f64>,
    /// Weights on the comparator pieces, `mu[i][k]` lies in the simplex.
    pub mu: Vec<Vec<Vec<f64>>>,
    pub tau: Vec<Vec<f64>>,
    /// Multipliers of the lifted decision constraints, one `m₂`-vector per `(i, k)`.
    pub u: Vec<Vec<Vec<f64>>>,
    /// Multipliers of the support constraints, one `m₁`-vector per `(i, k)`.
    pub zeta: Vec<Vec<Vec<f64>>>,
    pub eta: Vec<f64>,
}

fn check(prob: &RegretProblem, theta: Option<&[f64]>) -> Result<()> {
    if prob.loss.has_bilinear() {
        return Err(DrroError::UnsupportedConfiguration(
            "the relaxation does not cover bilinear loss terms".into(),
        ));
    }
    if let Some(t) = theta {
        if t.len() != prob.loss.dim() {
            return invalid("decision has wrong dimension");
        }
    }
    Ok(())
}

fn build_and_solve(prob: &RegretProblem, theta: Option<&[f64]>) -> Result<RelaxationSolution> {
    check(prob, theta)?;
    let loss = &prob.loss;
    let ball = &prob.ball;
    let (n, d, kk, nn) = (loss.n(), loss.dim(), loss.num_pieces(), prob.data.len());
    let theta_set = &prob.theta_set;
    let xi_set = &prob.xi_set;
    let m2 = theta_set.num_rows();
    let mut m = Model::new();

    let theta_lin: Vec<Lin> = match theta {
        Some(t) => t.iter().map(|&v| Lin::constant(v)).collect(),
        None => {
            let tv = m.add_vars(d);
            theta_set.constrain(&mut m, &tv);
            tv.iter().map(|&v| Lin::var(v)).collect()
        }
    };
    let robust = ball.delta > 0.0;
    let lambda = if robust { Some(m.add_nonneg_var()) } else { None };
    let s = m.add_vars(nn);
    let eta = m.add_nonneg_vars(m2);
    let tau: Vec<Vec<usize>> = (0..nn).map(|_| m.add_vars(d)).collect();
    let inv_n = 1.0 / nn as f64;

    let mut obj = Lin::zero();
    if let Some(l) = lambda {
        obj.add_term(l, ball.delta.powf(ball.p));
    }
    for &si in &s {
        obj.add_term(si, inv_n);
    }
    for (l, &wl) in theta_set.rhs().iter().enumerate() {
        obj.add_term(eta[l], wl);
    }

    // Mᵀη = −(1/N) Σ_i τ_i
    for j in 0..d {
        let mut e = Lin::zero();
        for (l, row) in theta_set.rows().iter().enumerate() {
            e.add_term(eta[l], row[j]);
        }
        for t in &tau {
            e.add_term(t[j], inv_n);
        }
        m.add_eq0(e);
    }

    let qconj = ball.conjugate();
    let mut mu_vars = Vec::with_capacity(nn);
    let mut u_vars = Vec::with_capacity(nn);
    let mut zeta_vars = Vec::with_capacity(nn);
    for (i, xi) in prob.data.points().iter().enumerate() {
        let mut mu_i = Vec::with_capacity(kk);
        let mut u_i = Vec::with_capacity(kk);
        let mut zeta_i = Vec::with_capacity(kk);
        for k in 0..kk {
            let mu = m.add_nonneg_vars(kk);
            m.add_eq0(mu.iter().fold(Lin::constant(-1.0), |e, &v| e.with_term(v, 1.0)));
            let u = m.add_nonneg_vars(m2);
            let zeta = m.add_nonneg_vars(xi_set.num_rows());
            // Mᵀu + Bᵀμ = τ_i
            for j in 0..d {
                let mut e = Lin::term(tau[i][j], -1.0);
                for (l, row) in theta_set.rows().iter().enumerate() {
                    e.add_term(u[l], row[j]);
                }
                for (mm, &mv) in mu.iter().enumerate() {
                    e.add_term(mv, loss.b()[mm][j]);
                }
                m.add_eq0(e);
            }
            let mut row = Lin::constant(dot(&loss.a()[k], xi) + loss.c()[k]);
            for j in 0..d {
                row.add_lin(&theta_lin[j], loss.b()[k][j]);
            }
            for (mm, &mv) in mu.iter().enumerate() {
                row.add_term(mv, -(dot(&loss.a()[mm], xi) + loss.c()[mm]));
            }
            for (l, (prow, &r)) in xi_set.rows().iter().zip(xi_set.rhs()).enumerate() {
                row.add_term(zeta[l], r - dot(prow, xi));
            }
            for (l, &wl) in theta_set.rhs().iter().enumerate() {
                row.add_term(u[l], wl);
            }
            if let Some(lam) = lambda {
                // v = a_k − Aᵀμ − Pᵀζ
                let v: Vec<Lin> = (0..n)
                    .map(|j| {
                        let mut e = Lin::constant(loss.a()[k][j]);
                        for (mm, &mv) in mu.iter().enumerate() {
                            e.add_term(mv, -loss.a()[mm][j]);
                        }
                        for (l, prow) in xi_set.rows().iter().enumerate() {
                            e.add_term(zeta[l], -prow[j]);
                        }
                        e
                    })
                    .collect();
                if ball.p == 1.0 {
                    ball.norm.dual().add_bound(&mut m, Lin::var(lam), v);
                } else {
                    let nv = m.add_var();
                    let w = m.add_var();
                    ball.norm.dual().add_bound(&mut m, Lin::var(nv), v);
                    if ball.p == 2.0 {
                        m.add_rsoc(Lin::var(lam), Lin::term(w, 4.0), vec![Lin::var(nv)]);
                    } else {
                        m.add_pow(Lin::term(w, 1.0 / phi(qconj)), Lin::var(lam), Lin::var(nv), 1.0 / qconj);
                    }
                    row.add_term(w, 1.0);
                }
            }
            m.add_le(row, &Lin::var(s[i]));
            mu_i.push(mu);
            u_i.push(u);
            zeta_i.push(zeta);
        }
        mu_vars.push(mu_i);
        u_vars.push(u_i);
        zeta_vars.push(zeta_i);
    }
    m.set_objective(obj);
    let sol = m.solve(&prob.opts)?;
    let nested = |vs: &Vec<Vec<Vec<usize>>>| -> Vec<Vec<Vec<f64>>> {
        vs.iter().map(|vi| vi.iter().map(|vk| vk.iter().map(|&v| sol.x[v]).collect()).collect()).collect()
    };
    Ok(RelaxationSolution {
        theta: theta_lin.iter().map(|e| sol.value(e)).collect(),
        objective: sol.objective,
        lambda: lambda.map_or(0.0, |l| sol.x[l]),
        s: s.iter().map(|&v| sol.x[v]).collect(),
        mu: nested(&mu_vars),
        u: nested(&u_vars),
        zeta: nested(&zeta_vars),
        tau: tau.iter().map(|t| t.iter().map(|&v| sol.x[v]).collect()).collect(),
        eta: eta.iter().map(|&v| sol.x[v]).collect(),
    })
}

/// Relaxed regret upper bound at a fixed decision.
pub fn relax_regret_eval(theta: &[f64], prob: &RegretProblem) -> Result<RelaxationSolution> {
    build_and_solve(prob, Some(theta))
}

/// Minimizes the relaxed regret over `θ ∈ Θ` in one conic solve.
pub fn solve_drro_relaxed(prob: &RegretProblem) -> Result<RelaxationSolution> {
    build_and_solve(prob, None)
}

/// The lifted maximization itself, solved directly. Its optimal value equals
/// [`relax_regret_eval`] by strong duality.
pub fn relax_regret_primal(theta: &[f64], prob: &RegretProblem) -> Result<f64> {
    Ok(relax_primal_solution(theta, prob)?.value)
}

/// Optimal point of the lifted maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPrimal {
    pub value: f64,
    pub beta: Vec<f64>,
    /// `(γ_ik, z_ik/γ_ik)` for every cell with `γ_ik > 1e-6`: the comparator
    /// each worst-case atom is effectively measured against.
    pub atoms: Vec<(f64, Vec<f64>)>,
}

/// [`relax_regret_primal`] with its optimal point. The comparators read off
/// the atoms are good starts for hill climbing.
pub fn relax_primal_solution(theta: &[f64], prob: &RegretProblem) -> Result<LiftedPrimal> {
    check(prob, Some(theta))?;
    let loss = &prob.loss;
    let ball = &prob.ball;
    let (n, d, kk, nn) = (loss.n(), loss.dim(), loss.num_pieces(), prob.data.len());
    let inv_n = 1.0 / nn as f64;
    let mut m = Model::new();
    let beta = m.add_vars(d);
    prob.theta_set.constrain(&mut m, &beta);
    let mut obj = Lin::zero();
    let mut budget = Lin::zero();
    let mut cells = Vec::with_capacity(nn * kk);
    for xi in prob.data.points() {
        let mut zsum: Vec<Lin> = beta.iter().map(|&b| Lin::term(b, -1.0)).collect();
        let gamma = m.add_nonneg_vars(kk);
        m.add_eq0(gamma.iter().fold(Lin::constant(-1.0), |e, &v| e.with_term(v, 1.0)));
        for k in 0..kk {
            let g = gamma[k];
            let q = m.add_vars(n);
            let z = m.add_vars(d);
            cells.push((g, z.clone()));
            let t = m.add_var();
            obj.add_term(g, inv_n * loss.piece(k, theta, xi));
            for j in 0..n {
                obj.add_term(q[j], inv_n * loss.a()[k][j]);
            }
            obj.add_term(t, -inv_n);
            for mm in 0..kk {
                let mut e = Lin::term(g, dot(&loss.a()[mm], xi) + loss.c()[mm]);
                for j in 0..d {
                    e.add_term(z[j], loss.b()[mm][j]);
                }
                for j in 0..n {
                    e.add_term(q[j], loss.a()[mm][j]);
                }
                m.add_le(e, &Lin::var(t));
            }
            for (row, &w) in prob.theta_set.rows().iter().zip(prob.theta_set.rhs()) {
                let mut e = Lin::term(g, -w);
                for j in 0..d {
                    e.add_term(z[j], row[j]);
                }
                m.add_le0(e);
            }
            for (row, &r) in prob.xi_set.rows().iter().zip(prob.xi_set.rhs()) {
                let mut e = Lin::term(g, dot(row, xi) - r);
                for j in 0..n {
                    e.add_term(q[j], row[j]);
                }
                m.add_le0(e);
            }
            let ql: Vec<Lin> = q.iter().map(|&v| Lin::var(v)).collect();
            if ball.delta > 0.0 {
                let term = add_perspective_cost(&mut m, ball, Lin::var(g), &ql)?;
                budget.add_lin(&term.cost, 1.0);
            } else {
                for e in ql {
                    m.add_eq0(e);
                }
            }
            for j in 0..d {
                zsum[j].add_term(z[j], 1.0);
            }
        }
        for e in zsum {
            m.add_eq0(e);
        }
    }
    if ball.delta > 0.0 {
        m.add_le0(budget.with_const(-(nn as f64) * ball.delta.powf(ball.p)));
    }
    m.set_objective(obj.scaled(-1.0));
    let sol = m.solve(&prob.opts)?;
    let atoms = cells
        .iter()
        .filter(|(g, _)| sol.x[*g] > 1e-6)
        .map(|(g, z)| (sol.x[*g], z.iter().map(|&v| sol.x[v] / sol.x[*g]).collect()))
        .collect();
    Ok(LiftedPrimal { value: -sol.objective, beta: beta.iter().map(|&v| sol.x[v]).collect(), atoms })
}
