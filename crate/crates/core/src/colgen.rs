//! Exact DRRO in several dimensions by comparator generation.
//!
//! For a finite comparator set `B`, `min_θ max_{β∈B} sup_P E_P[ℓ(θ,X) − ℓ(β,X)]`
//! is one conic program: each inner supremum is replaced by its dual, in which
//! `θ` enters linearly. Its value is a lower bound on `min_θ R(θ)`. New
//! comparators come from hill climbing at the master decision, and the
//! relaxation supplies the matching upper bound.

use crate::conic::{Lin, Model};
use crate::error::{invalid, Result};
use crate::regret::{climb, step_beta_fixed, RegretProblem};
use crate::relaxation::relax_primal_solution;
use crate::types::{dot, phi};

/// Solution of the restricted master problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub theta: Vec<f64>,
    /// `max_j V(θ, β_j)` at the optimum, a lower bound on the optimal regret.
    pub value: f64,
    /// Dual value of each comparator block at `theta`.
    pub column_values: Vec<f64>,
}

/// Minimizes `max_j sup_P E_P[ℓ(θ,X) − ℓ(β_j,X)]` over `θ ∈ Θ`.
pub fn restricted_master(prob: &RegretProblem, comparators: &[Vec<f64>]) -> Result<MasterSolution> {
    let loss = &prob.loss;
    let ball = &prob.ball;
    let (n, d, kk) = (loss.n(), loss.dim(), loss.num_pieces());
    if comparators.is_empty() {
        return invalid("master problem needs at least one comparator");
    }
    if comparators.iter().any(|b| b.len() != d) {
        return invalid("comparator has wrong dimension");
    }
    let bilinear = loss.has_bilinear();
    let xi_set = &prob.xi_set;
    let inv_n = 1.0 / prob.data.len() as f64;
    let qconj = ball.conjugate();
    let robust = ball.delta > 0.0;

    let mut m = Model::new();
    let theta = m.add_vars(d);
    prob.theta_set.constrain(&mut m, &theta);
    let w = m.add_var();
    let mut blocks = Vec::with_capacity(comparators.len());
    for beta in comparators {
        let lambda = if robust { Some(m.add_nonneg_var()) } else { None };
        let s = m.add_vars(prob.data.len());
        let mut value = Lin::zero();
        if let Some(l) = lambda {
            value.add_term(l, ball.delta.powf(ball.p));
        }
        for &si in &s {
            value.add_term(si, inv_n);
        }
        let sub_slopes: Vec<Vec<f64>> = (0..kk).map(|mm| loss.slope(mm, beta)).collect();
        for (i, xi) in prob.data.points().iter().enumerate() {
            let sub_vals: Vec<f64> = (0..kk).map(|mm| loss.piece(mm, beta, xi)).collect();
            for k in 0..kk {
                let mu = m.add_nonneg_vars(kk);
                m.add_eq0(mu.iter().fold(Lin::constant(-1.0), |e, &v| e.with_term(v, 1.0)));
                let zeta = m.add_nonneg_vars(xi_set.num_rows());
                // slope of piece k in x, affine in θ
                let slope: Vec<Lin> = (0..n)
                    .map(|j| {
                        let mut e = Lin::constant(loss.a()[k][j]);
                        if bilinear {
                            e.add_term(theta[j], loss.d()[k][j]);
                        }
                        e
                    })
                    .collect();
                let mut row = Lin::constant(loss.c()[k]);
                for j in 0..n {
                    row.add_lin(&slope[j], xi[j]);
                }
                for j in 0..d {
                    row.add_term(theta[j], loss.b()[k][j]);
                }
                for (mm, &mv) in mu.iter().enumerate() {
                    row.add_term(mv, -sub_vals[mm]);
                }
                for (l, (prow, &r)) in xi_set.rows().iter().zip(xi_set.rhs()).enumerate() {
                    row.add_term(zeta[l], r - dot(prow, xi));
                }
                if let Some(lam) = lambda {
                    let v: Vec<Lin> = (0..n)
                        .map(|j| {
                            let mut e = slope[j].clone();
                            for (mm, &mv) in mu.iter().enumerate() {
                                e.add_term(mv, -sub_slopes[mm][j]);
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
                        let t = m.add_var();
                        ball.norm.dual().add_bound(&mut m, Lin::var(nv), v);
                        if ball.p == 2.0 {
                            m.add_rsoc(Lin::var(lam), Lin::term(t, 4.0), vec![Lin::var(nv)]);
                        } else {
                            m.add_pow(Lin::term(t, 1.0 / phi(qconj)), Lin::var(lam), Lin::var(nv), 1.0 / qconj);
                        }
                        row.add_term(t, 1.0);
                    }
                }
                m.add_le(row, &Lin::var(s[i]));
            }
        }
        m.add_le(value.clone(), &Lin::var(w));
        blocks.push(value);
    }
    m.set_objective(Lin::var(w));
    let sol = m.solve(&prob.opts)?;
    Ok(MasterSolution {
        theta: theta.iter().map(|&v| sol.x[v]).collect(),
        value: sol.x[w],
        column_values: blocks.iter().map(|e| sol.value(e)).collect(),
    })
}

/// Outcome of comparator generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGenResult {
    /// Master decision with the smallest climbed regret.
    pub theta: Vec<f64>,
    /// Best hill-climbing regret found at `theta`, a lower bound on `R(theta)`.
    pub value: f64,
    /// Certified lower bound on `min_θ R(θ)`.
    pub lower: f64,
    /// Relaxation upper bound on `R(theta)`, hence on `min_θ R(θ)`; infinite
    /// for bilinear losses.
    pub upper: f64,
    pub comparators: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Stopping and effort settings of [`column_generation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnGenOptions {
    /// Stop when `upper − lower ≤ tol·(1 + |upper|)`, or when no new
    /// comparator beats the master value by that much.
    pub tol: f64,
    pub max_iter: usize,
    /// Alternation rounds per hill climb.
    pub climb_rounds: usize,
    /// Cluster centres of the relaxation atoms used as extra climb starts.
    pub clusters: usize,
}

impl Default for ColumnGenOptions {
    fn default() -> Self {
        ColumnGenOptions { tol: 1e-4, max_iter: 20, climb_rounds: 15, clusters: 3 }
    }
}

/// Weighted k-means with farthest-point seeding. Deterministic.
pub(crate) fn cluster_centres(points: &[(f64, Vec<f64>)], k: usize) -> Vec<Vec<f64>> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let heaviest = points.iter().enumerate().fold(0, |best, (i, p)| if p.0 > points[best].0 { i } else { best });
    let mut centres = vec![points[heaviest].1.clone()];
    while centres.len() < k {
        let far = points
            .iter()
            .map(|p| centres.iter().map(|c| dist2(&p.1, c)).fold(f64::INFINITY, f64::min))
            .enumerate()
            .fold((0, 0.0), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        if far.1 <= 1e-12 {
            break;
        }
        centres.push(points[far.0].1.clone());
    }
    for _ in 0..20 {
        let dim = centres[0].len();
        let mut sums = vec![(0.0, vec![0.0; dim]); centres.len()];
        for (w, x) in points {
            let j = (0..centres.len())
                .min_by(|&a, &b| dist2(x, &centres[a]).total_cmp(&dist2(x, &centres[b])))
                .unwrap();
            sums[j].0 += w;
            sums[j].1.iter_mut().zip(x).for_each(|(s, v)| *s += w * v);
        }
        for (c, (w, s)) in centres.iter_mut().zip(sums) {
            if w > 0.0 {
                *c = s.iter().map(|v| v / w).collect();
            }
        }
    }
    centres
}

fn push_new(cols: &mut Vec<Vec<f64>>, beta: Vec<f64>) {
    let scale = 1.0 + beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !cols.iter().any(|c| c.iter().zip(&beta).all(|(a, b)| (a - b).abs() <= 1e-6 * scale)) {
        cols.push(beta);
    }
}

/// Regret at a fixed decision from relaxation-seeded hill climbs.
#[derive(Debug, Clone, PartialEq)]
pub struct SeededRegret {
    /// Best climbed value, a lower bound on `R(θ)`.
    pub value: f64,
    pub beta: Vec<f64>,
    /// Relaxation value, an upper bound on `R(θ)`; infinite for bilinear losses.
    pub upper: f64,
    /// Final comparator of every climb.
    pub comparators: Vec<Vec<f64>>,
}

/// Climbs from the lifted relaxation's comparator, the cluster centres of its
/// atoms and the best few of `extra`. Bilinear losses have no relaxation, so
/// the ERM decision replaces the relaxation starts.
pub fn seeded_regret(theta: &[f64], prob: &RegretProblem, extra: &[Vec<f64>], opts: ColumnGenOptions) -> Result<SeededRegret> {
    let mut starts = Vec::new();
    let upper = if prob.loss.has_bilinear() {
        push_new(&mut starts, prob.erm()?);
        f64::INFINITY
    } else {
        let lp = relax_primal_solution(theta, prob)?;
        push_new(&mut starts, prob.theta_set.project(&lp.beta)?);
        for c in cluster_centres(&lp.atoms, opts.clusters) {
            push_new(&mut starts, prob.theta_set.project(&c)?);
        }
        lp.value
    };
    // screen the extra starts by their value before climbing
    let mut scored = Vec::with_capacity(extra.len());
    for b in extra {
        let b = prob.theta_set.project(b)?;
        scored.push((step_beta_fixed(prob, theta, &b)?.objective, b));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, b) in scored.into_iter().take(opts.clusters.max(1)) {
        push_new(&mut starts, b);
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut comparators = Vec::with_capacity(starts.len());
    for b in &starts {
        let h = climb(theta, prob, b, opts.climb_rounds)?;
        if best.as_ref().map_or(true, |x| h.state.objective > x.0) {
            best = Some((h.state.objective, h.state.beta.clone()));
        }
        comparators.push(h.state.beta);
    }
    let (value, beta) = best.expect("at least one start");
    Ok(SeededRegret { value, beta, upper: upper.max(value), comparators })
}

/// Alternates the restricted master with [`seeded_regret`] at its decision,
/// adding every climbed comparator. Comparators start from ERM plus
/// `initial`. The returned decision is the iterate with the smallest climbed
/// regret.
pub fn column_generation(prob: &RegretProblem, initial: &[Vec<f64>], opts: ColumnGenOptions) -> Result<ColumnGenResult> {
    let mut cols = vec![prob.erm()?];
    for b in initial {
        push_new(&mut cols, prob.theta_set.project(b)?);
    }
    let bilinear = prob.loss.has_bilinear();
    let mut lower = f64::NEG_INFINITY;
    let mut best: Option<(Vec<f64>, f64, f64)> = None;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let master = restricted_master(prob, &cols)?;
        lower = lower.max(master.value);
        let extra = if bilinear { cols.clone() } else { Vec::new() };
        let r = seeded_regret(&master.theta, prob, &extra, opts)?;
        if best.as_ref().map_or(true, |b| r.value < b.1) {
            best = Some((master.theta.clone(), r.value, r.upper));
        }
        let top = best.as_ref().unwrap().1;
        let tol = opts.tol * (1.0 + top.abs());
        if top - lower <= tol || r.value - master.value <= tol {
            break;
        }
        for b in r.comparators {
            push_new(&mut cols, b);
        }
    }
    let (theta, value, upper) = best.expect("at least one iteration");
    Ok(ColumnGenResult { theta, value, lower, upper, comparators: cols, iterations })
}
