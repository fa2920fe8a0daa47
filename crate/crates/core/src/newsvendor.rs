//! Exact regret and DRRO policy for the univariate newsvendor
//! `ℓ(θ,x) = bθ − s·min(θ,x)` on `Ξ = [0, ∞)`.
//!
//! For a comparator `β ≥ θ` the regret integrand is
//! `b(θ−β) + s·clamp(x−θ, 0, β−θ)`, and for `β ≤ θ` it is
//! `−(s−b)(θ−β) + s·clamp(θ−x, 0, θ−β)`. The left case is the right case
//! applied to negated data, so only the right case is solved directly:
//! a fractional knapsack for `p = 1`, a one-dimensional Lagrangian search
//! over the per-point step length for `p > 1`.

use crate::certificate::{RegretCertificate, RegretStatus, Side};
use crate::engine::extract_worst_case_distribution;
use crate::error::{invalid, Result};
use crate::regret::RegretProblem;
use crate::types::{
    DiscreteDistribution, EmpiricalDataset, MaxAffineLoss, Polyhedron, WassersteinBall,
    WorstCaseSolution,
};

/// Relative bracket width at which golden-section search stops.
pub const GOLDEN_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NewsvendorInstance {
    b: f64,
    s: f64,
    data: EmpiricalDataset,
    xs: Vec<f64>,
}

impl NewsvendorInstance {
    /// Samples are sorted ascending.
    pub fn new(b: f64, s: f64, samples: &[f64]) -> Result<Self> {
        if !(b > 0.0 && s > b && s.is_finite()) {
            return invalid(format!("need 0 < b < s, got b={b}, s={s}"));
        }
        if samples.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return invalid("demand samples must be finite and nonnegative");
        }
        let mut xs = samples.to_vec();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let data = EmpiricalDataset::from_scalars(&xs)?;
        Ok(NewsvendorInstance { b, s, data, xs })
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn samples(&self) -> &[f64] {
        &self.xs
    }

    pub fn data(&self) -> &EmpiricalDataset {
        &self.data
    }

    pub fn support(&self) -> Polyhedron {
        Polyhedron::nonneg(1)
    }

    /// Two-piece encoding: `a = (0, −s)`, `b = (b−s, b)`, `c = 0`.
    pub fn loss(&self) -> MaxAffineLoss {
        MaxAffineLoss::new(
            vec![vec![0.0], vec![-self.s]],
            vec![vec![self.b - self.s], vec![self.b]],
            vec![0.0, 0.0],
            None,
        )
        .expect("valid newsvendor encoding")
    }

    /// Pointwise regret `max(b(θ−x), (s−b)(x−θ))` as a max-affine loss.
    pub fn regret_loss(&self) -> MaxAffineLoss {
        let (b, s) = (self.b, self.s);
        MaxAffineLoss::new(
            vec![vec![-b], vec![s - b]],
            vec![vec![b], vec![-(s - b)]],
            vec![0.0, 0.0],
            None,
        )
        .expect("valid regret encoding")
    }

    /// The instance as a general regret problem with `Θ = Ξ = [0, ∞)`.
    pub fn regret_problem(&self, ball: &WassersteinBall) -> RegretProblem {
        RegretProblem::new(self.loss(), self.data.clone(), *ball, Polyhedron::nonneg(1), self.support())
            .expect("newsvendor data lie in the support")
    }

    pub fn eval(&self, theta: f64, x: f64) -> f64 {
        self.b * theta - self.s * theta.min(x)
    }

    pub fn sample_mean_loss(&self, theta: f64) -> f64 {
        self.xs.iter().map(|&x| self.eval(theta, x)).sum::<f64>() / self.xs.len() as f64
    }

    /// Smallest sample `ξ_(j)` with `#{ξ > ξ_(j)}·s ≤ b·N`.
    pub fn erm(&self) -> f64 {
        let n = self.xs.len();
        for (j, &x) in self.xs.iter().enumerate() {
            let above = self.xs[j..].iter().filter(|&&y| y > x).count();
            if above as f64 * self.s <= self.b * n as f64 + 1e-12 {
                return x;
            }
        }
        self.xs[n - 1]
    }

    /// Upper end of the right-branch search interval.
    pub fn beta_max(&self, theta: f64, ball: &WassersteinBall) -> f64 {
        let n = self.xs.len() as f64;
        let reach = if ball.p == 1.0 { n * ball.delta } else { n.powf(1.0 / ball.p) * ball.delta };
        self.xs[self.xs.len() - 1] + reach + theta
    }
}

/// Transport plan: each sample splits into two (destination, mass fraction) cells.
#[derive(Debug, Clone)]
struct Plan {
    cells: Vec<[(f64, f64); 2]>,
    /// Multiplier of the `δ^p` budget for the clamp objective.
    lambda: f64,
}

impl Plan {
    fn stay(xs: &[f64]) -> Self {
        Plan { cells: xs.iter().map(|&x| [(x, 1.0), (x, 0.0)]).collect(), lambda: 0.0 }
    }

    fn mirrored(self) -> Self {
        let mut cells: Vec<_> =
            self.cells.into_iter().map(|c| [(-c[0].0, c[0].1), (-c[1].0, c[1].1)]).collect();
        cells.reverse();
        Plan { cells, lambda: self.lambda }
    }

    /// Mean of `clamp(x − θ, 0, β − θ)` under the plan.
    fn gain(&self, theta: f64, beta: f64) -> f64 {
        let total: f64 = self
            .cells
            .iter()
            .flat_map(|c| c.iter())
            .map(|&(d, w)| w * (d - theta).max(0.0).min(beta - theta))
            .sum();
        total / self.cells.len() as f64
    }

    fn to_solution(&self, xs: &[f64], value: f64, lambda: f64) -> WorstCaseSolution {
        let gamma = self.cells.iter().map(|c| vec![c[0].1, c[1].1]).collect();
        let q = self
            .cells
            .iter()
            .zip(xs)
            .map(|(c, &x)| vec![vec![c[0].1 * (c[0].0 - x)], vec![c[1].1 * (c[1].0 - x)]])
            .collect();
        WorstCaseSolution { value, gamma, q, lambda }
    }
}

#[inline]
fn pow_p(v: f64, p: f64) -> f64 {
    if p == 2.0 {
        v * v
    } else {
        v.powf(p)
    }
}

/// Maximizes the mean of `clamp(X − θ, 0, β − θ)` over the ball, moving mass
/// rightwards only. `xs` must be sorted ascending.
fn right_plan(xs: &[f64], theta: f64, beta: f64, delta: f64, p: f64) -> Plan {
    if beta <= theta || delta == 0.0 {
        return Plan::stay(xs);
    }
    if p == 1.0 {
        knapsack_plan(xs, theta, beta, delta)
    } else {
        lagrangian_plan(xs, theta, beta, delta, p)
    }
}

fn knapsack_plan(xs: &[f64], theta: f64, beta: f64, delta: f64) -> Plan {
    let mut plan = Plan::stay(xs);
    let mut rem = delta * xs.len() as f64;
    // descending order visits [θ, β) first (unit gain per distance), then
    // points below θ by decreasing gain ratio (β−θ)/(β−x)
    let below = xs.partition_point(|&x| x < beta);
    for i in (0..below).rev() {
        let x = xs[i];
        let cost = beta - x;
        let ratio = (beta - theta) / (beta - x.min(theta));
        if rem >= cost {
            plan.cells[i] = [(beta, 1.0), (x, 0.0)];
            rem -= cost;
            plan.lambda = ratio;
            if rem == 0.0 {
                return plan;
            }
        } else {
            let w = rem / cost;
            plan.cells[i] = [(beta, w), (x, 1.0 - w)];
            plan.lambda = ratio;
            return plan;
        }
    }
    plan.lambda = 0.0;
    plan
}

/// Destinations for step length `r`, where `λ = 1/(p r^(p−1))`.
fn step_destinations(xs: &[f64], theta: f64, beta: f64, r: f64, p: f64, out: &mut [f64]) -> f64 {
    let mut cost = 0.0;
    let inv = if r > 0.0 { 1.0 / (p * pow_p(r, p - 1.0)) } else { f64::INFINITY };
    for (i, &x) in xs.iter().enumerate() {
        let dest = if x >= beta || r == 0.0 {
            x
        } else if x >= theta {
            x + r.min(beta - x)
        } else {
            let z = (x + r).max(theta).min(beta);
            if (z - theta) - inv * pow_p(z - x, p) > 0.0 {
                z
            } else {
                x
            }
        };
        out[i] = dest;
        cost += pow_p(dest - x, p);
    }
    cost / xs.len() as f64
}

fn lagrangian_plan(xs: &[f64], theta: f64, beta: f64, delta: f64, p: f64) -> Plan {
    let n = xs.len();
    let target = pow_p(delta, p);
    let full: f64 = xs.iter().filter(|&&x| x < beta).map(|&x| pow_p(beta - x, p)).sum::<f64>()
        / n as f64;
    if full <= target {
        return Plan {
            cells: xs.iter().map(|&x| [(x.max(beta), 1.0), (x, 0.0)]).collect(),
            lambda: 0.0,
        };
    }
    let mut lo_dest = xs.to_vec();
    let mut hi_dest = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut r_lo = 0.0;
    let mut c_lo = 0.0;
    let mut r_hi = beta - xs[0];
    let mut c_hi = step_destinations(xs, theta, beta, r_hi, p, &mut hi_dest);
    let mut guard = 0;
    while c_hi < target && guard < 200 {
        r_lo = r_hi;
        c_lo = c_hi;
        lo_dest.copy_from_slice(&hi_dest);
        r_hi *= 2.0;
        c_hi = step_destinations(xs, theta, beta, r_hi, p, &mut hi_dest);
        guard += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (r_lo + r_hi);
        if mid <= r_lo || mid >= r_hi {
            break;
        }
        let c = step_destinations(xs, theta, beta, mid, p, &mut scratch);
        if c <= target {
            r_lo = mid;
            c_lo = c;
            lo_dest.copy_from_slice(&scratch);
        } else {
            r_hi = mid;
            c_hi = c;
            hi_dest.copy_from_slice(&scratch);
        }
    }
    // mixing the two plans makes the budget tight
    let t = if c_hi > c_lo { ((target - c_lo) / (c_hi - c_lo)).clamp(0.0, 1.0) } else { 0.0 };
    let cells = lo_dest
        .iter()
        .zip(&hi_dest)
        .map(|(&a, &b)| [(a, 1.0 - t), (b, t)])
        .collect();
    Plan { cells, lambda: 1.0 / (p * pow_p(r_hi, p - 1.0)) }
}

/// Plan and value of `h(β; θ)` in original coordinates.
fn branch_plan(
    inst: &NewsvendorInstance,
    theta: f64,
    beta: f64,
    ball: &WassersteinBall,
) -> (f64, Plan) {
    let (b, s) = (inst.b, inst.s);
    if beta >= theta {
        let plan = right_plan(&inst.xs, theta, beta, ball.delta, ball.p);
        let h = b * (theta - beta) + s * plan.gain(theta, beta);
        (h, plan)
    } else {
        let ys: Vec<f64> = inst.xs.iter().rev().map(|x| -x).collect();
        let plan = right_plan(&ys, -theta, -beta, ball.delta, ball.p);
        let h = -(s - b) * (theta - beta) + s * plan.gain(-theta, -beta);
        (h, plan.mirrored())
    }
}

fn check(theta: f64, beta: f64) -> Result<()> {
    if !(theta >= 0.0) || !(beta >= 0.0) || !theta.is_finite() || !beta.is_finite() {
        return invalid("newsvendor decisions must be finite and nonnegative");
    }
    Ok(())
}

/// `h(β; θ) = sup_{P ∈ B} E_P[ℓ(θ,X) − ℓ(β,X)]`.
pub fn h_eval(beta: f64, theta: f64, inst: &NewsvendorInstance, ball: &WassersteinBall) -> Result<f64> {
    check(theta, beta)?;
    Ok(branch_plan(inst, theta, beta, ball).0)
}

/// `h(β; θ)` with its worst-case transport plan as a two-column certificate.
pub fn h_certificate(
    beta: f64,
    theta: f64,
    inst: &NewsvendorInstance,
    ball: &WassersteinBall,
) -> Result<WorstCaseSolution> {
    check(theta, beta)?;
    let (h, plan) = branch_plan(inst, theta, beta, ball);
    Ok(plan.to_solution(&inst.xs, h, inst.s * plan.lambda))
}

/// Maximizes a concave function on `[a, b]` by golden-section search.
pub fn golden_section_max(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let tol = rel_tol * (1.0 + a.abs().max(b.abs()));
    let (mut lo, mut hi) = (a, b);
    let mut best = (a, f(a));
    let fb = f(b);
    if fb > best.1 {
        best = (b, fb);
    }
    if hi - lo <= tol {
        return best;
    }
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
            if f1 > best.1 {
                best = (x1, f1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
            if f2 > best.1 {
                best = (x2, f2);
            }
        }
    }
    best
}

/// Maximizer of one branch.
#[derive(Debug, Clone)]
pub struct BranchOptimum {
    pub beta: f64,
    pub h: f64,
    pub solution: WorstCaseSolution,
}

fn branch_optimum(
    inst: &NewsvendorInstance,
    theta: f64,
    ball: &WassersteinBall,
    side: Side,
) -> BranchOptimum {
    let (a, b) = match side {
        Side::Left => (0.0, theta),
        _ => (theta, inst.beta_max(theta, ball)),
    };
    let (beta, _) = golden_section_max(|bt| branch_plan(inst, theta, bt, ball).0, a, b, GOLDEN_REL_TOL);
    let (h, plan) = branch_plan(inst, theta, beta, ball);
    BranchOptimum { beta, h, solution: plan.to_solution(&inst.xs, h, inst.s * plan.lambda) }
}

/// Both branch maximizers at `θ`, computed concurrently.
pub fn branch_optima(
    theta: f64,
    inst: &NewsvendorInstance,
    ball: &WassersteinBall,
) -> Result<(BranchOptimum, BranchOptimum)> {
    check(theta, 0.0)?;
    Ok(rayon::join(
        || branch_optimum(inst, theta, ball, Side::Left),
        || branch_optimum(inst, theta, ball, Side::Right),
    ))
}

/// `b − s·Q(X > θ)`, the right derivative of `E_Q ℓ(·, X)` at `θ`.
fn derivative_under(sol: &WorstCaseSolution, inst: &NewsvendorInstance, theta: f64) -> f64 {
    let n = inst.xs.len() as f64;
    let mut above = 0.0;
    for ((gi, qi), &x) in sol.gamma.iter().zip(&sol.q).zip(&inst.xs) {
        for (&g, q) in gi.iter().zip(qi) {
            if g > 0.0 && x + q[0] / g > theta {
                above += g;
            }
        }
    }
    inst.b - inst.s * above / n
}

fn witness(sol: &WorstCaseSolution, inst: &NewsvendorInstance) -> Result<DiscreteDistribution> {
    extract_worst_case_distribution(sol, &inst.data, &inst.support())
}

/// Exact regret `R(θ) = max(sup_{β≤θ} h, sup_{β≥θ} h)`.
pub fn regret_newsvendor(
    theta: f64,
    inst: &NewsvendorInstance,
    ball: &WassersteinBall,
) -> Result<RegretCertificate> {
    let (left, right) = branch_optima(theta, inst, ball)?;
    let scale = 1e-9 * (1.0 + left.h.abs().max(right.h.abs()));
    let (side, best) = if (left.h - right.h).abs() <= scale {
        (Side::Both, &right)
    } else if left.h > right.h {
        (Side::Left, &left)
    } else {
        (Side::Right, &right)
    };
    let worst_case = match side {
        Side::Both => vec![witness(&left.solution, inst)?, witness(&right.solution, inst)?],
        _ => vec![witness(&best.solution, inst)?],
    };
    Ok(RegretCertificate {
        value: best.h,
        beta_star: vec![best.beta],
        side: Some(side),
        worst_case,
        lambda: best.solution.lambda,
        status: RegretStatus::Optimal,
        subgradient: vec![derivative_under(&best.solution, inst, theta)],
    })
}

/// Minimizes `R(θ)` by bisection on the sign of its subgradient.
pub fn solve_drro_newsvendor(
    inst: &NewsvendorInstance,
    ball: &WassersteinBall,
    tol: f64,
) -> Result<(f64, RegretCertificate)> {
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }
    let n = inst.xs.len() as f64;
    let reach = if ball.p == 1.0 { n * ball.delta } else { n.powf(1.0 / ball.p) * ball.delta };
    let (mut lo, mut hi) = (0.0, inst.xs[inst.xs.len() - 1] + reach + 1.0);
    let at_zero = regret_newsvendor(0.0, inst, ball)?;
    if at_zero.subgradient[0] >= 0.0 {
        return Ok((0.0, at_zero));
    }
    // converge on inf{θ : g(θ) ≥ 0}, the smallest minimizer
    let mut upper = None;
    while hi - lo >= tol {
        let mid = 0.5 * (lo + hi);
        let cert = regret_newsvendor(mid, inst, ball)?;
        if cert.subgradient[0] < 0.0 {
            lo = mid;
        } else {
            hi = mid;
            upper = Some(cert);
        }
    }
    let cert = match upper {
        Some(c) => c,
        None => regret_newsvendor(hi, inst, ball)?,
    };
    Ok((hi, cert))
}

/// The two branch witnesses at a (near-)optimal decision.
#[derive(Debug, Clone)]
pub struct WorstCasePair {
    pub left: DiscreteDistribution,
    pub right: DiscreteDistribution,
    pub h_left: f64,
    pub h_right: f64,
    pub beta_left: f64,
    pub beta_right: f64,
    /// Whether the branch values agree within `10·tol`.
    pub consistent: bool,
}

pub fn worst_case_pair(
    theta_star: f64,
    inst: &NewsvendorInstance,
    ball: &WassersteinBall,
    tol: f64,
) -> Result<WorstCasePair> {
    let (left, right) = branch_optima(theta_star, inst, ball)?;
    Ok(WorstCasePair {
        left: witness(&left.solution, inst)?,
        right: witness(&right.solution, inst)?,
        consistent: (left.h - right.h).abs() <= 10.0 * tol,
        h_left: left.h,
        h_right: right.h,
        beta_left: left.beta,
        beta_right: right.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Norm;

    fn ball(p: f64, delta: f64) -> WassersteinBall {
        WassersteinBall::new(p, Norm::L2, delta).unwrap()
    }

    #[test]
    fn single_point_greedy() {
        // b = 0 is outside the instance domain; use a tiny b and compare to the closed form
        let inst = NewsvendorInstance::new(1e-12, 1.0, &[0.0]).unwrap();
        let h = h_eval(1.0, 0.0, &inst, &ball(1.0, 0.5)).unwrap();
        assert!((h - 0.5).abs() < 1e-9, "{h}");
    }

    #[test]
    fn equal_decisions_give_zero() {
        let inst = NewsvendorInstance::new(0.3, 2.0, &[1.0, 4.0, 6.0]).unwrap();
        for p in [1.0, 2.0, 3.0] {
            assert_eq!(h_eval(3.0, 3.0, &inst, &ball(p, 2.0)).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_radius_is_sample_difference() {
        let inst = NewsvendorInstance::new(0.3, 2.0, &[1.0, 4.0, 6.0]).unwrap();
        for (beta, theta) in [(2.0, 5.0), (5.0, 2.0)] {
            let want = inst.sample_mean_loss(theta) - inst.sample_mean_loss(beta);
            let h = h_eval(beta, theta, &inst, &ball(2.0, 0.0)).unwrap();
            assert!((h - want).abs() < 1e-12);
        }
    }

    #[test]
    fn erm_tie_break() {
        let inst = NewsvendorInstance::new(1.0, 2.0, &[4.0, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(inst.erm(), 2.0);
    }

    #[test]
    fn zero_regret_at_erm() {
        let inst = NewsvendorInstance::new(0.4, 2.0, &[3.0, 7.0, 1.0, 9.0, 4.0]).unwrap();
        let r = regret_newsvendor(inst.erm(), &inst, &ball(2.0, 0.0)).unwrap();
        assert!(r.value.abs() < 1e-7, "{}", r.value);
    }

    #[test]
    fn golden_section_finds_kink() {
        let (x, v) = golden_section_max(|x| -(x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-10 && v > -1e-10);
    }

    #[test]
    fn plan_spends_budget_exactly() {
        let inst = NewsvendorInstance::new(0.2, 2.0, &[1.0, 2.0, 5.0, 8.0]).unwrap();
        for p in [1.0, 2.0, 1.5] {
            let bl = ball(p, 0.8);
            let sol = h_certificate(6.0, 3.0, &inst, &bl).unwrap();
            let cost = sol.transport_cost(&bl);
            assert!((cost - 0.8f64.powf(p)).abs() < 1e-9, "p={p}: {cost}");
            let sol = h_certificate(1.5, 4.0, &inst, &bl).unwrap();
            assert!((sol.transport_cost(&bl) - 0.8f64.powf(p)).abs() < 1e-9);
        }
    }
}
