//! Exit criteria. Runs every criterion in sequence, prints one PASS/FAIL line
//! each (with its runtime against the budget) and fails if any criterion fails.

use std::time::Instant;

use drro_bench::scenario::{generate_samples, newsvendor_instance, scenario_problem};
use drro_bench::sweep::{bracket_regret, exact_drro_multi};
use drro_bench::table::performance_table;
use drro_bench::ScenarioConfig;
use drro_core::newsvendor::{h_eval, worst_case_pair};
use drro_core::optimize::{
    bisection_1d, cutting_plane, subgradient_descent, NewsvendorOracle, StepRule, CUTTING_PLANE_MAX_ITER,
};
use drro_core::quadratic::{quadratic_drro, quadratic_regret, QuadraticLoss};
use drro_core::wasserstein::wasserstein_distance_lp;
use drro_core::{
    ex_post_regret, hill_climb, regret_eval, regret_newsvendor, relax_regret_eval, solve_drro_newsvendor,
    solve_drro_relaxed, ColumnGenOptions, DiscreteDistribution, EmpiricalDataset, MaxAffineLoss, NewsvendorInstance,
    Norm, Polyhedron, RegretMode, RegretProblem, RegretStatus, WassersteinBall,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = (bool, String);

fn run(id: usize, name: &str, budget_s: f64, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let (ok, detail) = f();
    let secs = start.elapsed().as_secs_f64();
    let pass = ok && secs < budget_s;
    println!(
        "{} criterion {id} ({name}): {detail}; {secs:.1}s of {budget_s:.0}s",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn ball(p: f64, delta: f64) -> WassersteinBall {
    WassersteinBall::new(p, Norm::L2, delta).unwrap()
}

fn gaussian_instance(b: f64, s: f64, mean: f64, std: f64, n: usize, rng: &mut ChaCha8Rng) -> NewsvendorInstance {
    let d = Normal::new(mean, std).unwrap();
    let xs: Vec<f64> = (0..n).map(|_| d.sample(rng).max(0.0)).collect();
    NewsvendorInstance::new(b, s, &xs).unwrap()
}

fn zero_radius() -> Check {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for seed in 0..20u64 {
        let cfg = match seed % 3 {
            0 => ScenarioConfig::newsvendor(0.1 + 0.1 * (seed % 5) as f64, 2.0, 100.0, 10.0, 200, seed, vec![0.0]),
            1 => ScenarioConfig::multi_factor(200, seed, vec![0.0]),
            _ => ScenarioConfig::two_item(40, seed, vec![0.0]),
        };
        let data = generate_samples(&cfg).unwrap();
        let prob = scenario_problem(&cfg, &data, 0.0).unwrap();
        let value = if cfg.dim() == 1 {
            let inst = newsvendor_instance(&cfg, &data).unwrap();
            regret_newsvendor(inst.erm(), &inst, &prob.ball).unwrap().value
        } else {
            let erm = prob.erm().unwrap();
            regret_eval(&erm, &prob, RegretMode::HillClimb).unwrap().value
        };
        worst = worst.max(value.abs());
        count += 1;
    }
    (worst <= 1e-6, format!("max |R(0, θ_ERM)| = {worst:.2e} over {count} instances"))
}

fn critical_ratio() -> Check {
    let cfg = ScenarioConfig::newsvendor(1.0, 2.0, 100.0, 10.0, 1000, 42, vec![0.0]);
    let data = generate_samples(&cfg).unwrap();
    let inst = newsvendor_instance(&cfg, &data).unwrap();
    let erm = inst.erm();
    let mut worst: f64 = 0.0;
    for delta in 0..=10 {
        let bl = ball(2.0, delta as f64);
        let exact = solve_drro_newsvendor(&inst, &bl, 1e-6).unwrap().0;
        let relaxed = solve_drro_relaxed(&inst.regret_problem(&bl)).unwrap().theta[0];
        worst = worst.max((exact - erm).abs()).max((relaxed - erm).abs());
    }
    (worst <= 0.1, format!("max |θ − θ_ERM| = {worst:.3e} for δ = 0..10"))
}

fn table_one() -> Check {
    let cfg = ScenarioConfig::newsvendor(0.1, 2.0, 100.0, 10.0, 1000, 42, vec![10.0]);
    let rows = performance_table(&cfg, 10.0, 1e-6).unwrap();
    let (erm, dro, drro) = (&rows[0], &rows[1], &rows[2]);
    let ordered = dro.theta < erm.theta
        && erm.theta < drro.theta
        && drro.regret < erm.regret
        && erm.regret < dro.regret;
    let reference = [
        ("θ_ERM", erm.theta, 116.64),
        ("θ_DRO", dro.theta, 111.57),
        ("θ_DRRO", drro.theta, 125.48),
        ("R_ERM", erm.regret, 6.02),
        ("R_DRO", dro.regret, 8.77),
        ("R_DRRO", drro.regret, 3.07),
    ];
    let mut ok = ordered;
    let mut parts = vec![format!("orderings {}", if ordered { "hold" } else { "violated" })];
    for (name, got, want) in reference {
        let rel = (got - want).abs() / want;
        ok &= rel <= 0.03;
        parts.push(format!("{name} {got:.2} vs {want} ({:.1}%)", 100.0 * rel));
    }
    (ok, parts.join(", "))
}

fn sandwich() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut count = 0;
    for i in 0..30 {
        let b = rng.gen_range(0.1..1.8);
        let inst = gaussian_instance(b, 2.0, 20.0, 5.0, 15, &mut rng);
        let delta = [1.0, 5.0, 10.0][i % 3];
        let p = [1.0, 2.0][(i / 3) % 2];
        let bl = ball(p, delta);
        let prob = inst.regret_problem(&bl);
        let theta = [rng.gen_range(10.0..30.0)];
        let cert = regret_eval(&theta, &prob, RegretMode::GridCertified { points_per_dim: 60 }).unwrap();
        let lower = match cert.status {
            RegretStatus::BoundPair { lower, .. } => lower,
            _ => panic!("grid mode returns a bound pair"),
        };
        let relax = relax_regret_eval(&theta, &prob).unwrap().objective;
        let ex_post = ex_post_regret(&theta, &inst.regret_loss(), inst.data(), &bl, &inst.support()).unwrap();
        worst = worst.max(lower - relax).max(relax - ex_post);
        count += 1;
    }
    (worst <= 1e-5, format!("largest violation {worst:.2e} over {count} instances"))
}

/// Minimizer of a quadratic function of `d` variables from central
/// differences (exact for quadratics up to rounding) and an LU solve.
fn numeric_argmin(f: impl Fn(&DVector<f64>) -> f64, d: usize) -> DVector<f64> {
    let h = 1e-2;
    let x0 = DVector::zeros(d);
    let e = |i: usize| DVector::from_fn(d, |j, _| if i == j { h } else { 0.0 });
    let grad = DVector::from_fn(d, |i, _| (f(&(&x0 + e(i))) - f(&(&x0 - e(i)))) / (2.0 * h));
    let hess = DMatrix::from_fn(d, d, |i, j| {
        (f(&(&x0 + e(i) + e(j))) - f(&(&x0 + e(i) - e(j))) - f(&(&x0 - e(i) + e(j))) + f(&(&x0 - e(i) - e(j))))
            / (4.0 * h * h)
    });
    -hess.lu().solve(&grad).unwrap()
}

/// Unit vector from hyperspherical angles.
fn direction(angles: &[f64], n: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    let mut sin_prod = 1.0;
    for i in 0..n - 1 {
        v[i] = sin_prod * angles[i].cos();
        sin_prod *= angles[i].sin();
    }
    v[n - 1] = sin_prod;
    v
}

/// Maximizes `g` over the unit sphere in `R^n` by an angle grid plus compass refinement.
fn sphere_max(g: impl Fn(&DVector<f64>) -> f64, n: usize) -> f64 {
    if n == 1 {
        return g(&DVector::from_element(1, 1.0)).max(g(&DVector::from_element(1, -1.0)));
    }
    let k: usize = 48;
    let m = n - 1;
    let mut best = (f64::NEG_INFINITY, vec![0.0; m]);
    let total = k.pow(m as u32);
    for idx in 0..total {
        let mut r = idx;
        let angles: Vec<f64> = (0..m)
            .map(|i| {
                let j = r % k;
                r /= k;
                let span = if i == m - 1 { 2.0 * std::f64::consts::PI } else { std::f64::consts::PI };
                span * j as f64 / k as f64
            })
            .collect();
        let v = g(&direction(&angles, n));
        if v > best.0 {
            best = (v, angles);
        }
    }
    let mut step = std::f64::consts::PI / k as f64;
    while step > 1e-12 {
        let mut improved = false;
        for i in 0..m {
            for sign in [1.0, -1.0] {
                let mut a = best.1.clone();
                a[i] += sign * step;
                let v = g(&direction(&a, n));
                if v > best.0 {
                    best = (v, a);
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best.0
}

fn quadratic_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut theta_err: f64 = 0.0;
    let mut regret_err: f64 = 0.0;
    for _ in 0..10 {
        let d = rng.gen_range(1..=4);
        let n = rng.gen_range(1..=4);
        let mut r = || rng.gen_range(-1.0..1.0);
        let a = DMatrix::from_fn(d, d, |_, _| r());
        let q_mat = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
        let s_mat = DMatrix::from_fn(n, d, |_, _| r());
        let bm = DMatrix::from_fn(n, n, |_, _| r());
        let r_mat = &bm + bm.transpose();
        let q_vec = DVector::from_fn(d, |_, _| r());
        let r_vec = DVector::from_fn(n, |_, _| r());
        let loss = QuadraticLoss::new(q_mat, s_mat, r_mat, q_vec, r_vec).unwrap();
        let data: Vec<DVector<f64>> = (0..30).map(|_| DVector::from_fn(n, |_, _| 3.0 * r())).collect();
        let mu = data.iter().fold(DVector::zeros(n), |acc, x| acc + x) / data.len() as f64;
        let sigma = data.iter().fold(DMatrix::zeros(n, n), |acc, x| acc + (x - &mu) * (x - &mu).transpose())
            / data.len() as f64;
        let sol = quadratic_drro(&loss, &mu, &sigma).unwrap();
        let erm = numeric_argmin(
            |t| data.iter().map(|x| loss.eval(t, x)).sum::<f64>() / data.len() as f64,
            d,
        );
        theta_err = theta_err.max((&erm - &sol.theta_star).amax());
        for delta in [0.5, 1.0, 2.0] {
            // under a distribution with mean m the regret only sees m
            let regret_at = |m: &DVector<f64>| {
                let best = numeric_argmin(|t| loss.eval(t, m), d);
                loss.eval(&sol.theta_star, m) - loss.eval(&best, m)
            };
            let grid = sphere_max(|v| regret_at(&(&mu + delta * v)), n).max(regret_at(&mu));
            let closed = quadratic_regret(delta, &sol).unwrap().value;
            regret_err = regret_err.max((grid - closed).abs() / (1.0 + closed.abs()));
        }
    }
    (
        theta_err <= 1e-6 && regret_err <= 1e-4,
        format!("max |θ* − θ_ERM| = {theta_err:.2e}, max relative regret gap {regret_err:.2e}"),
    )
}

fn concavity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut checks = 0;
    for i in 0..10 {
        let inst = gaussian_instance(rng.gen_range(0.1..1.8), 2.0, 50.0, 10.0, 40, &mut rng);
        let bl = ball([1.0, 2.0, 3.0][i % 3], rng.gen_range(0.5..8.0));
        let theta = rng.gen_range(30.0..70.0);
        for c in 0..20 {
            let (lo, hi) = if c % 2 == 0 { (0.0, theta) } else { (theta, theta + 60.0) };
            let x = rng.gen_range(lo..hi);
            let y = rng.gen_range(lo..hi);
            let h = |beta: f64| h_eval(beta, theta, &inst, &bl).unwrap();
            worst = worst.max(0.5 * (h(x) + h(y)) - h(0.5 * (x + y)));
            checks += 1;
        }
    }
    (worst <= 1e-7, format!("largest midpoint violation {worst:.2e} over {checks} checks"))
}

fn subgradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut slack = f64::INFINITY;
    let mut fd_err: f64 = 0.0;
    let mut smooth = 0;
    for i in 0..10 {
        let inst = gaussian_instance(rng.gen_range(0.1..1.8), 2.0, 50.0, 10.0, 30, &mut rng);
        let bl = ball([1.0, 2.0][i % 2], rng.gen_range(0.5..5.0));
        let r = |t: f64| regret_newsvendor(t, &inst, &bl).unwrap();
        let theta = rng.gen_range(35.0..65.0);
        let c = r(theta);
        let g = c.subgradient[0];
        for _ in 0..50 {
            let probe = rng.gen_range(0.0..100.0);
            slack = slack.min(r(probe).value - c.value - g * (probe - theta));
        }
        let h = 1e-4;
        let (up, down) = (r(theta + h).value, r(theta - h).value);
        let (right, left) = ((up - c.value) / h, (c.value - down) / h);
        if (right - left).abs() <= 1e-3 * (1.0 + right.abs()) {
            let fd = (up - down) / (2.0 * h);
            fd_err = fd_err.max((fd - g).abs() / (1.0 + g.abs()));
            smooth += 1;
        }
    }
    (
        slack >= -1e-5 && fd_err <= 1e-3 && smooth > 0,
        format!("min slack {slack:.2e} over 500 probes, max finite-difference gap {fd_err:.2e} at {smooth} smooth points"),
    )
}

fn certificates() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut transport_excess: f64 = f64::NEG_INFINITY;
    let mut reeval: f64 = 0.0;
    let mut branch_gap: f64 = 0.0;
    for i in 0..6 {
        let inst = gaussian_instance(rng.gen_range(0.2..1.5), 2.0, 50.0, 10.0, 25, &mut rng);
        let p = [1.0, 2.0][i % 2];
        let delta = rng.gen_range(1.0..6.0);
        let bl = ball(p, delta);
        let empirical = inst.data().to_distribution();
        let loss = inst.loss();
        let diff = |theta: f64, beta: f64, q: &DiscreteDistribution| {
            q.expectation(|x| loss.eval(&[theta], x).unwrap() - loss.eval(&[beta], x).unwrap())
        };
        let mut check = |q: &DiscreteDistribution, theta: f64, beta: f64, value: f64| {
            let w = wasserstein_distance_lp(&empirical, q, p, Norm::L2).unwrap();
            transport_excess = transport_excess.max(w - delta);
            reeval = reeval.max((diff(theta, beta, q) - value).abs());
        };
        let theta = rng.gen_range(35.0..65.0);
        let cert = regret_newsvendor(theta, &inst, &bl).unwrap();
        for q in &cert.worst_case {
            check(q, theta, cert.beta_star[0], cert.value);
        }
        let (theta_star, _) = solve_drro_newsvendor(&inst, &bl, 1e-7).unwrap();
        let pair = worst_case_pair(theta_star, &inst, &bl, 1e-7).unwrap();
        check(&pair.left, theta_star, pair.beta_left, pair.h_left);
        check(&pair.right, theta_star, pair.beta_right, pair.h_right);
        branch_gap = branch_gap.max((pair.h_left - pair.h_right).abs());
    }
    (
        transport_excess <= 1e-6 && reeval <= 1e-6 && branch_gap <= 1e-4,
        format!(
            "max W_p − δ = {transport_excess:.2e}, max re-evaluation gap {reeval:.2e}, max branch gap {branch_gap:.2e}"
        ),
    )
}

fn relaxation_tracking() -> Check {
    let mut worst_single: f64 = 0.0;
    let cfg = ScenarioConfig::newsvendor(1.5, 2.0, 100.0, 10.0, 1000, 42, vec![0.0]);
    let data = generate_samples(&cfg).unwrap();
    let inst = newsvendor_instance(&cfg, &data).unwrap();
    for delta in 1..=10 {
        let bl = ball(2.0, delta as f64);
        let (_, exact) = solve_drro_newsvendor(&inst, &bl, 1e-6).unwrap();
        let relaxed = solve_drro_relaxed(&inst.regret_problem(&bl)).unwrap().theta[0];
        let r = regret_newsvendor(relaxed, &inst, &bl).unwrap().value;
        worst_single = worst_single.max((r - exact.value).abs() / exact.value);
    }
    let mut worst_two: f64 = 0.0;
    let mut open = 0;
    let cfg = ScenarioConfig::two_item(100, 42, vec![0.0]);
    let data = generate_samples(&cfg).unwrap();
    let opts = ColumnGenOptions::default();
    for delta in 1..=10 {
        let prob: RegretProblem = scenario_problem(&cfg, &data, delta as f64).unwrap();
        let relaxed = solve_drro_relaxed(&prob).unwrap().theta;
        let (cg, exact) = exact_drro_multi(&prob, &[relaxed.clone()], opts).unwrap();
        if exact.status != "ok" {
            open += 1;
        }
        let r = bracket_regret(&relaxed, &prob, &cg.comparators, cg.lower, opts).unwrap();
        worst_two = worst_two.max((r.value - exact.value).abs() / exact.value);
    }
    (
        worst_single <= 0.02 && worst_two <= 0.02,
        format!(
            "max relative gap single-item {:.3}%, two-item {:.3}% ({open} exact bound pairs open)",
            100.0 * worst_single,
            100.0 * worst_two
        ),
    )
}

fn random_loss(rng: &mut ChaCha8Rng, bilinear: bool) -> MaxAffineLoss {
    let k = rng.gen_range(2..=4);
    let mut r = |s: f64| rng.gen_range(-s..s);
    let a = (0..k).map(|_| vec![r(1.0), r(1.0)]).collect();
    let b = (0..k).map(|_| vec![r(1.0), r(1.0)]).collect();
    let c = (0..k).map(|_| r(2.0)).collect();
    let d = if bilinear { Some((0..k).map(|_| vec![r(0.3), r(0.3)]).collect()) } else { None };
    MaxAffineLoss::new(a, b, c, d).unwrap()
}

fn hill_climbing() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_drop: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut worst_final: f64 = 0.0;
    for i in 0..50 {
        let loss = random_loss(&mut rng, i % 5 == 0);
        let pts: Vec<Vec<f64>> = (0..6).map(|_| vec![rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)]).collect();
        let data = EmpiricalDataset::new(pts).unwrap();
        let theta_set = Polyhedron::boxed(&[0.0, 0.0], &[5.0, 5.0]).unwrap();
        let theta = vec![rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)];
        let prob = RegretProblem::new(
            loss.clone(),
            data.clone(),
            ball(2.0, rng.gen_range(0.1..2.0)),
            theta_set.clone(),
            Polyhedron::nonneg(2),
        )
        .unwrap();
        let h = hill_climb(&theta, &prob, None).unwrap();
        for w in h.history.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
        if i < 10 {
            let zero = prob.with_ball(ball(2.0, 0.0));
            let erm = zero.erm().unwrap();
            let gap = loss.empirical_mean(&theta, &data).unwrap() - loss.empirical_mean(&erm, &data).unwrap();
            let h0 = hill_climb(&theta, &zero, None).unwrap();
            let first_round = h0.history[1.min(h0.history.len() - 1)];
            worst_gap = worst_gap.max((first_round - gap).abs());
            worst_final = worst_final.max((h0.state.objective - gap).abs());
        }
    }
    (
        worst_drop <= 0.0 && worst_gap <= 1e-7 && worst_final <= 1e-7,
        format!(
            "largest decrease {worst_drop:.2e} on 50 instances, δ=0 gap error {worst_gap:.2e} after one round, \
             {worst_final:.2e} at termination"
        ),
    )
}

fn method_agreement() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut spread: f64 = 0.0;
    for _ in 0..5 {
        let inst = gaussian_instance(rng.gen_range(0.2..1.5), 2.0, 50.0, 10.0, 40, &mut rng);
        let oracle = NewsvendorOracle { inst: inst.clone(), ball: ball(2.0, rng.gen_range(1.0..6.0)) };
        let hi = 150.0;
        let bis = bisection_1d(&oracle, (0.0, hi), 1e-6).unwrap().value;
        let set = Polyhedron::boxed(&[0.0], &[hi]).unwrap();
        let sgd = subgradient_descent(&oracle, &[inst.erm()], &set, 300, StepRule::Geometric { c: 10.0, ratio: 0.97 })
            .unwrap()
            .value;
        let (cp, _) = cutting_plane(&oracle, &set, 1e-6, CUTTING_PLANE_MAX_ITER).unwrap();
        let vals = [bis, sgd, cp.value];
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        spread = spread.max(max - min);
    }
    (spread <= 1e-2, format!("largest spread between methods {spread:.2e} on 5 instances"))
}

#[test]
fn acceptance_criteria() {
    let results = [
        run(1, "zero-radius regret", 60.0, zero_radius),
        run(2, "critical-ratio fixed point", 120.0, critical_ratio),
        run(3, "performance table", 180.0, table_one),
        run(4, "sandwich bound", 300.0, sandwich),
        run(5, "quadratic closed form", 60.0, quadratic_oracle),
        run(6, "branch concavity", 120.0, concavity),
        run(7, "subgradient validity", 180.0, subgradients),
        run(8, "worst-case certificates", 120.0, certificates),
        run(9, "relaxation tracking", 900.0, relaxation_tracking),
        run(10, "hill-climb monotonicity", 120.0, hill_climbing),
        run(11, "method agreement", 180.0, method_agreement),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
