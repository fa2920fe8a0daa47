use drro_core::newsvendor::{regret_newsvendor, NewsvendorInstance};
use drro_core::regret::{
    ex_post_regret, grid_points, hill_climb, regret_eval, regret_lower_bound_bruteforce, RegretMode,
};
use drro_core::relaxation::relax_regret_eval;
use drro_core::{Norm, WassersteinBall};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> NewsvendorInstance {
    let n = rng.gen_range(2..9);
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
    let b = rng.gen_range(0.1..1.5);
    let s = b + rng.gen_range(0.2..2.0);
    NewsvendorInstance::new(b, s, &xs).unwrap()
}

#[test]
fn multistart_matches_exact_branch_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let inst = random_instance(&mut rng);
        let p = [1.0, 2.0][case % 2];
        let ball = WassersteinBall::new(p, Norm::L2, rng.gen_range(0.0..3.0)).unwrap();
        let theta = rng.gen_range(0.0..10.0);
        let exact = regret_newsvendor(theta, &inst, &ball).unwrap().value;
        let prob = inst.regret_problem(&ball);
        let general = regret_eval(&[theta], &prob, RegretMode::Multistart(8)).unwrap().value;
        worst = worst.max((exact - general).abs());
        assert!((exact - general).abs() < 1e-5, "case {case}: exact {exact} general {general}");
    }
    println!("max deviation {worst:e}");
}

#[test]
fn hill_climb_never_worse_than_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let inst = random_instance(&mut rng);
        let ball = WassersteinBall::new(2.0, Norm::L2, rng.gen_range(0.1..2.0)).unwrap();
        let prob = inst.regret_problem(&ball);
        let theta = rng.gen_range(0.0..10.0);
        let start = [rng.gen_range(0.0..10.0)];
        let h = hill_climb(&[theta], &prob, Some(&start)).unwrap();
        let one = regret_lower_bound_bruteforce(&[theta], &prob, &[start.to_vec()]).unwrap();
        assert!(h.state.objective >= one - 1e-9);
        assert!(h.history.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn sandwich_and_grid_refinement() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..8 {
        let inst = random_instance(&mut rng);
        let p = [1.0, 2.0][case % 2];
        let ball = WassersteinBall::new(p, Norm::L2, rng.gen_range(0.2..3.0)).unwrap();
        let prob = inst.regret_problem(&ball);
        let theta = [rng.gen_range(0.0..10.0)];
        let coarse = regret_lower_bound_bruteforce(&theta, &prob, &grid_points(&prob, 11).unwrap()).unwrap();
        let fine = regret_lower_bound_bruteforce(&theta, &prob, &grid_points(&prob, 21).unwrap()).unwrap();
        assert!(fine >= coarse - 1e-9, "grid refinement lowered the bound");
        let relax = relax_regret_eval(&theta, &prob).unwrap().objective;
        let post = ex_post_regret(&theta, &inst.regret_loss(), inst.data(), &ball, &inst.support()).unwrap();
        assert!(fine <= relax + 1e-6, "case {case}: lower {fine} relax {relax}");
        assert!(relax <= post + 1e-6, "case {case}: relax {relax} ex-post {post}");
    }
}

#[test]
fn dense_grid_close_to_exact() {
    let inst = NewsvendorInstance::new(0.4, 2.0, &[1.0, 3.0, 4.5, 7.0, 9.0]).unwrap();
    let ball = WassersteinBall::new(2.0, Norm::L2, 1.0).unwrap();
    let prob = inst.regret_problem(&ball);
    let (lo, hi) = prob.search_box().unwrap();
    let grid: Vec<Vec<f64>> = (0..1000).map(|i| vec![lo[0] + (hi[0] - lo[0]) * i as f64 / 999.0]).collect();
    let lower = regret_lower_bound_bruteforce(&[5.0], &prob, &grid).unwrap();
    let exact = regret_newsvendor(5.0, &inst, &ball).unwrap().value;
    assert!(lower <= exact + 1e-6 && exact - lower < 1e-3, "{lower} vs {exact}");
}
