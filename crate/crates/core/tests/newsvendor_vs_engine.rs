use drro_core::conic::SolverOptions;
use drro_core::newsvendor::{h_eval, NewsvendorInstance};
use drro_core::{worst_case_expectation, CompositeLoss, Norm, WassersteinBall};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_h_matches_generic_program() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..60 {
        let n = rng.gen_range(1..8);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        let b = rng.gen_range(0.1..1.5);
        let s = b + rng.gen_range(0.1..2.0);
        let inst = NewsvendorInstance::new(b, s, &xs).unwrap();
        let p = [1.0, 2.0, 1.5][case % 3];
        let ball = WassersteinBall::new(p, Norm::L2, rng.gen_range(0.0..3.0)).unwrap();
        let theta = rng.gen_range(0.0..10.0);
        let beta = rng.gen_range(0.0..12.0);
        let exact = h_eval(beta, theta, &inst, &ball).unwrap();
        let generic = worst_case_expectation(
            &CompositeLoss::regret_difference(&inst.loss(), &[theta], &[beta]),
            inst.data(),
            &ball,
            &inst.support(),
            &SolverOptions::tight(),
        )
        .unwrap();
        let err = (exact - generic.value).abs();
        worst = worst.max(err);
        assert!(err < 1e-6, "case {case} p={p}: exact {exact} generic {}", generic.value);
    }
    println!("max deviation {worst:e}");
}
