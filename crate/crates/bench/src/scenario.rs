//! Seeded data generation and loss construction for each scenario kind.

use drro_core::{
    DrroError, EmpiricalDataset, MaxAffineLoss, NewsvendorInstance, Polyhedron, RegretProblem, Result,
};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{DemandModel, Prices, ScenarioConfig, ScenarioKind};

/// Symmetric square root, valid for singular PSD matrices too.
fn psd_sqrt(cov: &[Vec<f64>]) -> DMatrix<f64> {
    let k = cov.len();
    let m = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
    let eig = SymmetricEigen::new(m);
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Draws `config.n` demand samples, deterministic in `config.seed`.
pub fn generate_samples(config: &ScenarioConfig) -> Result<EmpiricalDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
    let clip = |v: f64| if config.clip { v.max(0.0) } else { v };
    let points: Vec<Vec<f64>> = match &config.demand {
        DemandModel::Gaussian { mean, std } => (0..config.n).map(|_| vec![clip(mean + std * z())]).collect(),
        DemandModel::Factor { weights, mean, cov } => {
            let root = psd_sqrt(cov);
            let w = DVector::from_column_slice(weights);
            let mu = DVector::from_column_slice(mean);
            (0..config.n)
                .map(|_| {
                    let e = DVector::from_fn(mean.len(), |_, _| z());
                    vec![clip(w.dot(&(&mu + &root * e)))]
                })
                .collect()
        }
        DemandModel::IndependentGaussian { mean, std } => (0..config.n)
            .map(|_| mean.iter().zip(std).map(|(m, s)| clip(m + s * z())).collect())
            .collect(),
    };
    EmpiricalDataset::new(points)
}

/// Negative two-item profit as a maximum of four affine pieces.
///
/// With `x = (D_A, D_B)` and `θ = (θ_A, θ_B)`, the loss
/// `b_Aθ_A + b_Bθ_B − s_A min(θ_A, D_A) − s_B min(θ_B, D_B + φ min(θ_A, D_A))`
/// expands into six pieces, two of which never attain the maximum.
pub fn build_two_item_loss(b_a: f64, b_b: f64, s_a: f64, s_b: f64, phi: f64) -> Result<MaxAffineLoss> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(DrroError::InvalidArgument("phi must lie in [0, 1]".into()));
    }
    MaxAffineLoss::new(
        vec![vec![0.0, 0.0], vec![0.0, -s_b], vec![-s_a, 0.0], vec![-s_a - s_b * phi, -s_b]],
        vec![
            vec![b_a - s_a, b_b - s_b],
            vec![b_a - s_a - s_b * phi, b_b],
            vec![b_a, b_b - s_b],
            vec![b_a, b_b],
        ],
        vec![0.0; 4],
        None,
    )
}

/// The two-item loss evaluated from its definition.
pub fn two_item_loss_direct(b_a: f64, b_b: f64, s_a: f64, s_b: f64, phi: f64, theta: &[f64], x: &[f64]) -> f64 {
    let sold_a = theta[0].min(x[0]);
    b_a * theta[0] + b_b * theta[1] - s_a * sold_a - s_b * theta[1].min(x[1] + phi * sold_a)
}

/// Loss of the scenario in max-affine form.
pub fn scenario_loss(config: &ScenarioConfig) -> Result<MaxAffineLoss> {
    match config.prices {
        Prices::Single { b, s } => NewsvendorInstance::new(b, s, &[0.0]).map(|i| i.loss()),
        Prices::TwoItem { b_a, b_b, s_a, s_b, phi } => build_two_item_loss(b_a, b_b, s_a, s_b, phi),
    }
}

/// Demand support: the nonnegative orthant when samples are clipped.
pub fn scenario_support(config: &ScenarioConfig) -> Polyhedron {
    let n = if config.kind == ScenarioKind::TwoItem { 2 } else { 1 };
    if config.clip {
        Polyhedron::nonneg(n)
    } else {
        Polyhedron::full(n)
    }
}

/// Regret problem at radius `delta` with `Θ = [0, ∞)^d`.
pub fn scenario_problem(config: &ScenarioConfig, data: &EmpiricalDataset, delta: f64) -> Result<RegretProblem> {
    RegretProblem::new(
        scenario_loss(config)?,
        data.clone(),
        config.ball_for(delta)?,
        Polyhedron::nonneg(config.dim()),
        scenario_support(config),
    )
}

/// Single-item instance for the exact solver.
pub fn newsvendor_instance(config: &ScenarioConfig, data: &EmpiricalDataset) -> Result<NewsvendorInstance> {
    if config.dim() != 1 {
        return Err(DrroError::InvalidArgument("scenario is not single-item".into()));
    }
    let (b, s) = config.single_prices()?;
    NewsvendorInstance::new(b, s, &data.column(0))
}

/// Sample mean and standard deviation (divisor `N`) of a scalar dataset.
pub fn fit_gaussian(data: &EmpiricalDataset) -> (f64, f64) {
    let xs = data.column(0);
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_seed_same_samples() {
        let cfg = ScenarioConfig::two_item(50, 17, vec![1.0]);
        assert_eq!(generate_samples(&cfg).unwrap(), generate_samples(&cfg).unwrap());
        let other = ScenarioConfig { seed: 18, ..cfg.clone() };
        assert_ne!(generate_samples(&cfg).unwrap(), generate_samples(&other).unwrap());
    }

    #[test]
    fn four_pieces_match_definition() {
        let loss = build_two_item_loss(6.0, 6.0, 20.0, 7.0, 0.1).unwrap();
        assert_eq!(loss.num_pieces(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let t = [rng.gen_range(0.0..80.0), rng.gen_range(0.0..80.0)];
            let x = [rng.gen_range(0.0..80.0), rng.gen_range(0.0..80.0)];
            let want = two_item_loss_direct(6.0, 6.0, 20.0, 7.0, 0.1, &t, &x);
            assert!((loss.eval(&t, &x).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn uncoupled_items_separate() {
        let loss = build_two_item_loss(1.0, 2.0, 3.0, 5.0, 0.0).unwrap();
        let a = NewsvendorInstance::new(1.0, 3.0, &[0.0]).unwrap();
        let b = NewsvendorInstance::new(2.0, 5.0, &[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let t = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
            let x = [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)];
            let want = a.eval(t[0], x[0]) + b.eval(t[1], x[1]);
            assert!((loss.eval(&t, &x).unwrap() - want).abs() < 1e-10);
        }
    }
}
