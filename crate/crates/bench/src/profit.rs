//! Expected newsvendor profit under Gaussian demand and the ERM-vs-DRO heatmap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// `s·(θ − E(θ−X)⁺) − bθ` for `X ~ N(μ, σ²)`.
pub fn gaussian_expected_profit(theta: f64, mu: f64, sigma: f64, b: f64, s: f64) -> f64 {
    assert!(sigma > 0.0, "sigma must be positive");
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let z = (theta - mu) / sigma;
    let shortfall = (theta - mu) * std.cdf(z) + sigma * std.pdf(z);
    s * (theta - shortfall) - b * theta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub mu: f64,
    pub sigma: f64,
    pub in_ball: bool,
    /// Profit of the ERM decision minus profit of the DRO decision.
    pub profit_diff: f64,
}

/// Evaluates both decisions on every `(μ, σ)` cell. A cell is in the ball when
/// its `W₂` distance to `N(μ₀, σ₀²)`, `√((μ−μ₀)² + (σ−σ₀)²)`, is at most `delta`.
#[allow(clippy::too_many_arguments)]
pub fn heatmap_erm_vs_dro(
    b: f64,
    s: f64,
    reference: (f64, f64),
    delta: f64,
    theta_erm: f64,
    theta_dro: f64,
    grid: &[(f64, f64)],
) -> Vec<HeatmapRow> {
    let (mu0, sigma0) = reference;
    grid.par_iter()
        .map(|&(mu, sigma)| HeatmapRow {
            mu,
            sigma,
            in_ball: ((mu - mu0).powi(2) + (sigma - sigma0).powi(2)).sqrt() <= delta,
            profit_diff: gaussian_expected_profit(theta_erm, mu, sigma, b, s)
                - gaussian_expected_profit(theta_dro, mu, sigma, b, s),
        })
        .collect()
}

/// `k × k` grid covering `μ₀ ± delta` and `max(σ₀ − delta, ε) .. σ₀ + delta`.
pub fn heatmap_grid(reference: (f64, f64), delta: f64, k: usize) -> Vec<(f64, f64)> {
    let (mu0, sigma0) = reference;
    let k = k.max(2);
    let s_lo = (sigma0 - delta).max(1e-3 * sigma0.max(1e-3));
    let s_hi = sigma0 + delta;
    let mut out = Vec::with_capacity(k * k);
    for i in 0..k {
        let mu = mu0 - delta + 2.0 * delta * i as f64 / (k - 1) as f64;
        for j in 0..k {
            out.push((mu, s_lo + (s_hi - s_lo) * j as f64 / (k - 1) as f64));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal as Gauss};

    #[test]
    fn far_below_mean_sells_out() {
        let (mu, sigma, b, s) = (100.0, 10.0, 0.3, 2.0);
        let theta = mu - 6.0 * sigma;
        assert!((gaussian_expected_profit(theta, mu, sigma, b, s) - (s - b) * theta).abs() < 1e-6);
    }

    #[test]
    fn matches_monte_carlo_at_mean() {
        let (mu, sigma, b, s) = (100.0, 10.0, 0.1, 2.0);
        let closed = gaussian_expected_profit(mu, mu, sigma, b, s);
        assert!((closed - (s * (mu - sigma * 0.398942) - b * mu)).abs() < 1e-4);
        let d = Gauss::new(mu, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = 10_000_000;
        let mc = (0..m).map(|_| s * mu.min(d.sample(&mut rng)) - b * mu).sum::<f64>() / m as f64;
        assert!((mc - closed).abs() < 1e-2, "{mc} vs {closed}");
    }

    #[test]
    fn concave_in_order_quantity() {
        for (a, c) in [(50.0, 150.0), (90.0, 95.0), (0.0, 300.0)] {
            let f = |t| gaussian_expected_profit(t, 100.0, 10.0, 0.5, 2.0);
            assert!(f(0.5 * (a + c)) >= 0.5 * (f(a) + f(c)) - 1e-9);
        }
    }

    #[test]
    fn ball_membership() {
        let rows = heatmap_erm_vs_dro(0.1, 2.0, (100.0, 10.0), 5.0, 110.0, 105.0, &[(100.0, 10.0), (104.0, 14.0)]);
        assert!(rows[0].in_ball);
        assert!(!rows[1].in_ball);
    }
}
