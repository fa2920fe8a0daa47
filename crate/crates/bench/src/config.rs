//! Scenario configuration, read from TOML.

use drro_core::{DrroError, Norm, Result, WassersteinBall};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Newsvendor,
    MultiFactor,
    TwoItem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prices {
    Single { b: f64, s: f64 },
    TwoItem { b_a: f64, b_b: f64, s_a: f64, s_b: f64, phi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum DemandModel {
    Gaussian { mean: f64, std: f64 },
    /// Demand `wᵀX` with `X ~ N(mean, cov)`.
    Factor { weights: Vec<f64>, mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Independent Gaussian demand per item.
    IndependentGaussian { mean: Vec<f64>, std: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormName {
    L1,
    L2,
    Linf,
}

impl From<NormName> for Norm {
    fn from(n: NormName) -> Norm {
        match n {
            NormName::L1 => Norm::L1,
            NormName::L2 => Norm::L2,
            NormName::Linf => Norm::Linf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallConfig {
    pub p: f64,
    pub norm: NormName,
}

fn default_clip() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub prices: Prices,
    pub demand: DemandModel,
    pub n: usize,
    pub seed: u64,
    pub delta_grid: Vec<f64>,
    pub ball: BallConfig,
    /// Clip sampled demand at zero, so data lie in `Ξ = [0, ∞)`.
    #[serde(default = "default_clip")]
    pub clip: bool,
}

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(DrroError::InvalidArgument(msg.into()))
}

fn check_psd(cov: &[Vec<f64>], k: usize) -> Result<()> {
    if cov.len() != k || cov.iter().any(|r| r.len() != k) {
        return bad(format!("covariance must be {k}x{k}"));
    }
    let m = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
    if (&m - m.transpose()).amax() > 1e-10 * (1.0 + m.amax()) {
        return bad("covariance is not symmetric");
    }
    let min = SymmetricEigen::new(m).eigenvalues.min();
    if min < -1e-10 {
        return bad(format!("covariance is not positive semidefinite (eigenvalue {min})"));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| DrroError::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Single-item newsvendor with `N(mean, std²)` demand and a type-2 Euclidean ball.
    pub fn newsvendor(b: f64, s: f64, mean: f64, std: f64, n: usize, seed: u64, delta_grid: Vec<f64>) -> Self {
        ScenarioConfig {
            kind: ScenarioKind::Newsvendor,
            prices: Prices::Single { b, s },
            demand: DemandModel::Gaussian { mean, std },
            n,
            seed,
            delta_grid,
            ball: BallConfig { p: 2.0, norm: NormName::L2 },
            clip: true,
        }
    }

    /// Three-factor demand `1.3X₁ + 1.1X₂ + 0.8X₃` with correlated Gaussian factors.
    pub fn multi_factor(n: usize, seed: u64, delta_grid: Vec<f64>) -> Self {
        ScenarioConfig {
            kind: ScenarioKind::MultiFactor,
            prices: Prices::Single { b: 0.5, s: 2.0 },
            demand: DemandModel::Factor {
                weights: vec![1.3, 1.1, 0.8],
                mean: vec![20.0, 30.0, 50.0],
                cov: vec![vec![9.0, -3.0, 7.2], vec![-3.0, 25.0, -20.0], vec![7.2, -20.0, 64.0]],
            },
            n,
            seed,
            delta_grid,
            ball: BallConfig { p: 2.0, norm: NormName::L2 },
            clip: true,
        }
    }

    /// Two complementary items, `D_A ~ N(32.5, 8.75²)`, `D_B ~ N(40, 5²)`.
    pub fn two_item(n: usize, seed: u64, delta_grid: Vec<f64>) -> Self {
        ScenarioConfig {
            kind: ScenarioKind::TwoItem,
            prices: Prices::TwoItem { b_a: 6.0, b_b: 6.0, s_a: 20.0, s_b: 7.0, phi: 0.1 },
            demand: DemandModel::IndependentGaussian { mean: vec![32.5, 40.0], std: vec![8.75, 5.0] },
            n,
            seed,
            delta_grid,
            ball: BallConfig { p: 2.0, norm: NormName::L2 },
            clip: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return bad("sample count must be positive");
        }
        if self.delta_grid.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return bad("radii must be finite and nonnegative");
        }
        if self.delta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("radii must be strictly ascending");
        }
        self.ball_for(0.0)?;
        match (&self.kind, &self.prices) {
            (ScenarioKind::TwoItem, Prices::TwoItem { b_a, b_b, s_a, s_b, phi }) => {
                if !(*b_a > 0.0 && *b_b > 0.0 && s_a > b_a && s_b > b_b) {
                    return bad("prices must be positive with sell above buy for each item");
                }
                if !(0.0..=1.0).contains(phi) {
                    return bad("phi must lie in [0, 1]");
                }
            }
            (ScenarioKind::TwoItem, _) => return bad("two-item scenario needs two-item prices"),
            (_, Prices::Single { b, s }) => {
                if !(*b > 0.0 && s > b) {
                    return bad("prices must satisfy 0 < b < s");
                }
            }
            (_, _) => return bad("single-item scenario needs prices b and s"),
        }
        match (&self.kind, &self.demand) {
            (ScenarioKind::Newsvendor, DemandModel::Gaussian { std, .. }) => {
                if !(*std > 0.0) {
                    return bad("demand std must be positive");
                }
            }
            (ScenarioKind::MultiFactor, DemandModel::Factor { weights, mean, cov }) => {
                if weights.len() != mean.len() || weights.is_empty() {
                    return bad("factor weights and means differ in length");
                }
                check_psd(cov, mean.len())?;
            }
            (ScenarioKind::TwoItem, DemandModel::IndependentGaussian { mean, std }) => {
                if mean.len() != 2 || std.len() != 2 || std.iter().any(|s| !(*s > 0.0)) {
                    return bad("two-item demand needs two means and two positive stds");
                }
            }
            _ => return bad("demand model does not match scenario kind"),
        }
        Ok(())
    }

    pub fn ball_for(&self, delta: f64) -> Result<WassersteinBall> {
        WassersteinBall::new(self.ball.p, self.ball.norm.into(), delta)
    }

    /// Decision dimension.
    pub fn dim(&self) -> usize {
        match self.kind {
            ScenarioKind::TwoItem => 2,
            _ => 1,
        }
    }

    /// `(b, s)` for single-item scenarios.
    pub fn single_prices(&self) -> Result<(f64, f64)> {
        match self.prices {
            Prices::Single { b, s } => Ok((b, s)),
            _ => bad("scenario has two-item prices"),
        }
    }
}
