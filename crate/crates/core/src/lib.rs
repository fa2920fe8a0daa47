//! Wasserstein distributionally robust regret optimization over max-affine losses.
//!
//! The crate covers the worst-case expectation engine, ERM and DRO baselines,
//! an exact solver for the univariate newsvendor, general regret evaluation by
//! alternating convex solves, a convex relaxation of the regret, outer
//! minimization methods and closed-form quadratic oracles.

pub mod certificate;
pub mod colgen;
pub mod conic;
pub mod dro;
pub mod engine;
pub mod erm;
pub mod error;
pub mod newsvendor;
pub mod optimize;
pub mod quadratic;
pub mod regret;
pub mod relaxation;
pub mod types;
pub mod wasserstein;

pub use colgen::{
    column_generation, restricted_master, seeded_regret, ColumnGenOptions, ColumnGenResult, SeededRegret,
};
pub use certificate::{RegretCertificate, RegretStatus, Side};
pub use dro::{solve_dro, DroSolution};
pub use engine::{
    extract_worst_case_distribution, worst_case_expectation, Affine, CompositeLoss, ConcavePiece,
};
pub use erm::{solve_erm, ErmSolution};
pub use error::{DrroError, Result};
pub use types::{
    eval_expected_loss, eval_loss, DiscreteDistribution, EmpiricalDataset, MaxAffineLoss, Norm,
    Polyhedron, WassersteinBall, WorstCaseSolution,
};
pub use newsvendor::{regret_newsvendor, solve_drro_newsvendor, NewsvendorInstance};
pub use optimize::{
    bisection_1d, chebyshev_center, cutting_plane, subgradient_descent, OracleResult,
    RegretOracle, StepRule,
};
pub use quadratic::{quadratic_drro, quadratic_regret, sensitivity_rhs, QuadraticLoss, QuadraticSolution};
pub use regret::{
    ex_post_regret, hill_climb, regret_eval, regret_lower_bound_bruteforce, BilinearProgramState,
    RegretMode, RegretProblem,
};
pub use relaxation::{relax_regret_eval, solve_drro_relaxed, RelaxationSolution};
pub use wasserstein::wasserstein_distance_discrete;
