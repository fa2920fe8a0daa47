//! Experiment harness: seeded scenarios, radius sweeps, performance tables and
//! the Gaussian profit heatmap.

pub mod config;
pub mod profit;
pub mod scenario;
pub mod sweep;
pub mod table;

pub use config::{BallConfig, DemandModel, NormName, Prices, ScenarioConfig, ScenarioKind};
pub use profit::{gaussian_expected_profit, heatmap_erm_vs_dro, heatmap_grid, HeatmapRow};
pub use scenario::{build_two_item_loss, generate_samples, scenario_problem};
pub use sweep::{run_sweep, Method, SweepOptions, SweepRow};
pub use table::{performance_table, TableRow};
