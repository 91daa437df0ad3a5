//! Monte Carlo evaluation of fused bias estimation: scenarios, simulation,
//! the estimator pipelines, metrics, lower bounds and CSV reports.

pub mod bound;
pub mod error;
pub mod methods;
pub mod metrics;
pub mod presets;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod sim;

pub use bound::scenario_crlb;
pub use error::{HarnessError, Result};
pub use methods::{Method, RunRecord};
pub use metrics::{nees_bounds, nees_series, NeesBounds, RunMetrics};
pub use report::{emit_crlb, emit_report};
pub use runner::{run_monte_carlo, run_once};
pub use scenario::Scenario;
pub use sim::simulate_truth;
