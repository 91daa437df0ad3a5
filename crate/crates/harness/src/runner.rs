use rayon::prelude::*;

use crate::bound::scenario_crlb;
use crate::error::Result;
use crate::methods::{run_method, Method, RunRecord};
use crate::metrics::RunMetrics;
use crate::scenario::Scenario;
use crate::sim::simulate_truth;

/// One run, simulation included.
pub fn run_once(s: &Scenario, method: Method, seed: u64, run: usize) -> Result<RunRecord> {
    let truth = simulate_truth(s, seed, run)?;
    run_method(s, &truth, run, method)
}

/// Runs `runs` Monte Carlo replications in parallel. The result does not
/// depend on the number of worker threads.
pub fn run_monte_carlo(s: &Scenario, method: Method, runs: usize, seed: u64) -> Result<RunMetrics> {
    s.validate()?;
    let records = (0..runs)
        .into_par_iter()
        .map(|run| run_once(s, method, seed, run))
        .collect::<Result<Vec<_>>>()?;
    let mut m = RunMetrics::aggregate(
        &s.name,
        method,
        s.local_filter.label(),
        seed,
        s.bias_dim,
        &records,
    )?;
    if method != Method::Baseline {
        m.crlb = Some(scenario_crlb(s)?);
    }
    Ok(m)
}
