//! Lower bound on the bias estimates of a scenario.
//!
//! Each sensor is bounded against the combination of all other sensors that
//! report at the same frame, evaluated at the noise-free geometry.

use nalgebra::Vector2;
use trackreg::coords::jacobians_at;
use trackreg::{
    combine_sensors, converted_covariance, crlb_diag, FimBlock, FimProblem, PolarMeasurement,
};

use crate::error::{Locate, Result};
use crate::scenario::Scenario;
use crate::sim::nominal_trajectories;

/// `[frame][sensor]` square roots of the bound diagonal; `None` until the
/// information matrix becomes invertible.
pub type SqrtBound = Vec<Vec<Option<Vec<f64>>>>;

pub fn scenario_crlb(s: &Scenario) -> Result<SqrtBound> {
    let traj = nominal_trajectories(s)?;
    let ns = s.sensors.len();
    let d = s.bias_dim;
    let mut problems: Vec<FimProblem<f64>> = (0..ns).map(|_| FimProblem::new(d)).collect();
    let mut out = vec![vec![None; ns]; s.frames + 1];
    for k in 1..=s.frames {
        let reporting: Vec<usize> = (0..ns).filter(|&i| s.sensors[i].reports_at(k)).collect();
        if reporting.len() >= 2 {
            for (t, states) in traj.iter().enumerate() {
                let x = states[k];
                let p = Vector2::new(x[0], x[2]);
                let polar: Vec<PolarMeasurement<f64>> = reporting
                    .iter()
                    .map(|&i| s.sensors[i].frame().observe(&p))
                    .collect::<trackreg::Result<_>>()
                    .at(0, k, None, Some(t))?;
                for (a, &i) in reporting.iter().enumerate() {
                    let others: Vec<(Vector2<f64>, nalgebra::Matrix2<f64>)> = reporting
                        .iter()
                        .enumerate()
                        .filter(|(b, _)| *b != a)
                        .map(|(b, _)| (p, converted_covariance(&polar[b])))
                        .collect();
                    let r_i = converted_covariance(&polar[a]);
                    let (_, total) = combine_sensors(&others, &r_i).at(0, k, Some(i), Some(t))?;
                    let jac = jacobians_at(polar[a].range, polar[a].azimuth);
                    let block = FimBlock::against_reference(t, k, &jac, d, total);
                    problems[i].add(&block).at(0, k, Some(i), Some(t))?;
                }
            }
        }
        for i in 0..ns {
            if problems[i].blocks > 0 {
                out[k][i] = crlb_diag(&problems[i])
                    .ok()
                    .map(|v| v.iter().map(|x| x.sqrt()).collect());
            }
        }
    }
    Ok(out)
}
