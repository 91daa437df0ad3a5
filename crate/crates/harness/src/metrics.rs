//! Aggregation of run records into per-frame metrics.

use std::time::Duration;

use nalgebra::DVector;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{HarnessError, Result};
use crate::methods::{Method, RunRecord};

/// Names of the bias components in CSV metric names.
pub const COMPONENTS: [&str; 4] = ["b_r", "b_theta", "eps_r", "eps_theta"];

fn chi2_quantile(p: f64, dof: f64) -> f64 {
    ChiSquared::new(dof)
        .expect("positive degrees of freedom")
        .inverse_cdf(p)
}

/// Average-NEES bounds for `runs` samples of a `dim`-dimensional error:
/// two-sided 95% `(χ²(0.025; dim·runs), χ²(0.975; dim·runs)) / runs` and
/// the one-sided 95% upper bound `χ²(0.95; dim·runs) / runs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeesBounds {
    pub lower: f64,
    pub upper: f64,
    pub one_sided_upper: f64,
}

pub fn nees_bounds(dim: usize, runs: usize) -> NeesBounds {
    let dof = (dim * runs) as f64;
    let n = runs as f64;
    NeesBounds {
        lower: chi2_quantile(0.025, dof) / n,
        upper: chi2_quantile(0.975, dof) / n,
        one_sided_upper: chi2_quantile(0.95, dof) / n,
    }
}

/// Per-frame average NEES `mean_runs eᵀ Σ⁻¹ e` with its bounds.
pub fn nees_series(
    errors: &[Vec<DVector<f64>>],
    covariances: &[Vec<nalgebra::DMatrix<f64>>],
) -> Result<(Vec<f64>, NeesBounds)> {
    let runs = errors.len();
    if runs == 0 {
        return Err(HarnessError::Report("NEES over zero runs".into()));
    }
    let frames = errors[0].len();
    let dim = errors[0].first().map(|e| e.len()).unwrap_or(0);
    let mut out = vec![0.0; frames];
    for (errs, covs) in errors.iter().zip(covariances) {
        for (k, (e, p)) in errs.iter().zip(covs).enumerate() {
            let chol =
                nalgebra::Cholesky::new(p.clone()).ok_or_else(|| HarnessError::NonFinite {
                    metric: "NEES covariance (not positive definite)".into(),
                    frame: k,
                    sensor: "-".into(),
                })?;
            out[k] += e.dot(&chol.solve(e)) / runs as f64;
        }
    }
    Ok((out, nees_bounds(dim, runs)))
}

/// Two-sided 95% interval for an RMS value estimated from `n` squared
/// zero-mean Gaussian errors.
pub fn rms_interval(rms: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    (
        rms * (n / chi2_quantile(0.975, n)).sqrt(),
        rms * (n / chi2_quantile(0.025, n)).sqrt(),
    )
}

/// 95% region in which the RMSE of an efficient estimator falls around the
/// bound, for `n` runs.
pub fn bound_interval(bound: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    (
        bound * (chi2_quantile(0.025, n) / n).sqrt(),
        bound * (chi2_quantile(0.975, n) / n).sqrt(),
    )
}

/// Track RMSE at one frame with the Monte Carlo standard error of the RMSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRmse {
    pub rmse: f64,
    pub se: f64,
}

fn track_rmse(samples: &[f64]) -> TrackRmse {
    let n = samples.len() as f64;
    let mse = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|v| (v - mse).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let rmse = mse.sqrt();
    let se = if rmse > 0.0 {
        (var / n).sqrt() / (2.0 * rmse)
    } else {
        0.0
    };
    TrackRmse { rmse, se }
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub scenario: String,
    pub method: Method,
    pub local_filter: String,
    pub runs: usize,
    pub seed: u64,
    pub frames: usize,
    pub sensors: usize,
    pub bias_dim: usize,
    /// `[frame][sensor][component]`.
    pub bias_rmse: Vec<Vec<Vec<f64>>>,
    /// Square root of the run-averaged `Σ_ii`.
    pub bias_sqrt_sigma: Vec<Vec<Vec<f64>>>,
    /// `[frame][sensor]`.
    pub bias_nees: Vec<Vec<f64>>,
    pub nees: NeesBounds,
    /// Sensor 1 local track, every frame.
    pub local_rmse: Vec<TrackRmse>,
    pub fused_rmse: Vec<Option<TrackRmse>>,
    pub nobias_rmse: Vec<Option<TrackRmse>>,
    /// Per-run squared errors at the last fusion frame: local, fused, no-bias fused.
    pub final_track_se: Vec<(f64, f64, f64)>,
    /// `[frame][sensor][component]` square-root lower bound, when computed.
    pub crlb: Option<Vec<Vec<Option<Vec<f64>>>>>,
    pub gain_rel_err: Option<f64>,
    pub estimator_time: Duration,
}

impl RunMetrics {
    #[allow(clippy::too_many_arguments)]
    pub fn aggregate(
        scenario: &str,
        method: Method,
        local_filter: &str,
        seed: u64,
        bias_dim: usize,
        records: &[RunRecord],
    ) -> Result<Self> {
        let runs = records.len();
        if runs == 0 {
            return Err(HarnessError::Report(
                "no Monte Carlo runs to aggregate".into(),
            ));
        }
        let frames = records[0].bias_err.len() - 1;
        let sensors = records[0].bias_err[0].len();
        let n = runs as f64;
        let mut bias_rmse = vec![vec![vec![0.0; bias_dim]; sensors]; frames + 1];
        let mut bias_sqrt_sigma = vec![vec![vec![0.0; bias_dim]; sensors]; frames + 1];
        let mut bias_nees = vec![vec![0.0; sensors]; frames + 1];
        for r in records {
            for k in 0..=frames {
                for s in 0..sensors {
                    for c in 0..bias_dim {
                        bias_rmse[k][s][c] += r.bias_err[k][s][c].powi(2) / n;
                        bias_sqrt_sigma[k][s][c] += r.bias_var[k][s][c] / n;
                    }
                    bias_nees[k][s] += r.bias_nees[k][s] / n;
                }
            }
        }
        for k in 0..=frames {
            for s in 0..sensors {
                for c in 0..bias_dim {
                    bias_rmse[k][s][c] = bias_rmse[k][s][c].sqrt();
                    bias_sqrt_sigma[k][s][c] = bias_sqrt_sigma[k][s][c].sqrt();
                }
            }
        }
        let column = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Option<Vec<f64>> {
            records.iter().map(f).collect()
        };
        let local_rmse = (0..=frames)
            .map(|k| track_rmse(&records.iter().map(|r| r.local_se[k]).collect::<Vec<_>>()))
            .collect();
        let fused_rmse = (0..=frames)
            .map(|k| column(&|r| r.fused_se[k]).map(|v| track_rmse(&v)))
            .collect::<Vec<_>>();
        let nobias_rmse = (0..=frames)
            .map(|k| column(&|r| r.nobias_se[k]).map(|v| track_rmse(&v)))
            .collect();
        let last_fused = (0..=frames).rev().find(|&k| fused_rmse[k].is_some());
        let final_track_se = match last_fused {
            Some(k) => records
                .iter()
                .map(|r| {
                    (
                        r.local_se[k],
                        r.fused_se[k].unwrap_or(f64::NAN),
                        r.nobias_se[k].unwrap_or(f64::NAN),
                    )
                })
                .collect(),
            None => Vec::new(),
        };
        let gain_rel_err = records
            .iter()
            .filter_map(|r| r.gain_rel_err)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            });
        let m = Self {
            scenario: scenario.to_string(),
            method,
            local_filter: local_filter.to_string(),
            runs,
            seed,
            frames,
            sensors,
            bias_dim,
            bias_rmse,
            bias_sqrt_sigma,
            bias_nees,
            nees: nees_bounds(bias_dim, runs),
            local_rmse,
            fused_rmse,
            nobias_rmse,
            final_track_se,
            crlb: None,
            gain_rel_err,
            estimator_time: records.iter().map(|r| r.estimator_time).sum(),
        };
        m.check_finite()?;
        Ok(m)
    }

    /// Fails on the first NaN or infinity with its location.
    pub fn check_finite(&self) -> Result<()> {
        for (k, per_sensor) in self.bias_rmse.iter().enumerate() {
            for (s, comps) in per_sensor.iter().enumerate() {
                for (c, v) in comps.iter().enumerate() {
                    if !v.is_finite() || !self.bias_sqrt_sigma[k][s][c].is_finite() {
                        return Err(HarnessError::NonFinite {
                            metric: format!("bias {}", COMPONENTS[c]),
                            frame: k,
                            sensor: (s + 1).to_string(),
                        });
                    }
                }
                if !self.bias_nees[k][s].is_finite() {
                    return Err(HarnessError::NonFinite {
                        metric: "bias NEES".into(),
                        frame: k,
                        sensor: (s + 1).to_string(),
                    });
                }
            }
        }
        let tracks = self
            .local_rmse
            .iter()
            .map(|v| Some(*v))
            .zip(self.fused_rmse.iter().copied())
            .zip(self.nobias_rmse.iter().copied());
        for (k, ((l, f), b)) in tracks.enumerate() {
            for (name, v) in [
                ("local track", l),
                ("fused track", f),
                ("bias-free fused track", b),
            ] {
                if let Some(v) = v {
                    if !v.rmse.is_finite() {
                        return Err(HarnessError::NonFinite {
                            metric: format!("{name} RMSE"),
                            frame: k,
                            sensor: "all".into(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Last frame at which the fused tracks were updated.
    pub fn last_fusion_frame(&self) -> Option<usize> {
        (0..=self.frames)
            .rev()
            .find(|&k| self.fused_rmse[k].is_some())
    }
}
