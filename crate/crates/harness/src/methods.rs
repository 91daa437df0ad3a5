//! Per-run estimation pipelines.

use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use trackreg::bias::bias_nees;
use trackreg::coords::{cartesian_to_polar, jacobians_at};
use trackreg::linalg::position_selection;
use trackreg::{
    bias_jacobians, reconstruct_local_gain, rlsb_update, sensor_pseudo_obs, sfa,
    tracklet_decorrelated, BiasEstimate, CartesianMeasurement, FbeConfig, FusedTrack, FusionCenter,
    GaussianEstimate, KfStepRecord, LocalTracker, PseudoMeasurement, SensorReport, TargetFusion,
    Tracklet,
};

use crate::error::{HarnessError, Locate, Result};
use crate::scenario::Scenario;
use crate::sim::Truth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fused bias estimation from track snapshots only.
    Fbe,
    /// Stacked-bias estimator fed with the true local gains.
    Ex,
    /// As `Ex`, with gains reconstructed from one-step tracklets.
    Exl,
    /// Fusion of the raw local tracks, no bias estimation.
    Baseline,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Fbe => "fbe",
            Method::Ex => "ex",
            Method::Exl => "exl",
            Method::Baseline => "baseline",
        }
    }
}

/// Everything one Monte Carlo run contributes to the metrics. Per-frame
/// vectors cover frames `0..=K`.
#[derive(Debug, Clone)]
pub struct RunRecord {
    /// `bias_err[frame][sensor] = b̂ − β`.
    pub bias_err: Vec<Vec<DVector<f64>>>,
    /// Diagonal of `Σ`.
    pub bias_var: Vec<Vec<DVector<f64>>>,
    pub bias_nees: Vec<Vec<f64>>,
    /// Squared position error of sensor 1's local tracks, averaged over targets.
    pub local_se: Vec<f64>,
    /// Same for the bias-corrected (or, for the baseline, uncorrected) fused track.
    pub fused_se: Vec<Option<f64>>,
    /// Fused track built from bias-free measurements.
    pub nobias_se: Vec<Option<f64>>,
    /// Largest relative gap between reconstructed and true local gains.
    pub gain_rel_err: Option<f64>,
    /// Time spent in the bias estimation path proper.
    pub estimator_time: Duration,
}

impl RunRecord {
    fn new(frames: usize, sensors: usize, dim: usize) -> Self {
        Self {
            bias_err: vec![vec![DVector::zeros(dim); sensors]; frames + 1],
            bias_var: vec![vec![DVector::zeros(dim); sensors]; frames + 1],
            bias_nees: vec![vec![0.0; sensors]; frames + 1],
            local_se: vec![0.0; frames + 1],
            fused_se: vec![None; frames + 1],
            nobias_se: vec![None; frames + 1],
            gain_rel_err: None,
            estimator_time: Duration::ZERO,
        }
    }

    fn record_biases(
        &mut self,
        s: &Scenario,
        frame: usize,
        run: usize,
        biases: &[BiasEstimate<f64>],
    ) -> Result<()> {
        for (i, b) in biases.iter().enumerate() {
            let truth = s.true_bias(i);
            self.bias_err[frame][i] = &b.b_hat - &truth;
            self.bias_var[frame][i] = b.sigma.diagonal();
            self.bias_nees[frame][i] = bias_nees(b, &truth).at(run, frame, Some(i), None)?;
        }
        Ok(())
    }
}

fn position_se(est: &GaussianEstimate<f64>, truth: &nalgebra::Vector4<f64>) -> f64 {
    let d = est.position() - Vector2::new(truth[0], truth[2]);
    d.norm_squared()
}

/// Local trackers for every (sensor, target) pair.
struct Locals {
    trackers: Vec<Vec<LocalTracker<f64>>>,
    current: Vec<Vec<GaussianEstimate<f64>>>,
    records: Vec<Vec<Option<KfStepRecord<f64>>>>,
}

impl Locals {
    fn new(s: &Scenario, truth: &Truth, run: usize, biased: bool) -> Result<Self> {
        let mut trackers = Vec::with_capacity(s.sensors.len());
        let mut current = Vec::with_capacity(s.sensors.len());
        for (si, per_target) in truth.measurements.iter().enumerate() {
            let mut row = Vec::with_capacity(per_target.len());
            let mut est_row = Vec::with_capacity(per_target.len());
            for (t, series) in per_target.iter().enumerate() {
                let z = if biased {
                    series[0].biased
                } else {
                    series[0].unbiased
                };
                let init =
                    GaussianEstimate::from_position(&z.z, s.init.sigma_pos, s.init.sigma_vel, 0);
                row.push(
                    s.local_filter
                        .tracker(s.dt, init)
                        .at(run, 0, Some(si), Some(t))?,
                );
                est_row.push(init);
            }
            trackers.push(row);
            current.push(est_row);
        }
        let records = vec![vec![None; s.targets.len()]; s.sensors.len()];
        Ok(Self {
            trackers,
            current,
            records,
        })
    }

    fn step(&mut self, truth: &Truth, frame: usize, run: usize, biased: bool) -> Result<()> {
        for (si, row) in self.trackers.iter_mut().enumerate() {
            for (t, tracker) in row.iter_mut().enumerate() {
                let m = &truth.measurements[si][t][frame];
                let z = if biased { m.biased } else { m.unbiased };
                let (est, rec) = tracker.step(&z).at(run, frame, Some(si), Some(t))?;
                self.current[si][t] = est;
                self.records[si][t] = rec;
            }
        }
        Ok(())
    }
}

/// Fuses raw tracklets (`H u`, `H U Hᵀ`) without any bias handling.
fn plain_fusion(
    center: &mut FusionCenter<f64>,
    prior: Option<&FusedTrack<f64>>,
    reports: &[SensorReport<f64>],
    frame: usize,
    run: usize,
    target: usize,
) -> Result<FusedTrack<f64>> {
    let h = position_selection::<f64>();
    let mut meas = Vec::with_capacity(reports.len());
    for r in reports {
        let model = center
            .multi_step((r.curr.frame - r.prev.frame) as usize)
            .at(run, frame, Some(r.sensor), Some(target))?;
        match trackreg::compute_tracklet(&r.prev, &r.curr, &model) {
            Ok(t) => meas.push((
                r.sensor,
                CartesianMeasurement {
                    z: h * t.u,
                    r: h * t.cov * h.transpose(),
                },
            )),
            Err(e) => log::debug!(
                "run {run} frame {frame}: plain fusion dropped sensor {}: {e}",
                r.sensor
            ),
        }
    }
    let prior = match prior {
        Some(p) => p.clone(),
        None => FusedTrack::new(reports[0].prev),
    };
    let span = center
        .multi_step((frame as i64 - prior.estimate.frame) as usize)
        .at(run, frame, None, Some(target))?;
    Ok(sfa(&prior, &span, &meas)
        .at(run, frame, None, Some(target))?
        .track)
}

/// Fused bias estimation (or plain fusion for the baseline) over one run.
pub fn run_fusion(s: &Scenario, truth: &Truth, run: usize, method: Method) -> Result<RunRecord> {
    let ns = s.sensors.len();
    let nt = s.targets.len();
    let mut rec = RunRecord::new(s.frames, ns, s.bias_dim);
    let config = FbeConfig {
        model: s.fusion_model().at(run, 0, None, None)?,
        bias_dim: s.bias_dim,
        fused_noise: s.fused_noise.into(),
        local_noise: s.local_noise.into(),
    };
    let mut center = FusionCenter::new(config).at(run, 0, None, None)?;
    let mut plain_center = center.clone();
    let mut biases = vec![s.bias_prior(); ns];
    rec.record_biases(s, 0, run, &biases)?;

    let mut locals = Locals::new(s, truth, run, true)?;
    let mut clean = Locals::new(s, truth, run, false)?;
    let mut last_report = locals.current.clone();
    let mut clean_last = clean.current.clone();
    let mut fusion = vec![TargetFusion::default(); nt];
    let mut plain: Vec<Option<FusedTrack<f64>>> = vec![None; nt];
    let mut nobias: Vec<Option<FusedTrack<f64>>> = vec![None; nt];
    let frames: Vec<SensorSpecFrame> = s.sensors.iter().map(|x| x.frame()).collect();

    rec.local_se[0] = (0..nt)
        .map(|t| position_se(&locals.current[0][t], &truth.states[t][0]))
        .sum::<f64>()
        / nt as f64;
    for k in 1..=s.frames {
        locals.step(truth, k, run, true)?;
        clean.step(truth, k, run, false)?;
        rec.local_se[k] = (0..nt)
            .map(|t| position_se(&locals.current[0][t], &truth.states[t][k]))
            .sum::<f64>()
            / nt as f64;

        let reporting: Vec<usize> = (0..ns).filter(|&i| s.sensors[i].reports_at(k)).collect();
        if !reporting.is_empty() {
            let mut fused_se = 0.0;
            let mut nobias_se = 0.0;
            for t in 0..nt {
                let reports: Vec<SensorReport<f64>> = reporting
                    .iter()
                    .map(|&i| SensorReport {
                        sensor: i,
                        frame: frames[i],
                        prev: last_report[i][t],
                        curr: locals.current[i][t],
                    })
                    .collect();
                let fused = match method {
                    Method::Baseline => {
                        let track = plain_fusion(
                            &mut plain_center,
                            plain[t].as_ref(),
                            &reports,
                            k,
                            run,
                            t,
                        )?;
                        plain[t] = Some(track.clone());
                        track
                    }
                    _ => {
                        let start = Instant::now();
                        center.fbe_step(&reports, &mut biases, &mut fusion[t]).at(
                            run,
                            k,
                            None,
                            Some(t),
                        )?;
                        rec.estimator_time += start.elapsed();
                        // every tracklet of the frame was rejected
                        fusion[t]
                            .full
                            .clone()
                            .ok_or(trackreg::Error::Empty("track fusion"))
                            .at(run, k, None, Some(t))?
                    }
                };
                fused_se += position_se(&fused.estimate, &truth.states[t][k]);

                let clean_reports: Vec<SensorReport<f64>> = reporting
                    .iter()
                    .map(|&i| SensorReport {
                        sensor: i,
                        frame: frames[i],
                        prev: clean_last[i][t],
                        curr: clean.current[i][t],
                    })
                    .collect();
                let track = plain_fusion(
                    &mut plain_center,
                    nobias[t].as_ref(),
                    &clean_reports,
                    k,
                    run,
                    t,
                )?;
                nobias_se += position_se(&track.estimate, &truth.states[t][k]);
                nobias[t] = Some(track);
            }
            for &i in &reporting {
                last_report[i] = locals.current[i].clone();
                clean_last[i] = clean.current[i].clone();
            }
            rec.fused_se[k] = Some(fused_se / nt as f64);
            rec.nobias_se[k] = Some(nobias_se / nt as f64);
        }
        rec.record_biases(s, k, run, &biases)?;
    }
    Ok(rec)
}

type SensorSpecFrame = trackreg::SensorFrame<f64>;

/// Joseph-form update of a stacked bias estimate with a stacked measurement.
pub fn stacked_update(
    est: &BiasEstimate<f64>,
    z: &DVector<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> trackreg::Result<BiasEstimate<f64>> {
    let s = h * &est.sigma * h.transpose() + r;
    let s = (&s + s.transpose()) * 0.5;
    let chol = Cholesky::new(s).ok_or(trackreg::Error::Singular {
        context: "stacked bias innovation covariance",
        condition: f64::INFINITY,
    })?;
    let g = (chol.solve(&(h * &est.sigma))).transpose();
    let d = est.dim();
    let ikh = DMatrix::identity(d, d) - &g * h;
    let sigma = &ikh * &est.sigma * ikh.transpose() + &g * r * g.transpose();
    Ok(BiasEstimate {
        b_hat: &est.b_hat + &g * (z - h * &est.b_hat),
        sigma: (&sigma + sigma.transpose()) * 0.5,
    })
}

/// Per-sensor pseudo-observation with its noise and Jacobians.
struct SensorObs {
    z: Vector2<f64>,
    r: Matrix2<f64>,
    k: DMatrix<f64>,
}

fn max_rel(a: &nalgebra::Matrix4x2<f64>, b: &nalgebra::Matrix4x2<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Stacked-bias estimation against sensor 1 (index 0) every frame, with
/// true (`Ex`) or reconstructed (`Exl`) local gains.
pub fn run_stacked(s: &Scenario, truth: &Truth, run: usize, method: Method) -> Result<RunRecord> {
    if method == Method::Ex && !s.local_filter.is_kalman() {
        return Err(HarnessError::Validation(
            "the given-gain estimator needs Kalman local trackers".into(),
        ));
    }
    let ns = s.sensors.len();
    let nt = s.targets.len();
    let d = s.bias_dim;
    let mut rec = RunRecord::new(s.frames, ns, d);
    let model = trackreg::compose_steps(&s.fusion_model().at(run, 0, None, None)?, 1)
        .at(run, 0, None, None)?;

    let prior = s.bias_prior();
    let mut stacked_sigma = DMatrix::zeros(ns * d, ns * d);
    for i in 0..ns {
        stacked_sigma
            .view_mut((i * d, i * d), (d, d))
            .copy_from(&prior.sigma);
    }
    let mut stacked = BiasEstimate {
        b_hat: DVector::zeros(ns * d),
        sigma: stacked_sigma,
    };
    let split = |st: &BiasEstimate<f64>| -> Vec<BiasEstimate<f64>> {
        (0..ns)
            .map(|i| BiasEstimate {
                b_hat: st.b_hat.rows(i * d, d).into_owned(),
                sigma: st.sigma.view((i * d, i * d), (d, d)).into_owned(),
            })
            .collect()
    };
    rec.record_biases(s, 0, run, &split(&stacked))?;

    let mut locals = Locals::new(s, truth, run, true)?;
    let mut gain_err: f64 = 0.0;
    rec.local_se[0] = (0..nt)
        .map(|t| position_se(&locals.current[0][t], &truth.states[t][0]))
        .sum::<f64>()
        / nt as f64;
    for k in 1..=s.frames {
        let prev = locals.current.clone();
        locals.step(truth, k, run, true)?;
        rec.local_se[k] = (0..nt)
            .map(|t| position_se(&locals.current[0][t], &truth.states[t][k]))
            .sum::<f64>()
            / nt as f64;
        let mut reconstructed = Vec::new();
        let start = Instant::now();
        for t in 0..nt {
            let mut obs = Vec::with_capacity(ns);
            for i in 0..ns {
                let curr = &locals.current[i][t];
                let before = &prev[i][t];
                let o = match method {
                    Method::Ex => {
                        let record = locals.records[i][t].expect("Kalman record");
                        let m = &truth.measurements[i][t][k];
                        let z = sensor_pseudo_obs(curr, before, &record.gain, &model).at(
                            run,
                            k,
                            Some(i),
                            Some(t),
                        )?;
                        SensorObs {
                            z,
                            r: m.biased.r,
                            k: bias_jacobians(&m.polar).sensitivity(d),
                        }
                    }
                    _ => {
                        let tracklet: Tracklet<f64> = tracklet_decorrelated(before, curr, &model)
                            .at(run, k, Some(i), Some(t))?;
                        let g = reconstruct_local_gain(&tracklet, &tracklet.predicted.cov).at(
                            run,
                            k,
                            Some(i),
                            Some(t),
                        )?;
                        reconstructed.push((i, t, g.w));
                        let z = sensor_pseudo_obs(curr, before, &g.w, &model).at(
                            run,
                            k,
                            Some(i),
                            Some(t),
                        )?;
                        let (range, azimuth) =
                            cartesian_to_polar(&(g.y - s.sensors[i].frame().position));
                        SensorObs {
                            z,
                            r: g.r_meas,
                            k: jacobians_at(range, azimuth).sensitivity(d),
                        }
                    }
                };
                obs.push(o);
            }
            stacked = if ns == 2 {
                let mut h = DMatrix::zeros(2, 2 * d);
                h.view_mut((0, 0), (2, d)).copy_from(&obs[0].k);
                h.view_mut((0, d), (2, d)).copy_from(&(-&obs[1].k));
                let pm = PseudoMeasurement {
                    z_b: obs[0].z - obs[1].z,
                    h,
                    r: obs[0].r + obs[1].r,
                };
                rlsb_update(&stacked, &pm).at(run, k, None, Some(t))?
            } else {
                let m = 2 * (ns - 1);
                let mut z = DVector::zeros(m);
                let mut h = DMatrix::zeros(m, ns * d);
                let mut r = DMatrix::zeros(m, m);
                for j in 1..ns {
                    let row = 2 * (j - 1);
                    z.rows_mut(row, 2).copy_from(&(obs[0].z - obs[j].z));
                    h.view_mut((row, 0), (2, d)).copy_from(&obs[0].k);
                    h.view_mut((row, j * d), (2, d)).copy_from(&(-&obs[j].k));
                    for l in 1..ns {
                        let col = 2 * (l - 1);
                        let mut block = obs[0].r;
                        if l == j {
                            block += obs[j].r;
                        }
                        r.view_mut((row, col), (2, 2)).copy_from(&block);
                    }
                }
                stacked_update(&stacked, &z, &h, &r).at(run, k, None, Some(t))?
            };
        }
        rec.estimator_time += start.elapsed();
        // compared outside the timed section
        for (i, t, w) in &reconstructed {
            if let Some(record) = locals.records[*i][*t] {
                gain_err = gain_err.max(max_rel(w, &record.gain));
            }
        }
        rec.record_biases(s, k, run, &split(&stacked))?;
    }
    if method == Method::Exl && s.local_filter.is_kalman() {
        rec.gain_rel_err = Some(gain_err);
    }
    Ok(rec)
}

pub fn run_method(s: &Scenario, truth: &Truth, run: usize, method: Method) -> Result<RunRecord> {
    match method {
        Method::Fbe | Method::Baseline => run_fusion(s, truth, run, method),
        Method::Ex | Method::Exl => run_stacked(s, truth, run, method),
    }
}
