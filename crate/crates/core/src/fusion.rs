//! Fusion center: gain reconstruction, measurement-domain bias correction,
//! sequential fusion and the fused bias estimation loop.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2};

use crate::bias::{
    difference_pseudo_measurement, rlsb_update, sensor_pseudo_obs, BiasEstimate, PseudoMeasurement,
};
use crate::coords::{
    cartesian_to_polar, compensation_factor, jacobians_at, CartesianMeasurement, SensorFrame,
};
use crate::dynamics::{compose_steps, MotionModel, MultiStepModel};
use crate::error::{Error, Result};
use crate::linalg::{
    inverse2, is_positive_definite, position_selection, psd_pseudo_inverse, symmetrize,
};
use crate::scalar::{to_f64, Scalar};
use crate::trackers::{kf_predict, kf_update, GaussianEstimate};
use crate::tracklets::{compute_tracklet, Tracklet, INFORMATION_RANK_TOL};

/// Kalman gain, measurement noise and position measurement recovered from
/// tracklets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructedGain<T: Scalar> {
    pub w: Matrix4x2<T>,
    pub r_meas: Matrix2<T>,
    pub y: Vector2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectedMeasurement<T: Scalar> {
    pub y_bc: Vector2<T>,
    pub r_bc: Matrix2<T>,
    pub lambda_theta: T,
}

impl<T: Scalar> CorrectedMeasurement<T> {
    pub fn as_measurement(&self) -> CartesianMeasurement<T> {
        CartesianMeasurement {
            z: self.y_bc,
            r: self.r_bc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedTrack<T: Scalar> {
    pub estimate: GaussianEstimate<T>,
    /// Sensors that contributed to the latest update.
    pub sensors: Vec<usize>,
}

impl<T: Scalar> FusedTrack<T> {
    pub fn new(estimate: GaussianEstimate<T>) -> Self {
        Self {
            estimate,
            sensors: Vec::new(),
        }
    }
}

/// `W = P Hᵀ (H P Hᵀ + R)⁻¹`.
pub fn position_gain<T: Scalar>(pred_cov: &Matrix4<T>, r: &Matrix2<T>) -> Result<Matrix4x2<T>> {
    let h = position_selection::<T>();
    let s = symmetrize(&(h * pred_cov * h.transpose() + r));
    Ok(pred_cov * h.transpose() * inverse2(&s, "gain reconstruction innovation covariance")?)
}

/// `R = H U Hᵀ`, `W = P(k|k') Hᵀ (H P(k|k') Hᵀ + R)⁻¹`, `y = H u`.
pub fn reconstruct_local_gain<T: Scalar>(
    t: &Tracklet<T>,
    pred_cov: &Matrix4<T>,
) -> Result<ReconstructedGain<T>> {
    let h = position_selection::<T>();
    let r = symmetrize(&(h * t.cov * h.transpose()));
    if !is_positive_definite(&r) {
        return Err(Error::Singular {
            context: "tracklet position covariance",
            condition: crate::linalg::symmetric_condition(&r),
        });
    }
    Ok(ReconstructedGain {
        w: position_gain(pred_cov, &r)?,
        r_meas: r,
        y: h * t.u,
    })
}

/// `R_f = H (Σ U_i⁻¹)⁻¹ Hᵀ` and the fused gain for the given predicted fused
/// covariance. `y` is the information-weighted combination of the tracklet
/// positions.
pub fn reconstruct_fused_gain<T: Scalar>(
    tracklets: &[&Tracklet<T>],
    fused_pred_cov: &Matrix4<T>,
) -> Result<ReconstructedGain<T>> {
    if tracklets.is_empty() {
        return Err(Error::Empty("fused gain reconstruction"));
    }
    let mut info = Matrix4::zeros();
    let mut info_u = nalgebra::Vector4::zeros();
    for t in tracklets {
        info += t.info;
        info_u += t.info * t.u;
    }
    let (cov, rank) =
        psd_pseudo_inverse(&info, INFORMATION_RANK_TOL, "fused tracklet information")?;
    if rank == 0 {
        return Err(Error::Singular {
            context: "fused tracklet information",
            condition: f64::INFINITY,
        });
    }
    let h = position_selection::<T>();
    let r = symmetrize(&(h * cov * h.transpose()));
    if !is_positive_definite(&r) {
        return Err(Error::Singular {
            context: "fused position covariance",
            condition: f64::INFINITY,
        });
    }
    Ok(ReconstructedGain {
        w: position_gain(fused_pred_cov, &r)?,
        r_meas: r,
        y: h * cov * info_u,
    })
}

/// Removes estimated offset and scale biases from the position part of a
/// tracklet in the sensor's polar frame, and inflates the covariance by the
/// conversion noise and the bias uncertainty.
pub fn bias_correct<T: Scalar>(
    t: &Tracklet<T>,
    bias: &BiasEstimate<T>,
    sensor: &SensorFrame<T>,
) -> Result<CorrectedMeasurement<T>> {
    let h = position_selection::<T>();
    let rel = h * t.u - sensor.position;
    if rel.norm() == T::zero() {
        return Err(Error::InvalidInput(
            "tracklet position coincides with the sensor".into(),
        ));
    }
    let (range, azimuth) = cartesian_to_polar(&rel);
    let d = bias.dim();
    let comp = |i: usize| if i < d { bias.b_hat[i] } else { T::zero() };
    let (b_r, b_theta, eps_r, eps_theta) = (comp(0), comp(1), comp(2), comp(3));
    if !(T::one() + eps_r > T::zero() && T::one() + eps_theta > T::zero()) {
        return Err(Error::InvalidInput(
            "estimated scale bias makes a scale factor non-positive".into(),
        ));
    }
    let theta = (azimuth - b_theta) / (T::one() + eps_theta);
    let r = (range - b_r) / (T::one() + eps_r);
    if !(r > T::zero()) {
        return Err(Error::NonPositiveRange {
            context: "bias correction",
            range: to_f64(r),
        });
    }
    let lambda = compensation_factor(sensor.sigma_theta);
    let (s, c) = theta.sin_cos();
    let y = Vector2::new(c, s) * (lambda * r) + sensor.position;
    let jac = jacobians_at(r, theta);
    let k = jac.sensitivity(d);
    let kk = &k * &bias.sigma * k.transpose();
    let r_bc = h * t.cov * h.transpose()
        + sensor.converted_noise(&jac)
        + Matrix2::from_fn(|i, j| kk[(i, j)]);
    Ok(CorrectedMeasurement {
        y_bc: y,
        r_bc: symmetrize(&r_bc),
        lambda_theta: lambda,
    })
}

/// Outcome of a sequential fusion pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SfaOutput<T: Scalar> {
    pub track: FusedTrack<T>,
    /// `x_f(k|k')`, `P_f(k|k')`.
    pub predicted: GaussianEstimate<T>,
    /// Sensors whose update was skipped because of a singular innovation.
    pub skipped: Vec<usize>,
}

/// Predicts the fused track over `model` and applies the measurements one
/// after another.
pub fn sfa<T: Scalar>(
    fused_prev: &FusedTrack<T>,
    model: &MultiStepModel<T>,
    measurements: &[(usize, CartesianMeasurement<T>)],
) -> Result<SfaOutput<T>> {
    let predicted = kf_predict(&fused_prev.estimate, model)?;
    let mut est = predicted;
    let mut sensors = Vec::with_capacity(measurements.len());
    let mut skipped = Vec::new();
    for (sensor, z) in measurements {
        match kf_update(&est, z) {
            Ok((next, _)) => {
                est = next;
                sensors.push(*sensor);
            }
            Err(Error::Singular { context, condition }) => {
                log::debug!("sequential fusion skipped sensor {sensor}: {context} (condition {condition:e})");
                skipped.push(*sensor);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SfaOutput {
        track: FusedTrack {
            estimate: est,
            sensors,
        },
        predicted,
        skipped,
    })
}

/// Which noise covariance stands for the leave-one-out fused reference in
/// the bias pseudo-measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusedNoise {
    /// `H (Σ U⁻¹)⁻¹ Hᵀ` over the contributing tracklets.
    #[default]
    Tracklet,
    /// `(Σ R_bc⁻¹)⁻¹` over the bias-corrected measurements that were fused;
    /// the fused gain is rebuilt from it as well.
    Corrected,
    /// Gain from the tracklets as in `Tracklet`, noise from the corrected
    /// measurements as in `Corrected`.
    Mixed,
}

/// Noise of sensor `s`'s own side of the bias pseudo-measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LocalNoise {
    /// `H U Hᵀ` of the sensor's tracklet.
    Tracklet,
    /// `H U Hᵀ + B diag(σ_r², σ_θ²) Bᵀ`, the same radar-model term that
    /// enters the corrected covariance of the reference sensors.
    #[default]
    WithSensorModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbeConfig<T: Scalar> {
    /// One-step fusion-center model; used for the tracklets and fused tracks.
    pub model: MotionModel<T>,
    pub bias_dim: usize,
    pub fused_noise: FusedNoise,
    pub local_noise: LocalNoise,
}

impl<T: Scalar> FbeConfig<T> {
    pub fn new(model: MotionModel<T>, bias_dim: usize) -> Self {
        Self {
            model,
            bias_dim,
            fused_noise: FusedNoise::default(),
            local_noise: LocalNoise::default(),
        }
    }
}

/// Snapshots of one local track at the previous and current report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReport<T: Scalar> {
    pub sensor: usize,
    pub frame: SensorFrame<T>,
    pub prev: GaussianEstimate<T>,
    pub curr: GaussianEstimate<T>,
}

/// Fused tracks for one target: one leave-one-out track per sensor and one
/// over all sensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetFusion<T: Scalar> {
    pub leave_one_out: BTreeMap<usize, FusedTrack<T>>,
    pub full: Option<FusedTrack<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorUpdate<T: Scalar> {
    pub sensor: usize,
    /// Sensors fused into the reference used against `sensor`.
    pub reference: Vec<usize>,
    pub local_gain: ReconstructedGain<T>,
    pub pseudo: PseudoMeasurement<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbeOutcome<T: Scalar> {
    pub tracklets: Vec<(usize, Tracklet<T>)>,
    pub updates: Vec<SensorUpdate<T>>,
    pub skipped: Vec<usize>,
}

/// Caches `F(k, k')`, `Q(k, k')` of the fusion-center model per step count.
#[derive(Debug, Clone)]
pub struct FusionCenter<T: Scalar> {
    pub config: FbeConfig<T>,
    multi: Vec<MultiStepModel<T>>,
}

impl<T: Scalar> FusionCenter<T> {
    pub fn new(config: FbeConfig<T>) -> Result<Self> {
        if config.bias_dim == 0 || config.bias_dim > 4 {
            return Err(Error::Dimension {
                context: "bias dimension",
                expected: 4,
                actual: config.bias_dim,
            });
        }
        config.model.transition4()?;
        Ok(Self {
            config,
            multi: Vec::new(),
        })
    }

    pub fn multi_step(&mut self, steps: usize) -> Result<MultiStepModel<T>> {
        if steps == 0 {
            return Err(Error::InvalidInput("step count must be at least 1".into()));
        }
        while self.multi.len() < steps {
            let next = compose_steps(&self.config.model, self.multi.len() + 1)?;
            self.multi.push(next);
        }
        Ok(self.multi[steps - 1].clone())
    }

    fn predict_span(&mut self, from: i64, to: i64) -> Result<MultiStepModel<T>> {
        if to <= from {
            return Err(Error::InvalidInput(format!(
                "fused track at frame {from} cannot move to frame {to}"
            )));
        }
        self.multi_step((to - from) as usize)
    }

    /// One frame of fused bias estimation for one target. `reports` must all
    /// share the current frame; `biases` is indexed by sensor id and is
    /// updated in place in ascending sensor order.
    pub fn fbe_step(
        &mut self,
        reports: &[SensorReport<T>],
        biases: &mut [BiasEstimate<T>],
        state: &mut TargetFusion<T>,
    ) -> Result<FbeOutcome<T>> {
        let mut reports = reports.to_vec();
        reports.sort_by_key(|r| r.sensor);
        let Some(first) = reports.first() else {
            return Err(Error::Empty("fused bias estimation"));
        };
        let frame = first.curr.frame;
        if reports.iter().any(|r| r.curr.frame != frame) {
            return Err(Error::InvalidInput(
                "all reports of one step must share the current frame".into(),
            ));
        }
        if reports.windows(2).any(|w| w[0].sensor == w[1].sensor) {
            return Err(Error::InvalidInput("duplicate sensor report".into()));
        }
        if let Some(r) = reports.iter().find(|r| r.sensor >= biases.len()) {
            return Err(Error::InvalidInput(format!(
                "no bias state for sensor {}",
                r.sensor
            )));
        }

        let mut updates = Vec::new();
        let mut skipped = Vec::new();
        let mut tracklets = Vec::with_capacity(reports.len());
        let mut usable = Vec::with_capacity(reports.len());
        for r in &reports {
            let model = self.multi_step((r.curr.frame - r.prev.frame).max(0) as usize)?;
            match compute_tracklet(&r.prev, &r.curr, &model) {
                Ok(t) => {
                    tracklets.push(t);
                    usable.push(*r);
                }
                Err(e @ (Error::NoNewInformation { .. } | Error::Singular { .. })) => {
                    log::debug!("sensor {} dropped from frame {frame}: {e}", r.sensor);
                    skipped.push(r.sensor);
                }
                Err(e) => return Err(e),
            }
        }
        let reports = usable;
        if reports.is_empty() {
            return Ok(FbeOutcome {
                tracklets: Vec::new(),
                updates,
                skipped,
            });
        }
        let first = reports[0];
        let bias_dim = self.config.bias_dim;
        if reports.len() >= 2 {
            for (i, rs) in reports.iter().enumerate() {
                let s = rs.sensor;
                let t_s = &tracklets[i];
                let local = reconstruct_local_gain(t_s, &t_s.predicted.cov)?;
                let model_s = self.multi_step((rs.curr.frame - rs.prev.frame) as usize)?;
                let z_s = sensor_pseudo_obs(&rs.curr, &rs.prev, &local.w, &model_s)?;

                let mut corrected = Vec::with_capacity(reports.len() - 1);
                let mut others = Vec::with_capacity(reports.len() - 1);
                for (j, rj) in reports.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let c = bias_correct(&tracklets[j], &biases[rj.sensor], &rj.frame)?;
                    corrected.push((rj.sensor, c.as_measurement()));
                    others.push(j);
                }
                let prior = match state.leave_one_out.get(&s) {
                    Some(t) => t.clone(),
                    None => {
                        let seed = reports
                            .iter()
                            .find(|r| r.sensor != s)
                            .expect("at least two reports");
                        FusedTrack::new(seed.prev)
                    }
                };
                let span = self.predict_span(prior.estimate.frame, frame)?;
                let out = sfa(&prior, &span, &corrected)?;
                skipped.extend(out.skipped.iter().copied());
                if out.track.sensors.is_empty() {
                    state.leave_one_out.insert(s, out.track);
                    continue;
                }
                let used: Vec<&Tracklet<T>> = others
                    .iter()
                    .filter(|&&j| out.track.sensors.contains(&reports[j].sensor))
                    .map(|&j| &tracklets[j])
                    .collect();
                let mut fused = reconstruct_fused_gain(&used, &out.predicted.cov)?;
                let corrected_noise = || -> Result<Matrix2<T>> {
                    let mut info = Matrix2::zeros();
                    for (sensor, m) in &corrected {
                        if out.track.sensors.contains(sensor) {
                            info += inverse2(&m.r, "corrected measurement covariance")?;
                        }
                    }
                    Ok(symmetrize(&inverse2(&info, "corrected information sum")?))
                };
                match self.config.fused_noise {
                    FusedNoise::Tracklet => {}
                    FusedNoise::Corrected => {
                        fused.r_meas = corrected_noise()?;
                        fused.w = position_gain(&out.predicted.cov, &fused.r_meas)?;
                    }
                    FusedNoise::Mixed => {}
                }
                let z_f = sensor_pseudo_obs(&out.track.estimate, &prior.estimate, &fused.w, &span)?;
                if self.config.fused_noise == FusedNoise::Mixed {
                    fused.r_meas = corrected_noise()?;
                }

                let (range, azimuth) = cartesian_to_polar(&(local.y - rs.frame.position));
                let jac = jacobians_at(range, azimuth);
                let r_local = match self.config.local_noise {
                    LocalNoise::Tracklet => local.r_meas,
                    LocalNoise::WithSensorModel => {
                        symmetrize(&(local.r_meas + rs.frame.converted_noise(&jac)))
                    }
                };
                let pseudo = difference_pseudo_measurement(
                    &z_f,
                    &z_s,
                    &jac,
                    bias_dim,
                    &fused.r_meas,
                    &r_local,
                )?;
                biases[s] = rlsb_update(&biases[s], &pseudo)?;
                updates.push(SensorUpdate {
                    sensor: s,
                    reference: out.track.sensors.clone(),
                    local_gain: local,
                    pseudo,
                });
                state.leave_one_out.insert(s, out.track);
            }
        }

        // fused track over every reporting sensor, with the updated biases
        let mut corrected = Vec::with_capacity(reports.len());
        for (j, rj) in reports.iter().enumerate() {
            let c = bias_correct(&tracklets[j], &biases[rj.sensor], &rj.frame)?;
            corrected.push((rj.sensor, c.as_measurement()));
        }
        let prior = match &state.full {
            Some(t) => t.clone(),
            None => FusedTrack::new(first.prev),
        };
        let span = self.predict_span(prior.estimate.frame, frame)?;
        let out = sfa(&prior, &span, &corrected)?;
        skipped.extend(out.skipped.iter().copied());
        state.full = Some(out.track);

        Ok(FbeOutcome {
            tracklets: reports.iter().map(|r| r.sensor).zip(tracklets).collect(),
            updates,
            skipped,
        })
    }
}
