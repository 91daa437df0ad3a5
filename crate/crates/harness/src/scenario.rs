//! Scenario files: sensors, targets, local filters and run settings.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use trackreg::{
    nca_model, ncv_model, turn_model, BiasEstimate, BiasVector, FusedNoise, GaussianEstimate,
    ImmState, LocalNoise, LocalTracker, MotionModel, SensorFrame,
};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Global position, meters.
    pub position: [f64; 2],
    pub sigma_r: f64,
    pub sigma_theta: f64,
    /// `[b_r, b_θ, ε_r, ε_θ]`.
    pub bias: [f64; 4],
    /// Frames between two track reports to the fusion center.
    pub lag: usize,
}

impl SensorSpec {
    pub fn frame(&self) -> SensorFrame<f64> {
        SensorFrame::new(
            Vector2::new(self.position[0], self.position[1]),
            self.sigma_r,
            self.sigma_theta,
        )
    }

    pub fn bias_vector(&self) -> BiasVector<f64> {
        BiasVector::from_slice(&self.bias)
    }

    pub fn reports_at(&self, frame: usize) -> bool {
        frame > 0 && frame.is_multiple_of(self.lag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Motion {
    Ncv,
    /// Coordinated turn at `omega` rad/s.
    Turn {
        omega: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub frames: usize,
    pub motion: Motion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// `[x, vx, y, vy]` at frame 0.
    pub initial: [f64; 4],
    pub segments: Vec<Segment>,
}

impl TargetSpec {
    pub fn initial_state(&self) -> Vector4<f64> {
        Vector4::from_column_slice(&self.initial)
    }

    /// Motion used to go from `frame - 1` to `frame`.
    pub fn motion_at(&self, frame: usize) -> Motion {
        let mut end = 0;
        for s in &self.segments {
            end += s.frames;
            if frame <= end {
                return s.motion;
            }
        }
        self.segments
            .last()
            .map(|s| s.motion)
            .unwrap_or(Motion::Ncv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LocalFilter {
    /// Single NCV Kalman filter.
    Kf { q: f64 },
    /// Two NCV modes with intensities `q[0]`, `q[1]`.
    ImmNcvNcv {
        q: [f64; 2],
        #[serde(default = "default_transition")]
        transition: [[f64; 2]; 2],
        #[serde(default = "default_probs")]
        initial_probs: [f64; 2],
    },
    /// NCA mode with intensity `q[0]` and NCV mode with `q[1]`.
    ImmNcaNcv {
        q: [f64; 2],
        #[serde(default = "default_transition")]
        transition: [[f64; 2]; 2],
        #[serde(default = "default_probs")]
        initial_probs: [f64; 2],
        /// Initial acceleration standard deviation, m/s².
        #[serde(default = "default_accel_std")]
        accel_std: f64,
    },
}

fn default_transition() -> [[f64; 2]; 2] {
    [[0.95, 0.05], [0.05, 0.95]]
}

fn default_probs() -> [f64; 2] {
    [0.5, 0.5]
}

fn default_accel_std() -> f64 {
    5.0
}

impl LocalFilter {
    pub fn label(&self) -> &'static str {
        match self {
            LocalFilter::Kf { .. } => "kalman",
            LocalFilter::ImmNcvNcv { .. } => "imm_ncv_ncv",
            LocalFilter::ImmNcaNcv { .. } => "imm_nca_ncv",
        }
    }

    pub fn is_kalman(&self) -> bool {
        matches!(self, LocalFilter::Kf { .. })
    }

    pub fn tracker(
        &self,
        dt: f64,
        init: GaussianEstimate<f64>,
    ) -> trackreg::Result<LocalTracker<f64>> {
        let imm =
            |models: Vec<MotionModel<f64>>, t: &[[f64; 2]; 2], p: &[f64; 2], accel_var: f64| {
                let transition = DMatrix::from_fn(2, 2, |i, j| t[i][j]);
                let probs = DVector::from_column_slice(p);
                Ok(LocalTracker::Imm(ImmState::new(
                    &init, models, transition, probs, accel_var,
                )?))
            };
        match self {
            LocalFilter::Kf { q } => Ok(LocalTracker::Kf {
                estimate: init,
                model: ncv_model(dt, *q, *q)?,
            }),
            LocalFilter::ImmNcvNcv {
                q,
                transition,
                initial_probs,
            } => imm(
                vec![ncv_model(dt, q[0], q[0])?, ncv_model(dt, q[1], q[1])?],
                transition,
                initial_probs,
                0.0,
            ),
            LocalFilter::ImmNcaNcv {
                q,
                transition,
                initial_probs,
                accel_std,
            } => imm(
                vec![nca_model(dt, q[0], q[0])?, ncv_model(dt, q[1], q[1])?],
                transition,
                initial_probs,
                accel_std * accel_std,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub sigma_pos: f64,
    pub sigma_vel: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            sigma_pos: 200.0,
            sigma_vel: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusedNoiseSpec {
    #[default]
    Tracklet,
    Corrected,
    Mixed,
}

impl From<FusedNoiseSpec> for FusedNoise {
    fn from(v: FusedNoiseSpec) -> Self {
        match v {
            FusedNoiseSpec::Tracklet => FusedNoise::Tracklet,
            FusedNoiseSpec::Corrected => FusedNoise::Corrected,
            FusedNoiseSpec::Mixed => FusedNoise::Mixed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalNoiseSpec {
    Tracklet,
    #[default]
    WithSensorModel,
}

impl From<LocalNoiseSpec> for LocalNoise {
    fn from(v: LocalNoiseSpec) -> Self {
        match v {
            LocalNoiseSpec::Tracklet => LocalNoise::Tracklet,
            LocalNoiseSpec::WithSensorModel => LocalNoise::WithSensorModel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub frames: usize,
    pub dt: f64,
    pub mc_runs: usize,
    pub rng_seed: u64,
    /// 2 for offset biases, 4 with scale biases.
    pub bias_dim: usize,
    /// Prior standard deviations of the estimated bias components.
    pub bias_prior_std: Vec<f64>,
    /// Process noise intensity of the true target motion, m²/s³.
    pub truth_q: f64,
    #[serde(default)]
    pub init: InitSpec,
    pub local_filter: LocalFilter,
    /// NCV intensity of the fusion-center model.
    pub fusion_q: f64,
    #[serde(default)]
    pub fused_noise: FusedNoiseSpec,
    #[serde(default)]
    pub local_noise: LocalNoiseSpec,
    pub sensors: Vec<SensorSpec>,
    pub targets: Vec<TargetSpec>,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must be non-negative and finite, got {v}"
        )))
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| invalid(format!("scenario JSON: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Validation(m) => invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.len() < 2 {
            return Err(invalid("at least two sensors are required"));
        }
        if self.targets.is_empty() {
            return Err(invalid("at least one target is required"));
        }
        if self.frames < 2 {
            return Err(invalid("frames must be at least 2"));
        }
        if self.mc_runs == 0 {
            return Err(invalid("mc_runs must be at least 1"));
        }
        positive("dt", self.dt)?;
        non_negative("truth_q", self.truth_q)?;
        positive("fusion_q", self.fusion_q)?;
        positive("init.sigma_pos", self.init.sigma_pos)?;
        positive("init.sigma_vel", self.init.sigma_vel)?;
        if self.bias_dim != 2 && self.bias_dim != 4 {
            return Err(invalid(format!(
                "bias_dim must be 2 or 4, got {}",
                self.bias_dim
            )));
        }
        if self.bias_prior_std.len() != self.bias_dim {
            return Err(invalid(format!(
                "bias_prior_std has {} entries, bias_dim is {}",
                self.bias_prior_std.len(),
                self.bias_dim
            )));
        }
        for (i, v) in self.bias_prior_std.iter().enumerate() {
            positive(&format!("bias_prior_std[{i}]"), *v)?;
        }
        for (i, s) in self.sensors.iter().enumerate() {
            positive(&format!("sensors[{i}].sigma_r"), s.sigma_r)?;
            positive(&format!("sensors[{i}].sigma_theta"), s.sigma_theta)?;
            if s.lag == 0 {
                return Err(invalid(format!("sensors[{i}].lag must be at least 1")));
            }
            if s.position
                .iter()
                .chain(s.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(invalid(format!("sensors[{i}] has non-finite entries")));
            }
            if self.bias_dim == 2 && (s.bias[2] != 0.0 || s.bias[3] != 0.0) {
                return Err(invalid(format!(
                    "sensors[{i}] has scale biases but bias_dim is 2"
                )));
            }
            s.bias_vector()
                .validate()
                .map_err(|e| invalid(format!("sensors[{i}].bias: {e}")))?;
        }
        for (i, t) in self.targets.iter().enumerate() {
            if t.initial.iter().any(|v| !v.is_finite()) {
                return Err(invalid(format!(
                    "targets[{i}].initial has non-finite entries"
                )));
            }
            if t.segments.is_empty() {
                return Err(invalid(format!("targets[{i}] has no motion segments")));
            }
            let total: usize = t.segments.iter().map(|s| s.frames).sum();
            if total != self.frames {
                return Err(invalid(format!(
                    "targets[{i}] segments cover {total} frames, scenario has {}",
                    self.frames
                )));
            }
            for s in &t.segments {
                if let Motion::Turn { omega } = s.motion {
                    if !omega.is_finite() {
                        return Err(invalid(format!("targets[{i}] has a non-finite turn rate")));
                    }
                }
            }
            for (j, s) in self.sensors.iter().enumerate() {
                let d = Vector2::new(t.initial[0] - s.position[0], t.initial[2] - s.position[1]);
                if d.norm() < 1.0 {
                    return Err(invalid(format!(
                        "targets[{i}] starts on top of sensors[{j}]"
                    )));
                }
            }
        }
        match &self.local_filter {
            LocalFilter::Kf { q } => positive("local_filter.q", *q)?,
            LocalFilter::ImmNcvNcv {
                q,
                transition,
                initial_probs,
            }
            | LocalFilter::ImmNcaNcv {
                q,
                transition,
                initial_probs,
                ..
            } => {
                positive("local_filter.q[0]", q[0])?;
                positive("local_filter.q[1]", q[1])?;
                for row in transition {
                    if row.iter().any(|v| *v < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
                    {
                        return Err(invalid("local_filter.transition rows must be stochastic"));
                    }
                }
                if initial_probs.iter().any(|v| *v < 0.0)
                    || (initial_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9
                {
                    return Err(invalid("local_filter.initial_probs must sum to one"));
                }
                if let LocalFilter::ImmNcaNcv { accel_std, .. } = &self.local_filter {
                    positive("local_filter.accel_std", *accel_std)?;
                }
            }
        }
        Ok(())
    }

    pub fn bias_prior(&self) -> BiasEstimate<f64> {
        BiasEstimate::zero(&self.bias_prior_std)
    }

    pub fn true_bias(&self, sensor: usize) -> DVector<f64> {
        self.sensors[sensor].bias_vector().to_dvector(self.bias_dim)
    }

    /// One-step truth model for the given motion.
    pub fn truth_model(&self, motion: Motion) -> trackreg::Result<MotionModel<f64>> {
        match motion {
            Motion::Ncv => ncv_model(self.dt, self.truth_q, self.truth_q),
            Motion::Turn { omega } => {
                turn_model(self.dt, omega)?.with_white_acceleration(self.truth_q, self.truth_q)
            }
        }
    }

    pub fn fusion_model(&self) -> trackreg::Result<MotionModel<f64>> {
        ncv_model(self.dt, self.fusion_q, self.fusion_q)
    }

    /// Largest reporting lag; fusion-center frames are multiples of each lag.
    pub fn max_lag(&self) -> usize {
        self.sensors.iter().map(|s| s.lag).max().unwrap_or(1)
    }
}
