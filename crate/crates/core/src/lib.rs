//! Tracklet-based sensor registration and fusion.
//!
//! Local tracks from biased radars are turned into equivalent measurements
//! at a fusion center, the local Kalman gains are reconstructed from them,
//! and each sensor's range/azimuth biases are estimated against a
//! bias-corrected fused reference built from the other sensors.
//!
//! Everything is generic over the scalar type; `f64` and `f32` aliases are
//! provided below.

// `!(x <= y)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod coords;
pub mod crlb;
pub mod dynamics;
pub mod error;
pub mod fusion;
pub mod linalg;
pub mod scalar;
pub mod trackers;
pub mod tracklets;

pub use bias::{
    difference_pseudo_measurement, omb_step, rlsb_update, rlsb_update_naive, sensor_pseudo_obs,
    BiasDynamics, BiasEstimate, PseudoMeasurement,
};
pub use coords::{
    apply_bias, bias_jacobians, converted_covariance, polar_to_cart, polar_to_cart_unbiased,
    BiasJacobians, BiasVector, CartesianMeasurement, PolarMeasurement, SensorFrame,
};
pub use crlb::{build_fim, combine_sensors, crlb_diag, CombinedSensor, FimBlock, FimProblem};
pub use dynamics::{
    compose_steps, nca_model, ncv_model, turn_model, ModelKind, MotionModel, MultiStepModel,
};
pub use error::{Error, Result};
pub use fusion::{
    bias_correct, reconstruct_fused_gain, reconstruct_local_gain, sfa, CorrectedMeasurement,
    FbeConfig, FbeOutcome, FusedNoise, FusedTrack, FusionCenter, LocalNoise, ReconstructedGain,
    SensorReport, TargetFusion,
};
pub use scalar::Scalar;
pub use trackers::{
    imm_step, kf_predict, kf_update, GaussianEstimate, ImmState, KfStepRecord, LocalTracker,
};
pub use tracklets::{
    compute_tracklet, tracklet_decorrelated, tracklet_inverse_kf, Tracklet, TrackletMethod,
};

pub type PolarMeasurement64 = PolarMeasurement<f64>;
pub type BiasVector64 = BiasVector<f64>;
pub type CartesianMeasurement64 = CartesianMeasurement<f64>;
pub type SensorFrame64 = SensorFrame<f64>;
pub type MotionModel64 = MotionModel<f64>;
pub type MultiStepModel64 = MultiStepModel<f64>;
pub type GaussianEstimate64 = GaussianEstimate<f64>;
pub type ImmState64 = ImmState<f64>;
pub type Tracklet64 = Tracklet<f64>;
pub type BiasEstimate64 = BiasEstimate<f64>;
pub type PseudoMeasurement64 = PseudoMeasurement<f64>;
pub type FusedTrack64 = FusedTrack<f64>;
pub type FusionCenter64 = FusionCenter<f64>;
pub type FimProblem64 = FimProblem<f64>;

pub type PolarMeasurement32 = PolarMeasurement<f32>;
pub type BiasVector32 = BiasVector<f32>;
pub type CartesianMeasurement32 = CartesianMeasurement<f32>;
pub type SensorFrame32 = SensorFrame<f32>;
pub type MotionModel32 = MotionModel<f32>;
pub type MultiStepModel32 = MultiStepModel<f32>;
pub type GaussianEstimate32 = GaussianEstimate<f32>;
pub type ImmState32 = ImmState<f32>;
pub type Tracklet32 = Tracklet<f32>;
pub type BiasEstimate32 = BiasEstimate<f32>;
pub type PseudoMeasurement32 = PseudoMeasurement<f32>;
pub type FusedTrack32 = FusedTrack<f32>;
pub type FusionCenter32 = FusionCenter<f32>;
pub type FimProblem32 = FimProblem<f32>;
