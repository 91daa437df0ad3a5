//! Built-in scenarios. The JSON files under `scenarios/` are these values
//! serialized.
//!
//! Target coordinates are not published for the reference scenario. Here the
//! five sensors sit on a 12 km ring around a 4×4 target grid with 6 km
//! spacing; the two-sensor targets sit on a 4 km grid around the baseline.
//! With every sensor carrying the same bias, the common part of the biases is
//! only observable through the spread of viewing directions, so targets far
//! off to one side of a compact sensor cluster make it nearly unobservable.

use std::f64::consts::PI;

use crate::scenario::{
    FusedNoiseSpec, InitSpec, LocalFilter, LocalNoiseSpec, Motion, Scenario, Segment, SensorSpec,
    TargetSpec,
};

/// 0.1 deg/s.
pub const TURN_RATE: f64 = 0.1 * PI / 180.0;

const SIGMA_R: f64 = 10.0;
const SIGMA_THETA: f64 = 1e-3;
const OFFSET_BIAS: [f64; 4] = [20.0, 1e-3, 0.0, 0.0];
const FULL_BIAS: [f64; 4] = [20.0, 1e-3, 1e-3, 1e-3];

fn sensor(x: f64, y: f64, bias: [f64; 4], lag: usize) -> SensorSpec {
    SensorSpec {
        position: [x, y],
        sigma_r: SIGMA_R,
        sigma_theta: SIGMA_THETA,
        bias,
        lag,
    }
}

/// Sixteen targets on a 4×4 grid; odd ones switch to a coordinated turn
/// halfway through.
pub fn grid_targets(center: [f64; 2], spacing: f64, frames: usize) -> Vec<TargetSpec> {
    let speed = 15.0;
    let mut out = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..4 {
            let n = out.len();
            let heading = n as f64 * PI / 8.0;
            let x = center[0] + spacing * (i as f64 - 1.5);
            let y = center[1] + spacing * (j as f64 - 1.5);
            let segments = if n % 2 == 0 {
                vec![Segment {
                    frames,
                    motion: Motion::Ncv,
                }]
            } else {
                let half = frames / 2;
                let sign = if n % 4 == 1 { 1.0 } else { -1.0 };
                vec![
                    Segment {
                        frames: half,
                        motion: Motion::Ncv,
                    },
                    Segment {
                        frames: frames - half,
                        motion: Motion::Turn {
                            omega: sign * TURN_RATE,
                        },
                    },
                ]
            };
            out.push(TargetSpec {
                initial: [x, speed * heading.cos(), y, speed * heading.sin()],
                segments,
            });
        }
    }
    out
}

const RING_RADIUS: f64 = 12_000.0;

/// Five sensors evenly spaced on a ring around the origin, sensor 1 due south.
fn five_sensors(bias: [f64; 4], lag: usize) -> Vec<SensorSpec> {
    (0..5)
        .map(|i| {
            let a = -PI / 2.0 + i as f64 * 2.0 * PI / 5.0;
            // rounded to the metre so the JSON files stay readable
            let x = (RING_RADIUS * a.cos()).round();
            let y = (RING_RADIUS * a.sin()).round();
            sensor(x, y, bias, lag)
        })
        .collect()
}

/// Two sensors, every-frame reporting, 20 frames.
pub fn two_sensor() -> Scenario {
    let frames = 20;
    Scenario {
        name: "two_sensor".into(),
        description: "Two sensors at (0,0) and (5000,0), L = 1, offset biases (20 m, 1 mrad)"
            .into(),
        frames,
        dt: 1.0,
        mc_runs: 100,
        rng_seed: 20_140_601,
        bias_dim: 2,
        bias_prior_std: vec![20.0, 1e-3],
        truth_q: 0.1,
        init: InitSpec::default(),
        local_filter: LocalFilter::Kf { q: 0.1 },
        fusion_q: 0.1,
        fused_noise: FusedNoiseSpec::Tracklet,
        local_noise: LocalNoiseSpec::WithSensorModel,
        sensors: vec![
            sensor(0.0, 0.0, OFFSET_BIAS, 1),
            sensor(5000.0, 0.0, OFFSET_BIAS, 1),
        ],
        targets: grid_targets([2500.0, 0.0], 4000.0, frames),
    }
}

/// Five sensors reporting every 10 frames, 100 frames, Kalman local trackers.
pub fn five_sensor_offset() -> Scenario {
    let frames = 100;
    Scenario {
        name: "five_sensor_offset".into(),
        description: "Five sensors, sixteen targets, L = 10, offset biases (20 m, 1 mrad), NCV Kalman local trackers"
            .into(),
        frames,
        dt: 1.0,
        mc_runs: 100,
        rng_seed: 20_140_602,
        bias_dim: 2,
        bias_prior_std: vec![20.0, 1e-3],
        truth_q: 0.1,
        init: InitSpec::default(),
        local_filter: LocalFilter::Kf { q: 0.1 },
        fusion_q: 0.1,
        fused_noise: FusedNoiseSpec::Tracklet,
        local_noise: LocalNoiseSpec::WithSensorModel,
        sensors: five_sensors(OFFSET_BIAS, 10),
        targets: grid_targets([0.0, 0.0], 6000.0, frames),
    }
}

/// As [`five_sensor_offset`] with scale biases of 0.001 on range and azimuth.
pub fn five_sensor_scale() -> Scenario {
    Scenario {
        name: "five_sensor_scale".into(),
        description: "Five sensors, L = 10, offset and scale biases (20 m, 1 mrad, 0.001, 0.001)"
            .into(),
        rng_seed: 20_140_603,
        bias_dim: 4,
        bias_prior_std: vec![20.0, 1e-3, 0.01, 0.01],
        sensors: five_sensors(FULL_BIAS, 10),
        ..five_sensor_offset()
    }
}

/// Local trackers are NCV/NCV IMMs (q = 10 and 2); fusion center runs NCV with q = 10.
pub fn five_sensor_imm_ncv_ncv() -> Scenario {
    Scenario {
        name: "five_sensor_imm_ncv_ncv".into(),
        description: "Five sensors, L = 10, NCV/NCV IMM local trackers (q = 10, 2), fusion q = 10"
            .into(),
        rng_seed: 20_140_604,
        local_filter: LocalFilter::ImmNcvNcv {
            q: [10.0, 2.0],
            transition: [[0.95, 0.05], [0.05, 0.95]],
            initial_probs: [0.5, 0.5],
        },
        fusion_q: 10.0,
        ..five_sensor_offset()
    }
}

/// Local trackers are NCA/NCV IMMs (q = 10 and 2); fusion center runs NCV with q = 200.
pub fn five_sensor_imm_nca_ncv() -> Scenario {
    Scenario {
        name: "five_sensor_imm_nca_ncv".into(),
        description: "Five sensors, L = 10, NCA/NCV IMM local trackers (q = 10, 2), fusion q = 200"
            .into(),
        rng_seed: 20_140_605,
        local_filter: LocalFilter::ImmNcaNcv {
            q: [10.0, 2.0],
            transition: [[0.95, 0.05], [0.05, 0.95]],
            initial_probs: [0.5, 0.5],
            accel_std: 5.0,
        },
        fusion_q: 200.0,
        ..five_sensor_offset()
    }
}

pub fn all() -> Vec<Scenario> {
    vec![
        two_sensor(),
        five_sensor_offset(),
        five_sensor_scale(),
        five_sensor_imm_ncv_ncv(),
        five_sensor_imm_nca_ncv(),
    ]
}
