//! Ground truth and sensor measurements for one Monte Carlo run.

use nalgebra::{Cholesky, Matrix4, Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trackreg::{apply_bias, BiasVector, CartesianMeasurement, PolarMeasurement};

use crate::error::{Locate, Result};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy)]
enum StreamKind {
    Process = 1,
    Measurement = 2,
}

/// Independent stream for one (run, kind, sensor, target) tuple. Streams
/// never depend on the order in which runs are executed.
fn stream(seed: u64, run: usize, kind: StreamKind, sensor: usize, target: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((run as u64) << 32)
        | ((kind as u64) << 28)
        | ((sensor as u64 & 0x3fff) << 14)
        | (target as u64 & 0x3fff);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorMeasurement {
    /// Biased, noisy polar measurement.
    pub polar: PolarMeasurement<f64>,
    /// Its standard conversion to the global frame.
    pub biased: CartesianMeasurement<f64>,
    /// Same noise draw without any bias.
    pub unbiased: CartesianMeasurement<f64>,
}

#[derive(Debug, Clone)]
pub struct Truth {
    /// `states[target][frame]`, frames `0..=K`.
    pub states: Vec<Vec<Vector4<f64>>>,
    /// `measurements[sensor][target][frame]`.
    pub measurements: Vec<Vec<Vec<SensorMeasurement>>>,
}

fn noise_factor(q: &Matrix4<f64>) -> Matrix4<f64> {
    if q.iter().all(|v| *v == 0.0) {
        return Matrix4::zeros();
    }
    match Cholesky::new(*q) {
        Some(c) => c.l(),
        None => {
            // PSD but singular; fall back to the eigen square root
            let e = q.symmetric_eigen();
            let d = e.eigenvalues.map(|v| v.max(0.0).sqrt());
            e.eigenvectors * Matrix4::from_diagonal(&d)
        }
    }
}

/// Trajectories without process noise; used for the lower bound.
pub fn nominal_trajectories(s: &Scenario) -> Result<Vec<Vec<Vector4<f64>>>> {
    let mut out = Vec::with_capacity(s.targets.len());
    for (t, spec) in s.targets.iter().enumerate() {
        let mut x = spec.initial_state();
        let mut states = vec![x];
        for k in 1..=s.frames {
            let m = s.truth_model(spec.motion_at(k)).at(0, k, None, Some(t))?;
            x = m.transition4().at(0, k, None, Some(t))? * x;
            states.push(x);
        }
        out.push(states);
    }
    Ok(out)
}

pub fn measure(
    s: &Scenario,
    sensor: usize,
    x: &Vector4<f64>,
    noise: Vector2<f64>,
) -> trackreg::Result<SensorMeasurement> {
    let spec = &s.sensors[sensor];
    let frame = spec.frame();
    let truth = frame.observe(&Vector2::new(x[0], x[2]))?;
    let polar = apply_bias(&truth, &spec.bias_vector(), &noise)?;
    let clean = apply_bias(&truth, &BiasVector::zero(), &noise)?;
    Ok(SensorMeasurement {
        polar,
        biased: frame.to_global(&polar),
        unbiased: frame.to_global(&clean),
    })
}

/// Deterministic in `(scenario.rng_seed, run)`.
pub fn simulate_truth(s: &Scenario, seed: u64, run: usize) -> Result<Truth> {
    let mut states = Vec::with_capacity(s.targets.len());
    for (t, spec) in s.targets.iter().enumerate() {
        let mut rng = stream(seed, run, StreamKind::Process, 0, t);
        let mut x = spec.initial_state();
        let mut traj = Vec::with_capacity(s.frames + 1);
        traj.push(x);
        for k in 1..=s.frames {
            let m = s.truth_model(spec.motion_at(k)).at(run, k, None, Some(t))?;
            let f = m.transition4().at(run, k, None, Some(t))?;
            let l = noise_factor(&m.noise4().at(run, k, None, Some(t))?);
            let w = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
            x = f * x + l * w;
            traj.push(x);
        }
        states.push(traj);
    }
    let mut measurements = Vec::with_capacity(s.sensors.len());
    for (si, spec) in s.sensors.iter().enumerate() {
        let mut per_target = Vec::with_capacity(s.targets.len());
        for (t, traj) in states.iter().enumerate() {
            let mut rng = stream(seed, run, StreamKind::Measurement, si, t);
            let mut series = Vec::with_capacity(traj.len());
            for (k, x) in traj.iter().enumerate() {
                let n_r: f64 = StandardNormal.sample(&mut rng);
                let n_t: f64 = StandardNormal.sample(&mut rng);
                let noise = Vector2::new(spec.sigma_r * n_r, spec.sigma_theta * n_t);
                series.push(measure(s, si, x, noise).at(run, k, Some(si), Some(t))?);
            }
            per_target.push(series);
        }
        measurements.push(per_target);
    }
    Ok(Truth {
        states,
        measurements,
    })
}
