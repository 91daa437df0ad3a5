//! Local Kalman filter and two-model IMM trackers.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};

use crate::coords::CartesianMeasurement;
use crate::dynamics::{marginal_indices, marginalize, MotionModel, MultiStepModel};
use crate::error::{Error, Result};
use crate::linalg::{inverse2, position_selection, symmetric_condition, symmetrize};
use crate::scalar::{lit, to_f64, Scalar};

/// State mean and covariance at a frame, layout `[x, vx, y, vy]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianEstimate<T: Scalar> {
    pub mean: Vector4<T>,
    pub cov: Matrix4<T>,
    pub frame: i64,
}

impl<T: Scalar> GaussianEstimate<T> {
    pub fn new(mean: Vector4<T>, cov: Matrix4<T>, frame: i64) -> Self {
        Self { mean, cov, frame }
    }

    /// Zero-velocity initialization from a position measurement with
    /// diagonal covariance `diag(σp², σv², σp², σv²)`.
    pub fn from_position(z: &Vector2<T>, sigma_pos: T, sigma_vel: T, frame: i64) -> Self {
        let (p, v) = (sigma_pos * sigma_pos, sigma_vel * sigma_vel);
        Self {
            mean: Vector4::new(z.x, T::zero(), z.y, T::zero()),
            cov: Matrix4::from_diagonal(&Vector4::new(p, v, p, v)),
            frame,
        }
    }

    pub fn position(&self) -> Vector2<T> {
        Vector2::new(self.mean[0], self.mean[2])
    }
}

/// Quantities of one Kalman measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfStepRecord<T: Scalar> {
    pub gain: Matrix4x2<T>,
    pub innovation: Vector2<T>,
    pub predicted_meas: Vector2<T>,
    pub innovation_cov: Matrix2<T>,
}

/// Anything that maps a state forward over a known number of frames.
pub trait Propagator<T: Scalar> {
    fn transition(&self) -> &DMatrix<T>;
    fn noise(&self) -> &DMatrix<T>;
    fn steps(&self) -> usize;
}

impl<T: Scalar> Propagator<T> for MotionModel<T> {
    fn transition(&self) -> &DMatrix<T> {
        &self.f
    }
    fn noise(&self) -> &DMatrix<T> {
        &self.q
    }
    fn steps(&self) -> usize {
        1
    }
}

impl<T: Scalar> Propagator<T> for MultiStepModel<T> {
    fn transition(&self) -> &DMatrix<T> {
        &self.f
    }
    fn noise(&self) -> &DMatrix<T> {
        &self.q
    }
    fn steps(&self) -> usize {
        self.steps
    }
}

fn as4<T: Scalar>(m: &DMatrix<T>) -> Result<Matrix4<T>> {
    if m.shape() != (4, 4) {
        return Err(Error::Dimension {
            context: "four-state propagation",
            expected: 4,
            actual: m.nrows(),
        });
    }
    Ok(Matrix4::from_fn(|i, j| m[(i, j)]))
}

/// `x ← F x`, `P ← F P Fᵀ + Q`.
pub fn kf_predict<T: Scalar, M: Propagator<T>>(
    est: &GaussianEstimate<T>,
    model: &M,
) -> Result<GaussianEstimate<T>> {
    let f = as4(model.transition())?;
    let q = as4(model.noise())?;
    Ok(GaussianEstimate {
        mean: f * est.mean,
        cov: symmetrize(&(f * est.cov * f.transpose() + q)),
        frame: est.frame + model.steps() as i64,
    })
}

/// Kalman update with a Cartesian position measurement (Joseph form).
pub fn kf_update<T: Scalar>(
    est: &GaussianEstimate<T>,
    z: &CartesianMeasurement<T>,
) -> Result<(GaussianEstimate<T>, KfStepRecord<T>)> {
    let h = position_selection::<T>();
    let predicted_meas = h * est.mean;
    let s = symmetrize(&(h * est.cov * h.transpose() + z.r));
    let s_inv = inverse2(&s, "innovation covariance").map_err(|_| Error::Singular {
        context: "innovation covariance",
        condition: symmetric_condition(&s),
    })?;
    let gain = est.cov * h.transpose() * s_inv;
    let innovation = z.z - predicted_meas;
    let ikh = Matrix4::identity() - gain * h;
    let cov = ikh * est.cov * ikh.transpose() + gain * z.r * gain.transpose();
    Ok((
        GaussianEstimate {
            mean: est.mean + gain * innovation,
            cov: symmetrize(&cov),
            frame: est.frame,
        },
        KfStepRecord {
            gain,
            innovation,
            predicted_meas,
            innovation_cov: s,
        },
    ))
}

/// Two (or more) model IMM estimator. All modes share one internal state
/// dimension: 4, or 6 when any mode is nearly constant acceleration.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmState<T: Scalar> {
    pub means: Vec<DVector<T>>,
    pub covs: Vec<DMatrix<T>>,
    pub models: Vec<MotionModel<T>>,
    pub mode_probs: DVector<T>,
    pub transition: DMatrix<T>,
    pub frame: i64,
}

impl<T: Scalar> ImmState<T> {
    /// Starts every mode from the same four-dimensional estimate. In a
    /// six-dimensional state the accelerations start at zero with variance
    /// `accel_var`.
    pub fn new(
        init: &GaussianEstimate<T>,
        models: Vec<MotionModel<T>>,
        transition: DMatrix<T>,
        mode_probs: DVector<T>,
        accel_var: T,
    ) -> Result<Self> {
        let n = models.len();
        if n == 0 {
            return Err(Error::Empty("IMM"));
        }
        if transition.shape() != (n, n) || mode_probs.len() != n {
            return Err(Error::Dimension {
                context: "IMM mode parameters",
                expected: n,
                actual: mode_probs.len(),
            });
        }
        check_stochastic(&transition, &mode_probs)?;
        let dim = models.iter().map(|m| m.dim()).max().unwrap_or(4);
        let models = models
            .iter()
            .map(|m| m.embed(dim))
            .collect::<Result<Vec<_>>>()?;
        let idx = marginal_indices(dim)?;
        let mut mean = DVector::zeros(dim);
        let mut cov = DMatrix::zeros(dim, dim);
        for i in 0..4 {
            mean[idx[i]] = init.mean[i];
            for j in 0..4 {
                cov[(idx[i], idx[j])] = init.cov[(i, j)];
            }
        }
        for a in 0..dim {
            if !idx.contains(&a) {
                cov[(a, a)] = accel_var;
            }
        }
        Ok(Self {
            means: vec![mean; n],
            covs: vec![cov; n],
            models,
            mode_probs,
            transition,
            frame: init.frame,
        })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Moment-matched combination of the modes, reduced to `[x, vx, y, vy]`.
    pub fn combined(&self) -> Result<GaussianEstimate<T>> {
        let (mean, cov) = moment_match(&self.means, &self.covs, &self.mode_probs);
        let (m, p) = marginalize(&mean, &cov)?;
        Ok(GaussianEstimate::new(m, symmetrize(&p), self.frame))
    }
}

fn check_stochastic<T: Scalar>(transition: &DMatrix<T>, probs: &DVector<T>) -> Result<()> {
    let tol = 1e-9;
    for row in transition.row_iter() {
        let sum: f64 = row.iter().map(|v| to_f64(*v)).sum();
        if (sum - 1.0).abs() > tol || row.iter().any(|v| *v < T::zero()) {
            return Err(Error::InvalidInput(
                "IMM transition rows must be stochastic".into(),
            ));
        }
    }
    let sum: f64 = probs.iter().map(|v| to_f64(*v)).sum();
    if (sum - 1.0).abs() > tol || probs.iter().any(|v| *v < T::zero()) {
        return Err(Error::InvalidInput(
            "IMM mode probabilities must sum to one".into(),
        ));
    }
    Ok(())
}

fn moment_match<T: Scalar>(
    means: &[DVector<T>],
    covs: &[DMatrix<T>],
    weights: &DVector<T>,
) -> (DVector<T>, DMatrix<T>) {
    let dim = means[0].len();
    let mut mean = DVector::zeros(dim);
    for (m, w) in means.iter().zip(weights.iter()) {
        mean += m * *w;
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for ((m, p), w) in means.iter().zip(covs).zip(weights.iter()) {
        let d = m - &mean;
        cov += (p + &d * d.transpose()) * *w;
    }
    (mean, cov)
}

/// One IMM cycle: mixing, mode-matched prediction and update, mode
/// probability update and the combined four-dimensional output.
pub fn imm_step<T: Scalar>(
    s: &ImmState<T>,
    z: &CartesianMeasurement<T>,
) -> Result<(ImmState<T>, GaussianEstimate<T>)> {
    let n = s.models.len();
    let dim = s.dim();
    let idx = marginal_indices(dim)?;
    let (ix, iy) = (idx[0], idx[2]);

    // mixing
    let c_bar = s.transition.transpose() * &s.mode_probs;
    let mut means = Vec::with_capacity(n);
    let mut covs = Vec::with_capacity(n);
    for j in 0..n {
        let w = if c_bar[j] > T::zero() {
            DVector::from_fn(n, |i, _| s.transition[(i, j)] * s.mode_probs[i] / c_bar[j])
        } else {
            s.mode_probs.clone()
        };
        let (m, p) = moment_match(&s.means, &s.covs, &w);
        means.push(m);
        covs.push(p);
    }

    let mut log_lik = Vec::with_capacity(n);
    for j in 0..n {
        let model = &s.models[j];
        let xp = &model.f * &means[j];
        let pp = symmetrize(&(&model.f * &covs[j] * model.f.transpose() + &model.q));
        let zp = Vector2::new(xp[ix], xp[iy]);
        let sm = Matrix2::new(pp[(ix, ix)], pp[(ix, iy)], pp[(iy, ix)], pp[(iy, iy)]) + z.r;
        let sm = symmetrize(&sm);
        let s_inv = inverse2(&sm, "IMM innovation covariance")?;
        let nu = z.z - zp;
        // P Hᵀ picks the two position columns
        let pht = DMatrix::from_fn(dim, 2, |r, c| pp[(r, if c == 0 { ix } else { iy })]);
        let gain = &pht * DMatrix::from_fn(2, 2, |r, c| s_inv[(r, c)]);
        let nu_d = DVector::from_vec(vec![nu.x, nu.y]);
        let xu = &xp + &gain * &nu_d;
        let pu = &pp - &gain * DMatrix::from_fn(2, 2, |r, c| sm[(r, c)]) * gain.transpose();
        means[j] = xu;
        covs[j] = symmetrize(&pu);
        let det = sm.determinant();
        let maha = (nu.transpose() * s_inv * nu)[(0, 0)];
        log_lik.push(-lit::<T>(0.5) * (maha + det.ln()) - T::two_pi().ln());
    }

    let max = log_lik
        .iter()
        .copied()
        .fold(log_lik[0], |a, b| if b > a { b } else { a });
    let mut probs = DVector::from_fn(n, |j, _| c_bar[j] * (log_lik[j] - max).exp());
    let total = probs.sum();
    if !(total > T::zero()) {
        return Err(Error::Singular {
            context: "IMM mode likelihoods",
            condition: f64::INFINITY,
        });
    }
    probs /= total;

    let next = ImmState {
        means,
        covs,
        models: s.models.clone(),
        mode_probs: probs,
        transition: s.transition.clone(),
        frame: s.frame + 1,
    };
    let out = next.combined()?;
    Ok((next, out))
}

/// A per-(sensor, target) local tracker.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalTracker<T: Scalar> {
    Kf {
        estimate: GaussianEstimate<T>,
        model: MotionModel<T>,
    },
    Imm(ImmState<T>),
}

impl<T: Scalar> LocalTracker<T> {
    /// Predicts one frame and updates with `z`. The Kalman variant also
    /// returns its gain record.
    pub fn step(
        &mut self,
        z: &CartesianMeasurement<T>,
    ) -> Result<(GaussianEstimate<T>, Option<KfStepRecord<T>>)> {
        match self {
            LocalTracker::Kf { estimate, model } => {
                let pred = kf_predict(estimate, model)?;
                let (post, rec) = kf_update(&pred, z)?;
                *estimate = post;
                Ok((post, Some(rec)))
            }
            LocalTracker::Imm(state) => {
                let (next, out) = imm_step(state, z)?;
                *state = next;
                Ok((out, None))
            }
        }
    }

    pub fn estimate(&self) -> Result<GaussianEstimate<T>> {
        match self {
            LocalTracker::Kf { estimate, .. } => Ok(*estimate),
            LocalTracker::Imm(state) => state.combined(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{nca_model, ncv_model};
    use approx::assert_relative_eq;
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn meas(x: f64, y: f64, r: f64) -> CartesianMeasurement<f64> {
        CartesianMeasurement {
            z: Vector2::new(x, y),
            r: Matrix2::identity() * r,
        }
    }

    fn min_eig(m: &Matrix4<f64>) -> f64 {
        SymmetricEigen::new(*m).eigenvalues.min()
    }

    #[test]
    fn predict_identity_and_unit_velocity() {
        let est = GaussianEstimate::new(Vector4::new(0.0, 1.0, 0.0, 0.0), Matrix4::identity(), 0);
        let still = ncv_model(0.0, 0.0, 0.0).unwrap();
        assert_eq!(kf_predict(&est, &still).unwrap().mean, est.mean);
        let m = ncv_model(1.0, 0.0, 0.0).unwrap();
        let p = kf_predict(&est, &m).unwrap();
        assert_eq!(p.mean, Vector4::new(1.0, 1.0, 0.0, 0.0));
        assert_eq!(p.frame, 1);
        let noisy = ncv_model(1.0, 0.1, 0.1).unwrap();
        assert!(kf_predict(&est, &noisy).unwrap().cov.trace() > p.cov.trace());
    }

    #[test]
    fn uninformative_measurement() {
        let est = GaussianEstimate::new(
            Vector4::new(1.0, 2.0, 3.0, 4.0),
            Matrix4::identity() * 4.0,
            0,
        );
        let (post, rec) = kf_update(&est, &meas(100.0, -100.0, 1e12)).unwrap();
        assert!(rec.gain.norm() < 1e-11);
        assert_relative_eq!(post.mean, est.mean, epsilon = 1e-9);
    }

    #[test]
    fn scalar_reduction() {
        let est = GaussianEstimate::new(Vector4::zeros(), Matrix4::identity(), 0);
        let (post, _) = kf_update(&est, &meas(1.0, 1.0, 1.0)).unwrap();
        assert_relative_eq!(post.mean[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(post.mean[1], 0.0);
        assert_relative_eq!(post.cov[(1, 1)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sequential_updates_equal_weighted_least_squares() {
        // diffuse prior on position only: two measurements with variances
        // 4 and 1 give the inverse-variance weighted mean
        let est = GaussianEstimate::new(Vector4::zeros(), Matrix4::identity() * 1e14, 0);
        let (a, _) = kf_update(&est, &meas(10.0, 0.0, 4.0)).unwrap();
        let (b, _) = kf_update(&a, &meas(20.0, 5.0, 1.0)).unwrap();
        let w = (10.0 / 4.0 + 20.0) / (1.0 / 4.0 + 1.0);
        assert_relative_eq!(b.mean[0], w, max_relative = 1e-9);
        assert_relative_eq!(b.mean[2], 5.0 / 1.25, max_relative = 1e-9);
        assert_relative_eq!(b.cov[(0, 0)], 1.0 / 1.25, max_relative = 1e-9);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let est = GaussianEstimate::new(Vector4::zeros(), Matrix4::zeros(), 0);
        let err = kf_update(&est, &meas(0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }));
    }

    #[test]
    fn posterior_never_exceeds_prior() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..500 {
            let a = Matrix4::from_fn(|_, _| n.sample(&mut rng));
            let p = a * a.transpose() + Matrix4::identity() * 0.1;
            let b = Matrix2::from_fn(|_, _| n.sample(&mut rng));
            let r = b * b.transpose() + Matrix2::identity() * 0.01;
            let est = GaussianEstimate::new(Vector4::zeros(), p, 0);
            let z = CartesianMeasurement {
                z: Vector2::new(1.0, 2.0),
                r,
            };
            let (post, _) = kf_update(&est, &z).unwrap();
            assert!(min_eig(&(p - post.cov)) > -1e-9 * p.norm());
        }
    }

    fn imm(models: Vec<MotionModel<f64>>, pi: DMatrix<f64>) -> ImmState<f64> {
        let init = GaussianEstimate::new(
            Vector4::new(0.0, 10.0, 0.0, 5.0),
            Matrix4::from_diagonal(&Vector4::new(100.0, 25.0, 100.0, 25.0)),
            0,
        );
        ImmState::new(&init, models, pi, DVector::from_vec(vec![0.5, 0.5]), 1.0).unwrap()
    }

    #[test]
    fn identical_modes_reduce_to_kf() {
        let m = ncv_model(1.0, 1.0, 1.0).unwrap();
        let pi = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]);
        let mut s = imm(vec![m.clone(), m.clone()], pi);
        let mut kf = s.combined().unwrap();
        for k in 1..10 {
            let z = meas(10.0 * k as f64 + 3.0, 5.0 * k as f64 - 2.0, 25.0);
            let (next, out) = imm_step(&s, &z).unwrap();
            kf = kf_update(&kf_predict(&kf, &m).unwrap(), &z).unwrap().0;
            assert_relative_eq!(out.mean, kf.mean, max_relative = 1e-10);
            assert_relative_eq!(out.cov, kf.cov, max_relative = 1e-10);
            assert_relative_eq!(next.mode_probs[0], 0.5, epsilon = 1e-12);
            s = next;
        }
    }

    #[test]
    fn identity_transition_keeps_probabilities_with_equal_likelihoods() {
        let m = ncv_model(1.0, 1.0, 1.0).unwrap();
        let s = imm(vec![m.clone(), m], DMatrix::identity(2, 2));
        let (next, _) = imm_step(&s, &meas(10.0, 5.0, 25.0)).unwrap();
        assert_relative_eq!(next.mode_probs, s.mode_probs, epsilon = 1e-14);
    }

    #[test]
    fn low_noise_mode_dominates_on_straight_track() {
        let pi = DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]);
        let mut s = imm(
            vec![
                ncv_model(1.0, 10.0, 10.0).unwrap(),
                ncv_model(1.0, 2.0, 2.0).unwrap(),
            ],
            pi,
        );
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = Normal::new(0.0, 5.0).unwrap();
        for k in 1..=50 {
            let t = k as f64;
            let z = meas(
                10.0 * t + n.sample(&mut rng),
                5.0 * t + n.sample(&mut rng),
                25.0,
            );
            s = imm_step(&s, &z).unwrap().0;
        }
        assert!(s.mode_probs[1] > 0.7, "{}", s.mode_probs);
    }

    #[test]
    fn nca_mode_embeds_and_marginalizes() {
        let pi = DMatrix::from_row_slice(2, 2, &[0.95, 0.05, 0.05, 0.95]);
        let s = imm(
            vec![
                nca_model(1.0, 10.0, 10.0).unwrap(),
                ncv_model(1.0, 2.0, 2.0).unwrap(),
            ],
            pi,
        );
        assert_eq!(s.dim(), 6);
        let (next, out) = imm_step(&s, &meas(10.0, 5.0, 25.0)).unwrap();
        assert_eq!(next.means[1][2], 0.0);
        assert!(min_eig(&out.cov) > 0.0);
        assert_relative_eq!(next.mode_probs.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn combined_covariance_dominates_weighted_modes() {
        let pi = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.3, 0.7]);
        let mut s = imm(
            vec![
                ncv_model(1.0, 10.0, 10.0).unwrap(),
                ncv_model(1.0, 0.1, 0.1).unwrap(),
            ],
            pi,
        );
        for k in 1..20 {
            let t = k as f64;
            s = imm_step(&s, &meas(10.0 * t + 0.3 * t * t, 5.0 * t, 25.0))
                .unwrap()
                .0;
            let (_, total) = moment_match(&s.means, &s.covs, &s.mode_probs);
            let mut within = DMatrix::zeros(4, 4);
            for (p, w) in s.covs.iter().zip(s.mode_probs.iter()) {
                within += p * *w;
            }
            let spread = total - within;
            let eig = SymmetricEigen::new(spread).eigenvalues;
            assert!(eig.min() > -1e-9);
        }
    }

    #[test]
    fn rejects_bad_transition() {
        let m = ncv_model(1.0, 1.0, 1.0).unwrap();
        let init = GaussianEstimate::new(Vector4::zeros(), Matrix4::identity(), 0);
        let pi = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, 0.1, 0.9]);
        let mu = DVector::from_vec(vec![0.5, 0.5]);
        assert!(ImmState::new(&init, vec![m.clone(), m], pi, mu, 1.0).is_err());
    }
}
