//! Motion models and their multi-step transition / process-noise matrices.
//!
//! Four-dimensional models use the state layout `[x, vx, y, vy]`. The nearly
//! constant acceleration model works on `[x, vx, ax, y, vy, ay]` and is
//! reduced to the four-dimensional layout with [`marginal_indices`].

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Positions of `[x, vx, y, vy]` inside the six-dimensional NCA state.
pub const NCA_POSITION_VELOCITY: [usize; 4] = [0, 1, 3, 4];
const NCV_POSITION_VELOCITY: [usize; 4] = [0, 1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Discretized continuous white noise acceleration.
    Ncv,
    /// Continuous Wiener process acceleration.
    Nca,
    ConstantTurn,
}

/// One-step linear motion model `x(k+1) = F x(k) + v(k)`, `v ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel<T: Scalar> {
    pub kind: ModelKind,
    pub dt: T,
    pub f: DMatrix<T>,
    pub q: DMatrix<T>,
}

/// `F(k, k')` and `Q(k, k')` accumulated over `steps` prediction steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStepModel<T: Scalar> {
    pub f: DMatrix<T>,
    pub q: DMatrix<T>,
    pub steps: usize,
}

fn ncv_axis<T: Scalar>(dt: T, q: T) -> ([[T; 2]; 2], [[T; 2]; 2]) {
    let (two, three) = (lit::<T>(2.0), lit::<T>(3.0));
    let dt2 = dt * dt;
    let f = [[T::one(), dt], [T::zero(), T::one()]];
    let qm = [
        [q * dt2 * dt / three, q * dt2 / two],
        [q * dt2 / two, q * dt],
    ];
    (f, qm)
}

fn nca_axis<T: Scalar>(dt: T, q: T) -> ([[T; 3]; 3], [[T; 3]; 3]) {
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    let half = lit::<T>(0.5);
    let (z, o) = (T::zero(), T::one());
    let f = [[o, dt, half * dt2], [z, o, dt], [z, z, o]];
    let qm = [
        [
            q * dt3 * dt2 / lit(20.0),
            q * dt2 * dt2 / lit(8.0),
            q * dt3 / lit(6.0),
        ],
        [q * dt2 * dt2 / lit(8.0), q * dt3 / lit(3.0), q * dt2 * half],
        [q * dt3 / lit(6.0), q * dt2 * half, q * dt],
    ];
    (f, qm)
}

fn check_interval<T: Scalar>(dt: T) -> Result<()> {
    if dt >= T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "sampling interval must be non-negative".into(),
        ))
    }
}

fn check_intensity<T: Scalar>(q: T) -> Result<()> {
    if q >= T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "process noise intensity must be non-negative".into(),
        ))
    }
}

/// Nearly constant velocity model with intensities `q_x`, `q_y` (m²/s³).
pub fn ncv_model<T: Scalar>(dt: T, q_x: T, q_y: T) -> Result<MotionModel<T>> {
    check_interval(dt)?;
    check_intensity(q_x)?;
    check_intensity(q_y)?;
    let mut f = DMatrix::zeros(4, 4);
    let mut q = DMatrix::zeros(4, 4);
    for (axis, qa) in [q_x, q_y].into_iter().enumerate() {
        let (fa, qm) = ncv_axis(dt, qa);
        let o = 2 * axis;
        for i in 0..2 {
            for j in 0..2 {
                f[(o + i, o + j)] = fa[i][j];
                q[(o + i, o + j)] = qm[i][j];
            }
        }
    }
    Ok(MotionModel {
        kind: ModelKind::Ncv,
        dt,
        f,
        q,
    })
}

/// Nearly constant acceleration model on `[x, vx, ax, y, vy, ay]`.
pub fn nca_model<T: Scalar>(dt: T, q_x: T, q_y: T) -> Result<MotionModel<T>> {
    check_interval(dt)?;
    check_intensity(q_x)?;
    check_intensity(q_y)?;
    let mut f = DMatrix::zeros(6, 6);
    let mut q = DMatrix::zeros(6, 6);
    for (axis, qa) in [q_x, q_y].into_iter().enumerate() {
        let (fa, qm) = nca_axis(dt, qa);
        let o = 3 * axis;
        for i in 0..3 {
            for j in 0..3 {
                f[(o + i, o + j)] = fa[i][j];
                q[(o + i, o + j)] = qm[i][j];
            }
        }
    }
    Ok(MotionModel {
        kind: ModelKind::Nca,
        dt,
        f,
        q,
    })
}

/// Coordinated turn with known rate `omega` (rad/s) and no process noise.
/// Use [`MotionModel::with_white_acceleration`] to add DCWNA noise.
pub fn turn_model<T: Scalar>(dt: T, omega: T) -> Result<MotionModel<T>> {
    check_interval(dt)?;
    let wt = omega * dt;
    let (s, c) = wt.sin_cos();
    // sin(wt)/w and (1 - cos(wt))/w, with their series near w = 0
    let (sw, cw) = if wt.abs() < lit(1e-6) {
        (dt * (T::one() - wt * wt / lit(6.0)), dt * wt * lit(0.5))
    } else {
        (s / omega, (T::one() - c) / omega)
    };
    let (z, o) = (T::zero(), T::one());
    #[rustfmt::skip]
    let f = DMatrix::from_row_slice(4, 4, &[
        o, sw, z, -cw,
        z, c,  z, -s,
        z, cw, o, sw,
        z, s,  z, c,
    ]);
    Ok(MotionModel {
        kind: ModelKind::ConstantTurn,
        dt,
        f,
        q: DMatrix::zeros(4, 4),
    })
}

/// Indices of `[x, vx, y, vy]` inside a state of the given dimension.
pub fn marginal_indices(dim: usize) -> Result<[usize; 4]> {
    match dim {
        4 => Ok(NCV_POSITION_VELOCITY),
        6 => Ok(NCA_POSITION_VELOCITY),
        other => Err(Error::Dimension {
            context: "state marginalization",
            expected: 4,
            actual: other,
        }),
    }
}

/// Reduces a 4- or 6-dimensional mean and covariance to `[x, vx, y, vy]`.
pub fn marginalize<T: Scalar>(
    mean: &DVector<T>,
    cov: &DMatrix<T>,
) -> Result<(Vector4<T>, Matrix4<T>)> {
    let idx = marginal_indices(mean.len())?;
    let m = Vector4::from_fn(|i, _| mean[idx[i]]);
    let p = Matrix4::from_fn(|i, j| cov[(idx[i], idx[j])]);
    Ok((m, p))
}

impl<T: Scalar> MotionModel<T> {
    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    /// Replaces `Q` with the DCWNA covariance for the given intensities
    /// (four-dimensional models only).
    pub fn with_white_acceleration(mut self, q_x: T, q_y: T) -> Result<Self> {
        if self.dim() != 4 {
            return Err(Error::Dimension {
                context: "white acceleration noise",
                expected: 4,
                actual: self.dim(),
            });
        }
        let ncv = ncv_model(self.dt, q_x, q_y)?;
        self.q = ncv.q;
        Ok(self)
    }

    /// Embeds the model in a larger state space. A four-dimensional model
    /// lifted to six dimensions drives the accelerations to zero.
    pub fn embed(&self, dim: usize) -> Result<Self> {
        if dim == self.dim() {
            return Ok(self.clone());
        }
        if self.dim() != 4 || dim != 6 {
            return Err(Error::Dimension {
                context: "model embedding",
                expected: 6,
                actual: dim,
            });
        }
        let idx = NCA_POSITION_VELOCITY;
        let mut f = DMatrix::zeros(6, 6);
        let mut q = DMatrix::zeros(6, 6);
        for i in 0..4 {
            for j in 0..4 {
                f[(idx[i], idx[j])] = self.f[(i, j)];
                q[(idx[i], idx[j])] = self.q[(i, j)];
            }
        }
        Ok(Self {
            kind: self.kind,
            dt: self.dt,
            f,
            q,
        })
    }

    pub fn transition4(&self) -> Result<Matrix4<T>> {
        fixed4(&self.f, "motion model transition")
    }

    pub fn noise4(&self) -> Result<Matrix4<T>> {
        fixed4(&self.q, "motion model process noise")
    }
}

impl<T: Scalar> MultiStepModel<T> {
    /// The model for `self.steps` steps followed by `next.steps` steps.
    pub fn then(&self, next: &MultiStepModel<T>) -> MultiStepModel<T> {
        MultiStepModel {
            f: &next.f * &self.f,
            q: &next.f * &self.q * next.f.transpose() + &next.q,
            steps: self.steps + next.steps,
        }
    }

    pub fn transition4(&self) -> Result<Matrix4<T>> {
        fixed4(&self.f, "multi-step transition")
    }

    pub fn noise4(&self) -> Result<Matrix4<T>> {
        fixed4(&self.q, "multi-step process noise")
    }
}

fn fixed4<T: Scalar>(m: &DMatrix<T>, context: &'static str) -> Result<Matrix4<T>> {
    if m.nrows() != 4 || m.ncols() != 4 {
        return Err(Error::Dimension {
            context,
            expected: 4,
            actual: m.nrows(),
        });
    }
    Ok(Matrix4::from_fn(|i, j| m[(i, j)]))
}

/// `F_L = F^L`, `Q_L = Σ_{i<L} F^i Q (F^i)ᵀ`, by explicit summation.
pub fn compose_steps<T: Scalar>(model: &MotionModel<T>, steps: usize) -> Result<MultiStepModel<T>> {
    if steps == 0 {
        return Err(Error::InvalidInput("step count must be at least 1".into()));
    }
    let n = model.dim();
    let mut power = DMatrix::<T>::identity(n, n);
    let mut q = DMatrix::<T>::zeros(n, n);
    for _ in 0..steps {
        q += &power * &model.q * power.transpose();
        power = &model.f * power;
    }
    Ok(MultiStepModel {
        f: power,
        q: crate::linalg::symmetrize(&q),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Cholesky;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ncv_degenerate_step() {
        let m = ncv_model(0.0, 0.1, 0.1).unwrap();
        assert_eq!(m.f, DMatrix::identity(4, 4));
        assert_eq!(m.q, DMatrix::zeros(4, 4));
    }

    #[test]
    fn ncv_noise_block_integrates_white_acceleration() {
        let m = ncv_model(1.0, 0.1, 0.1).unwrap();
        // ∫0^T q (T-s)(T-s)ᵀ-style integrals evaluated by quadrature
        let n = 20_000;
        let mut acc = [[0.0; 2]; 2];
        for i in 0..n {
            let s = (i as f64 + 0.5) / n as f64;
            let g = [1.0 - s, 1.0];
            for a in 0..2 {
                for b in 0..2 {
                    acc[a][b] += 0.1 * g[a] * g[b] / n as f64;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                assert_relative_eq!(m.q[(a, b)], acc[a][b], max_relative = 1e-6);
                assert_relative_eq!(m.q[(2 + a, 2 + b)], acc[a][b], max_relative = 1e-6);
            }
        }
        assert_relative_eq!(m.q[(0, 0)], 0.1 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(m.q[(0, 1)], 0.05, max_relative = 1e-15);
        assert_relative_eq!(m.q[(1, 1)], 0.1, max_relative = 1e-15);
    }

    #[test]
    fn ncv_semigroup() {
        let a = ncv_model(1.5, 0.1, 0.2).unwrap();
        let b = ncv_model(3.0, 0.1, 0.2).unwrap();
        assert_relative_eq!(&a.f * &a.f, b.f, epsilon = 1e-12);
    }

    #[test]
    fn turn_reduces_to_ncv() {
        let t = turn_model(1.0, 0.0).unwrap();
        let n = ncv_model(1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(t.f, n.f, epsilon = 1e-15);
        let t = turn_model(1.0, 1e-9).unwrap();
        assert_relative_eq!(t.f, n.f, epsilon = 1e-8);
    }

    #[test]
    fn turn_rotates_heading() {
        let omega = 0.1f64.to_radians();
        let m = turn_model(1.0, omega).unwrap();
        let mut x = DVector::from_vec(vec![0.0f64, 100.0, 0.0, 0.0]);
        for step in 1..=10 {
            let prev_heading = x[3].atan2(x[1]);
            x = &m.f * x;
            let heading = x[3].atan2(x[1]);
            assert_relative_eq!(heading - prev_heading, omega, max_relative = 1e-9);
            assert_relative_eq!(x[3].hypot(x[1]), 100.0, max_relative = 1e-12);
            assert_relative_eq!(heading, step as f64 * omega, max_relative = 1e-9);
        }
    }

    #[test]
    fn nca_kinematics() {
        let m = nca_model(0.5, 0.0, 0.0).unwrap();
        assert_eq!(m.q, DMatrix::zeros(6, 6));
        let (p0, v0, a0) = (10.0, -3.0, 0.8);
        let mut x = DVector::from_vec(vec![p0, v0, a0, -p0, 2.0 * v0, -a0]);
        for _ in 0..40 {
            x = &m.f * x;
        }
        let t = 20.0;
        assert_relative_eq!(x[0], p0 + v0 * t + 0.5 * a0 * t * t, max_relative = 1e-12);
        assert_relative_eq!(x[1], v0 + a0 * t, max_relative = 1e-12);
        assert_relative_eq!(
            x[3],
            -p0 + 2.0 * v0 * t - 0.5 * a0 * t * t,
            max_relative = 1e-12
        );
    }

    #[test]
    fn compose_small_cases() {
        let m = ncv_model(1.0, 0.3, 0.1).unwrap();
        let one = compose_steps(&m, 1).unwrap();
        assert_eq!(one.f, m.f);
        assert_relative_eq!(one.q, m.q);
        let two = compose_steps(&m, 2).unwrap();
        assert_relative_eq!(two.f, &m.f * &m.f, epsilon = 1e-14);
        assert_relative_eq!(two.q, &m.f * &m.q * m.f.transpose() + &m.q, epsilon = 1e-14);
        assert!(compose_steps(&m, 0).is_err());
    }

    #[test]
    fn compose_matches_noise_rollup() {
        let m = ncv_model(1.0, 0.1, 0.1).unwrap();
        let ten = compose_steps(&m, 10).unwrap();
        let chol = Cholesky::new(m.q.clone()).unwrap().l();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let runs = 200_000;
        let mut cov = DMatrix::<f64>::zeros(4, 4);
        for _ in 0..runs {
            let mut x = DVector::<f64>::zeros(4);
            for _ in 0..10 {
                let w = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
                x = &m.f * x + &chol * w;
            }
            cov += &x * x.transpose();
        }
        cov /= runs as f64;
        for i in 0..4 {
            for j in 0..4 {
                let scale = (ten.q[(i, i)] * ten.q[(j, j)]).sqrt();
                assert!((cov[(i, j)] - ten.q[(i, j)]).abs() < 0.02 * scale);
            }
        }
    }

    #[test]
    fn embedded_ncv_keeps_acceleration_at_zero() {
        let m = ncv_model(1.0, 1.0, 1.0).unwrap().embed(6).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 5.0, 3.0, 4.0, 5.0]);
        let y = &m.f * x;
        assert_eq!(y[2], 0.0);
        assert_eq!(y[5], 0.0);
        assert_eq!(y[0], 3.0);
        assert_eq!(y[3], 7.0);
    }

    #[test]
    fn process_noise_stays_positive_definite() {
        for model in [
            ncv_model(1.0, 0.1, 0.1).unwrap(),
            nca_model(1.0, 10.0, 10.0).unwrap(),
            turn_model(1.0, 0.0017)
                .unwrap()
                .with_white_acceleration(0.1, 0.1)
                .unwrap(),
        ] {
            for l in 2..=100 {
                let ms = compose_steps(&model, l).unwrap();
                assert!(
                    Cholesky::new(ms.q.clone()).is_some(),
                    "L={l} {:?}",
                    model.kind
                );
                assert_relative_eq!(ms.q.clone(), ms.q.transpose());
            }
        }
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in 1usize..12, b in 1usize..12, q in 0.01..10.0f64, dt in 0.1..5.0f64) {
            let m = ncv_model(dt, q, 2.0 * q).unwrap();
            let whole = compose_steps(&m, a + b).unwrap();
            let split = compose_steps(&m, a).unwrap().then(&compose_steps(&m, b).unwrap());
            prop_assert_eq!(split.steps, a + b);
            prop_assert!((&whole.f - &split.f).norm() <= 1e-9 * whole.f.norm());
            prop_assert!((&whole.q - &split.q).norm() <= 1e-9 * whole.q.norm());
        }
    }
}
