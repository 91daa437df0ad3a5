//! Bias pseudo-measurements and the recursive least-squares / MMSE bias
//! estimators.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2};

use crate::coords::BiasJacobians;
use crate::dynamics::MultiStepModel;
use crate::error::{Error, Result};
use crate::linalg::{inverse2, position_selection, symmetrize};
use crate::scalar::{to_f64, Scalar};
use crate::trackers::GaussianEstimate;

/// Condition number of `WᵀW` above which a gain is treated as rank deficient.
pub const GAIN_CONDITION_LIMIT: f64 = 1e12;

/// `z_b = 𝓗 b + w̃`, `w̃ ~ N(0, 𝓡)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMeasurement<T: Scalar> {
    pub z_b: Vector2<T>,
    /// 2×d.
    pub h: DMatrix<T>,
    pub r: Matrix2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasEstimate<T: Scalar> {
    pub b_hat: DVector<T>,
    pub sigma: DMatrix<T>,
}

impl<T: Scalar> BiasEstimate<T> {
    pub fn new(b_hat: DVector<T>, sigma: DMatrix<T>) -> Result<Self> {
        let d = b_hat.len();
        if sigma.shape() != (d, d) {
            return Err(Error::Dimension {
                context: "bias covariance",
                expected: d,
                actual: sigma.nrows(),
            });
        }
        Ok(Self { b_hat, sigma })
    }

    /// Zero estimate with diagonal covariance `diag(std²)`.
    pub fn zero(std: &[T]) -> Self {
        let d = std.len();
        Self {
            b_hat: DVector::zeros(d),
            sigma: DMatrix::from_diagonal(&DVector::from_iterator(d, std.iter().map(|s| *s * *s))),
        }
    }

    pub fn dim(&self) -> usize {
        self.b_hat.len()
    }
}

/// `b(k+1) = F_b b(k) + v_b`, `v_b ~ N(0, Q_b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasDynamics<T: Scalar> {
    pub f_b: DMatrix<T>,
    pub q_b: DMatrix<T>,
}

impl<T: Scalar> BiasDynamics<T> {
    pub fn constant(dim: usize) -> Self {
        Self {
            f_b: DMatrix::identity(dim, dim),
            q_b: DMatrix::zeros(dim, dim),
        }
    }

    pub fn random_walk(dim: usize, variance: T) -> Self {
        Self {
            f_b: DMatrix::identity(dim, dim),
            q_b: DMatrix::identity(dim, dim) * variance,
        }
    }
}

/// `W† = (WᵀW)⁻¹Wᵀ`.
pub fn left_pseudo_inverse<T: Scalar>(w: &Matrix4x2<T>) -> Result<Matrix2x4<T>> {
    let wtw = w.transpose() * w;
    let cond = crate::linalg::symmetric_condition(&wtw);
    if !(cond <= GAIN_CONDITION_LIMIT) {
        return Err(Error::RankDeficientGain { condition: cond });
    }
    let inv = inverse2(&wtw, "gain Gram matrix")
        .map_err(|_| Error::RankDeficientGain { condition: cond })?;
    Ok(inv * w.transpose())
}

/// `z_b = W† [x̂(k|k) − (I − W H) F x̂(k'|k')]`.
pub fn sensor_pseudo_obs<T: Scalar>(
    curr: &GaussianEstimate<T>,
    prev: &GaussianEstimate<T>,
    gain: &Matrix4x2<T>,
    model: &MultiStepModel<T>,
) -> Result<Vector2<T>> {
    let w_dag = left_pseudo_inverse(gain)?;
    let f = model.transition4()?;
    let h = position_selection::<T>();
    let residual = curr.mean - (Matrix4::identity() - gain * h) * f * prev.mean;
    Ok(w_dag * residual)
}

/// Pseudo-measurement of the bias of sensor 2 from the pseudo-observations
/// `z1` (reference, unbiased) and `z2`:
/// `z_b = z1 − H H† z2`, `𝓗 = −B₂C₂` (first `dim` columns), `𝓡 = R1 + R2`.
pub fn difference_pseudo_measurement<T: Scalar>(
    z1: &Vector2<T>,
    z2: &Vector2<T>,
    jac: &BiasJacobians<T>,
    dim: usize,
    r1: &Matrix2<T>,
    r2: &Matrix2<T>,
) -> Result<PseudoMeasurement<T>> {
    if dim == 0 || dim > 4 {
        return Err(Error::Dimension {
            context: "bias dimension",
            expected: 4,
            actual: dim,
        });
    }
    let h = position_selection::<T>();
    let hht = h * h.transpose();
    let h_dag = h.transpose() * inverse2(&hht, "position selection Gram matrix")?;
    Ok(PseudoMeasurement {
        z_b: z1 - h * h_dag * z2,
        h: -jac.sensitivity(dim),
        r: symmetrize(&(r1 + r2)),
    })
}

fn gain<T: Scalar>(est: &BiasEstimate<T>, pm: &PseudoMeasurement<T>) -> Result<DMatrix<T>> {
    if pm.h.ncols() != est.dim() || pm.h.nrows() != 2 {
        return Err(Error::Dimension {
            context: "bias observation matrix",
            expected: est.dim(),
            actual: pm.h.ncols(),
        });
    }
    let r = DMatrix::from_fn(2, 2, |i, j| pm.r[(i, j)]);
    let s = &pm.h * &est.sigma * pm.h.transpose() + r;
    let s2 = symmetrize(&Matrix2::from_fn(|i, j| s[(i, j)]));
    let s_inv = inverse2(&s2, "bias innovation covariance").map_err(|_| Error::Singular {
        context: "bias innovation covariance",
        condition: crate::linalg::symmetric_condition(&s2),
    })?;
    Ok(&est.sigma * pm.h.transpose() * DMatrix::from_fn(2, 2, |i, j| s_inv[(i, j)]))
}

fn residual<T: Scalar>(est: &BiasEstimate<T>, pm: &PseudoMeasurement<T>) -> DVector<T> {
    DVector::from_vec(vec![pm.z_b.x, pm.z_b.y]) - &pm.h * &est.b_hat
}

/// One recursive least-squares update with the Joseph covariance form
/// `(I − G𝓗) Σ (I − G𝓗)ᵀ + G 𝓡 Gᵀ`.
pub fn rlsb_update<T: Scalar>(
    est: &BiasEstimate<T>,
    pm: &PseudoMeasurement<T>,
) -> Result<BiasEstimate<T>> {
    let g = gain(est, pm)?;
    let d = est.dim();
    let r = DMatrix::from_fn(2, 2, |i, j| pm.r[(i, j)]);
    let ikh = DMatrix::identity(d, d) - &g * &pm.h;
    let sigma = &ikh * &est.sigma * ikh.transpose() + &g * r * g.transpose();
    Ok(BiasEstimate {
        b_hat: &est.b_hat + &g * residual(est, pm),
        sigma: symmetrize(&sigma),
    })
}

/// The short covariance form `Σ − G𝓗Σ`, without symmetrization. Kept for
/// comparison; it can lose positive definiteness.
pub fn rlsb_update_naive<T: Scalar>(
    est: &BiasEstimate<T>,
    pm: &PseudoMeasurement<T>,
) -> Result<BiasEstimate<T>> {
    let g = gain(est, pm)?;
    Ok(BiasEstimate {
        b_hat: &est.b_hat + &g * residual(est, pm),
        sigma: &est.sigma - &g * &pm.h * &est.sigma,
    })
}

/// All measurement updates of one frame, then the bias time update.
pub fn omb_step<T: Scalar>(
    est: &BiasEstimate<T>,
    pms: &[PseudoMeasurement<T>],
    dynamics: &BiasDynamics<T>,
) -> Result<BiasEstimate<T>> {
    let mut cur = est.clone();
    for pm in pms {
        cur = rlsb_update(&cur, pm)?;
    }
    if dynamics.f_b.shape() != (cur.dim(), cur.dim())
        || dynamics.q_b.shape() != (cur.dim(), cur.dim())
    {
        return Err(Error::Dimension {
            context: "bias dynamics",
            expected: cur.dim(),
            actual: dynamics.f_b.nrows(),
        });
    }
    Ok(BiasEstimate {
        b_hat: &dynamics.f_b * &cur.b_hat,
        sigma: symmetrize(&(&dynamics.f_b * &cur.sigma * dynamics.f_b.transpose() + &dynamics.q_b)),
    })
}

/// NEES of a bias estimate against the truth.
pub fn bias_nees<T: Scalar>(est: &BiasEstimate<T>, truth: &DVector<T>) -> Result<f64> {
    let e = &est.b_hat - truth;
    let chol = nalgebra::Cholesky::new(symmetrize(&est.sigma)).ok_or(Error::Singular {
        context: "bias covariance",
        condition: f64::INFINITY,
    })?;
    Ok(to_f64(e.dot(&chol.solve(&e))))
}
