//! Polar/Cartesian conversion, biased measurement generation, bias Jacobians
//! and converted measurement covariance for 2-D radars.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x4, Vector2};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

/// Above this value of `r σθ² / σr` the standard conversion is no longer
/// approximately unbiased.
pub const CONVERSION_VALIDITY_THRESHOLD: f64 = 0.4;

/// Range/azimuth measurement with its noise standard deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarMeasurement<T: Scalar> {
    pub range: T,
    pub azimuth: T,
    pub sigma_r: T,
    pub sigma_theta: T,
}

impl<T: Scalar> PolarMeasurement<T> {
    /// Validates `range > 0` and non-negative noise levels; the azimuth is
    /// wrapped into `(-π, π]`.
    pub fn new(range: T, azimuth: T, sigma_r: T, sigma_theta: T) -> Result<Self> {
        if !(range > T::zero()) {
            return Err(Error::NonPositiveRange {
                context: "polar measurement",
                range: to_f64(range),
            });
        }
        if !(sigma_r >= T::zero()) || !(sigma_theta >= T::zero()) {
            return Err(Error::InvalidInput(format!(
                "noise standard deviations must be non-negative (σr={}, σθ={})",
                to_f64(sigma_r),
                to_f64(sigma_theta)
            )));
        }
        Ok(Self {
            range,
            azimuth: wrap_angle(azimuth),
            sigma_r,
            sigma_theta,
        })
    }
}

/// Offset and scale biases `[b_r, b_θ, ε_r, ε_θ]` of one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasVector<T: Scalar> {
    pub b_r: T,
    pub b_theta: T,
    pub eps_r: T,
    pub eps_theta: T,
}

impl<T: Scalar> BiasVector<T> {
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn new(b_r: T, b_theta: T, eps_r: T, eps_theta: T) -> Self {
        Self {
            b_r,
            b_theta,
            eps_r,
            eps_theta,
        }
    }

    pub fn offset(b_r: T, b_theta: T) -> Self {
        Self::new(b_r, b_theta, T::zero(), T::zero())
    }

    /// Scale factors must stay positive.
    pub fn validate(&self) -> Result<()> {
        if !(T::one() + self.eps_r > T::zero()) || !(T::one() + self.eps_theta > T::zero()) {
            return Err(Error::InvalidInput(format!(
                "scale biases must satisfy 1 + ε > 0 (ε_r={}, ε_θ={})",
                to_f64(self.eps_r),
                to_f64(self.eps_theta)
            )));
        }
        Ok(())
    }

    /// The first `dim` components (2: offsets only, 4: offsets and scales).
    pub fn to_dvector(&self, dim: usize) -> DVector<T> {
        let all = [self.b_r, self.b_theta, self.eps_r, self.eps_theta];
        let n = dim.min(4);
        DVector::from_iterator(n, all.iter().copied().take(n))
    }

    /// Inverse of [`BiasVector::to_dvector`]; missing scale terms are zero.
    pub fn from_slice(values: &[T]) -> Self {
        let get = |i: usize| values.get(i).copied().unwrap_or_else(T::zero);
        Self::new(get(0), get(1), get(2), get(3))
    }
}

/// Cartesian position measurement with its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianMeasurement<T: Scalar> {
    pub z: Vector2<T>,
    pub r: Matrix2<T>,
}

/// `B` (polar-to-Cartesian differential), `C` (bias sensitivity) and `K = B C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasJacobians<T: Scalar> {
    pub b: Matrix2<T>,
    pub c: Matrix2x4<T>,
    pub k: Matrix2x4<T>,
}

impl<T: Scalar> BiasJacobians<T> {
    /// First `dim` columns of `K`: the Cartesian sensitivity to the bias
    /// parameters being estimated.
    pub fn sensitivity(&self, dim: usize) -> DMatrix<T> {
        DMatrix::from_fn(2, dim, |i, j| self.k[(i, j)])
    }
}

/// Location and noise levels of a radar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFrame<T: Scalar> {
    pub position: Vector2<T>,
    pub sigma_r: T,
    pub sigma_theta: T,
}

impl<T: Scalar> SensorFrame<T> {
    pub fn new(position: Vector2<T>, sigma_r: T, sigma_theta: T) -> Self {
        Self {
            position,
            sigma_r,
            sigma_theta,
        }
    }

    /// Noise-free polar coordinates of a global point as seen by this sensor.
    pub fn observe(&self, point: &Vector2<T>) -> Result<PolarMeasurement<T>> {
        let (range, azimuth) = cartesian_to_polar(&(point - self.position));
        PolarMeasurement::new(range, azimuth, self.sigma_r, self.sigma_theta)
    }

    /// `B diag(σ_r², σ_θ²) Bᵀ` for the polar-to-Cartesian Jacobian `B`.
    pub fn converted_noise(&self, jac: &BiasJacobians<T>) -> Matrix2<T> {
        let polar = Matrix2::new(
            self.sigma_r * self.sigma_r,
            T::zero(),
            T::zero(),
            self.sigma_theta * self.sigma_theta,
        );
        jac.b * polar * jac.b.transpose()
    }

    /// Standard conversion of a polar measurement into the global frame.
    pub fn to_global(&self, m: &PolarMeasurement<T>) -> CartesianMeasurement<T> {
        let mut c = polar_to_cart(m);
        c.z += self.position;
        c
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle<T: Scalar>(angle: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    if angle > -pi && angle <= pi {
        return angle;
    }
    let mut a = angle % two_pi;
    if a <= -pi {
        a += two_pi;
    } else if a > pi {
        a -= two_pi;
    }
    a
}

/// `(r, θ)` of a sensor-relative Cartesian offset, with a 4-quadrant azimuth.
pub fn cartesian_to_polar<T: Scalar>(offset: &Vector2<T>) -> (T, T) {
    (offset.norm(), offset.y.atan2(offset.x))
}

/// Adds scale, offset and noise to a true measurement:
/// `r' = (1+ε_r) r + b_r + w_r`, `θ' = (1+ε_θ) θ + b_θ + w_θ`.
pub fn apply_bias<T: Scalar>(
    truth: &PolarMeasurement<T>,
    bias: &BiasVector<T>,
    noise: &Vector2<T>,
) -> Result<PolarMeasurement<T>> {
    let range = (T::one() + bias.eps_r) * truth.range + bias.b_r + noise.x;
    let azimuth = (T::one() + bias.eps_theta) * truth.azimuth + bias.b_theta + noise.y;
    if !(range > T::zero()) {
        return Err(Error::NonPositiveRange {
            context: "bias application",
            range: to_f64(range),
        });
    }
    Ok(PolarMeasurement {
        range,
        azimuth: wrap_angle(azimuth),
        sigma_r: truth.sigma_r,
        sigma_theta: truth.sigma_theta,
    })
}

/// `B` and `C` evaluated at the given (measured) range and azimuth.
pub fn bias_jacobians<T: Scalar>(m: &PolarMeasurement<T>) -> BiasJacobians<T> {
    jacobians_at(m.range, m.azimuth)
}

/// `B` and `C` at an arbitrary range and azimuth.
pub fn jacobians_at<T: Scalar>(range: T, azimuth: T) -> BiasJacobians<T> {
    let (s, c) = azimuth.sin_cos();
    let b = Matrix2::new(c, -range * s, s, range * c);
    let (o, z) = (T::one(), T::zero());
    let cm = Matrix2x4::new(o, z, range, z, z, o, z, azimuth);
    BiasJacobians {
        b,
        c: cm,
        k: b * cm,
    }
}

/// `λ_θ = exp(-σθ²/2)`, the multiplicative bias of the cosine/sine of a noisy
/// azimuth.
pub fn compensation_factor<T: Scalar>(sigma_theta: T) -> T {
    (-(sigma_theta * sigma_theta) * lit::<T>(0.5)).exp()
}

/// `r σθ² / σr`.
pub fn validity_ratio<T: Scalar>(m: &PolarMeasurement<T>) -> T {
    m.range * m.sigma_theta * m.sigma_theta / m.sigma_r
}

/// Standard conversion `r (cos θ, sin θ)` with the linearized covariance.
pub fn polar_to_cart<T: Scalar>(m: &PolarMeasurement<T>) -> CartesianMeasurement<T> {
    let (s, c) = m.azimuth.sin_cos();
    CartesianMeasurement {
        z: Vector2::new(m.range * c, m.range * s),
        r: converted_covariance(m),
    }
}

/// Conversion with the `λ_θ` compensation: `λ_θ r (cos θ, sin θ)`.
///
/// Logs a warning when the validity ratio is at or above the threshold.
pub fn polar_to_cart_unbiased<T: Scalar>(m: &PolarMeasurement<T>) -> CartesianMeasurement<T> {
    if m.sigma_r > T::zero() {
        let ratio = to_f64(validity_ratio(m));
        if ratio >= CONVERSION_VALIDITY_THRESHOLD {
            log::warn!(
                "polar conversion outside validity region: r σθ²/σr = {ratio:.3e} >= {CONVERSION_VALIDITY_THRESHOLD}"
            );
        }
    }
    let lambda = compensation_factor(m.sigma_theta);
    let mut out = polar_to_cart(m);
    out.z *= lambda;
    out
}

/// Covariance of the converted position at the given range and azimuth.
pub fn converted_covariance<T: Scalar>(m: &PolarMeasurement<T>) -> Matrix2<T> {
    let (s, c) = m.azimuth.sin_cos();
    let sr2 = m.sigma_r * m.sigma_r;
    let cross2 = m.range * m.range * m.sigma_theta * m.sigma_theta;
    let off = (sr2 - cross2) * s * c;
    Matrix2::new(
        cross2 * s * s + sr2 * c * c,
        off,
        off,
        cross2 * c * c + sr2 * s * s,
    )
}
