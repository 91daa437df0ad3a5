//! Equivalent measurements (tracklets) from pairs of track snapshots.

use nalgebra::{Cholesky, Matrix4, Vector4};

use crate::dynamics::MultiStepModel;
use crate::error::{Error, Result};
use crate::linalg::{psd_pseudo_inverse, spd_inverse, symmetric_condition, symmetrize};
use crate::scalar::{to_f64, Scalar};
use crate::trackers::{kf_predict, GaussianEstimate};

/// Condition number of `D` above which the inverse Kalman filter tracklet is
/// abandoned for the decorrelated one.
pub const DIFFERENCE_CONDITION_LIMIT: f64 = 1e12;

/// Relative eigenvalue cutoff for rank-deficient information matrices.
pub const INFORMATION_RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackletMethod {
    InverseKf,
    Decorrelated,
}

/// Equivalent measurement `u` of the full state at `to_frame` with error
/// covariance `cov`, summarizing what the track learned since `from_frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tracklet<T: Scalar> {
    pub u: Vector4<T>,
    pub cov: Matrix4<T>,
    /// Information content `U⁻¹`; rank deficient when only positions were
    /// observed.
    pub info: Matrix4<T>,
    pub a: Matrix4<T>,
    pub d: Matrix4<T>,
    /// `x̂(k|k')`, `P(k|k')`.
    pub predicted: GaussianEstimate<T>,
    pub from_frame: i64,
    pub to_frame: i64,
    pub method: TrackletMethod,
    /// `‖U − Uᵀ‖_F / ‖U‖_F` before symmetrization.
    pub asymmetry: f64,
}

fn check_frames<T: Scalar>(
    prev: &GaussianEstimate<T>,
    curr: &GaussianEstimate<T>,
    model: &MultiStepModel<T>,
) -> Result<()> {
    if curr.frame <= prev.frame {
        return Err(Error::InvalidInput(format!(
            "tracklet frames must increase ({} -> {})",
            prev.frame, curr.frame
        )));
    }
    if curr.frame - prev.frame != model.steps as i64 {
        return Err(Error::InvalidInput(format!(
            "model spans {} steps but snapshots are {} frames apart",
            model.steps,
            curr.frame - prev.frame
        )));
    }
    Ok(())
}

/// Inverse Kalman filter tracklet: `A = P(k|k') D⁻¹`,
/// `u = x̂(k|k') + A (x̂(k|k) − x̂(k|k'))`, `U = A P(k|k)`.
pub fn tracklet_inverse_kf<T: Scalar>(
    prev: &GaussianEstimate<T>,
    curr: &GaussianEstimate<T>,
    model: &MultiStepModel<T>,
) -> Result<Tracklet<T>> {
    check_frames(prev, curr, model)?;
    spd_inverse(&prev.cov, "previous track covariance")?;
    let predicted = kf_predict(prev, model)?;
    spd_inverse(&predicted.cov, "predicted track covariance")?;
    let d = symmetrize(&(predicted.cov - curr.cov));
    let condition = symmetric_condition(&d);
    if !(condition <= DIFFERENCE_CONDITION_LIMIT) {
        return Err(Error::NearSingularDifference {
            condition,
            threshold: DIFFERENCE_CONDITION_LIMIT,
        });
    }
    // A = P(k|k') D⁻¹ = (D⁻¹ P(k|k'))ᵀ since both are symmetric
    let a = match Cholesky::new(d) {
        Some(chol) => chol.solve(&predicted.cov).transpose(),
        None => d
            .lu()
            .solve(&predicted.cov)
            .ok_or(Error::Singular {
                context: "tracklet difference matrix",
                condition,
            })?
            .transpose(),
    };
    let u = predicted.mean + a * (curr.mean - predicted.mean);
    let raw = a * curr.cov;
    let norm = to_f64(raw.norm());
    let asymmetry = if norm > 0.0 {
        to_f64((raw - raw.transpose()).norm()) / norm
    } else {
        0.0
    };
    let cov = symmetrize(&raw);
    let (info, _) = psd_pseudo_inverse(&cov, INFORMATION_RANK_TOL, "tracklet covariance")?;
    Ok(Tracklet {
        u,
        cov,
        info,
        a,
        d,
        predicted,
        from_frame: prev.frame,
        to_frame: curr.frame,
        method: TrackletMethod::InverseKf,
        asymmetry,
    })
}

/// Tracklet with decorrelated state estimate, in information form:
/// `U = (P(k|k)⁻¹ − P(k|k')⁻¹)⁻¹`,
/// `u = U (P(k|k)⁻¹ x̂(k|k) − P(k|k')⁻¹ x̂(k|k'))`.
///
/// When the information difference is rank deficient (a single position
/// update) `U` is its pseudo-inverse, which keeps `H U Hᵀ` and `H u` equal
/// to the measurement that produced the update.
pub fn tracklet_decorrelated<T: Scalar>(
    prev: &GaussianEstimate<T>,
    curr: &GaussianEstimate<T>,
    model: &MultiStepModel<T>,
) -> Result<Tracklet<T>> {
    check_frames(prev, curr, model)?;
    let predicted = kf_predict(prev, model)?;
    let post_info = spd_inverse(&curr.cov, "current track covariance")?;
    let pred_info = spd_inverse(&predicted.cov, "predicted track covariance")?;
    let info = symmetrize(&(post_info - pred_info));
    let (cov, rank) = psd_pseudo_inverse(&info, INFORMATION_RANK_TOL, "tracklet information")
        .map_err(|_| Error::NoNewInformation {
            from: prev.frame,
            to: curr.frame,
        })?;
    if rank == 0 {
        return Err(Error::NoNewInformation {
            from: prev.frame,
            to: curr.frame,
        });
    }
    let u = cov * (post_info * curr.mean - pred_info * predicted.mean);
    let d = symmetrize(&(predicted.cov - curr.cov));
    Ok(Tracklet {
        u,
        cov,
        info,
        a: predicted.cov * info,
        d,
        predicted,
        from_frame: prev.frame,
        to_frame: curr.frame,
        method: TrackletMethod::Decorrelated,
        asymmetry: 0.0,
    })
}

/// Inverse Kalman filter tracklet, falling back to the decorrelated form
/// when `D` is near-singular.
pub fn compute_tracklet<T: Scalar>(
    prev: &GaussianEstimate<T>,
    curr: &GaussianEstimate<T>,
    model: &MultiStepModel<T>,
) -> Result<Tracklet<T>> {
    match tracklet_inverse_kf(prev, curr, model) {
        Err(Error::NearSingularDifference { .. }) | Err(Error::Singular { .. }) => {
            tracklet_decorrelated(prev, curr, model)
        }
        other => other,
    }
}
