//! Fisher information and Cramér-Rao bounds for the bias parameters.

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2, Vector2};

use crate::coords::BiasJacobians;
use crate::error::{Error, Result};
use crate::linalg::{inverse2, symmetrize};
use crate::scalar::Scalar;

/// One `(target, frame)` observation `Y = g b + w`, `w ~ N(0, 𝓡)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FimBlock<T: Scalar> {
    pub target: usize,
    pub frame: usize,
    /// 2×d.
    pub g: DMatrix<T>,
    pub r: Matrix2<T>,
}

impl<T: Scalar> FimBlock<T> {
    /// Block for a biased sensor observed against an unbiased reference:
    /// `g = −B C` restricted to the first `dim` bias components.
    pub fn against_reference(
        target: usize,
        frame: usize,
        jac: &BiasJacobians<T>,
        dim: usize,
        r: Matrix2<T>,
    ) -> Self {
        Self {
            target,
            frame,
            g: -jac.sensitivity(dim),
            r,
        }
    }
}

/// Accumulated Fisher information `J = Σ gᵀ 𝓡⁻¹ g`.
#[derive(Debug, Clone, PartialEq)]
pub struct FimProblem<T: Scalar> {
    pub j: DMatrix<T>,
    pub blocks: usize,
}

impl<T: Scalar> FimProblem<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            j: DMatrix::zeros(dim, dim),
            blocks: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn add(&mut self, block: &FimBlock<T>) -> Result<()> {
        if block.g.nrows() != 2 || block.g.ncols() != self.dim() {
            return Err(Error::Dimension {
                context: "information block",
                expected: self.dim(),
                actual: block.g.ncols(),
            });
        }
        let r_inv = Cholesky::new(symmetrize(&block.r))
            .map(|c| c.inverse())
            .ok_or(Error::SingularBlock {
                target: block.target,
                frame: block.frame,
            })?;
        let r_inv = DMatrix::from_fn(2, 2, |i, j| r_inv[(i, j)]);
        self.j += block.g.transpose() * r_inv * &block.g;
        self.blocks += 1;
        Ok(())
    }

    /// Sum of two partial accumulations.
    pub fn merge(&mut self, other: &FimProblem<T>) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::Dimension {
                context: "information merge",
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        self.j += &other.j;
        self.blocks += other.blocks;
        Ok(())
    }
}

pub fn build_fim<T: Scalar>(dim: usize, blocks: &[FimBlock<T>]) -> Result<FimProblem<T>> {
    let mut p = FimProblem::new(dim);
    for b in blocks {
        p.add(b)?;
    }
    Ok(p)
}

/// Diagonal of `J⁻¹`.
pub fn crlb_diag<T: Scalar>(p: &FimProblem<T>) -> Result<DVector<T>> {
    let chol = Cholesky::new(symmetrize(&p.j)).ok_or(Error::Singular {
        context: "Fisher information (unobservable bias component)",
        condition: crate::linalg::symmetric_condition(&p.j),
    })?;
    Ok(chol.inverse().diagonal())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedSensor<T: Scalar> {
    pub z_comb: Vector2<T>,
    pub r_comb: Matrix2<T>,
}

/// Information-weighted combination of the other sensors' measurements and
/// the total noise `R_comb + 𝓡_i` of the difference against sensor `i`.
pub fn combine_sensors<T: Scalar>(
    measurements: &[(Vector2<T>, Matrix2<T>)],
    target_i_noise: &Matrix2<T>,
) -> Result<(CombinedSensor<T>, Matrix2<T>)> {
    if measurements.is_empty() {
        return Err(Error::Empty("sensor combination"));
    }
    let mut info = Matrix2::zeros();
    let mut info_z = Vector2::zeros();
    for (z, r) in measurements {
        let r_inv = inverse2(r, "combined sensor noise")?;
        info += r_inv;
        info_z += r_inv * z;
    }
    let r_comb = symmetrize(&inverse2(&info, "combined information")?);
    Ok((
        CombinedSensor {
            z_comb: r_comb * info_z,
            r_comb,
        },
        symmetrize(&(r_comb + target_i_noise)),
    ))
}
