//! Small matrix helpers used across the estimators.

use nalgebra::allocator::Allocator;
use nalgebra::{
    Cholesky, DefaultAllocator, Dim, DimDiff, DimSub, Matrix2, Matrix2x4, OMatrix, SymmetricEigen,
    U1,
};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

/// Position-selection matrix `H` for the `[x, vx, y, vy]` state layout.
pub fn position_selection<T: Scalar>() -> Matrix2x4<T> {
    let (o, z) = (T::one(), T::zero());
    Matrix2x4::new(o, z, z, z, z, z, o, z)
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize<T, D>(m: &OMatrix<T, D, D>) -> OMatrix<T, D, D>
where
    T: Scalar,
    D: Dim,
    DefaultAllocator: Allocator<D, D>,
{
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse<T, D>(m: &OMatrix<T, D, D>, context: &'static str) -> Result<OMatrix<T, D, D>>
where
    T: Scalar,
    D: Dim,
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let l = match Cholesky::new(symmetrize(m)) {
        Some(chol) => chol.unpack(),
        None => {
            return Err(Error::Singular {
                context,
                condition: f64::INFINITY,
            })
        }
    };
    // M⁻¹ = L⁻ᵀ L⁻¹, inverting the triangle in place of a generic solve
    let n = l.nrows();
    let mut li = l.clone() * T::zero();
    for j in 0..n {
        li[(j, j)] = T::one() / l[(j, j)];
        for i in j + 1..n {
            let mut acc = T::zero();
            for k in j..i {
                acc += l[(i, k)] * li[(k, j)];
            }
            li[(i, j)] = -acc / l[(i, i)];
        }
    }
    // exactly symmetric: both triangles sum the same products in the same order
    Ok(li.tr_mul(&li))
}

/// True when the Cholesky factorization of the symmetrized matrix succeeds.
pub fn is_positive_definite<T, D>(m: &OMatrix<T, D, D>) -> bool
where
    T: Scalar,
    D: Dim,
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    Cholesky::new(symmetrize(m)).is_some()
}

/// Spectral condition number `max|λ| / min|λ|` of a symmetric matrix.
pub fn symmetric_condition<T, D>(m: &OMatrix<T, D, D>) -> f64
where
    T: Scalar,
    D: DimSub<U1>,
    DefaultAllocator:
        Allocator<D, D> + Allocator<D> + Allocator<D, DimDiff<D, U1>> + Allocator<DimDiff<D, U1>>,
{
    let eig = SymmetricEigen::new(symmetrize(m));
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in eig.eigenvalues.iter() {
        let a = to_f64(*v).abs();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Moore-Penrose inverse of a symmetric positive semi-definite matrix.
///
/// Factors `M = L Lᵀ` by Cholesky with diagonal pivoting, stopping once the
/// largest remaining pivot is below `rel_tol` times the largest diagonal
/// entry; then `M⁺ = L (LᵀL)⁻² Lᵀ`. Returns the pseudo-inverse and the
/// numerical rank. A remainder that is clearly not positive semi-definite
/// means the input is indefinite and produces an error.
pub fn psd_pseudo_inverse<T, D>(
    m: &OMatrix<T, D, D>,
    rel_tol: f64,
    context: &'static str,
) -> Result<(OMatrix<T, D, D>, usize)>
where
    T: Scalar,
    D: Dim,
    DefaultAllocator: Allocator<D, D> + Allocator<D>,
{
    let n = m.nrows();
    let mut a = symmetrize(m);
    let zero = a.clone() * T::zero();
    let max = (0..n).fold(T::zero(), |acc, i| acc.max(a[(i, i)].abs()));
    if max <= T::zero() {
        return Ok((zero, 0));
    }
    let tol = max * lit::<T>(rel_tol);
    // columns of L in pivot order, rows in the original order
    let mut l = zero.clone();
    let mut used = [false; 8];
    if n > used.len() {
        return Err(Error::Dimension {
            context,
            expected: used.len(),
            actual: n,
        });
    }
    let mut rank = 0;
    while rank < n {
        let mut p = usize::MAX;
        for i in 0..n {
            if !used[i] && (p == usize::MAX || a[(i, i)] > a[(p, p)]) {
                p = i;
            }
        }
        let pivot = a[(p, p)];
        if pivot <= tol {
            for i in 0..n {
                for j in 0..n {
                    if !used[i] && !used[j] && a[(i, j)].abs() > tol {
                        return Err(Error::Singular {
                            context,
                            condition: f64::NAN,
                        });
                    }
                }
            }
            break;
        }
        let root = pivot.sqrt();
        for i in 0..n {
            if !used[i] {
                l[(i, rank)] = a[(i, p)] / root;
            }
        }
        for j in 0..n {
            for i in 0..n {
                if !used[i] && !used[j] {
                    a[(i, j)] -= l[(i, rank)] * l[(j, rank)];
                }
            }
        }
        used[p] = true;
        rank += 1;
    }
    if rank == 0 {
        return Ok((zero, 0));
    }
    // unit diagonal on the unused trailing block keeps LᵀL invertible
    let mut g = l.tr_mul(&l);
    for i in rank..n {
        g[(i, i)] = T::one();
    }
    let mut g_inv = spd_inverse(&g, context)?;
    for i in rank..n {
        g_inv[(i, i)] = T::zero();
    }
    let x = l * g_inv;
    Ok((&x * x.transpose(), rank))
}

/// Inverse of a general 2x2 matrix, with the condition of the determinant
/// relative to the entry scale checked.
pub fn inverse2<T: Scalar>(m: &Matrix2<T>, context: &'static str) -> Result<Matrix2<T>> {
    let det = m.determinant();
    let scale = m.abs().max();
    if scale <= T::zero() || det.abs() <= scale * scale * lit::<T>(1e-14) {
        return Err(Error::Singular {
            context,
            condition: if scale > T::zero() {
                to_f64(scale * scale / det.abs())
            } else {
                f64::INFINITY
            },
        });
    }
    let inv_det = T::one() / det;
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) * inv_det)
}
