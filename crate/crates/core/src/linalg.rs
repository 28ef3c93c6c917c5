//! Dense helpers shared by the constraint mapping and the estimators.
//!
//! `vec` always stacks columns, so `vec(MNO) = (Oᵀ ⊗ M) vec(N)`. nalgebra
//! stores matrices column-major, which makes `vec` a plain copy of the
//! backing slice.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Relative singular-value threshold used for every numerical rank decision.
pub const RANK_RTOL: f64 = 1e-10;

/// Column-stacking vectorisation.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`]: rebuilds a `rows × cols` matrix from its stacked columns.
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    check_dim("unvec length", rows * cols, v.len())?;
    Ok(DMatrix::from_column_slice(rows, cols, v))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Block-diagonal matrix from the given blocks. Empty blocks are allowed.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Largest absolute entry, 0 for an empty matrix.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Singular values of `m`, in no particular order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Numerical rank: singular values at or above `RANK_RTOL · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= RANK_RTOL * smax).count()
}

/// Fails unless `m` has full row rank.
pub fn require_full_row_rank(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let rank = numerical_rank(m);
    if rank == m.nrows() {
        Ok(())
    } else {
        Err(Error::RankDeficient {
            what,
            rank,
            required: m.nrows(),
        })
    }
}

/// Fails unless `m` has full column rank.
pub fn require_full_column_rank(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let rank = numerical_rank(m);
    if rank == m.ncols() {
        Ok(())
    } else {
        Err(Error::RankDeficient {
            what,
            rank,
            required: m.ncols(),
        })
    }
}

/// `(P + Pᵀ)/2`, in place.
pub fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = avg;
            p[(j, i)] = avg;
        }
    }
}

/// Orthogonal projector onto the null space of a full-row-rank `d`, together
/// with the minimum-norm solution `dᵀ(ddᵀ)⁻¹rhs` of `d x = rhs`.
pub(crate) fn null_space_projector(
    d: &DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_dim("constraint right-hand side", d.nrows(), rhs.len())?;
    require_full_row_rank("constraint matrix D", d)?;
    // Dᵀ = QR (thin) gives DDᵀ = RᵀR and Dᵀ(DDᵀ)⁻¹D = QQᵀ.
    let qr = d.transpose().qr();
    let q = qr.q();
    let r = qr.r();
    let y = r
        .tr_solve_upper_triangular(rhs)
        .ok_or(Error::Singular("D Dᵀ"))?;
    let offset = &q * y;
    let n = d.ncols();
    let proj = DMatrix::identity(n, n) - &q * q.transpose();
    Ok((proj, offset))
}
