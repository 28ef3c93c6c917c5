use nalgebra::{DMatrix, DVector};

use super::{Method, ParamEstimate, RegressionData};
use crate::constraint_map::VectorizedConstraint;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, numerical_rank};

/// Thin QR of `Ψ`: `R` is the triangular factor, `theta` the LS solution.
///
/// All batch formulas in terms of `(ΨᵀΨ)⁻¹` are evaluated through `R`,
/// since `ΨᵀΨ = RᵀR`.
struct LsFactor {
    r: DMatrix<f64>,
    theta: DVector<f64>,
}

fn factor(reg: &RegressionData) -> Result<LsFactor> {
    let cols = reg.psi.ncols();
    check_dim("Z length vs Ψ rows", reg.psi.nrows(), reg.z.len())?;
    if reg.psi.nrows() < cols {
        return Err(Error::RankDeficient {
            what: "regressor matrix Ψ",
            rank: reg.psi.nrows(),
            required: cols,
        });
    }
    let qr = reg.psi.clone().qr();
    let r = qr.r();
    // R shares its singular values with Ψ.
    let rank = numerical_rank(&r);
    if rank < cols {
        return Err(Error::RankDeficient {
            what: "regressor matrix Ψ",
            rank,
            required: cols,
        });
    }
    let mut qtz = reg.z.clone();
    qr.q_tr_mul(&mut qtz);
    let theta = r
        .solve_upper_triangular(&qtz.rows(0, cols).clone_owned())
        .ok_or(Error::Singular("triangular factor of Ψ"))?;
    Ok(LsFactor { r, theta })
}

/// `W = R⁻ᵀDᵀ`, so that `D(ΨᵀΨ)⁻¹Dᵀ = WᵀW` and `L = R⁻¹W(WᵀW)⁻¹`.
fn whitened_constraint(f: &LsFactor, vc: &VectorizedConstraint) -> Result<DMatrix<f64>> {
    check_dim(
        "constraint columns vs parameter count",
        f.r.ncols(),
        vc.params(),
    )?;
    f.r.tr_solve_upper_triangular(&vc.d_mat.transpose())
        .ok_or(Error::Singular("triangular factor of Ψ"))
}

/// Exact correction `L (Dθ_LS − d)`.
fn exact_correction(
    f: &LsFactor,
    w: &DMatrix<f64>,
    residual: &DVector<f64>,
) -> Result<DVector<f64>> {
    let rank = numerical_rank(w);
    if rank < w.ncols() {
        return Err(Error::RankDeficient {
            what: "D(ΨᵀΨ)⁻¹Dᵀ",
            rank,
            required: w.ncols(),
        });
    }
    let rw = w.clone().qr().r();
    let y = rw
        .tr_solve_upper_triangular(residual)
        .and_then(|t| rw.solve_upper_triangular(&t))
        .ok_or(Error::Singular("D(ΨᵀΨ)⁻¹Dᵀ"))?;
    f.r.solve_upper_triangular(&(w * y))
        .ok_or(Error::Singular("triangular factor of Ψ"))
}

pub fn ls_batch(reg: &RegressionData) -> Result<ParamEstimate> {
    let f = factor(reg)?;
    ParamEstimate::new(f.theta, reg.n, reg.p, Method::Ls, None)
}

/// Constrained LS: `θ_CLS = P_N(D) θ_LS + (I − P_N(D)) d̄` with
/// `P_N(D) = I − L D`. Because `D d̄ = d` this equals `θ_LS − L(Dθ_LS − d)`,
/// which is what is evaluated.
pub fn cls_batch(reg: &RegressionData, vc: &VectorizedConstraint) -> Result<ParamEstimate> {
    let f = factor(reg)?;
    let w = whitened_constraint(&f, vc)?;
    let residual = &vc.d_mat * &f.theta - &vc.d_vec;
    let theta = &f.theta - exact_correction(&f, &w, &residual)?;
    ParamEstimate::new(theta, reg.n, reg.p, Method::Cls, Some(vc))
}

/// Explicit `(P_N(D), L)` for the data-weighted constrained problem.
pub fn cls_projector(
    reg: &RegressionData,
    vc: &VectorizedConstraint,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let f = factor(reg)?;
    let w = whitened_constraint(&f, vc)?;
    let rank = numerical_rank(&w);
    if rank < w.ncols() {
        return Err(Error::RankDeficient {
            what: "D(ΨᵀΨ)⁻¹Dᵀ",
            rank,
            required: w.ncols(),
        });
    }
    let m = w.transpose() * &w;
    let m_inv = m.try_inverse().ok_or(Error::Singular("D(ΨᵀΨ)⁻¹Dᵀ"))?;
    let l =
        f.r.solve_upper_triangular(&(&w * m_inv))
            .ok_or(Error::Singular("triangular factor of Ψ"))?;
    let n = vc.params();
    let proj = DMatrix::identity(n, n) - &l * &vc.d_mat;
    Ok((proj, l))
}

/// Offset `d̄ = Dᵀ(DDᵀ)⁻¹d`.
pub fn constraint_offset(vc: &VectorizedConstraint) -> Result<DVector<f64>> {
    Ok(linalg::null_space_projector(&vc.d_mat, &vc.d_vec)?.1)
}

/// Relaxed constrained LS, `θ = (ΨᵀΨ + μDᵀD)⁻¹(ΨᵀZ + μDᵀd)`.
///
/// With `Ψ` of full column rank this is evaluated in the algebraically
/// identical form `θ_LS − R⁻¹W(WᵀW + I/μ)⁻¹(Dθ_LS − d)`, which stays well
/// conditioned as `μ` grows. A rank-deficient `Ψ` falls back to a QR solve of
/// the stacked system `[Ψ; √μ D] θ ≈ [Z; √μ d]`.
pub fn rcls_relaxed(
    reg: &RegressionData,
    vc: &VectorizedConstraint,
    mu: f64,
) -> Result<ParamEstimate> {
    if !mu.is_finite() || mu < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "relaxation weight must be finite and ≥ 0, got {mu}"
        )));
    }
    let theta = match factor(reg) {
        Ok(f) => {
            let mu_inv = 1.0 / mu;
            if !mu_inv.is_finite() {
                f.theta
            } else {
                let w = whitened_constraint(&f, vc)?;
                let residual = &vc.d_mat * &f.theta - &vc.d_vec;
                let mut m = w.transpose() * &w;
                for i in 0..m.nrows() {
                    m[(i, i)] += mu_inv;
                }
                let y = m
                    .cholesky()
                    .ok_or(Error::Singular("ΨᵀΨ + μDᵀD"))?
                    .solve(&residual);
                let corr =
                    f.r.solve_upper_triangular(&(&w * y))
                        .ok_or(Error::Singular("triangular factor of Ψ"))?;
                &f.theta - corr
            }
        }
        Err(Error::RankDeficient { .. }) if mu > 0.0 => stacked_relaxed(reg, vc, mu)?,
        Err(e) => return Err(e),
    };
    ParamEstimate::new(theta, reg.n, reg.p, Method::RclsRelaxed, Some(vc))
}

fn stacked_relaxed(
    reg: &RegressionData,
    vc: &VectorizedConstraint,
    mu: f64,
) -> Result<DVector<f64>> {
    check_dim(
        "constraint columns vs parameter count",
        reg.psi.ncols(),
        vc.params(),
    )?;
    let rows = reg.psi.nrows() + vc.rows();
    let cols = reg.psi.ncols();
    let sqrt_mu = mu.sqrt();
    let mut a = DMatrix::zeros(rows, cols);
    a.view_mut((0, 0), reg.psi.shape()).copy_from(&reg.psi);
    a.view_mut((reg.psi.nrows(), 0), vc.d_mat.shape())
        .copy_from(&(&vc.d_mat * sqrt_mu));
    let mut b = DVector::zeros(rows);
    b.rows_mut(0, reg.z.len()).copy_from(&reg.z);
    b.rows_mut(reg.z.len(), vc.rows())
        .copy_from(&(&vc.d_vec * sqrt_mu));
    if rows < cols || numerical_rank(&a) < cols {
        return Err(Error::Singular("ΨᵀΨ + μDᵀD"));
    }
    let qr = a.qr();
    let r = qr.r();
    qr.q_tr_mul(&mut b);
    r.solve_upper_triangular(&b.rows(0, cols).clone_owned())
        .ok_or(Error::Singular("ΨᵀΨ + μDᵀD"))
}
