//! Recursive least squares, with and without forgetting and constraints.
//!
//! Every update consumes a single scalar regression row. A sample of an
//! `n`-output system is fed as `n` consecutive rows, in output order; the
//! forgetting factor is applied on the first row of each sample only, which
//! makes the row-by-row recursion identical to the vector-output update with
//! one forgetting step per sample.
//!
//! Constrained initialisation projects `(θ₀, P₀)` so that `Dθ₀ = d` and
//! `DP₀ = 0`. The plain recursion then keeps `DK_k = 0`, `Dθ_k = d` and
//! `DP_k = 0` for every `k`.

use nalgebra::{DMatrix, DVector};

use super::{Method, ParamEstimate, RegressionData};
use crate::constraint_map::VectorizedConstraint;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, max_abs, null_space_projector, symmetrize};

/// Smallest accepted forgetting factor.
pub const MIN_LAMBDA: f64 = 0.5;

/// Below this ratio `‖DPDᵀ‖ / (‖D‖²‖P‖)` the covariance is treated as
/// already carrying the constraint. Rounding drift in `DP` grows with the
/// `1/λ` scaling, so the test is on the projected block, not on `DP`.
const CARRIED_RTOL: f64 = 1e-8;

/// Current estimate, covariance and most recent gain.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveState {
    pub theta: DVector<f64>,
    pub p: DMatrix<f64>,
    pub gain: DVector<f64>,
    pub steps: usize,
}

impl RecursiveState {
    pub fn new(theta0: DVector<f64>, p0: DMatrix<f64>) -> Result<Self> {
        let n = theta0.len();
        check_dim("P0 rows", n, p0.nrows())?;
        check_dim("P0 columns", n, p0.ncols())?;
        let mut p = p0;
        symmetrize(&mut p);
        Ok(RecursiveState {
            theta: theta0,
            p,
            gain: DVector::zeros(n),
            steps: 0,
        })
    }

    fn update(&mut self, psi: &DVector<f64>, z: f64, lambda: f64) {
        let ppsi = &self.p * psi;
        let denom = psi.dot(&ppsi) + lambda;
        let gain = ppsi.unscale(denom);
        let innovation = z - psi.dot(&self.theta);
        self.theta.axpy(innovation, &gain, 1.0);
        // (I − Kψᵀ)P = P − K(Pψ)ᵀ for symmetric P.
        self.p.ger(-1.0, &gain, &ppsi, 1.0);
        if lambda != 1.0 {
            self.p.unscale_mut(lambda);
        }
        symmetrize(&mut self.p);
        self.gain = gain;
        self.steps += 1;
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (MIN_LAMBDA..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "forgetting factor must lie in [{MIN_LAMBDA}, 1], got {lambda}"
        )))
    }
}

/// `θ₀' = P_N(D)θ₀ + d̄`, `P₀' = P_N(D) P₀ P_N(D)` with the orthogonal
/// projector `P_N(D) = I − Dᵀ(DDᵀ)⁻¹D`.
pub fn rls_init_constrained(
    theta0: &DVector<f64>,
    p0: &DMatrix<f64>,
    vc: &VectorizedConstraint,
) -> Result<RecursiveState> {
    check_dim("theta0 length", vc.params(), theta0.len())?;
    let (proj, offset) = null_space_projector(&vc.d_mat, &vc.d_vec)?;
    let theta = &proj * theta0 + offset;
    let p = &proj * p0 * &proj;
    RecursiveState::new(theta, p)
}

/// Classical RLS update, `K = Pψ/(ψᵀPψ + 1)`.
pub fn rls_step(state: &RecursiveState, psi: &DVector<f64>, z: f64) -> RecursiveState {
    let mut next = state.clone();
    next.update(psi, z, 1.0);
    next
}

/// Exponentially weighted RLS update with forgetting factor `λ`.
pub fn rwls_step(
    state: &RecursiveState,
    psi: &DVector<f64>,
    z: f64,
    lambda: f64,
) -> Result<RecursiveState> {
    check_lambda(lambda)?;
    check_dim("regressor length", state.theta.len(), psi.len())?;
    let mut next = state.clone();
    next.update(psi, z, lambda);
    Ok(next)
}

/// Weighted RLS update followed by projection onto `D_k θ = d_k`.
///
/// Returns the unprojected state, which is what the next step consumes, and
/// the projected estimate `θ_WCLS = θ − L_k(D_kθ − d_k)` with
/// `L_k = P D_kᵀ(D_k P D_kᵀ)⁻¹`. When `P` already satisfies `D_k P = 0` (a
/// constrained start with a fixed constraint) the weighted projector is
/// undefined and the orthogonal projector is used instead. In that case `P`
/// is also reset to `P_N P P_N`: rounding error in the directions `D`
/// spans is never damped by data and grows like `λ^-k`.
pub fn rwcls_step(
    state: &RecursiveState,
    psi: &DVector<f64>,
    z: f64,
    constraint: &VectorizedConstraint,
    lambda: f64,
) -> Result<(RecursiveState, DVector<f64>)> {
    let mut next = rwls_step(state, psi, z, lambda)?;
    let projected = project_estimate(&mut next, constraint)?;
    Ok((next, projected))
}

fn project_estimate(state: &mut RecursiveState, vc: &VectorizedConstraint) -> Result<DVector<f64>> {
    check_dim(
        "constraint columns vs parameter count",
        state.theta.len(),
        vc.params(),
    )?;
    let residual = &vc.d_mat * &state.theta - &vc.d_vec;
    let dp = &vc.d_mat * &state.p;
    let m = &dp * vc.d_mat.transpose();
    let scale = vc.d_mat.norm_squared() * state.p.norm();
    if max_abs(&m) <= CARRIED_RTOL * scale {
        let (proj, offset) = null_space_projector(&vc.d_mat, &vc.d_vec)?;
        state.p = &proj * &state.p * &proj;
        symmetrize(&mut state.p);
        return Ok(&proj * &state.theta + offset);
    }
    let chol = m.cholesky().ok_or(Error::Singular("D_k P D_kᵀ"))?;
    // L r = P Dᵀ M⁻¹ r = (DP)ᵀ M⁻¹ r.
    let correction = dp.transpose() * chol.solve(&residual);
    Ok(&state.theta - correction)
}

/// Kind of recursion run by [`RecursiveEstimator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecursiveKind {
    /// RLS from a constrained start.
    Rcls,
    /// Weighted RLS with forgetting factor.
    Rwls { lambda: f64 },
    /// Weighted RLS from a constrained start, projected every row.
    Rwcls { lambda: f64 },
}

impl RecursiveKind {
    pub fn method(self) -> Method {
        match self {
            RecursiveKind::Rcls => Method::Rcls,
            RecursiveKind::Rwls { .. } => Method::Rwls,
            RecursiveKind::Rwcls { .. } => Method::Rwcls,
        }
    }
}

/// Feeds a regression record sample by sample.
#[derive(Debug, Clone)]
pub struct RecursiveEstimator {
    kind: RecursiveKind,
    state: RecursiveState,
    constraint: Option<VectorizedConstraint>,
    output: DVector<f64>,
    max_violation: f64,
    n: usize,
    p: usize,
}

impl RecursiveEstimator {
    /// `constraint` is required for the constrained kinds; for RWLS it is
    /// only used to report violations.
    pub fn new(
        kind: RecursiveKind,
        theta0: &DVector<f64>,
        p0: &DMatrix<f64>,
        constraint: Option<VectorizedConstraint>,
        n: usize,
        p: usize,
    ) -> Result<Self> {
        check_dim("theta0 length n² + n·p", n * (n + p), theta0.len())?;
        let state = match kind {
            RecursiveKind::Rcls | RecursiveKind::Rwcls { .. } => {
                let vc = constraint.as_ref().ok_or_else(|| {
                    Error::InvalidParameter(format!("{} needs a constraint", kind.method()))
                })?;
                rls_init_constrained(theta0, p0, vc)?
            }
            RecursiveKind::Rwls { .. } => RecursiveState::new(theta0.clone(), p0.clone())?,
        };
        if let RecursiveKind::Rwls { lambda } | RecursiveKind::Rwcls { lambda } = kind {
            check_lambda(lambda)?;
        }
        let output = state.theta.clone();
        let max_violation = constraint.as_ref().map_or(0.0, |c| c.residual(&output));
        Ok(RecursiveEstimator {
            kind,
            state,
            constraint,
            output,
            max_violation,
            n,
            p,
        })
    }

    pub fn state(&self) -> &RecursiveState {
        &self.state
    }

    /// Latest estimate (projected for RWCLS).
    pub fn output(&self) -> &DVector<f64> {
        &self.output
    }

    /// Largest `max |Dθ_k − d|` seen on any output so far.
    pub fn max_violation(&self) -> f64 {
        self.max_violation
    }

    /// Consumes the `n` scalar rows of sample `k` (0-based).
    pub fn feed_sample(&mut self, reg: &RegressionData, k: usize) -> Result<()> {
        check_dim(
            "regression parameter count",
            self.n * (self.n + self.p),
            reg.n_params(),
        )?;
        if k >= reg.samples {
            return Err(Error::InvalidParameter(format!("sample {k} out of range")));
        }
        for i in 0..reg.n {
            let (psi, z) = reg.row(k * reg.n + i);
            let first = i == 0;
            match self.kind {
                RecursiveKind::Rcls => {
                    self.state.update(&psi, z, 1.0);
                    self.output.copy_from(&self.state.theta);
                }
                RecursiveKind::Rwls { lambda } => {
                    self.state.update(&psi, z, if first { lambda } else { 1.0 });
                    self.output.copy_from(&self.state.theta);
                }
                RecursiveKind::Rwcls { lambda } => {
                    self.state.update(&psi, z, if first { lambda } else { 1.0 });
                    let vc = self.constraint.as_ref().expect("checked at construction");
                    self.output = project_estimate(&mut self.state, vc)?;
                }
            }
            if let Some(vc) = &self.constraint {
                self.max_violation = self.max_violation.max(vc.residual(&self.output));
            }
        }
        Ok(())
    }

    /// Feeds every sample of `reg` in order.
    pub fn run(&mut self, reg: &RegressionData) -> Result<()> {
        (0..reg.samples).try_for_each(|k| self.feed_sample(reg, k))
    }

    pub fn estimate(&self) -> Result<ParamEstimate> {
        ParamEstimate::new(
            self.output.clone(),
            self.n,
            self.p,
            self.kind.method(),
            self.constraint.as_ref(),
        )
    }
}

/// `max |DK|`, `max |Dθ − d|` and `max |DP|` for a recursive state.
pub fn constraint_invariants(state: &RecursiveState, vc: &VectorizedConstraint) -> (f64, f64, f64) {
    (
        linalg::max_abs_vec(&(&vc.d_mat * &state.gain)),
        vc.residual(&state.theta),
        max_abs(&(&vc.d_mat * &state.p)),
    )
}
