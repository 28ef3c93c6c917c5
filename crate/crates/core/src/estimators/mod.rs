//! Least-squares estimators on the vectorised parameter `θ = [vec(A); vec(B)]`.
//!
//! Batch: [`ls_batch`], [`cls_batch`], [`rcls_relaxed`]. Recursive: the
//! state-update functions in [`recursive`] and the [`RecursiveEstimator`]
//! driver that feeds a whole record.

mod batch;
pub mod recursive;
mod regression;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::constraint_map::VectorizedConstraint;
use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub use batch::{cls_batch, cls_projector, constraint_offset, ls_batch, rcls_relaxed};
pub use recursive::{
    rls_init_constrained, rls_step, rwcls_step, rwls_step, RecursiveEstimator, RecursiveState,
};
pub use regression::{build_regression, RegressionData};

/// Which estimator produced a parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ls,
    Cls,
    RclsRelaxed,
    Rcls,
    Rwls,
    Rwcls,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ls,
        Method::Cls,
        Method::RclsRelaxed,
        Method::Rcls,
        Method::Rwls,
        Method::Rwcls,
    ];

    /// Selection string used on the command line.
    pub fn key(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Cls => "cls",
            Method::RclsRelaxed => "rcls-relaxed",
            Method::Rcls => "rcls",
            Method::Rwls => "rwls",
            Method::Rwcls => "rwcls",
        }
    }

    /// Conventional short name.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Ls => "LS",
            Method::Cls => "CLS",
            Method::RclsRelaxed => "rCLS",
            Method::Rcls => "RCLS",
            Method::Rwls => "RWLS",
            Method::Rwcls => "RWCLS",
        }
    }

    /// Estimators whose output satisfies `Dθ = d` to rounding error.
    pub fn enforces_constraint(self) -> bool {
        matches!(self, Method::Cls | Method::Rcls | Method::Rwcls)
    }

    pub fn is_recursive(self) -> bool {
        matches!(self, Method::Rcls | Method::Rwls | Method::Rwcls)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.key() == s || m.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown estimator {s:?}")))
    }
}

/// Identified parameters in stacked and matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEstimate {
    pub theta: DVector<f64>,
    pub a_hat: DMatrix<f64>,
    /// `None` when the model has no input.
    pub b_hat: Option<DMatrix<f64>>,
    pub method: Method,
    /// `max |Dθ − d|` against the constraint the estimator was given.
    pub constraint_residual: Option<f64>,
}

impl ParamEstimate {
    pub fn new(
        theta: DVector<f64>,
        n: usize,
        p: usize,
        method: Method,
        constraint: Option<&VectorizedConstraint>,
    ) -> Result<Self> {
        let (a_hat, b_hat) = unvectorize(&theta, n, p)?;
        let constraint_residual = constraint.map(|c| c.residual(&theta));
        Ok(ParamEstimate {
            theta,
            a_hat,
            b_hat,
            method,
            constraint_residual,
        })
    }

    pub fn n(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.b_hat.as_ref().map_or(0, |b| b.ncols())
    }
}

/// Splits `θ` back into `A` (n×n) and `B` (n×p, `None` if `p = 0`).
pub fn unvectorize(
    theta: &DVector<f64>,
    n: usize,
    p: usize,
) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    check_dim("theta length n² + n·p", n * (n + p), theta.len())?;
    let s = theta.as_slice();
    let a = linalg::unvec(&s[..n * n], n, n)?;
    let b = if p > 0 {
        Some(linalg::unvec(&s[n * n..], n, p)?)
    } else {
        None
    };
    Ok((a, b))
}

/// Inverse of [`unvectorize`].
pub fn vectorize_params(a: &DMatrix<f64>, b: Option<&DMatrix<f64>>) -> DVector<f64> {
    let mut v = a.as_slice().to_vec();
    if let Some(b) = b {
        v.extend_from_slice(b.as_slice());
    }
    DVector::from_vec(v)
}
