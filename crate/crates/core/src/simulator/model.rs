use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};

/// Linear plant `x⁺ = A x + B u + G w`, with the full state measured.
///
/// `p = 0` means no input: `B` is then an `n × 0` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, g: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        check_dim("A columns", n, a.ncols())?;
        check_dim("B rows", n, b.nrows())?;
        check_dim("G rows", n, g.nrows())?;
        Ok(StateSpaceModel { a, b, g })
    }

    /// Autonomous model with no process noise.
    pub fn autonomous(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, DMatrix::zeros(n, 0), DMatrix::zeros(n, 0))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn q(&self) -> usize {
        self.g.ncols()
    }

    /// One noise-driven transition.
    pub fn step(
        &self,
        x: &DVector<f64>,
        u: Option<&DVector<f64>>,
        w: Option<&DVector<f64>>,
    ) -> DVector<f64> {
        let mut next = &self.a * x;
        if let Some(u) = u {
            if self.p() > 0 {
                next.gemv(1.0, &self.b, u, 1.0);
            }
        }
        if let Some(w) = w {
            if self.q() > 0 {
                next.gemv(1.0, &self.g, w, 1.0);
            }
        }
        next
    }

    /// Largest eigenvalue modulus of `A`.
    pub fn spectral_radius(&self) -> f64 {
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}
