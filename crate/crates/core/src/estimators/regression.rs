use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::simulator::Trajectory;

/// Stacked regression built from one trajectory, in both layouts.
///
/// Vectorised: `Z = Ψ θ` with `θ = [vec(A); vec(B)]`; row block `k` of `Ψ` is
/// `[y_{k-1}ᵀ ⊗ Iₙ, u_{k-1}ᵀ ⊗ Iₙ]` and block `k` of `Z` is `y_k`.
/// Matrix form: `𝒴 = 𝒳 Θ` with `Θ = [Aᵀ; Bᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub psi: DMatrix<f64>,
    pub z: DVector<f64>,
    pub x_mat: DMatrix<f64>,
    pub y_mat: DMatrix<f64>,
    pub samples: usize,
    pub n: usize,
    pub p: usize,
    pub warnings: Vec<String>,
}

impl RegressionData {
    pub fn n_params(&self) -> usize {
        self.n * (self.n + self.p)
    }

    /// Scalar regression row `i` (time-major, output channel within a sample).
    pub fn row(&self, i: usize) -> (DVector<f64>, f64) {
        (self.psi.row(i).transpose(), self.z[i])
    }

    /// `J_LS(θ) = ‖Z − Ψθ‖²`.
    pub fn cost(&self, theta: &DVector<f64>) -> f64 {
        (&self.z - &self.psi * theta).norm_squared()
    }
}

/// Assembles `(Ψ, Z)` and `(𝒳, 𝒴)` from `y_0..y_N` and `u_0..u_{N-1}`.
pub fn build_regression(traj: &Trajectory) -> Result<RegressionData> {
    let samples = traj.len();
    if samples == 0 {
        return Err(Error::Data("trajectory needs at least two outputs".into()));
    }
    let n = traj.n();
    let p = traj.p();
    if p > 0 {
        check_dim("input sequence length", samples, traj.u.len())?;
    }
    let n_params = n * (n + p);
    let mut warnings = Vec::new();
    let min_samples = n_params.div_ceil(n.max(1));
    if samples < min_samples {
        warnings.push(format!(
            "{samples} samples cannot identify {n_params} parameters (need at least {min_samples})"
        ));
    }

    let mut psi = DMatrix::zeros(samples * n, n_params);
    let mut z = DVector::zeros(samples * n);
    let mut x_mat = DMatrix::zeros(samples, n + p);
    let mut y_mat = DMatrix::zeros(samples, n);
    for k in 0..samples {
        let prev = &traj.y[k];
        let next = &traj.y[k + 1];
        check_dim("output dimension", n, next.len())?;
        let u = traj.u.get(k);
        for i in 0..n {
            let r = k * n + i;
            // (yᵀ ⊗ Iₙ) puts y_j at column j·n + i of row i.
            for j in 0..n {
                psi[(r, j * n + i)] = prev[j];
            }
            if let Some(u) = u {
                for j in 0..p {
                    psi[(r, n * n + j * n + i)] = u[j];
                }
            }
            z[r] = next[i];
        }
        x_mat.view_mut((k, 0), (1, n)).copy_from(&prev.transpose());
        if let Some(u) = u {
            x_mat.view_mut((k, n), (1, p)).copy_from(&u.transpose());
        }
        y_mat.row_mut(k).copy_from(&next.transpose());
    }
    Ok(RegressionData {
        psi,
        z,
        x_mat,
        y_mat,
        samples,
        n,
        p,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(ys: &[[f64; 2]]) -> Trajectory {
        let y: Vec<_> = ys.iter().map(|v| DVector::from_column_slice(v)).collect();
        Trajectory {
            x: y.clone(),
            y,
            u: Vec::new(),
            mode_schedule: Vec::new(),
        }
    }

    #[test]
    fn second_block_uses_previous_output() {
        let reg =
            build_regression(&traj(&[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [2.0, 3.0]])).unwrap();
        assert_eq!(reg.samples, 3);
        let block = reg.psi.view((2, 0), (2, 4)).clone_owned();
        assert_eq!(
            block,
            DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        );
        assert_eq!(
            reg.z.rows(2, 2).clone_owned(),
            DVector::from_vec(vec![0.5, 0.5])
        );
        assert_eq!(
            reg.x_mat.row(1).clone_owned(),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0])
        );
    }

    #[test]
    fn short_record_is_flagged() {
        let reg = build_regression(&traj(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(reg.warnings.len(), 1);
    }

    #[test]
    fn input_columns_follow_state_block() {
        let t = Trajectory {
            x: vec![DVector::from_vec(vec![1.0, 2.0]); 2],
            y: vec![
                DVector::from_vec(vec![1.0, 2.0]),
                DVector::from_vec(vec![3.0, 4.0]),
            ],
            u: vec![DVector::from_vec(vec![7.0])],
            mode_schedule: Vec::new(),
        };
        let reg = build_regression(&t).unwrap();
        assert_eq!(reg.psi.ncols(), 6);
        assert_eq!(
            reg.psi.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 2.0, 0.0, 7.0, 0.0]
        );
        assert_eq!(
            reg.psi.row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0, 2.0, 0.0, 7.0]
        );
        assert_eq!(
            reg.x_mat.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 2.0, 7.0]
        );
    }
}
