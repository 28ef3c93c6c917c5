#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ssid_cls::constraint_map::{vectorize_constraint, StateConstraint, VectorizedConstraint};
use ssid_cls::estimators::{build_regression, RegressionData};
use ssid_cls::simulator::Trajectory;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Regression data from random outputs and inputs; no dynamics involved.
pub fn random_regression(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    samples: usize,
) -> RegressionData {
    let col =
        |rng: &mut ChaCha8Rng, len| DVector::from_column_slice(gaussian(rng, len, 1).as_slice());
    let y: Vec<DVector<f64>> = (0..=samples).map(|_| col(rng, n)).collect();
    let u = if p > 0 {
        (0..samples).map(|_| col(rng, p)).collect()
    } else {
        Vec::new()
    };
    let traj = Trajectory {
        x: y.clone(),
        y,
        u,
        mode_schedule: Vec::new(),
    };
    build_regression(&traj).unwrap()
}

/// Random full-row-rank state constraint with `rows` rows.
pub fn random_constraint(
    rng: &mut ChaCha8Rng,
    rows: usize,
    n: usize,
    p: usize,
) -> (StateConstraint, VectorizedConstraint) {
    let s_mat = gaussian(rng, rows, n);
    let s_vec = DVector::from_column_slice(gaussian(rng, rows, 1).as_slice());
    let c = StateConstraint::new(s_mat, s_vec).unwrap();
    let vc = vectorize_constraint(&c, n, p).unwrap();
    (c, vc)
}

/// Brute-force constrained LS: solves the bordered KKT system
/// `[2ΨᵀΨ Dᵀ; D 0][θ; ν] = [2ΨᵀZ; d]` by LU.
pub fn kkt_cls(
    psi: &DMatrix<f64>,
    z: &DVector<f64>,
    d: &DMatrix<f64>,
    dv: &DVector<f64>,
) -> DVector<f64> {
    let k = psi.ncols();
    let r = d.nrows();
    let mut m = DMatrix::zeros(k + r, k + r);
    m.view_mut((0, 0), (k, k))
        .copy_from(&(psi.transpose() * psi * 2.0));
    m.view_mut((0, k), (k, r)).copy_from(&d.transpose());
    m.view_mut((k, 0), (r, k)).copy_from(d);
    let mut rhs = DVector::zeros(k + r);
    rhs.rows_mut(0, k).copy_from(&(psi.transpose() * z * 2.0));
    rhs.rows_mut(k, r).copy_from(dv);
    m.lu()
        .solve(&rhs)
        .expect("KKT system is nonsingular")
        .rows(0, k)
        .into_owned()
}

/// Matrix-form LS `Θ = (𝒳ᵀ𝒳)⁻¹𝒳ᵀ𝒴` returned as `(A, B)` with `Θ = [Aᵀ; Bᵀ]`.
pub fn matrix_form_ls(reg: &RegressionData) -> (DMatrix<f64>, DMatrix<f64>) {
    let x = &reg.x_mat;
    let theta = (x.transpose() * x)
        .lu()
        .solve(&(x.transpose() * &reg.y_mat))
        .unwrap();
    let n = reg.n;
    let a = theta.rows(0, n).transpose();
    let b = theta.rows(n, reg.p).transpose();
    (a, b)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}
