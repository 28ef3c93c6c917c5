//! Mapping a state equality constraint `S x = s` onto the model matrices.
//!
//! A model keeps every trajectory on the plane `S x = s` exactly when
//! `S A = S`, `S B = 0` and `S G = 0`. With `Θ = [Aᵀ; Bᵀ]` the first two read
//! `Θ D₁ = D₂`, and with `θ = [vec(A); vec(B)]` they become the ordinary
//! linear constraint `D θ = d` consumed by the constrained estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, block_diag, kron, max_abs};
use crate::simulator::StateSpaceModel;

/// Default absolute tolerance for [`check_compatibility`].
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// `S x = s` with `S` of full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct StateConstraint {
    s_mat: DMatrix<f64>,
    s_vec: DVector<f64>,
}

impl StateConstraint {
    pub fn new(s_mat: DMatrix<f64>, s_vec: DVector<f64>) -> Result<Self> {
        check_dim("constraint rows (len of s)", s_mat.nrows(), s_vec.len())?;
        if s_mat.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "constraint needs at least one row".into(),
            ));
        }
        linalg::require_full_row_rank("constraint matrix S", &s_mat)?;
        Ok(StateConstraint { s_mat, s_vec })
    }

    /// Single-row constraint `row · x = value`.
    pub fn single(row: &[f64], value: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_row_slice(1, row.len(), row),
            DVector::from_element(1, value),
        )
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s_mat
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.s_vec
    }

    /// Number of constraint rows `n_r`.
    pub fn rows(&self) -> usize {
        self.s_mat.nrows()
    }

    /// State dimension `n`.
    pub fn states(&self) -> usize {
        self.s_mat.ncols()
    }

    /// `max |S x − s|`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        linalg::max_abs_vec(&(&self.s_mat * x - &self.s_vec))
    }
}

/// `Θ D₁ = D₂` with `D₁ = Sᵀ` and `D₂ = [Sᵀ; 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixParamConstraint {
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
}

impl MatrixParamConstraint {
    /// `max |Θ D₁ − D₂|` for `Θ = [Aᵀ; Bᵀ]`.
    pub fn residual(&self, theta_mat: &DMatrix<f64>) -> Result<f64> {
        check_dim("Θ columns", self.d1.nrows(), theta_mat.ncols())?;
        check_dim("Θ rows", self.d2.nrows(), theta_mat.nrows())?;
        Ok(max_abs(&(theta_mat * &self.d1 - &self.d2)))
    }
}

/// `D θ = d` on the stacked parameter `θ = [vec(A); vec(B)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedConstraint {
    pub d_mat: DMatrix<f64>,
    pub d_vec: DVector<f64>,
}

impl VectorizedConstraint {
    pub fn new(d_mat: DMatrix<f64>, d_vec: DVector<f64>) -> Result<Self> {
        check_dim("constraint rows (len of d)", d_mat.nrows(), d_vec.len())?;
        Ok(VectorizedConstraint { d_mat, d_vec })
    }

    pub fn rows(&self) -> usize {
        self.d_mat.nrows()
    }

    pub fn params(&self) -> usize {
        self.d_mat.ncols()
    }

    /// `max |D θ − d|`.
    pub fn residual(&self, theta: &DVector<f64>) -> f64 {
        linalg::max_abs_vec(&(&self.d_mat * theta - &self.d_vec))
    }

    /// Euclidean norm of `d`, used to scale exactness tolerances.
    pub fn rhs_norm(&self) -> f64 {
        self.d_vec.norm()
    }
}

/// Residuals of `S A = S`, `S B = 0`, `S G = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompatibilityReport {
    pub sa_residual: f64,
    pub sb_residual: f64,
    pub sg_residual: f64,
    pub compatible: bool,
}

impl CompatibilityReport {
    pub fn max_residual(&self) -> f64 {
        self.sa_residual.max(self.sb_residual).max(self.sg_residual)
    }
}

pub fn check_compatibility(
    model: &StateSpaceModel,
    c: &StateConstraint,
    tol: f64,
) -> Result<CompatibilityReport> {
    check_dim(
        "constraint columns vs state dimension n",
        model.n(),
        c.states(),
    )?;
    let s = c.matrix();
    let sa_residual = max_abs(&(s * &model.a - s));
    let sb_residual = max_abs(&(s * &model.b));
    let sg_residual = max_abs(&(s * &model.g));
    let compatible = sa_residual.max(sb_residual).max(sg_residual) <= tol;
    Ok(CompatibilityReport {
        sa_residual,
        sb_residual,
        sg_residual,
        compatible,
    })
}

pub fn build_matrix_constraint(c: &StateConstraint, p: usize) -> Result<MatrixParamConstraint> {
    linalg::require_full_row_rank("constraint matrix S", c.matrix())?;
    let st = c.matrix().transpose();
    let n = c.states();
    let mut d2 = DMatrix::zeros(n + p, c.rows());
    d2.view_mut((0, 0), (n, c.rows())).copy_from(&st);
    Ok(MatrixParamConstraint { d1: st, d2 })
}

/// `D = blkdiag(Iₙ ⊗ S, I_p ⊗ S)`, `d = [vec(S); 0]`.
pub fn vectorize_constraint(
    c: &StateConstraint,
    n: usize,
    p: usize,
) -> Result<VectorizedConstraint> {
    check_dim("constraint columns vs state dimension n", n, c.states())?;
    let s = c.matrix();
    let nr = c.rows();
    let upper = kron(&DMatrix::identity(n, n), s);
    let lower = kron(&DMatrix::identity(p, p), s);
    let d_mat = block_diag(&[&upper, &lower]);
    let mut d_vec = DVector::zeros(nr * (n + p));
    d_vec.rows_mut(0, nr * n).copy_from(&linalg::vec(s));
    VectorizedConstraint::new(d_mat, d_vec)
}

/// `max |vec(MNO) − (Oᵀ ⊗ M) vec(N)|`.
pub fn vec_kron_identity_check(
    m: &DMatrix<f64>,
    n: &DMatrix<f64>,
    o: &DMatrix<f64>,
) -> Result<f64> {
    check_dim("M columns vs N rows", m.ncols(), n.nrows())?;
    check_dim("N columns vs O rows", n.ncols(), o.nrows())?;
    let lhs = linalg::vec(&(m * n * o));
    let rhs = kron(&o.transpose(), m) * linalg::vec(n);
    Ok(linalg::max_abs_vec(&(lhs - rhs)))
}

/// Smallest change to `model` that makes it compatible with `c`: every column
/// of `A − I`, `B` and `G` is projected onto the null space of `S`.
pub fn project_compatible(model: &StateSpaceModel, c: &StateConstraint) -> Result<StateSpaceModel> {
    check_dim(
        "constraint columns vs state dimension n",
        model.n(),
        c.states(),
    )?;
    let (proj, _) = linalg::null_space_projector(c.matrix(), &DVector::zeros(c.rows()))?;
    let n = model.n();
    let eye = DMatrix::identity(n, n);
    let a = &eye + &proj * (&model.a - &eye);
    StateSpaceModel::new(a, &proj * &model.b, &proj * &model.g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::scenarios::{compartmental_a1, compartmental_g};
    use proptest::prelude::*;

    fn mass() -> StateConstraint {
        StateConstraint::single(&[1.0, 1.0, 1.0], 3.0).unwrap()
    }

    #[test]
    fn compartmental_preset_is_compatible() {
        let model =
            StateSpaceModel::new(compartmental_a1(), DMatrix::zeros(3, 0), compartmental_g())
                .unwrap();
        let rep = check_compatibility(&model, &mass(), 1e-12).unwrap();
        assert!(rep.compatible);
        assert!(rep.max_residual() <= 1e-12);
    }

    #[test]
    fn identity_dynamics_are_compatible_with_anything() {
        let model = StateSpaceModel::autonomous(DMatrix::identity(3, 3)).unwrap();
        let c = StateConstraint::single(&[0.3, -2.0, 7.5], 1.0).unwrap();
        assert!(check_compatibility(&model, &c, 1e-8).unwrap().compatible);
    }

    #[test]
    fn perturbed_entry_shows_up_in_sa_residual() {
        let mut a = compartmental_a1();
        a[(0, 0)] = 0.95;
        let model = StateSpaceModel::autonomous(a).unwrap();
        let rep = check_compatibility(&model, &mass(), 1e-8).unwrap();
        assert!((rep.sa_residual - 0.01).abs() < 1e-12);
        assert!(!rep.compatible);
    }

    #[test]
    fn compatibility_rejects_wrong_dimension() {
        let model = StateSpaceModel::autonomous(DMatrix::identity(2, 2)).unwrap();
        let err = check_compatibility(&model, &mass(), 1e-8).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 3,
                ..
            }
        ));
    }

    #[test]
    fn rank_deficient_constraint_is_rejected() {
        let s = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let err = StateConstraint::new(s, DVector::from_vec(vec![3.0, 6.0])).unwrap_err();
        assert!(matches!(
            err,
            Error::RankDeficient {
                rank: 1,
                required: 2,
                ..
            }
        ));
    }

    #[test]
    fn matrix_constraint_shapes() {
        let mc = build_matrix_constraint(&mass(), 0).unwrap();
        assert_eq!(mc.d1, DMatrix::from_element(3, 1, 1.0));
        assert_eq!(mc.d2, DMatrix::from_element(3, 1, 1.0));
        let mc = build_matrix_constraint(&mass(), 1).unwrap();
        assert_eq!(mc.d2.shape(), (4, 1));
        assert_eq!(mc.d2[(3, 0)], 0.0);
    }

    #[test]
    fn vectorized_constraint_without_input() {
        let vc = vectorize_constraint(&mass(), 3, 0).unwrap();
        assert_eq!(vc.d_mat, kron(&DMatrix::identity(3, 3), mass().matrix()));
        assert_eq!(vc.d_mat.shape(), (3, 9));
        assert_eq!(vc.d_vec.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn vectorized_constraint_with_input() {
        let vc = vectorize_constraint(&mass(), 3, 1).unwrap();
        assert_eq!(vc.d_mat.shape(), (4, 12));
        assert_eq!(vc.d_vec.len(), 4);
        assert_eq!(vc.d_vec[3], 0.0);
        assert_eq!(linalg::numerical_rank(&vc.d_mat), 4);
    }

    #[test]
    fn vec_kron_identity_trivial_cases() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(vec_kron_identity_check(&i2, &i2, &i2).unwrap(), 0.0);
        let m = DMatrix::from_element(1, 1, 2.5);
        let n = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        let o = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(vec_kron_identity_check(&m, &n, &o).unwrap() <= 1e-13);
    }

    #[test]
    fn vec_kron_identity_rejects_nonconformable() {
        let a = DMatrix::<f64>::zeros(2, 3);
        assert!(vec_kron_identity_check(&a, &a, &a).is_err());
    }

    fn mat(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0f64..2.0, rows * cols)
            .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
    }

    proptest! {
        #[test]
        fn vec_kron_identity_holds((m, n, o) in (1usize..=8, 1usize..=8, 1usize..=8, 1usize..=8)
            .prop_flat_map(|(a, b, c, d)| (mat(a, b), mat(b, c), mat(c, d))))
        {
            prop_assert!(vec_kron_identity_check(&m, &n, &o).unwrap() <= 1e-12);
        }

        // Θ D₁ = D₂ and D θ = d describe the same residuals, just stacked differently.
        #[test]
        fn matrix_and_vectorized_forms_agree(
            (s, a, b) in (1usize..=2, 0usize..=2).prop_flat_map(|(nr, p)| (mat(nr, 3), mat(3, 3), mat(3, p)))
        ) {
            prop_assume!(linalg::numerical_rank(&s) == s.nrows());
            let c = StateConstraint::new(s.clone(), DVector::zeros(s.nrows())).unwrap();
            let p = b.ncols();
            let mc = build_matrix_constraint(&c, p).unwrap();
            let vc = vectorize_constraint(&c, 3, p).unwrap();
            let mut theta_mat = DMatrix::zeros(3 + p, 3);
            theta_mat.view_mut((0, 0), (3, 3)).copy_from(&a.transpose());
            theta_mat.view_mut((3, 0), (p, 3)).copy_from(&b.transpose());
            let mut theta = linalg::vec(&a).as_slice().to_vec();
            theta.extend_from_slice(b.as_slice());
            let vres = &vc.d_mat * DVector::from_vec(theta) - &vc.d_vec;
            let mres = &theta_mat * &mc.d1 - &mc.d2;
            // vec(SA − S) and vec(SB) are the transposed residual blocks.
            let mut expected = linalg::vec(&(&s * &a - &s)).as_slice().to_vec();
            expected.extend_from_slice((&s * &b).as_slice());
            let expected = DVector::from_vec(expected);
            prop_assert!(linalg::max_abs_vec(&(&vres - &expected)) <= 1e-13);
            prop_assert!((linalg::max_abs(&mres) - linalg::max_abs_vec(&vres)).abs() <= 1e-13);
        }

        #[test]
        fn projected_models_are_compatible(a in mat(4, 4), b in mat(4, 1), g in mat(4, 2), s in mat(2, 4)) {
            prop_assume!(linalg::numerical_rank(&s) == 2);
            let c = StateConstraint::new(s, DVector::zeros(2)).unwrap();
            let model = StateSpaceModel::new(a, b, g).unwrap();
            let fixed = project_compatible(&model, &c).unwrap();
            prop_assert!(check_compatibility(&fixed, &c, 1e-10).unwrap().compatible);
        }
    }
}
