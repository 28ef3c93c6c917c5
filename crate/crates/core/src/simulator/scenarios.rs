//! Scenario presets and their JSON representation.
//!
//! Three presets ship with the crate: a mass-conserving three-compartment
//! system, the same system switching between three modes, and a five-compartment
//! nitrogen-flow model of a tropical forest driven by a noisy input.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    normal_vector, seeded_rng, Dynamics, InputSpec, NoiseSpec, StateSpaceModel, Trajectory,
};
use crate::constraint_map::{self, StateConstraint, VectorizedConstraint, COMPATIBILITY_TOL};
use crate::error::{check_dim, Error, Result};

/// Salt mixed into the scenario seed for the validation input sequence.
const VALIDATION_SALT: u64 = 0x5eed_0000_7a11_da7e;

pub fn compartmental_a1() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[0.94, 0.028, 0.019, 0.038, 0.95, 0.001, 0.022, 0.022, 0.98],
    )
}

pub fn compartmental_a2() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[0.84, 0.028, 0.019, 0.138, 0.85, 0.001, 0.022, 0.122, 0.98],
    )
}

pub fn compartmental_a3() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[0.80, 0.018, 0.119, 0.178, 0.76, 0.201, 0.022, 0.222, 0.68],
    )
}

pub fn compartmental_g() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 2, &[0.05, -0.03, -0.02, 0.01, -0.03, 0.02])
}

/// Forest state matrix as published (4 decimals). Entry (5,4) reads 0.005 in
/// print; 0.0005 is the value consistent with a unit column sum.
pub fn forest_a_published() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        5,
        5,
        &[
            0.9003, 0.0, 0.0005, 0.0, 0.0093, //
            0.0935, 0.8807, 0.0, 0.0, 0.0005, //
            0.0054, 0.0978, 0.6697, 0.0, 0.0, //
            0.0005, 0.0154, 0.2372, 0.9995, 0.0, //
            0.0002, 0.0060, 0.0927, 0.0005, 0.9902,
        ],
    )
}

pub fn forest_b() -> DMatrix<f64> {
    DMatrix::from_column_slice(5, 1, &[0.5505, 0.0282, -0.2625, -0.3003, -0.0159])
}

pub fn forest_g() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        5,
        4,
        &[
            0.1220, 0.1634, 0.0249, -0.0383, //
            -0.0420, -0.0048, -0.1430, 0.0235, //
            0.1640, -0.0317, -0.0057, 0.0571, //
            -0.1871, -0.0877, 0.1697, -0.0098, //
            -0.0569, -0.0392, -0.0459, -0.0325,
        ],
    )
}

/// Forest state matrix with each diagonal entry reset so the column sums to
/// exactly one; the published values are rounded to 4 decimals.
pub fn forest_a() -> DMatrix<f64> {
    let mut a = forest_a_published();
    for j in 0..5 {
        let off: f64 = (0..5).filter(|&i| i != j).map(|i| a[(i, j)]).sum();
        a[(j, j)] = 1.0 - off;
    }
    a
}

/// Initial identification state `x₀ = c + 𝒦·v` with `𝒦 = 1.5`.
pub fn forest_x0_id() -> DVector<f64> {
    let base = DVector::from_vec(vec![-3.5, -2.52, 0.0, 520.0, 26.5]);
    let dir = DVector::from_vec(vec![3.82, 316.0, 1.0, 576.0, 41.0]);
    base + dir * 1.5
}

/// How the recursive estimators pick their initial parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaInit {
    Fixed(Vec<f64>),
    /// Independent `N(0, σ²)` entries, drawn per realization.
    Random {
        normal: f64,
    },
}

impl Default for ThetaInit {
    fn default() -> Self {
        ThetaInit::Fixed(Vec::new())
    }
}

impl ThetaInit {
    /// Resolves to a concrete vector of length `len`; an empty fixed vector means zeros.
    pub fn draw(&self, len: usize, seed: u64) -> Result<DVector<f64>> {
        match self {
            ThetaInit::Fixed(v) if v.is_empty() => Ok(DVector::zeros(len)),
            ThetaInit::Fixed(v) => {
                check_dim("theta0 length", len, v.len())?;
                Ok(DVector::from_column_slice(v))
            }
            ThetaInit::Random { normal } => Ok(normal_vector(&mut seeded_rng(seed), len, *normal)),
        }
    }
}

/// On-disk scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub A: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Vec<Vec<Vec<f64>>>>,
    /// `n × p` input matrix; absent or `null` means no input.
    #[serde(default)]
    pub B: Option<Vec<Vec<f64>>>,
    pub G: Vec<Vec<f64>>,
    pub S: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    pub sigma_w: f64,
    pub sigma_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_mean: Option<f64>,
    pub x0_id: Vec<f64>,
    pub x0_val: Vec<f64>,
    /// Identification length; per mode for switching scenarios.
    pub N: usize,
    /// Validation length, defaults to `N`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub N_val: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<ThetaInit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub P0_scale: Option<f64>,
    pub seed: u64,
    /// Uncertain variant of the constraint, used by the relaxed estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub S_uncertain: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_uncertain: Option<Vec<f64>>,
    /// Rounded constraint level as published; informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_published: Option<f64>,
    /// Sampling period in years; informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_period: Option<f64>,
}

fn to_matrix(what: &str, rows: &[Vec<f64>], ncols_if_empty: usize) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, ncols_if_empty));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Scenario(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub dynamics: Dynamics,
    pub constraint: StateConstraint,
    pub uncertain_constraint: Option<StateConstraint>,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub sigma_u: f64,
    pub u_mean: f64,
    pub x0_id: DVector<f64>,
    pub x0_val: DVector<f64>,
    /// Identification transitions per mode.
    pub n_id: usize,
    pub n_val: usize,
    pub lambda: Option<f64>,
    pub mu: Vec<f64>,
    pub theta0: ThetaInit,
    pub p0_scale: f64,
    pub seed: u64,
    pub s_published: Option<f64>,
    pub sample_period: Option<f64>,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.dynamics.n()
    }

    pub fn p(&self) -> usize {
        self.dynamics.p()
    }

    /// Number of parameters `n² + n·p`.
    pub fn n_params(&self) -> usize {
        self.n() * (self.n() + self.p())
    }

    pub fn modes(&self) -> usize {
        self.dynamics.models().len()
    }

    pub fn is_switching(&self) -> bool {
        matches!(self.dynamics, Dynamics::Switching { .. })
    }

    /// Total identification transitions.
    pub fn total_steps(&self) -> usize {
        self.n_id * self.modes()
    }

    pub fn vectorized(&self, uncertain: bool) -> Result<VectorizedConstraint> {
        let c = if uncertain {
            self.uncertain_constraint.as_ref().ok_or_else(|| {
                Error::Scenario(format!("{} has no uncertain constraint", self.name))
            })?
        } else {
            &self.constraint
        };
        constraint_map::vectorize_constraint(c, self.n(), self.p())
    }

    pub fn identification_inputs(&self) -> InputSpec {
        if self.p() == 0 {
            InputSpec::None
        } else {
            InputSpec::White {
                mean: self.u_mean,
                sigma: self.sigma_u,
            }
        }
    }

    /// Validation input sequence; fixed for a given scenario seed.
    pub fn validation_inputs(&self) -> InputSpec {
        if self.p() == 0 {
            return InputSpec::None;
        }
        let mut rng = seeded_rng(self.seed ^ VALIDATION_SALT);
        InputSpec::Given(
            (0..self.n_val)
                .map(|_| normal_vector(&mut rng, self.p(), self.sigma_u).add_scalar(self.u_mean))
                .collect(),
        )
    }

    /// Noisy identification record for one realization.
    pub fn identification_data(&self, seed: u64) -> Result<Trajectory> {
        let noise = NoiseSpec {
            sigma_w: self.sigma_w,
            sigma_v: self.sigma_v,
            seed,
        };
        super::simulate(
            &self.dynamics,
            &self.x0_id,
            &self.identification_inputs(),
            &noise,
            self.total_steps(),
        )
    }

    /// Noise-free validation trajectory of mode `mode`.
    pub fn validation_truth(&self, mode: usize) -> Result<Trajectory> {
        let model = self
            .dynamics
            .models()
            .get(mode)
            .ok_or_else(|| Error::InvalidParameter(format!("no mode {mode}")))?;
        super::simulate(
            &Dynamics::Invariant(model.clone()),
            &self.x0_val,
            &self.validation_inputs(),
            &NoiseSpec::noise_free(),
            self.n_val,
        )
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        let matrices: Vec<DMatrix<f64>> = match (&file.A, &file.modes) {
            (Some(a), None) => vec![to_matrix("A", a, 0)?],
            (None, Some(ms)) if !ms.is_empty() => ms
                .iter()
                .map(|m| to_matrix("modes", m, 0))
                .collect::<Result<_>>()?,
            _ => {
                return Err(Error::Scenario(
                    "exactly one of \"A\" or \"modes\" is required".into(),
                ))
            }
        };
        let n = matrices[0].nrows();
        let b = match &file.B {
            Some(b) if !b.is_empty() && !b[0].is_empty() => to_matrix("B", b, 0)?,
            _ => DMatrix::zeros(n, 0),
        };
        let g = to_matrix("G", &file.G, 0)?;
        let models = matrices
            .into_iter()
            .map(|a| StateSpaceModel::new(a, b.clone(), g.clone()))
            .collect::<Result<Vec<_>>>()?;
        let dynamics = if file.A.is_some() {
            Dynamics::Invariant(models.into_iter().next().expect("one model"))
        } else {
            Dynamics::equal_windows(models, file.N)?
        };

        let constraint = StateConstraint::new(
            to_matrix("S", &file.S, n)?,
            DVector::from_column_slice(&file.s),
        )?;
        let uncertain_constraint = match (&file.S_uncertain, &file.s_uncertain) {
            (Some(s), Some(v)) => Some(StateConstraint::new(
                to_matrix("S_uncertain", s, n)?,
                DVector::from_column_slice(v),
            )?),
            (None, None) => None,
            _ => {
                return Err(Error::Scenario(
                    "S_uncertain and s_uncertain go together".into(),
                ))
            }
        };

        let x0_id = DVector::from_column_slice(&file.x0_id);
        let x0_val = DVector::from_column_slice(&file.x0_val);
        check_dim("x0_id length", n, x0_id.len())?;
        check_dim("x0_val length", n, x0_val.len())?;
        let p = b.ncols();
        if p > 0 && file.sigma_u.is_none() {
            return Err(Error::Scenario("scenarios with inputs need sigma_u".into()));
        }
        let scenario = Scenario {
            name: file.name,
            dynamics,
            constraint,
            uncertain_constraint,
            sigma_w: file.sigma_w,
            sigma_v: file.sigma_v,
            sigma_u: file.sigma_u.unwrap_or(0.0),
            u_mean: file.u_mean.unwrap_or(1.0),
            x0_id,
            x0_val,
            n_id: file.N,
            n_val: file.N_val.unwrap_or(file.N),
            lambda: file.lambda,
            mu: file.mu.unwrap_or_default(),
            theta0: file.theta0.unwrap_or_default(),
            p0_scale: file.P0_scale.unwrap_or(1e3),
            seed: file.seed,
            s_published: file.s_published,
            sample_period: file.sample_period,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<()> {
        if self.sigma_w < 0.0 || self.sigma_v < 0.0 || self.sigma_u < 0.0 {
            return Err(Error::Scenario("noise levels must be nonnegative".into()));
        }
        if self.n_id == 0 || self.n_val == 0 {
            return Err(Error::Scenario("N and N_val must be positive".into()));
        }
        let nr = self.constraint.rows();
        for (i, m) in self.dynamics.models().iter().enumerate() {
            if nr + m.q() > m.n() {
                return Err(Error::Scenario(format!(
                    "mode {i}: {nr} constraints with process-noise rank {} exceed n = {}",
                    m.q(),
                    m.n()
                )));
            }
            let rep = constraint_map::check_compatibility(m, &self.constraint, COMPATIBILITY_TOL)?;
            if !rep.compatible {
                return Err(Error::Scenario(format!(
                    "mode {i} is not compatible with the constraint (max residual {:e})",
                    rep.max_residual()
                )));
            }
        }
        let tol = 1e-6 * (1.0 + self.constraint.rhs().norm());
        if self.constraint.violation(&self.x0_id) > tol {
            return Err(Error::Scenario("x0_id does not satisfy S x0 = s".into()));
        }
        if let ThetaInit::Fixed(v) = &self.theta0 {
            if !v.is_empty() {
                check_dim("theta0 length", self.n_params(), v.len())?;
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> ScenarioFile {
        let models = self.dynamics.models();
        let (a, modes) = if self.is_switching() {
            (
                None,
                Some(models.iter().map(|m| from_matrix(&m.a)).collect()),
            )
        } else {
            (Some(from_matrix(&models[0].a)), None)
        };
        ScenarioFile {
            name: self.name.clone(),
            A: a,
            modes,
            B: (self.p() > 0).then(|| from_matrix(&models[0].b)),
            G: from_matrix(&models[0].g),
            S: from_matrix(self.constraint.matrix()),
            s: self.constraint.rhs().iter().copied().collect(),
            sigma_w: self.sigma_w,
            sigma_v: self.sigma_v,
            sigma_u: (self.p() > 0).then_some(self.sigma_u),
            u_mean: (self.p() > 0).then_some(self.u_mean),
            x0_id: self.x0_id.iter().copied().collect(),
            x0_val: self.x0_val.iter().copied().collect(),
            N: self.n_id,
            N_val: Some(self.n_val),
            lambda: self.lambda,
            mu: (!self.mu.is_empty()).then(|| self.mu.clone()),
            theta0: Some(self.theta0.clone()),
            P0_scale: Some(self.p0_scale),
            seed: self.seed,
            S_uncertain: self
                .uncertain_constraint
                .as_ref()
                .map(|c| from_matrix(c.matrix())),
            s_uncertain: self
                .uncertain_constraint
                .as_ref()
                .map(|c| c.rhs().iter().copied().collect()),
            s_published: self.s_published,
            sample_period: self.sample_period,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?)
    }

    /// Loads a JSON file, or a preset when `arg` names one and no such file exists.
    pub fn resolve(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if path.exists() {
            return Self::load(path);
        }
        preset(arg).ok_or_else(|| {
            Error::Scenario(format!(
                "{arg}: no such file or preset (presets: {})",
                PRESETS.join(", ")
            ))
        })
    }
}

pub const PRESETS: [&str; 3] = ["compartmental-ti", "compartmental-tv", "forest"];

pub fn preset(name: &str) -> Option<Scenario> {
    match name {
        "compartmental-ti" => Some(compartmental_ti()),
        "compartmental-tv" => Some(compartmental_tv()),
        "forest" => Some(forest()),
        _ => None,
    }
}

/// Three compartments exchanging mass, `x₁ + x₂ + x₃ = 3`, no input.
pub fn compartmental_ti() -> Scenario {
    let a = compartmental_a1();
    Scenario {
        name: "compartmental-ti".into(),
        dynamics: Dynamics::Invariant(
            StateSpaceModel::new(a, DMatrix::zeros(3, 0), compartmental_g())
                .expect("preset dimensions"),
        ),
        constraint: StateConstraint::single(&[1.0, 1.0, 1.0], 3.0).expect("full rank"),
        uncertain_constraint: Some(
            StateConstraint::single(&[1.4, 0.9, 1.2], 3.5).expect("full rank"),
        ),
        sigma_w: 1.0,
        sigma_v: 0.1,
        sigma_u: 0.0,
        u_mean: 1.0,
        x0_id: DVector::from_element(3, 1.0),
        x0_val: DVector::from_vec(vec![2.0, 1.0, 0.0]),
        n_id: 200,
        n_val: 200,
        lambda: None,
        mu: vec![5e3, 5e4],
        theta0: ThetaInit::Fixed(vec![0.0; 9]),
        p0_scale: 1e3,
        seed: 2024,
        s_published: None,
        sample_period: None,
    }
}

/// Same compartments switching between three modes, `x₁ + x₂ + x₃ = 50`.
pub fn compartmental_tv() -> Scenario {
    let g = compartmental_g();
    let modes = [compartmental_a1(), compartmental_a2(), compartmental_a3()]
        .into_iter()
        .map(|a| {
            StateSpaceModel::new(a, DMatrix::zeros(3, 0), g.clone()).expect("preset dimensions")
        })
        .collect();
    Scenario {
        name: "compartmental-tv".into(),
        dynamics: Dynamics::equal_windows(modes, 200).expect("three modes"),
        constraint: StateConstraint::single(&[1.0, 1.0, 1.0], 50.0).expect("full rank"),
        uncertain_constraint: None,
        sigma_w: 10.0,
        sigma_v: 1.0,
        sigma_u: 0.0,
        u_mean: 1.0,
        x0_id: DVector::from_vec(vec![20.0, 20.0, 10.0]),
        x0_val: DVector::from_vec(vec![15.0, 10.0, 25.0]),
        n_id: 200,
        n_val: 200,
        lambda: Some(0.95),
        mu: Vec::new(),
        theta0: ThetaInit::Random { normal: 1.0 },
        p0_scale: 1e4,
        seed: 2025,
        s_published: None,
        sample_period: None,
    }
}

/// Nitrogen flow among five forest compartments with a noisy unit input.
pub fn forest() -> Scenario {
    let x0_id = forest_x0_id();
    let total = x0_id.sum();
    Scenario {
        name: "forest".into(),
        dynamics: Dynamics::Invariant(
            StateSpaceModel::new(forest_a(), forest_b(), forest_g()).expect("preset dimensions"),
        ),
        constraint: StateConstraint::single(&[1.0; 5], total).expect("full rank"),
        uncertain_constraint: None,
        sigma_w: 1.0,
        sigma_v: 1.0,
        sigma_u: 0.1,
        u_mean: 1.0,
        x0_id,
        x0_val: DVector::from_vec(vec![72.2, 381.5, 101.5, 1264.0, 128.0]),
        n_id: 400,
        n_val: 400,
        lambda: None,
        mu: Vec::new(),
        theta0: ThetaInit::Fixed(Vec::new()),
        p0_scale: 1e3,
        seed: 2026,
        s_published: Some(1.9472e3),
        sample_period: Some(0.1),
    }
}
