//! Data generation for `x⁺ = A x + B u + G w`, `y = x + v`.

mod model;
pub mod scenarios;
pub(crate) mod trajectory;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};

pub use model::StateSpaceModel;
pub use scenarios::{Scenario, ScenarioFile, ThetaInit};
pub use trajectory::Trajectory;

/// Generator used for every random draw in the crate.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws a vector of independent `N(0, σ²)` samples.
pub fn normal_vector(rng: &mut Rng, len: usize, sigma: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    })
}

/// A mode takes over from `start` (a transition index) until the next window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeWindow {
    pub start: usize,
    pub model_id: usize,
}

/// Plant dynamics, either fixed or switching on a schedule.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Invariant(StateSpaceModel),
    Switching {
        modes: Vec<StateSpaceModel>,
        schedule: Vec<ModeWindow>,
    },
}

impl Dynamics {
    /// Splits `steps_per_mode · modes.len()` transitions into equal consecutive windows.
    pub fn equal_windows(modes: Vec<StateSpaceModel>, steps_per_mode: usize) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Scenario(
                "switching dynamics need at least one mode".into(),
            ));
        }
        let n = modes[0].n();
        let p = modes[0].p();
        for m in &modes {
            check_dim("mode state dimension", n, m.n())?;
            check_dim("mode input dimension", p, m.p())?;
        }
        let schedule = (0..modes.len())
            .map(|i| ModeWindow {
                start: i * steps_per_mode,
                model_id: i,
            })
            .collect();
        Ok(Dynamics::Switching { modes, schedule })
    }

    pub fn models(&self) -> &[StateSpaceModel] {
        match self {
            Dynamics::Invariant(m) => std::slice::from_ref(m),
            Dynamics::Switching { modes, .. } => modes,
        }
    }

    pub fn schedule(&self) -> Vec<ModeWindow> {
        match self {
            Dynamics::Invariant(_) => vec![ModeWindow {
                start: 0,
                model_id: 0,
            }],
            Dynamics::Switching { schedule, .. } => schedule.clone(),
        }
    }

    /// Index of the model driving transition `k → k+1`.
    pub fn mode_at(&self, k: usize) -> usize {
        match self {
            Dynamics::Invariant(_) => 0,
            Dynamics::Switching { schedule, .. } => schedule
                .iter()
                .rev()
                .find(|w| w.start <= k)
                .map_or(schedule[0].model_id, |w| w.model_id),
        }
    }

    pub fn n(&self) -> usize {
        self.models()[0].n()
    }

    pub fn p(&self) -> usize {
        self.models()[0].p()
    }

    pub fn q(&self) -> usize {
        self.models()[0].q()
    }
}

/// Input sequence fed to the plant.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    None,
    /// `u_k = mean + σ·w_k` with `w_k` white standard normal, one draw per channel.
    White {
        mean: f64,
        sigma: f64,
    },
    Given(Vec<DVector<f64>>),
}

impl InputSpec {
    fn realize(&self, rng: &mut Rng, p: usize, steps: usize) -> Result<Vec<DVector<f64>>> {
        match self {
            InputSpec::None => {
                if p > 0 {
                    return Err(Error::InvalidParameter(format!(
                        "model has {p} inputs but no input sequence was given"
                    )));
                }
                Ok(Vec::new())
            }
            InputSpec::White { mean, sigma } => Ok((0..steps)
                .map(|_| normal_vector(rng, p, *sigma).add_scalar(*mean))
                .collect()),
            InputSpec::Given(seq) => {
                if seq.len() < steps {
                    return Err(Error::DimensionMismatch {
                        what: "input sequence length",
                        expected: steps,
                        found: seq.len(),
                    });
                }
                for u in seq {
                    check_dim("input dimension p", p, u.len())?;
                }
                Ok(seq[..steps].to_vec())
            }
        }
    }
}

/// Process and measurement noise levels: `Q = σ_w² I_q`, `R = σ_v² Iₙ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noise_free() -> Self {
        NoiseSpec {
            sigma_w: 0.0,
            sigma_v: 0.0,
            seed: 0,
        }
    }
}

/// Runs `steps` transitions from `x0`.
///
/// Draw order per transition is input then process noise; measurement noise
/// for `y_0..y_N` is drawn afterwards. The result is a pure function of the
/// arguments.
pub fn simulate(
    dynamics: &Dynamics,
    x0: &DVector<f64>,
    inputs: &InputSpec,
    noise: &NoiseSpec,
    steps: usize,
) -> Result<Trajectory> {
    let n = dynamics.n();
    let p = dynamics.p();
    let q = dynamics.q();
    check_dim("initial state length", n, x0.len())?;
    if noise.sigma_w < 0.0 || noise.sigma_v < 0.0 {
        return Err(Error::InvalidParameter(
            "noise levels must be nonnegative".into(),
        ));
    }
    let mut rng = seeded_rng(noise.seed);
    let u = inputs.realize(&mut rng, p, steps)?;

    let mut x = Vec::with_capacity(steps + 1);
    x.push(x0.clone());
    for k in 0..steps {
        let model = &dynamics.models()[dynamics.mode_at(k)];
        let w = normal_vector(&mut rng, q, noise.sigma_w);
        let next = model.step(&x[k], u.get(k), Some(&w));
        x.push(next);
    }
    let y = x
        .iter()
        .map(|xk| xk + normal_vector(&mut rng, n, noise.sigma_v))
        .collect();
    Ok(Trajectory {
        x,
        y,
        u,
        mode_schedule: dynamics.schedule(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::scenarios::{compartmental_a1, compartmental_g};
    use nalgebra::DMatrix;

    fn a1_model() -> StateSpaceModel {
        StateSpaceModel::new(compartmental_a1(), DMatrix::zeros(3, 0), compartmental_g()).unwrap()
    }

    #[test]
    fn noise_free_run_conserves_mass() {
        let dyn_ = Dynamics::Invariant(a1_model());
        let x0 = DVector::from_element(3, 1.0);
        let traj = simulate(&dyn_, &x0, &InputSpec::None, &NoiseSpec::noise_free(), 1000).unwrap();
        for xk in &traj.x {
            assert!((xk.sum() - 3.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn process_noise_stays_on_the_plane() {
        let dyn_ = Dynamics::Invariant(a1_model());
        let x0 = DVector::from_element(3, 1.0);
        let noise = NoiseSpec {
            sigma_w: 1.0,
            sigma_v: 0.0,
            seed: 7,
        };
        let traj = simulate(&dyn_, &x0, &InputSpec::None, &noise, 1000).unwrap();
        assert!(traj.x.iter().all(|xk| (xk.sum() - 3.0).abs() <= 1e-10));
        assert!(traj.x[10] != traj.x[0]);
        assert_eq!(traj.x, traj.y);
    }

    #[test]
    fn identity_dynamics_hold_still() {
        let dyn_ =
            Dynamics::Invariant(StateSpaceModel::autonomous(DMatrix::identity(2, 2)).unwrap());
        let x0 = DVector::from_vec(vec![0.3, -1.2]);
        let traj = simulate(&dyn_, &x0, &InputSpec::None, &NoiseSpec::noise_free(), 50).unwrap();
        assert!(traj.x.iter().all(|xk| xk == &x0));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let dyn_ = Dynamics::Invariant(a1_model());
        let x0 = DVector::from_element(3, 1.0);
        let noise = NoiseSpec {
            sigma_w: 1.0,
            sigma_v: 0.1,
            seed: 99,
        };
        let a = simulate(&dyn_, &x0, &InputSpec::None, &noise, 200).unwrap();
        let b = simulate(&dyn_, &x0, &InputSpec::None, &noise, 200).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_input_is_an_error() {
        let model = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::from_element(2, 1, 0.0),
            DMatrix::zeros(2, 0),
        )
        .unwrap();
        let x0 = DVector::zeros(2);
        let err = simulate(
            &Dynamics::Invariant(model),
            &x0,
            &InputSpec::None,
            &NoiseSpec::noise_free(),
            5,
        );
        assert!(err.is_err());
        let bad_x0 = DVector::zeros(4);
        let err = simulate(
            &Dynamics::Invariant(a1_model()),
            &bad_x0,
            &InputSpec::None,
            &NoiseSpec::noise_free(),
            5,
        );
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn switching_schedule_selects_modes() {
        let m = a1_model();
        let dyn_ = Dynamics::equal_windows(vec![m.clone(), m.clone(), m], 10).unwrap();
        assert_eq!(dyn_.mode_at(0), 0);
        assert_eq!(dyn_.mode_at(9), 0);
        assert_eq!(dyn_.mode_at(10), 1);
        assert_eq!(dyn_.mode_at(29), 2);
        assert_eq!(dyn_.mode_at(500), 2);
    }
}
