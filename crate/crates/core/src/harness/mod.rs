//! Simulate → identify → validate pipelines and Monte Carlo studies.

mod bias;
pub mod exec;
mod montecarlo;
pub mod report;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::estimators::{
    self, build_regression, recursive::RecursiveKind, Method, ParamEstimate, RecursiveEstimator,
    RegressionData,
};
use crate::simulator::{
    simulate, Dynamics, InputSpec, NoiseSpec, Scenario, StateSpaceModel, Trajectory,
};

pub use bias::{bias_study, BiasComponent, BiasReport};
pub use exec::{map_runs, Execution};
pub use montecarlo::{
    monte_carlo, monte_carlo_tv, Histogram, MethodSummary, MonteCarloConfig, RmseSummary,
    RunFailure,
};

/// Salt mixed into a realization seed to draw the recursive initial guess.
const THETA_SALT: u64 = 0x7e7a_0000_0000_0001;

/// An estimator together with its tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    /// Relaxation weight (rCLS).
    pub mu: Option<f64>,
    /// Forgetting factor (RWLS, RWCLS); falls back to the scenario's.
    pub lambda: Option<f64>,
    /// Use the scenario's uncertain constraint instead of the nominal one.
    pub uncertain: bool,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec {
            method,
            mu: None,
            lambda: None,
            uncertain: false,
        }
    }

    pub fn relaxed(mu: f64, uncertain: bool) -> Self {
        MethodSpec {
            mu: Some(mu),
            uncertain,
            ..MethodSpec::new(Method::RclsRelaxed)
        }
    }

    pub fn with_lambda(method: Method, lambda: f64) -> Self {
        MethodSpec {
            lambda: Some(lambda),
            ..MethodSpec::new(method)
        }
    }
}

/// Canonical form `key[:mu=X][:lambda=X][:uncertain]`, also accepted by `FromStr`.
impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.method.key())?;
        if let Some(mu) = self.mu {
            write!(f, ":mu={mu:e}")?;
        }
        if let Some(lambda) = self.lambda {
            write!(f, ":lambda={lambda}")?;
        }
        if self.uncertain {
            f.write_str(":uncertain")?;
        }
        Ok(())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let method: Method = parts.next().unwrap_or_default().parse()?;
        let mut spec = MethodSpec::new(method);
        for part in parts {
            let bad = || Error::InvalidParameter(format!("bad method option {part:?} in {s:?}"));
            match part.split_once('=') {
                Some(("mu", v)) => spec.mu = Some(v.parse().map_err(|_| bad())?),
                Some(("lambda", v)) => spec.lambda = Some(v.parse().map_err(|_| bad())?),
                None if part == "uncertain" => spec.uncertain = true,
                _ => return Err(bad()),
            }
        }
        if spec.mu.is_some() && method != Method::RclsRelaxed {
            return Err(Error::InvalidParameter(format!(
                "mu only applies to rcls-relaxed: {s:?}"
            )));
        }
        if spec.lambda.is_some() && !matches!(method, Method::Rwls | Method::Rwcls) {
            return Err(Error::InvalidParameter(format!(
                "lambda only applies to rwls/rwcls: {s:?}"
            )));
        }
        Ok(spec)
    }
}

/// Outcome of one identification: the final estimate and the largest
/// constraint residual over every estimate the method produced.
#[derive(Debug, Clone)]
pub struct Identified {
    pub estimate: ParamEstimate,
    pub max_violation: f64,
    /// For recursive methods on switching scenarios, the estimate held at the
    /// end of each mode window.
    pub per_mode: Vec<ParamEstimate>,
}

/// Runs `spec` on `reg`. `theta_seed` drives a random initial guess, if the
/// scenario asks for one. Recursive methods snapshot their estimate at every
/// window end of `windows` (sample counts); batch methods ignore it.
pub fn identify(
    scenario: &Scenario,
    spec: &MethodSpec,
    reg: &RegressionData,
    theta_seed: u64,
    windows: &[usize],
) -> Result<Identified> {
    let constraint = scenario.vectorized(spec.uncertain)?;
    let nominal = scenario.vectorized(false)?;
    let with_residual = |mut e: ParamEstimate, vc: &_| {
        let v = crate::constraint_map::VectorizedConstraint::residual(vc, &e.theta);
        e.constraint_residual = Some(v);
        (e, v)
    };
    match spec.method {
        Method::Ls => {
            let (estimate, v) = with_residual(estimators::ls_batch(reg)?, &nominal);
            Ok(Identified {
                estimate,
                max_violation: v,
                per_mode: Vec::new(),
            })
        }
        Method::Cls => {
            let (estimate, v) =
                with_residual(estimators::cls_batch(reg, &constraint)?, &constraint);
            Ok(Identified {
                estimate,
                max_violation: v,
                per_mode: Vec::new(),
            })
        }
        Method::RclsRelaxed => {
            let mu = spec
                .mu
                .ok_or_else(|| Error::InvalidParameter("rcls-relaxed needs mu".into()))?;
            let (estimate, v) =
                with_residual(estimators::rcls_relaxed(reg, &constraint, mu)?, &constraint);
            Ok(Identified {
                estimate,
                max_violation: v,
                per_mode: Vec::new(),
            })
        }
        Method::Rcls | Method::Rwls | Method::Rwcls => {
            let lambda = || {
                spec.lambda
                    .or(scenario.lambda)
                    .ok_or_else(|| Error::InvalidParameter(format!("{} needs lambda", spec.method)))
            };
            let kind = match spec.method {
                Method::Rcls => RecursiveKind::Rcls,
                Method::Rwls => RecursiveKind::Rwls { lambda: lambda()? },
                _ => RecursiveKind::Rwcls { lambda: lambda()? },
            };
            let k = scenario.n_params();
            let theta0 = scenario.theta0.draw(k, theta_seed ^ THETA_SALT)?;
            let p0 = DMatrix::identity(k, k) * scenario.p0_scale;
            let mut est =
                RecursiveEstimator::new(kind, &theta0, &p0, Some(constraint), reg.n, reg.p)?;
            let mut per_mode = Vec::with_capacity(windows.len());
            let mut next_window = windows.iter().peekable();
            for sample in 0..reg.samples {
                est.feed_sample(reg, sample)?;
                while next_window.peek().is_some_and(|&&end| end == sample + 1) {
                    per_mode.push(est.estimate()?);
                    next_window.next();
                }
            }
            Ok(Identified {
                estimate: est.estimate()?,
                max_violation: est.max_violation(),
                per_mode,
            })
        }
    }
}

/// Identifies from a trajectory; convenience wrapper around [`identify`].
pub fn identify_trajectory(
    scenario: &Scenario,
    spec: &MethodSpec,
    traj: &Trajectory,
    theta_seed: u64,
) -> Result<Identified> {
    let reg = build_regression(traj)?;
    identify(scenario, spec, &reg, theta_seed, &[])
}

/// Noise-free simulation of the identified model: `x̂⁺ = Âx̂ + B̂u`.
/// Returns `x̂_0..x̂_N`.
pub fn free_run(
    estimate: &ParamEstimate,
    x0: &DVector<f64>,
    inputs: &InputSpec,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    let n = estimate.n();
    let b = estimate
        .b_hat
        .clone()
        .unwrap_or_else(|| DMatrix::zeros(n, 0));
    let model = StateSpaceModel::new(estimate.a_hat.clone(), b, DMatrix::zeros(n, 0))?;
    Ok(simulate(
        &Dynamics::Invariant(model),
        x0,
        inputs,
        &NoiseSpec::noise_free(),
        steps,
    )?
    .x)
}

/// Per-state root-mean-square error over the given samples.
pub fn rmse(truth: &[DVector<f64>], estimate: &[DVector<f64>]) -> Result<Vec<f64>> {
    check_dim("sequence length", truth.len(), estimate.len())?;
    if truth.is_empty() {
        return Err(Error::Data("empty sequences".into()));
    }
    let n = truth[0].len();
    let mut acc = vec![0.0; n];
    for (x, xh) in truth.iter().zip(estimate) {
        check_dim("state dimension", n, x.len())?;
        check_dim("state dimension", n, xh.len())?;
        for i in 0..n {
            acc[i] += (x[i] - xh[i]).powi(2);
        }
    }
    let count = truth.len() as f64;
    Ok(acc.into_iter().map(|s| (s / count).sqrt()).collect())
}

/// Free-runs `estimate` on the validation setup of `mode` and scores it
/// against the noise-free truth over `k = 1..N_val`. Also returns the
/// free-run trajectory.
pub fn validate(
    scenario: &Scenario,
    estimate: &ParamEstimate,
    mode: usize,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let truth = scenario.validation_truth(mode)?;
    validate_against(scenario, estimate, &truth)
}

fn validate_against(
    scenario: &Scenario,
    estimate: &ParamEstimate,
    truth: &Trajectory,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let run = free_run(
        estimate,
        &scenario.x0_val,
        &scenario.validation_inputs(),
        scenario.n_val,
    )?;
    let scores = rmse(&truth.x[1..], &run[1..])?;
    Ok((scores, run))
}
