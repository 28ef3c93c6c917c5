use nalgebra::DVector;

use super::{map_runs, Execution};
use crate::error::{Error, Result};
use crate::estimators::{build_regression, ls_batch, vectorize_params};
use crate::simulator::Scenario;

/// Threshold, in standard errors, above which a bias component is flagged.
pub const FLAG_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BiasComponent {
    pub index: usize,
    pub true_value: f64,
    pub mean: f64,
    pub bias: f64,
    /// Sample standard deviation over `√runs`.
    pub std_err: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct BiasReport {
    pub runs: usize,
    pub sigma_v: f64,
    pub components: Vec<BiasComponent>,
}

impl BiasReport {
    pub fn flagged(&self) -> usize {
        self.components.iter().filter(|c| c.flagged).count()
    }

    pub fn max_abs_bias(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.bias.abs())
            .fold(0.0, f64::max)
    }
}

/// Empirical bias of plain LS over `runs` realizations seeded
/// `base_seed + i`. Only time-invariant scenarios have a single true θ.
pub fn bias_study(
    scenario: &Scenario,
    runs: usize,
    base_seed: u64,
    execution: Execution,
) -> Result<BiasReport> {
    if runs < 2 {
        return Err(Error::InvalidParameter(
            "bias study needs at least 2 runs".into(),
        ));
    }
    if scenario.is_switching() {
        return Err(Error::Scenario(format!(
            "{} is switching; no single true θ",
            scenario.name
        )));
    }
    let model = &scenario.dynamics.models()[0];
    let truth = vectorize_params(&model.a, (scenario.p() > 0).then_some(&model.b));
    let estimates = map_runs(runs, execution, |i| -> Result<DVector<f64>> {
        let traj = scenario.identification_data(base_seed.wrapping_add(i as u64))?;
        Ok(ls_batch(&build_regression(&traj)?)?.theta)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let count = runs as f64;
    let components = (0..truth.len())
        .map(|j| {
            let mean = estimates.iter().map(|t| t[j]).sum::<f64>() / count;
            let var = estimates.iter().map(|t| (t[j] - mean).powi(2)).sum::<f64>() / (count - 1.0);
            let std_err = (var / count).sqrt();
            let bias = mean - truth[j];
            BiasComponent {
                index: j,
                true_value: truth[j],
                mean,
                bias,
                std_err,
                flagged: bias.abs() > FLAG_SIGMAS * std_err,
            }
        })
        .collect();
    Ok(BiasReport {
        runs,
        sigma_v: scenario.sigma_v,
        components,
    })
}
