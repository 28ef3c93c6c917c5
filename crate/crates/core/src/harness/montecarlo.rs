use nalgebra::DVector;

use super::{identify, validate_against, Execution, MethodSpec};
use crate::error::{Error, Result};
use crate::estimators::build_regression;
use crate::simulator::{Scenario, Trajectory};

/// A Monte Carlo study: `runs` noise realizations, each identified by every
/// method in `methods`. Realization `i` uses seed `base_seed + i`, so
/// results do not depend on method order or scheduling.
#[derive(Debug, Clone)]
pub struct MonteCarloConfig {
    /// Carries the identification and validation lengths (`n_id`, `n_val`).
    pub scenario: Scenario,
    pub runs: usize,
    pub methods: Vec<MethodSpec>,
    pub base_seed: u64,
    pub execution: Execution,
}

impl MonteCarloConfig {
    pub fn new(scenario: Scenario, runs: usize, methods: Vec<MethodSpec>, base_seed: u64) -> Self {
        MonteCarloConfig {
            scenario,
            runs,
            methods,
            base_seed,
            execution: Execution::default(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods given".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub run: usize,
    pub reason: String,
}

/// Statistics of one method (and, for switching scenarios, one mode).
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub spec: MethodSpec,
    /// Zero-based mode index for switching scenarios.
    pub mode: Option<usize>,
    /// Per-state mean over successful runs.
    pub rmse_mean: Vec<f64>,
    /// Per-state population standard deviation over successful runs.
    pub rmse_std: Vec<f64>,
    /// `rmse_runs[r][i]`: RMSE of state `i` in the r-th successful run.
    pub rmse_runs: Vec<Vec<f64>>,
    /// Per-state variance of the free-run trajectories across runs,
    /// averaged over the validation horizon.
    pub trajectory_variance: Vec<f64>,
    /// Largest `‖Dθ − d‖_max` seen over every estimate the method produced.
    pub constraint_violation_max: f64,
    pub failures: Vec<RunFailure>,
}

impl MethodSummary {
    /// CSV label: the method spec, suffixed with `@modeK` (one-based) when per-mode.
    pub fn label(&self) -> String {
        match self.mode {
            Some(m) => format!("{}@mode{}", self.spec, m + 1),
            None => self.spec.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RmseSummary {
    pub runs: usize,
    pub n: usize,
    pub entries: Vec<MethodSummary>,
}

/// Counts per method on shared equal-width bins for one state.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub state: usize,
    pub mode: Option<usize>,
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    /// `(label, counts)` per method.
    pub counts: Vec<(String, Vec<usize>)>,
}

impl RmseSummary {
    pub fn find(&self, spec: &MethodSpec, mode: Option<usize>) -> Option<&MethodSummary> {
        self.entries
            .iter()
            .find(|e| &e.spec == spec && e.mode == mode)
    }

    pub fn total_failures(&self) -> usize {
        self.entries.iter().map(|e| e.failures.len()).sum()
    }

    /// Histograms of per-run RMSE with `bins` equal-width bins spanning the
    /// pooled range of all methods, per state and mode.
    pub fn histograms(&self, bins: usize) -> Vec<Histogram> {
        let bins = bins.max(1);
        let mut modes: Vec<Option<usize>> = self.entries.iter().map(|e| e.mode).collect();
        modes.dedup();
        let mut out = Vec::new();
        for mode in modes {
            let entries: Vec<&MethodSummary> =
                self.entries.iter().filter(|e| e.mode == mode).collect();
            for state in 0..self.n {
                let values = || {
                    entries
                        .iter()
                        .flat_map(|e| e.rmse_runs.iter().map(move |r| r[state]))
                        .filter(|v| v.is_finite())
                };
                let (mut lo, mut hi) = values()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    });
                if !lo.is_finite() {
                    (lo, hi) = (0.0, 1.0);
                } else if hi <= lo {
                    (lo, hi) = (lo - 0.5, hi + 0.5);
                }
                let width = (hi - lo) / bins as f64;
                let edges = (0..=bins)
                    .map(|b| if b == bins { hi } else { lo + width * b as f64 })
                    .collect();
                let counts = entries
                    .iter()
                    .map(|e| {
                        let mut c = vec![0usize; bins];
                        for v in e
                            .rmse_runs
                            .iter()
                            .map(|r| r[state])
                            .filter(|v| v.is_finite())
                        {
                            let b = (((v - lo) / width) as usize).min(bins - 1);
                            c[b] += 1;
                        }
                        (e.label(), c)
                    })
                    .collect();
                out.push(Histogram {
                    state,
                    mode,
                    edges,
                    counts,
                });
            }
        }
        out
    }
}

/// What one method produced in one realization, per validated mode.
struct MethodRun {
    rmse: Vec<Vec<f64>>,
    free: Vec<Vec<DVector<f64>>>,
    violation: f64,
}

fn run_realization(
    cfg: &MonteCarloConfig,
    truths: &[Trajectory],
    windows: &[usize],
    run: usize,
) -> Vec<Result<MethodRun, String>> {
    let seed = cfg.base_seed.wrapping_add(run as u64);
    let reg = cfg
        .scenario
        .identification_data(seed)
        .and_then(|traj| build_regression(&traj));
    let reg = match reg {
        Ok(r) => r,
        Err(e) => return cfg.methods.iter().map(|_| Err(e.to_string())).collect(),
    };
    cfg.methods
        .iter()
        .map(|spec| {
            let found =
                identify(&cfg.scenario, spec, &reg, seed, windows).map_err(|e| e.to_string())?;
            let estimates = if windows.is_empty() {
                vec![found.estimate]
            } else {
                found.per_mode
            };
            let mut out = MethodRun {
                rmse: Vec::with_capacity(truths.len()),
                free: Vec::with_capacity(truths.len()),
                violation: found.max_violation,
            };
            for (est, truth) in estimates.iter().zip(truths) {
                let (scores, mut traj) =
                    validate_against(&cfg.scenario, est, truth).map_err(|e| e.to_string())?;
                traj.remove(0);
                out.rmse.push(scores);
                out.free.push(traj);
            }
            Ok(out)
        })
        .collect()
}

fn summarize(
    cfg: &MonteCarloConfig,
    results: Vec<Vec<Result<MethodRun, String>>>,
    per_mode: bool,
) -> RmseSummary {
    let n = cfg.scenario.n();
    let modes = if per_mode { cfg.scenario.modes() } else { 1 };
    let mut entries = Vec::new();
    for (j, spec) in cfg.methods.iter().enumerate() {
        let mut failures = Vec::new();
        let mut ok: Vec<&MethodRun> = Vec::new();
        for (run, per_run) in results.iter().enumerate() {
            match &per_run[j] {
                Ok(r) => ok.push(r),
                Err(reason) => failures.push(RunFailure {
                    run,
                    reason: reason.clone(),
                }),
            }
        }
        let violation = ok.iter().map(|r| r.violation).fold(0.0, f64::max);
        for mode in 0..modes {
            let rmse_runs: Vec<Vec<f64>> = ok.iter().map(|r| r.rmse[mode].clone()).collect();
            let (rmse_mean, rmse_std) = mean_std(&rmse_runs, n);
            let trajectories: Vec<&Vec<DVector<f64>>> = ok.iter().map(|r| &r.free[mode]).collect();
            entries.push(MethodSummary {
                spec: spec.clone(),
                mode: per_mode.then_some(mode),
                rmse_mean,
                rmse_std,
                rmse_runs,
                trajectory_variance: trajectory_variance(&trajectories, n),
                constraint_violation_max: violation,
                failures: failures.clone(),
            });
        }
    }
    RmseSummary {
        runs: cfg.runs,
        n,
        entries,
    }
}

/// Per-component mean and population standard deviation.
fn mean_std(rows: &[Vec<f64>], n: usize) -> (Vec<f64>, Vec<f64>) {
    if rows.is_empty() {
        return (vec![f64::NAN; n], vec![f64::NAN; n]);
    }
    let count = rows.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / count)
        .collect();
    let std = (0..n)
        .map(|i| (rows.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / count).sqrt())
        .collect();
    (mean, std)
}

fn trajectory_variance(runs: &[&Vec<DVector<f64>>], n: usize) -> Vec<f64> {
    let Some(first) = runs.first() else {
        return vec![f64::NAN; n];
    };
    let count = runs.len() as f64;
    let horizon = first.len();
    let mut acc = vec![0.0; n];
    for k in 0..horizon {
        for (i, slot) in acc.iter_mut().enumerate() {
            let mean = runs.iter().map(|t| t[k][i]).sum::<f64>() / count;
            *slot += runs.iter().map(|t| (t[k][i] - mean).powi(2)).sum::<f64>() / count;
        }
    }
    acc.into_iter().map(|v| v / horizon as f64).collect()
}

/// Monte Carlo study on a time-invariant scenario.
pub fn monte_carlo(cfg: &MonteCarloConfig) -> Result<RmseSummary> {
    cfg.check()?;
    if cfg.scenario.is_switching() {
        return Err(Error::Scenario(format!(
            "{} is switching; use the per-mode study",
            cfg.scenario.name
        )));
    }
    let truths = vec![cfg.scenario.validation_truth(0)?];
    let results = super::map_runs(cfg.runs, cfg.execution, |run| {
        run_realization(cfg, &truths, &[], run)
    });
    Ok(summarize(cfg, results, false))
}

/// Monte Carlo study on a switching scenario. Recursive estimators run over
/// the whole record; the estimate held at the end of each mode window is
/// validated against that mode's dynamics.
pub fn monte_carlo_tv(cfg: &MonteCarloConfig) -> Result<RmseSummary> {
    cfg.check()?;
    if let Some(spec) = cfg.methods.iter().find(|m| !m.method.is_recursive()) {
        return Err(Error::InvalidParameter(format!(
            "{spec} is a batch method; the per-mode study needs recursive methods"
        )));
    }
    let sc = &cfg.scenario;
    let truths = (0..sc.modes())
        .map(|m| sc.validation_truth(m))
        .collect::<Result<Vec<_>>>()?;
    let windows: Vec<usize> = (1..=sc.modes()).map(|m| m * sc.n_id).collect();
    let results = super::map_runs(cfg.runs, cfg.execution, |run| {
        run_realization(cfg, &truths, &windows, run)
    });
    Ok(summarize(cfg, results, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Method;
    use crate::simulator::scenarios;

    fn small(methods: Vec<MethodSpec>, execution: Execution) -> MonteCarloConfig {
        let mut sc = scenarios::compartmental_ti();
        sc.n_id = 60;
        sc.n_val = 40;
        MonteCarloConfig {
            execution,
            ..MonteCarloConfig::new(sc, 6, methods, 11)
        }
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let ls = MethodSpec::new(Method::Ls);
        let cls = MethodSpec::new(Method::Cls);
        let a = monte_carlo(&small(vec![ls.clone(), cls.clone()], Execution::Sequential)).unwrap();
        let b = monte_carlo(&small(vec![cls.clone(), ls.clone()], Execution::Parallel)).unwrap();
        for spec in [&ls, &cls] {
            let (x, y) = (a.find(spec, None).unwrap(), b.find(spec, None).unwrap());
            assert_eq!(x.rmse_mean, y.rmse_mean);
            assert_eq!(x.rmse_std, y.rmse_std);
            assert_eq!(x.trajectory_variance, y.trajectory_variance);
        }
        assert_eq!(a.total_failures(), 0);
    }

    #[test]
    fn histogram_counts_every_finite_run() {
        let cfg = small(
            vec![MethodSpec::new(Method::Ls), MethodSpec::new(Method::Cls)],
            Execution::Sequential,
        );
        let summary = monte_carlo(&cfg).unwrap();
        let hists = summary.histograms(30);
        assert_eq!(hists.len(), 3);
        for h in &hists {
            assert_eq!(h.edges.len(), 31);
            for (_, c) in &h.counts {
                assert_eq!(c.iter().sum::<usize>(), cfg.runs);
            }
        }
    }

    #[test]
    fn per_mode_study_rejects_batch_methods() {
        let mut sc = scenarios::compartmental_tv();
        sc.n_id = 30;
        let cfg = MonteCarloConfig::new(sc, 1, vec![MethodSpec::new(Method::Cls)], 0);
        assert!(monte_carlo_tv(&cfg).is_err());
        assert!(monte_carlo(&MonteCarloConfig::new(
            cfg.scenario.clone(),
            1,
            vec![MethodSpec::new(Method::Ls)],
            0
        ))
        .is_err());
    }

    #[test]
    fn failures_are_recorded_not_raised() {
        // Too few samples for a full-rank regressor.
        let mut cfg = small(vec![MethodSpec::new(Method::Ls)], Execution::Sequential);
        cfg.scenario.n_id = 2;
        let s = monte_carlo(&cfg).unwrap();
        assert_eq!(s.total_failures(), cfg.runs);
        assert!(s.entries[0].rmse_mean[0].is_nan());
    }

    #[test]
    fn mean_std_uses_population_normalization() {
        let (m, s) = mean_std(&[vec![1.0], vec![3.0]], 1);
        assert_eq!(m, vec![2.0]);
        assert_eq!(s, vec![1.0]);
    }
}
