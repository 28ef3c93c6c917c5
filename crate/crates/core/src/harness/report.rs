//! CSV and JSON writers for summaries, histograms and estimates.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BiasReport, RmseSummary};
use crate::error::{Error, Result};
use crate::estimators::{Method, ParamEstimate};
use crate::simulator::scenarios::from_matrix;
use crate::simulator::trajectory::fmt_f64;

pub const SUMMARY_HEADER: [&str; 6] = [
    "method",
    "state",
    "rmse_mean",
    "rmse_std",
    "constraint_violation_max",
    "failures",
];

/// One row per method (and mode) and state; states are one-based.
pub fn write_summary_csv<W: Write>(summary: &RmseSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for e in &summary.entries {
        for i in 0..summary.n {
            w.write_record([
                e.label(),
                (i + 1).to_string(),
                fmt_f64(e.rmse_mean[i]),
                fmt_f64(e.rmse_std[i]),
                fmt_f64(e.constraint_violation_max),
                e.failures.len().to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-run RMSE in long form: `method,run,state,rmse`. Runs are numbered
/// among the successful ones.
pub fn write_runs_csv<W: Write>(summary: &RmseSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "run", "state", "rmse"])
        .map_err(csv_err)?;
    for e in &summary.entries {
        let label = e.label();
        for (r, row) in e.rmse_runs.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                w.write_record([
                    label.clone(),
                    r.to_string(),
                    (i + 1).to_string(),
                    fmt_f64(*v),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `method,run,reason` for every failed realization.
pub fn write_failures_csv<W: Write>(summary: &RmseSummary, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "run", "reason"])
        .map_err(csv_err)?;
    for e in summary
        .entries
        .iter()
        .filter(|e| e.mode.is_none_or(|m| m == 0))
    {
        for f in &e.failures {
            w.write_record([e.spec.to_string(), f.run.to_string(), f.reason.clone()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `mode,state,bin,lower,upper,<count per method>`; mode is empty for
/// time-invariant studies.
pub fn write_histogram_csv<W: Write>(summary: &RmseSummary, bins: usize, out: W) -> Result<()> {
    let hists = summary.histograms(bins);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "mode".to_string(),
        "state".into(),
        "bin".into(),
        "lower".into(),
        "upper".into(),
    ];
    let mut labels: Vec<String> = Vec::new();
    for e in &summary.entries {
        if !labels.contains(&e.spec.to_string()) {
            labels.push(e.spec.to_string());
        }
    }
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for h in &hists {
        for b in 0..h.edges.len() - 1 {
            let mut row = vec![
                h.mode.map_or(String::new(), |m| (m + 1).to_string()),
                (h.state + 1).to_string(),
                b.to_string(),
                fmt_f64(h.edges[b]),
                fmt_f64(h.edges[b + 1]),
            ];
            row.extend(h.counts.iter().map(|(_, c)| c[b].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_bias_csv<W: Write>(report: &BiasReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "component",
        "true_value",
        "mean",
        "bias",
        "std_err",
        "flagged",
    ])
    .map_err(csv_err)?;
    for c in &report.components {
        w.write_record([
            (c.index + 1).to_string(),
            fmt_f64(c.true_value),
            fmt_f64(c.mean),
            fmt_f64(c.bias),
            fmt_f64(c.std_err),
            c.flagged.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `state,rmse` rows for a single validation.
pub fn write_rmse_csv<W: Write>(scores: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "rmse"]).map_err(csv_err)?;
    for (i, v) in scores.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*v)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// On-disk form of a [`ParamEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub method: String,
    #[serde(rename = "A_hat")]
    pub a_hat: Vec<Vec<f64>>,
    #[serde(rename = "B_hat")]
    pub b_hat: Option<Vec<Vec<f64>>>,
    pub theta: Vec<f64>,
    pub constraint_residual: Option<f64>,
}

impl From<&ParamEstimate> for EstimateFile {
    fn from(e: &ParamEstimate) -> Self {
        EstimateFile {
            method: e.method.key().to_string(),
            a_hat: from_matrix(&e.a_hat),
            b_hat: e.b_hat.as_ref().map(from_matrix),
            theta: e.theta.iter().copied().collect(),
            constraint_residual: e.constraint_residual,
        }
    }
}

impl EstimateFile {
    /// Rebuilds the estimate from `theta`, checking that the matrices agree.
    pub fn to_estimate(&self) -> Result<ParamEstimate> {
        let method: Method = self.method.parse()?;
        let n = self.a_hat.len();
        let p = self
            .b_hat
            .as_ref()
            .map_or(0, |b| b.first().map_or(0, Vec::len));
        let mut est =
            ParamEstimate::new(DVector::from_vec(self.theta.clone()), n, p, method, None)?;
        est.constraint_residual = self.constraint_residual;
        let rows = |m: &DMatrix<f64>| from_matrix(m);
        if rows(&est.a_hat) != self.a_hat || est.b_hat.as_ref().map(rows) != self.b_hat {
            return Err(Error::Data("A_hat/B_hat disagree with theta".into()));
        }
        Ok(est)
    }
}

pub fn write_estimate_json<W: Write>(estimate: &ParamEstimate, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &EstimateFile::from(estimate))?;
    writeln!(out)?;
    Ok(())
}

pub fn read_estimate_json<R: std::io::Read>(input: R) -> Result<ParamEstimate> {
    let file: EstimateFile = serde_json::from_reader(input)?;
    file.to_estimate()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}
