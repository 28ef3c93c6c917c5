use std::io::{Read, Write};

use nalgebra::DVector;

use super::ModeWindow;
use crate::error::{Error, Result};

/// States `x_0..x_N`, measurements `y_0..y_N` and inputs `u_0..u_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub mode_schedule: Vec<ModeWindow>,
}

impl Trajectory {
    /// Number of transitions `N`.
    pub fn len(&self) -> usize {
        self.x.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n(&self) -> usize {
        self.x.first().map_or(0, |x| x.len())
    }

    pub fn p(&self) -> usize {
        self.u.first().map_or(0, |u| u.len())
    }

    /// Model id driving transition `k → k+1`.
    pub fn mode_at(&self, k: usize) -> usize {
        self.mode_schedule
            .iter()
            .rev()
            .find(|w| w.start <= k)
            .map_or(0, |w| w.model_id)
    }

    /// CSV with columns `k, x_1..x_n, y_1..y_n, u_1..u_p, mode`; floats carry
    /// 17 significant digits so the file reads back bit-identical. The input
    /// cells of the last row are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.n();
        let p = self.p();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=n).map(|i| format!("y_{i}")));
        header.extend((1..=p).map(|i| format!("u_{i}")));
        header.push("mode".into());
        w.write_record(&header).map_err(csv_err)?;
        for k in 0..self.x.len() {
            let mut rec = vec![k.to_string()];
            rec.extend(self.x[k].iter().map(|v| fmt_f64(*v)));
            rec.extend(self.y[k].iter().map(|v| fmt_f64(*v)));
            match self.u.get(k) {
                Some(u) => rec.extend(u.iter().map(|v| fmt_f64(*v))),
                None => rec.extend(std::iter::repeat_n(String::new(), p)),
            }
            rec.push(
                self.mode_at(k.min(self.len().saturating_sub(1)))
                    .to_string(),
            );
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(csv_err)?.clone();
        let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
        let n = count("x_");
        let p = count("u_");
        if n == 0 || count("y_") != n || header.get(0) != Some("k") {
            return Err(Error::Data(
                "trajectory header must be k, x_1..x_n, y_1..y_n, u_1..u_p, mode".into(),
            ));
        }
        let mut traj = Trajectory {
            x: Vec::new(),
            y: Vec::new(),
            u: Vec::new(),
            mode_schedule: Vec::new(),
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::Data(format!("row {row}: missing column {i}")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {row}, column {i}: {e}")))
            };
            traj.x.push(DVector::from_iterator(
                n,
                (1..=n).map(field).collect::<Result<Vec<_>>>()?,
            ));
            traj.y.push(DVector::from_iterator(
                n,
                (n + 1..=2 * n).map(field).collect::<Result<Vec<_>>>()?,
            ));
            if p > 0 && !rec.get(2 * n + 1).unwrap_or("").trim().is_empty() {
                traj.u.push(DVector::from_iterator(
                    p,
                    (2 * n + 1..=2 * n + p)
                        .map(field)
                        .collect::<Result<Vec<_>>>()?,
                ));
            }
            let mode: usize = rec
                .get(2 * n + p + 1)
                .unwrap_or("0")
                .trim()
                .parse()
                .map_err(|e| Error::Data(format!("row {row}: bad mode: {e}")))?;
            if traj.mode_schedule.last().map(|w: &ModeWindow| w.model_id) != Some(mode) {
                traj.mode_schedule.push(ModeWindow {
                    start: row,
                    model_id: mode,
                });
            }
        }
        if traj.x.is_empty() {
            return Err(Error::Data("empty trajectory".into()));
        }
        if p > 0 && traj.u.len() + 1 != traj.x.len() {
            return Err(Error::Data(format!(
                "expected {} input rows, found {}",
                traj.x.len() - 1,
                traj.u.len()
            )));
        }
        Ok(traj)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}
