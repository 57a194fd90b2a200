//! Raw index moments per c and their log-log growth rates.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sympwalk_core::stats::{fit_log_log, raw_moment, Estimate, LineFit};

use crate::error::{LabError, LabResult};
use crate::record::ExperimentRecord;

pub const MAX_MOMENT: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub c: f64,
    /// Trials with a defined index.
    pub trials: usize,
    pub degenerate: usize,
    pub failed: usize,
    /// E[index^k] for k = 1 ..= MAX_MOMENT.
    pub moments: Vec<Estimate>,
}

impl MomentRow {
    pub fn moment(&self, k: u32) -> Estimate {
        self.moments[(k - 1) as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MomentTable {
    pub rows: Vec<MomentRow>,
}

impl MomentTable {
    /// One row per c, in the order the values first appear.
    pub fn from_records(records: &[ExperimentRecord]) -> LabResult<Self> {
        let mut cs: Vec<f64> = Vec::new();
        for r in records {
            if !cs.contains(&r.c) {
                cs.push(r.c);
            }
        }
        let rows = cs
            .into_iter()
            .map(|c| {
                let here: Vec<_> = records.iter().filter(|r| r.c == c).collect();
                let idx: Vec<f64> = here.iter().filter_map(|r| r.index).map(|i| i as f64).collect();
                let moments = (1..=MAX_MOMENT)
                    .map(|k| raw_moment(&idx, k).map_err(LabError::from))
                    .collect::<LabResult<Vec<_>>>()?;
                Ok(MomentRow {
                    c,
                    trials: idx.len(),
                    degenerate: here.iter().filter(|r| r.degenerate).count(),
                    failed: here.iter().filter(|r| r.index.is_none() && !r.degenerate).count(),
                    moments,
                })
            })
            .collect::<LabResult<Vec<_>>>()?;
        Ok(MomentTable { rows })
    }

    pub fn header() -> Vec<String> {
        let mut h: Vec<String> = ["c", "trials", "degenerate", "failed"].iter().map(|s| s.to_string()).collect();
        for k in 1..=MAX_MOMENT {
            h.push(format!("M{k}"));
            h.push(format!("M{k}_se"));
        }
        h
    }

    pub fn write_csv(&self, path: &Path) -> LabResult<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(Self::header())?;
        for row in &self.rows {
            let mut fields =
                vec![row.c.to_string(), row.trials.to_string(), row.degenerate.to_string(), row.failed.to_string()];
            for m in &row.moments {
                fields.push(m.value.to_string());
                fields.push(m.se.to_string());
            }
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> LabResult<Self> {
        let mut r = csv::Reader::from_path(path)?;
        if r.headers()?.iter().collect::<Vec<_>>() != Self::header() {
            return Err(LabError::Validation(format!("{} is not a moment table", path.display())));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> LabResult<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| LabError::Validation(format!("bad field {i} in {}", path.display())))
            };
            let moments = (0..MAX_MOMENT as usize)
                .map(|k| Ok(Estimate { value: num(4 + 2 * k)?, se: num(5 + 2 * k)? }))
                .collect::<LabResult<Vec<_>>>()?;
            rows.push(MomentRow {
                c: num(0)?,
                trials: num(1)? as usize,
                degenerate: num(2)? as usize,
                failed: num(3)? as usize,
                moments,
            });
        }
        Ok(MomentTable { rows })
    }

    /// Log-log slope of each even moment against c. Rows where the moment is
    /// not positive are left out of that fit; moments with fewer than two
    /// usable rows get no fit.
    pub fn fit_slopes(&self) -> Vec<SlopeFit> {
        (2..=MAX_MOMENT)
            .step_by(2)
            .filter_map(|k| {
                let (cs, ms): (Vec<f64>, Vec<f64>) =
                    self.rows.iter().map(|r| (r.c, r.moment(k).value)).filter(|(_, m)| *m > 0.0).unzip();
                let excluded = self.rows.len() - cs.len();
                if excluded > 0 {
                    log::warn!("M{k}: {excluded} non-positive value(s) left out of the log-log fit");
                }
                fit_log_log(&cs, &ms).ok().map(|fit| SlopeFit { k, fit, points: cs.len(), excluded })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub k: u32,
    pub fit: LineFit,
    pub points: usize,
    pub excluded: usize,
}

pub fn write_slopes_csv(path: &Path, fits: &[SlopeFit]) -> LabResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "slope", "slope_se", "intercept", "points", "excluded"])?;
    for f in fits {
        w.write_record([
            f.k.to_string(),
            f.fit.slope.to_string(),
            f.fit.slope_se.to_string(),
            f.fit.intercept.to_string(),
            f.points.to_string(),
            f.excluded.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
