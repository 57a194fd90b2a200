//! Regenerates the published n = 3 moment table and compares it entry by
//! entry with the hard-coded values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::batch::run_batch_to_dir;
use crate::config::{ExperimentConfig, Method};
use crate::error::LabResult;
use crate::moments::{write_slopes_csv, MomentTable, SlopeFit};
use crate::plot::{histogram_report, moment_plot_svg, write_svg};
use crate::record::RecordFormat;

/// Published raw moments of the n = 3, N = 5000 index: c, then M1 ..= M8.
pub const PUBLISHED_TABLE: [[f64; 9]; 6] = [
    [5.0, -0.096, 2.104, -0.684, 14.272, -5.916, 173.824, -62.844, 2898.59],
    [10.0, -0.004, 4.032, -0.352, 44.856, 0.176, 749.592, 291.728, 15739.4],
    [15.0, 0.02, 5.72, 0.524, 92.072, 5.9, 2430.44, -728.596, 89878.0],
    [20.0, 0.11, 7.15, 4.106, 150.55, 187.37, 4944.07, 11437.5, 217410.0],
    [25.0, -0.062, 9.258, -1.718, 254.97, -271.862, 12454.0, -41352.8, 890818.0],
    [30.0, 0.068, 12.88, 11.624, 481.624, 837.608, 27475.2, 54846.1, 1.97698e6],
];

/// Trials per c behind the published table.
pub const PUBLISHED_TRIALS: usize = 500;
pub const APPENDIX_N: usize = 3;
pub const APPENDIX_STEPS: usize = 5000;

pub fn published_row(c: f64) -> Option<&'static [f64; 9]> {
    PUBLISHED_TABLE.iter().find(|r| r[0] == c)
}

/// Standard error of a published moment M_k, estimated from the published
/// M_2k as sqrt((M_2k - M_k^2) / 500). Available for k <= 4.
pub fn published_se(row: &[f64; 9], k: usize) -> Option<f64> {
    (2 * k <= 8).then(|| ((row[2 * k] - row[k] * row[k]).max(0.0) / PUBLISHED_TRIALS as f64).sqrt())
}

#[derive(Debug, Clone)]
pub struct AppendixOptions {
    pub quick: bool,
    pub seed: u64,
    pub segment_len: Option<usize>,
    pub format: RecordFormat,
    pub plot: bool,
}

impl Default for AppendixOptions {
    fn default() -> Self {
        AppendixOptions { quick: false, seed: 0, segment_len: Some(100), format: RecordFormat::Csv, plot: true }
    }
}

impl AppendixOptions {
    pub fn config(&self, out_dir: &Path) -> ExperimentConfig {
        let (c_values, trials) = if self.quick {
            (vec![5.0, 15.0, 30.0], 100)
        } else {
            (PUBLISHED_TABLE.iter().map(|r| r[0]).collect(), PUBLISHED_TRIALS as u64)
        };
        let mut cfg = ExperimentConfig::new(APPENDIX_N, APPENDIX_STEPS, c_values, trials, Method::Winding);
        cfg.seed = self.seed;
        cfg.segment_len = self.segment_len;
        cfg.out_dir = out_dir.to_path_buf();
        cfg.plot = self.plot;
        cfg
    }
}

/// One table entry next to its published counterpart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub c: f64,
    pub k: u32,
    pub ours: f64,
    pub ours_se: f64,
    pub published: f64,
    /// NaN when the published table does not determine it.
    pub published_se: f64,
    /// (ours - published) / sqrt(ours_se^2 + published_se^2), or against ours_se alone
    /// when published_se is unknown.
    pub z: f64,
}

pub fn compare_with_published(table: &MomentTable) -> Vec<Comparison> {
    let mut out = Vec::new();
    for row in &table.rows {
        let Some(published) = published_row(row.c) else { continue };
        for k in 1..=8u32 {
            let ours = row.moment(k);
            let p = published[k as usize];
            let pse = published_se(published, k as usize).unwrap_or(f64::NAN);
            let combined = if pse.is_nan() { ours.se } else { ours.se.hypot(pse) };
            out.push(Comparison { c: row.c, k, ours: ours.value, ours_se: ours.se, published: p, published_se: pse, z: (ours.value - p) / combined });
        }
    }
    out
}

fn write_comparison_csv(path: &Path, rows: &[Comparison]) -> LabResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["c", "k", "ours", "ours_se", "published", "published_se", "z"])?;
    for r in rows {
        w.write_record([r.c, r.k as f64, r.ours, r.ours_se, r.published, r.published_se, r.z].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppendixReport {
    pub quick: bool,
    pub table: MomentTable,
    pub fits: Vec<SlopeFit>,
    pub comparisons: Vec<Comparison>,
    /// Every M2 within 3 combined standard errors of the published value.
    pub m2_agrees: bool,
    /// Every M1 and M3 within 4 standard errors of 0.
    pub odd_vanish: bool,
    /// Excess kurtosis of the index at each c.
    pub kurtosis: Vec<(f64, f64)>,
    pub artifacts: Vec<PathBuf>,
}

impl AppendixReport {
    pub fn passes(&self) -> bool {
        self.m2_agrees && self.odd_vanish
    }
}

/// Runs (or resumes) the batch under `out_dir` and writes the table, slope
/// fits, comparison, histograms and report.
pub fn reproduce_appendix(out_dir: &Path, opts: &AppendixOptions) -> LabResult<AppendixReport> {
    let cfg = opts.config(out_dir);
    let batch = run_batch_to_dir(&cfg, out_dir, opts.format)?;
    let table = MomentTable::from_records(&batch.records)?;
    let fits = table.fit_slopes();
    let comparisons = compare_with_published(&table);
    let mut artifacts = vec![batch.records_path.clone()];

    let path = out_dir.join("moments.csv");
    table.write_csv(&path)?;
    artifacts.push(path);
    let path = out_dir.join("slopes.csv");
    write_slopes_csv(&path, &fits)?;
    artifacts.push(path);
    let path = out_dir.join("comparison.csv");
    write_comparison_csv(&path, &comparisons)?;
    artifacts.push(path);

    let mut kurtosis = Vec::new();
    for &c in &cfg.c_values {
        let idx: Vec<i64> = batch.records.iter().filter(|r| r.c == c).filter_map(|r| r.index).collect();
        let hist = histogram_report(&idx);
        kurtosis.push((c, hist.excess_kurtosis));
        let path = out_dir.join(format!("histogram_c{c}.csv"));
        hist.write_csv(&path)?;
        artifacts.push(path);
        if opts.plot {
            let path = out_dir.join(format!("histogram_c{c}.svg"));
            write_svg(&path, &hist.to_svg(&format!("index histogram, n = 3, c = {c}")))?;
            artifacts.push(path);
        }
    }
    if opts.plot {
        let path = out_dir.join("moments.svg");
        write_svg(&path, &moment_plot_svg(&table, &fits, &[2, 4]))?;
        artifacts.push(path);
    }

    let m2_agrees = comparisons.iter().filter(|r| r.k == 2).all(|r| r.z.abs() <= 3.0);
    let odd_vanish = table
        .rows
        .iter()
        .all(|r| [1, 3].iter().all(|&k| r.moment(k).value.abs() <= 4.0 * r.moment(k).se));
    let report = AppendixReport { quick: opts.quick, table, fits, comparisons, m2_agrees, odd_vanish, kurtosis, artifacts };
    let path = out_dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    let mut report = report;
    report.artifacts.push(path);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sympwalk_core::stats::fit_log_log;

    #[test]
    fn published_even_moments_grow_at_the_predicted_rates() {
        let c: Vec<f64> = PUBLISHED_TABLE.iter().map(|r| r[0]).collect();
        let m2: Vec<f64> = PUBLISHED_TABLE.iter().map(|r| r[2]).collect();
        let m4: Vec<f64> = PUBLISHED_TABLE.iter().map(|r| r[4]).collect();
        assert!((fit_log_log(&c, &m2).unwrap().slope - 1.0).abs() < 0.15);
        assert!((fit_log_log(&c, &m4).unwrap().slope - 2.0).abs() < 0.25);
    }

    #[test]
    fn published_standard_errors() {
        let row = published_row(5.0).unwrap();
        let se = published_se(row, 2).unwrap();
        assert!((se - ((14.272 - 2.104f64 * 2.104) / 500.0).sqrt()).abs() < 1e-12);
        assert!(published_se(row, 5).is_none());
        assert!(published_row(7.0).is_none());
    }
}
