//! Running trials: one index per (c, trial id), in parallel, with records
//! streamed to a single writer.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sympwalk_core::action::cz_index_hessian;
use sympwalk_core::riccati::{f_evolution, index_via_riccati, noise_endpoint};
use sympwalk_core::rng::rng_from_seed;
use sympwalk_core::sampling::{random_walk, ProductOrder, Scheme, WalkParams};
use sympwalk_core::sde::{index_from_theta, simulate_path, SdeParams};
use sympwalk_core::symplectic::det_minus_identity;
use sympwalk_core::winding::{cz_index_segmented, cz_index_winding, WindingOptions};
use sympwalk_core::{action::DiagonalScaling, Error};

use crate::config::{ExperimentConfig, Method};
use crate::error::{LabError, LabResult};
use crate::record::{read_records, ExperimentRecord, RecordFormat, RecordWriter};

/// The index of one trial, computed from its seed alone.
pub fn compute_index(cfg: &ExperimentConfig, c: f64, seed: u64) -> sympwalk_core::Result<i64> {
    let mut rng = rng_from_seed(seed);
    if cfg.method == Method::Sde {
        let params = SdeParams::new(c, 1.0, 1, seed);
        return index_from_theta(simulate_path(&params, &mut rng));
    }
    let path = random_walk(&cfg.walk_params(c, seed), &mut rng)?;
    match cfg.method {
        Method::Winding => match cfg.segment_len {
            Some(len) => cz_index_segmented(&path, len, &WindingOptions::default()).map(|s| s.index),
            None => cz_index_winding(&path, &WindingOptions::default()),
        },
        Method::Hessian => cz_index_hessian(&path).map(|h| h.index),
        Method::Riccati => {
            let noise = path.noise().ok_or_else(|| Error::InvalidParams("riccati trials need noise".into()))?;
            index_via_riccati(noise).map(|r| r.index)
        }
        Method::Sde => unreachable!("handled above"),
    }
}

pub fn run_trial(cfg: &ExperimentConfig, c: f64, trial_id: u64) -> ExperimentRecord {
    let seed = cfg.trial_seed(c, trial_id);
    let start = Instant::now();
    let result = compute_index(cfg, c, seed);
    let millis = start.elapsed().as_secs_f64() * 1e3;
    let (index, degenerate) = match result {
        Ok(v) => (Some(v), false),
        Err(e) if e.is_degenerate() => (None, true),
        Err(e) => {
            log::warn!("trial {trial_id} at c = {c} failed: {e}");
            (None, false)
        }
    };
    ExperimentRecord { trial_id, n: cfg.n, steps: cfg.steps, c, seed, method: cfg.method, index, degenerate, millis }
}

/// Recomputes a recorded trial from its seed.
pub fn replay(cfg: &ExperimentConfig, record: &ExperimentRecord) -> sympwalk_core::Result<i64> {
    let cfg = ExperimentConfig { n: record.n, steps: record.steps, method: record.method, ..cfg.clone() };
    compute_index(&cfg, record.c, record.seed)
}

/// Runs every (c, trial) pair of `cfg` not listed in `skip`, handing each
/// finished record to `sink` on the calling thread. Returns the new records
/// ordered by c and trial id.
pub fn run_batch(
    cfg: &ExperimentConfig,
    skip: &HashSet<(u64, u64)>,
    mut sink: impl FnMut(&ExperimentRecord) -> LabResult<()>,
) -> LabResult<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let jobs: Vec<(f64, u64)> = cfg
        .c_values
        .iter()
        .flat_map(|&c| (0..cfg.trials).map(move |t| (c, t)))
        .filter(|(c, t)| !skip.contains(&(c.to_bits(), *t)))
        .collect();
    let (tx, rx) = mpsc::channel();
    let mut records = Vec::with_capacity(jobs.len());
    std::thread::scope(|scope| -> LabResult<()> {
        scope.spawn(move || {
            jobs.par_iter().for_each_with(tx, |tx, &(c, t)| {
                // The receiver only disappears after an I/O error, which is reported there.
                let _ = tx.send(run_trial(cfg, c, t));
            });
        });
        for record in rx {
            sink(&record)?;
            records.push(record);
        }
        Ok(())
    })?;
    let position = |c: f64| cfg.c_values.iter().position(|&v| v == c).unwrap_or(usize::MAX);
    records.sort_by_key(|r| (position(r.c), r.trial_id));
    Ok(records)
}

/// Per-c counts of a finished batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub c: f64,
    pub trials: usize,
    pub degenerate: usize,
    pub failed: usize,
}

impl BatchSummary {
    pub fn degenerate_rate(&self) -> f64 {
        self.degenerate as f64 / self.trials.max(1) as f64
    }
}

pub fn summarize(c_values: &[f64], records: &[ExperimentRecord]) -> Vec<BatchSummary> {
    c_values
        .iter()
        .map(|&c| {
            let rows: Vec<_> = records.iter().filter(|r| r.c == c).collect();
            BatchSummary {
                c,
                trials: rows.len(),
                degenerate: rows.iter().filter(|r| r.degenerate).count(),
                failed: rows.iter().filter(|r| r.index.is_none() && !r.degenerate).count(),
            }
        })
        .collect()
}

/// Degenerate-trial rate above which a warning is logged.
pub const DEGENERATE_WARN_RATE: f64 = 0.01;

/// A batch persisted under an output directory.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub records_path: PathBuf,
    /// All records of this configuration, resumed ones included.
    pub records: Vec<ExperimentRecord>,
    pub resumed: usize,
    pub summaries: Vec<BatchSummary>,
}

/// Runs a batch into `dir/records.<ext>`, resuming from any records already
/// there for the same configuration.
pub fn run_batch_to_dir(cfg: &ExperimentConfig, dir: &Path, format: RecordFormat) -> LabResult<BatchOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let records_path = dir.join(format!("records.{}", format.extension()));
    let same_config = |r: &ExperimentRecord| {
        r.n == cfg.n && r.steps == cfg.steps && r.method == cfg.method && cfg.c_values.contains(&r.c) && r.trial_id < cfg.trials
    };
    let previous: Vec<ExperimentRecord> = read_records(&records_path, format)?.into_iter().filter(same_config).collect();
    let skip: HashSet<(u64, u64)> = previous.iter().map(ExperimentRecord::key).collect();
    let mut writer = RecordWriter::append(&records_path, format)?;
    let fresh = run_batch(cfg, &skip, |r| writer.write(r))?;
    let resumed = previous.len();
    let mut records = previous;
    records.extend(fresh);
    let position = |c: f64| cfg.c_values.iter().position(|&v| v == c).unwrap_or(usize::MAX);
    records.sort_by_key(|r| (position(r.c), r.trial_id));
    records.dedup_by_key(|r| r.key());
    let summaries = summarize(&cfg.c_values, &records);
    for s in &summaries {
        if s.degenerate_rate() > DEGENERATE_WARN_RATE {
            log::warn!(
                "c = {}: {:.1}% of trials were degenerate; check the tolerances",
                s.c,
                100.0 * s.degenerate_rate()
            );
        }
    }
    Ok(BatchOutcome { records_path, records, resumed, summaries })
}

/// The three n = 1 indices of one triangular, left-ordered walk.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMethodTrial {
    pub seed: u64,
    pub winding: Result<i64, String>,
    pub hessian: Result<i64, String>,
    pub riccati: Result<i64, String>,
    /// |det(S_N - I)| relative to |S_N|^2.
    pub endpoint_gap: f64,
    /// Distance of F(N, 0) / 2 pi from the nearest integer.
    pub count_gap: f64,
}

impl CrossMethodTrial {
    pub fn all_defined(&self) -> bool {
        self.winding.is_ok() && self.hessian.is_ok() && self.riccati.is_ok()
    }

    pub fn agree(&self) -> bool {
        matches!((&self.winding, &self.hessian, &self.riccati), (Ok(a), Ok(b), Ok(c)) if a == b && b == c)
    }

    /// Whether the trial sits close to a degeneracy of any of the methods.
    pub fn near_degenerate(&self, threshold: f64) -> bool {
        self.endpoint_gap < threshold || self.count_gap < threshold
    }
}

pub fn cross_method_trial(steps: usize, c: f64, seed: u64) -> LabResult<CrossMethodTrial> {
    let params = WalkParams::new(1, steps, c, seed).with_scheme(Scheme::Triangular).with_order(ProductOrder::Left);
    let path = random_walk(&params, &mut rng_from_seed(seed))?;
    let noise = path.noise().ok_or_else(|| LabError::Numerical("triangular walk without noise".into()))?;
    let end = noise_endpoint(noise);
    let scale = end.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let turns = f_evolution(noise, 0.0, noise.len(), DiagonalScaling::Exact)?.0 / (2.0 * std::f64::consts::PI);
    Ok(CrossMethodTrial {
        seed,
        winding: cz_index_winding(&path, &WindingOptions::default()).map_err(|e| e.to_string()),
        hessian: cz_index_hessian(&path).map(|h| h.index).map_err(|e| e.to_string()),
        riccati: index_via_riccati(noise).map(|r| r.index).map_err(|e| e.to_string()),
        endpoint_gap: det_minus_identity(&end).abs() / (scale * scale),
        count_gap: (turns - turns.round()).abs(),
    })
}
