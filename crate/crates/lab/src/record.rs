//! One trial's result and its CSV / JSON-lines persistence.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::config::Method;
use crate::error::{LabError, LabResult};

pub const CSV_HEADER: [&str; 9] = ["trial_id", "n", "N", "c", "seed", "method", "index", "degenerate", "millis"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub trial_id: u64,
    pub n: usize,
    #[serde(rename = "N")]
    pub steps: usize,
    pub c: f64,
    /// Seed of this trial's own random stream.
    pub seed: u64,
    pub method: Method,
    /// Missing when the trial was degenerate or failed.
    pub index: Option<i64>,
    pub degenerate: bool,
    pub millis: f64,
}

impl ExperimentRecord {
    /// The record with its wall time zeroed, for comparisons across runs.
    pub fn without_timing(&self) -> Self {
        ExperimentRecord { millis: 0.0, ..self.clone() }
    }

    pub fn key(&self) -> (u64, u64) {
        (self.c.to_bits(), self.trial_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RecordFormat {
    #[default]
    Csv,
    Jsonl,
}

impl RecordFormat {
    pub fn extension(self) -> &'static str {
        match self {
            RecordFormat::Csv => "csv",
            RecordFormat::Jsonl => "jsonl",
        }
    }

    /// Guesses the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json") => RecordFormat::Jsonl,
            _ => RecordFormat::Csv,
        }
    }
}

/// Appends records to a file, one flush per record, so an interrupted run
/// keeps every finished trial.
pub struct RecordWriter {
    format: RecordFormat,
    out: BufWriter<File>,
}

impl RecordWriter {
    /// Opens `path` for appending. A partial last line left by an
    /// interrupted write is cut off first, so new records start on a fresh line.
    pub fn append(path: &Path, format: RecordFormat) -> LabResult<Self> {
        drop_partial_line(path)?;
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut out = BufWriter::new(file);
        if fresh && format == RecordFormat::Csv {
            writeln!(out, "{}", CSV_HEADER.join(","))?;
            out.flush()?;
        }
        Ok(RecordWriter { format, out })
    }

    pub fn write(&mut self, record: &ExperimentRecord) -> LabResult<()> {
        match self.format {
            RecordFormat::Csv => {
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
                w.serialize(record)?;
                let line = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
                self.out.write_all(&line)?;
            }
            RecordFormat::Jsonl => {
                serde_json::to_writer(&mut self.out, record)?;
                self.out.write_all(b"\n")?;
            }
        }
        self.out.flush()?;
        Ok(())
    }
}

fn drop_partial_line(path: &Path) -> LabResult<()> {
    let Ok(bytes) = std::fs::read(path) else { return Ok(()) };
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    log::warn!("dropping a partial record at the end of {}", path.display());
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    Ok(())
}

pub fn write_records(path: &Path, format: RecordFormat, records: &[ExperimentRecord]) -> LabResult<()> {
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    let mut w = RecordWriter::append(path, format)?;
    records.iter().try_for_each(|r| w.write(r))
}

/// Reads every record of a file; a missing file yields no records. A
/// truncated last line (from an interrupted write) is skipped.
pub fn read_records(path: &Path, format: RecordFormat) -> LabResult<Vec<ExperimentRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = File::open(path)?;
    match format {
        RecordFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            let rows: Vec<Result<ExperimentRecord, csv::Error>> = reader.deserialize().collect();
            let last = rows.len().saturating_sub(1);
            let mut out = Vec::with_capacity(rows.len());
            for (i, row) in rows.into_iter().enumerate() {
                match row {
                    Ok(r) => out.push(r),
                    Err(e) if i == last => log::warn!("skipping truncated last record: {e}"),
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(out)
        }
        RecordFormat::Jsonl => {
            let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
            let last = lines.len().saturating_sub(1);
            let mut out = Vec::with_capacity(lines.len());
            for (i, line) in lines.iter().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                match serde_json::from_str(line) {
                    Ok(r) => out.push(r),
                    Err(e) if i == last => log::warn!("skipping truncated last record: {e}"),
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<ExperimentRecord> {
        vec![
            ExperimentRecord {
                trial_id: 0,
                n: 1,
                steps: 100,
                c: 0.1 + 0.2,
                seed: u64::MAX,
                method: Method::Winding,
                index: Some(-3),
                degenerate: false,
                millis: 1.25,
            },
            ExperimentRecord {
                trial_id: 1,
                n: 1,
                steps: 100,
                c: 5.0,
                seed: 17,
                method: Method::Riccati,
                index: None,
                degenerate: true,
                millis: 0.5,
            },
        ]
    }

    #[test]
    fn round_trips_losslessly() {
        let dir = tempfile::tempdir().unwrap();
        for format in [RecordFormat::Csv, RecordFormat::Jsonl] {
            let path = dir.path().join(format!("r.{}", format.extension()));
            write_records(&path, format, &sample()).unwrap();
            assert_eq!(read_records(&path, format).unwrap(), sample());
        }
        let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert!(text.starts_with("trial_id,n,N,c,seed,method,index,degenerate,millis\n"));
        assert!(text.contains(",riccati,,true,"));
    }

    #[test]
    fn appending_keeps_one_header_and_tolerates_a_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let recs = sample();
        RecordWriter::append(&path, RecordFormat::Csv).unwrap().write(&recs[0]).unwrap();
        RecordWriter::append(&path, RecordFormat::Csv).unwrap().write(&recs[1]).unwrap();
        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"2,1,100,5").unwrap();
        assert_eq!(read_records(&path, RecordFormat::Csv).unwrap(), recs);
        RecordWriter::append(&path, RecordFormat::Csv).unwrap().write(&recs[0]).unwrap();
        let mut expected = recs.clone();
        expected.push(recs[0].clone());
        assert_eq!(read_records(&path, RecordFormat::Csv).unwrap(), expected);
    }
}
