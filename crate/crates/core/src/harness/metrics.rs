use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{csv_err, io_err, Result};

/// One finished training episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Environment steps taken when the episode ended.
    pub global_step: u64,
    pub episode_index: u64,
    pub episode_return: f64,
    pub success: bool,
    pub running_success_rate: f64,
    pub epsilon: f64,
    /// Moving average of the TD loss; empty before the first update.
    pub loss: Option<f64>,
}

impl MetricsRecord {
    pub const HEADER: [&'static str; 7] = [
        "global_step",
        "episode_index",
        "episode_return",
        "success",
        "running_success_rate",
        "epsilon",
        "loss",
    ];
}

/// Mean of the last `min(window, n)` flags; 0 for an empty history.
pub fn running_success_rate(history: &[bool], window: usize) -> f64 {
    let tail = &history[history.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().filter(|s| **s).count() as f64 / tail.len() as f64
}

/// Streams records to a CSV file, flushing after every row.
pub struct MetricsWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    /// Truncates `path` and writes the header.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = Self::wrap(path, file);
        w.inner
            .write_record(MetricsRecord::HEADER)
            .map_err(csv_err(&w.path))?;
        w.flush()?;
        Ok(w)
    }

    /// Appends to an existing file, or creates it with a header.
    pub fn append(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() || std::fs::metadata(path).map_err(io_err(path))?.len() == 0 {
            return Self::create(path);
        }
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self::wrap(path.to_path_buf(), file))
    }

    fn wrap(path: PathBuf, file: File) -> Self {
        let inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        MetricsWriter { path, inner }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        self.inner.serialize(record).map_err(csv_err(&self.path))?;
        self.flush()
    }

    fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(io_err(&self.path))
    }
}

/// Writes `records` to `path` as a fresh CSV file.
pub fn export_metrics(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    records.iter().try_for_each(|r| w.write(r))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    reader
        .deserialize()
        .map(|r| r.map_err(csv_err(path)))
        .collect()
}
