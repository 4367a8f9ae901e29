//! Training trace: JSON lines, one record per logging interval.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use agentmix_core::train::StepRecord;
use serde::{Deserialize, Serialize};

use crate::dataset_io::json_err;
use crate::error::{io, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub epoch: u64,
    pub bce: f64,
    pub pg_loss: f64,
    pub shap_loss: f64,
    pub total: f64,
    pub kl: Option<f64>,
    pub weights: Vec<Vec<f64>>,
    pub phi_instant: Option<Vec<Vec<f64>>>,
    pub phi_ema: Option<Vec<Vec<f64>>>,
    pub advantage: Option<Vec<Vec<f64>>>,
}

impl From<&StepRecord> for TraceRecord {
    fn from(r: &StepRecord) -> Self {
        TraceRecord {
            step: r.step,
            epoch: r.epoch,
            bce: r.loss.bce,
            pg_loss: r.loss.pg,
            shap_loss: r.loss.shap,
            total: r.loss.total,
            kl: r.kl,
            weights: r.weights.to_rows(),
            phi_instant: r.phi_instant.as_ref().map(|m| m.to_rows()),
            phi_ema: r.phi_ema.as_ref().map(|m| m.to_rows()),
            advantage: r.advantage.as_ref().map(|a| a.advantage.to_rows()),
        }
    }
}

pub struct TraceWriter {
    path: PathBuf,
    out: BufWriter<File>,
    interval: u64,
}

impl TraceWriter {
    /// Records every `interval`-th step (steps are 0-based) plus whatever
    /// [`TraceWriter::finish`] is handed.
    pub fn create(path: &Path, interval: u64) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io(dir))?;
        }
        let file = File::create(path).map_err(io(path))?;
        Ok(TraceWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            interval: interval.max(1),
        })
    }

    pub fn wants(&self, step: u64) -> bool {
        step.is_multiple_of(self.interval)
    }

    pub fn write(&mut self, record: &StepRecord) -> Result<()> {
        let line = serde_json::to_string(&TraceRecord::from(record)).map_err(json_err)?;
        writeln!(self.out, "{line}").map_err(io(&self.path))
    }

    /// Writes `last` if it was not already logged, then flushes.
    pub fn finish(mut self, last: Option<&StepRecord>) -> Result<()> {
        if let Some(r) = last.filter(|r| !self.wants(r.step)) {
            self.write(r)?;
        }
        self.out.flush().map_err(io(&self.path))
    }
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| crate::Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
