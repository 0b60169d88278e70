use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SplatError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub wall_ms: f64,
    /// Σ blend_counts over the training view's pixels.
    pub blended_ops: u64,
    pub primitives: usize,
    pub under_training: usize,
    /// Σ per_gaussian_hits over primitives.
    pub hits: u64,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalRecord {
    pub iteration: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionEvent {
    pub iteration: usize,
    pub action: &'static str,
    pub strategy: String,
    pub primitives: usize,
    pub under_training: usize,
    /// `|Σp − 1|` of the sampling distribution; zero for merges.
    pub probability_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensifyEvent {
    pub iteration: usize,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub primitives: usize,
    pub opacity_reset: bool,
}

/// Everything recorded during one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub iterations: Vec<IterationRecord>,
    pub evals: Vec<EvalRecord>,
    pub partitions: Vec<PartitionEvent>,
    pub densify: Vec<DensifyEvent>,
}

impl RunMetrics {
    pub fn total_blended_ops(&self) -> u64 {
        self.iterations.iter().map(|r| r.blended_ops).sum()
    }

    pub fn total_hits(&self) -> u64 {
        self.iterations.iter().map(|r| r.hits).sum()
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.iterations.iter().map(|r| r.wall_ms).sum()
    }

    pub fn final_eval(&self) -> Option<EvalRecord> {
        self.evals.last().copied()
    }

    pub fn final_primitives(&self) -> Option<usize> {
        self.iterations.last().map(|r| r.primitives)
    }

    /// Checks that iterations increase strictly.
    pub fn check(&self) -> Result<()> {
        for w in self.iterations.windows(2) {
            if w[1].iteration <= w[0].iteration {
                return Err(SplatError::InvalidArgument(format!(
                    "iteration records out of order at {}",
                    w[1].iteration
                )));
            }
        }
        Ok(())
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("iterations.csv"), &self.iterations)?;
        write_csv(&dir.join("evals.csv"), &self.evals)?;
        write_csv(&dir.join("partitions.csv"), &self.partitions)?;
        write_csv(&dir.join("densify.csv"), &self.densify)
    }
}

/// Writes `rows` with a header derived from the record's field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SplatError::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| SplatError::csv(path, e))?;
    }
    w.flush().map_err(|e| SplatError::io(path, e))
}
