//! Cyclic partition of the primitive set into an under-training group, which
//! is rendered and optimized, and a cached group, which is left untouched.

mod importance;
mod sampling;
mod schedule;

pub use importance::ImportanceState;
pub use sampling::{probabilities, resample, sample_weights, Strategy, WEIGHT_FLOOR};
pub use schedule::{Action, Schedule, Scope};

use crate::error::{Result, SplatError};
use crate::model::retain_parallel;

/// Under-training/cached split stored as a membership mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    mask: Vec<bool>,
    pub created_at: usize,
    /// `None` for a merged (full) partition.
    pub strategy: Option<Strategy>,
    pub utr: f64,
}

impl GroupPartition {
    /// Every primitive under training.
    pub fn full(n: usize, created_at: usize) -> Self {
        Self { mask: vec![true; n], created_at, strategy: None, utr: 1.0 }
    }

    pub fn from_mask(mask: Vec<bool>, created_at: usize, strategy: Option<Strategy>, utr: f64) -> Self {
        Self { mask, created_at, strategy, utr }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_under_training(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn under_training(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mask[i]).collect()
    }

    pub fn cached(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.mask[i]).collect()
    }

    pub fn under_training_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_merged(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    /// Groups merged back into one fully trainable set.
    pub fn merge(&self, iteration: usize) -> Self {
        Self::full(self.len(), iteration)
    }

    pub fn retain_rows(&mut self, keep: &[bool]) {
        retain_parallel(&mut self.mask, keep);
    }

    /// New primitives join the under-training group.
    pub fn grow(&mut self, n: usize) {
        self.mask.resize(self.mask.len() + n, true);
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(SplatError::Dimension(format!("partition has {} rows, set has {n}", self.len())));
        }
        Ok(())
    }
}
