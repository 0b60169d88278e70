use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};

/// Range of iterations over which grouping is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Only during densification; merged for good afterwards.
    DensifyOnly,
    /// The whole run.
    Full,
}

/// What the grouping machinery does at a given iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    None,
    Resample,
    MergeDensify,
    MergeOptimize,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::None => "none",
            Action::Resample => "resample",
            Action::MergeDensify => "merge_densify",
            Action::MergeOptimize => "merge_optimize",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub group_interval: usize,
    pub activate_at: usize,
    pub merge_densify_at: usize,
    pub merge_optimize_at: usize,
    /// Last iteration of the densification phase.
    pub densify_end: usize,
    pub total: usize,
    pub scope: Scope,
    pub cyclic_resample: bool,
    pub global_densify: bool,
    pub global_optimize: bool,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.group_interval == 0 {
            return Err(SplatError::Config("group_interval must be positive".into()));
        }
        if !(self.activate_at < self.merge_densify_at
            && self.merge_densify_at < self.merge_optimize_at
            && self.merge_optimize_at <= self.total)
        {
            return Err(SplatError::Config(format!(
                "need activate_at < merge_densify_at < merge_optimize_at <= iterations, got {} / {} / {} / {}",
                self.activate_at, self.merge_densify_at, self.merge_optimize_at, self.total
            )));
        }
        Ok(())
    }

    /// Decides the action at `iteration`, which callers visit in increasing order.
    pub fn tick(&self, iteration: usize) -> Action {
        let it = iteration;
        if it < self.activate_at {
            return Action::None;
        }
        if self.global_densify && it == self.merge_densify_at {
            return Action::MergeDensify;
        }
        if self.global_optimize && it == self.merge_optimize_at {
            return Action::MergeOptimize;
        }
        if self.scope == Scope::DensifyOnly && it == self.densify_end {
            return Action::MergeOptimize;
        }
        if !self.cyclic_resample {
            return Action::None;
        }
        if self.global_densify && (self.merge_densify_at..=self.densify_end).contains(&it) {
            return Action::None;
        }
        if self.global_optimize && it >= self.merge_optimize_at {
            return Action::None;
        }
        if self.scope == Scope::DensifyOnly && it >= self.densify_end {
            return Action::None;
        }
        if (it - self.activate_at) % self.group_interval == 0 {
            Action::Resample
        } else {
            Action::None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk() -> Schedule {
        Schedule {
            group_interval: 50,
            activate_at: 100,
            merge_densify_at: 1450,
            merge_optimize_at: 2900,
            densify_end: 1500,
            total: 3000,
            scope: Scope::Full,
            cyclic_resample: true,
            global_densify: true,
            global_optimize: true,
        }
    }

    fn actions(s: &Schedule) -> Vec<(usize, Action)> {
        (1..=s.total).map(|it| (it, s.tick(it))).filter(|(_, a)| *a != Action::None).collect()
    }

    #[test]
    fn before_activation_nothing_happens() {
        assert!((1..100).all(|it| desk().tick(it) == Action::None));
        assert_eq!(desk().tick(100), Action::Resample);
    }

    #[test]
    fn merge_points() {
        let s = desk();
        assert_eq!(s.tick(1450), Action::MergeDensify);
        assert_eq!(s.tick(1500), Action::None);
        assert_eq!(s.tick(1550), Action::Resample);
        assert_eq!(s.tick(2850), Action::Resample);
        assert_eq!(s.tick(2900), Action::MergeOptimize);
        assert!((2901..=3000).all(|it| s.tick(it) == Action::None));
    }

    #[test]
    fn no_cyclic_resample_never_resamples() {
        let s = Schedule { cyclic_resample: false, ..desk() };
        assert!(actions(&s).iter().all(|(_, a)| *a != Action::Resample));
    }

    #[test]
    fn densify_only_scope_stops_at_densify_end() {
        let s = Schedule { scope: Scope::DensifyOnly, ..desk() };
        let acts = actions(&s);
        assert_eq!(acts.last(), Some(&(2900, Action::MergeOptimize)));
        assert!(acts.iter().filter(|(it, _)| *it > 1500 && *it < 2900).count() == 0);
        assert_eq!(s.tick(1500), Action::MergeOptimize);
    }

    #[test]
    fn ablation_without_global_densify_keeps_resampling() {
        let s = Schedule { global_densify: false, ..desk() };
        assert_eq!(s.tick(1450), Action::Resample);
        assert_eq!(s.tick(1500), Action::Resample);
    }

    #[test]
    fn validation() {
        assert!(desk().validate().is_ok());
        assert!(Schedule { merge_densify_at: 50, ..desk() }.validate().is_err());
        assert!(Schedule { merge_optimize_at: 3001, ..desk() }.validate().is_err());
        assert!(Schedule { group_interval: 0, ..desk() }.validate().is_err());
    }
}
