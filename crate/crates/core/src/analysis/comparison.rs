//! Trains several variants on the same scene and budget and tabulates them.

use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::grouping::{Scope, Strategy};
use crate::harness::{train_synthetic, TrainConfig, TrainOutcome};

use super::run_metrics::write_csv;

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub name: String,
    pub config: TrainConfig,
}

impl Variant {
    pub fn new(name: impl Into<String>, config: TrainConfig) -> Self {
        Self { name: name.into(), config }
    }
}

/// Baseline plus every sampling strategy, all sharing `base`'s seed and budget.
pub fn standard_variants(base: &TrainConfig) -> Vec<Variant> {
    let mut baseline = base.clone();
    baseline.grouping.enabled = false;
    let mut out = vec![Variant::new("baseline", baseline)];
    for s in Strategy::ALL {
        let mut c = base.clone();
        c.grouping.enabled = true;
        c.grouping.strategy = s;
        out.push(Variant::new(s.name(), c));
    }
    out
}

/// `variants` repeated once per scope.
pub fn with_scopes(variants: &[Variant]) -> Vec<Variant> {
    let mut out = Vec::new();
    for scope in [Scope::DensifyOnly, Scope::Full] {
        for v in variants {
            if !v.config.grouping.enabled {
                if scope == Scope::Full {
                    out.push(v.clone());
                }
                continue;
            }
            let mut c = v.config.clone();
            c.grouping.scope = scope;
            let tag = match scope {
                Scope::DensifyOnly => "densify_only",
                Scope::Full => "full",
            };
            out.push(Variant::new(format!("{}/{tag}", v.name), c));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub variant: String,
    pub grouped: bool,
    pub strategy: String,
    pub utr: f64,
    pub seed: u64,
    pub iterations: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub blended_ops: u64,
    pub hits: u64,
    pub wall_ms: f64,
    pub primitives: usize,
    /// `ok`, or the error that stopped the variant.
    pub status: String,
}

impl ComparisonRow {
    fn from_outcome(v: &Variant, outcome: &TrainOutcome) -> Self {
        let eval = outcome.metrics.final_eval();
        Self {
            status: "ok".into(),
            psnr: eval.map_or(f64::NAN, |e| e.psnr),
            ssim: eval.map_or(f64::NAN, |e| e.ssim),
            blended_ops: outcome.metrics.total_blended_ops(),
            hits: outcome.metrics.total_hits(),
            wall_ms: outcome.metrics.total_wall_ms(),
            primitives: outcome.model.len(),
            ..Self::failed(v, String::new())
        }
    }

    fn failed(v: &Variant, status: String) -> Self {
        let c = &v.config;
        Self {
            variant: v.name.clone(),
            grouped: c.grouping.enabled,
            strategy: if c.grouping.enabled { c.grouping.strategy.name().into() } else { "-".into() },
            utr: if c.grouping.enabled { c.grouping.utr } else { 1.0 },
            seed: c.seed,
            iterations: c.iterations,
            psnr: f64::NAN,
            ssim: f64::NAN,
            blended_ops: 0,
            hits: 0,
            wall_ms: 0.0,
            primitives: 0,
            status,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Trains every variant in order. A failing variant is recorded and the rest still run;
/// `on_done` sees each finished outcome.
pub fn run_comparison_with(
    variants: &[Variant],
    mut on_done: impl FnMut(&Variant, &TrainOutcome) -> Result<()>,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for v in variants {
        match train_synthetic(&v.config) {
            Ok((_, outcome)) => {
                rows.push(ComparisonRow::from_outcome(v, &outcome));
                on_done(v, &outcome)?;
            }
            Err(e) => rows.push(ComparisonRow::failed(v, e.to_string())),
        }
    }
    Ok(rows)
}

pub fn run_comparison(variants: &[Variant]) -> Result<Vec<ComparisonRow>> {
    run_comparison_with(variants, |_, _| Ok(()))
}

/// Writes `comparison.csv`.
pub fn write_comparison(rows: &[ComparisonRow], dir: &Path) -> Result<()> {
    write_csv(&dir.join("comparison.csv"), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SceneSpec;

    fn tiny() -> TrainConfig {
        TrainConfig {
            iterations: 60,
            schedule_scale: 0.002,
            scene: SceneSpec { gt_count: 40, views: 5, width: 24, height: 24, init_count: 20, ..SceneSpec::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn variant_sets() {
        let v = standard_variants(&tiny());
        assert_eq!(v.len(), 1 + Strategy::ALL.len());
        assert!(!v[0].config.grouping.enabled);
        let s = with_scopes(&v);
        assert_eq!(s.len(), 1 + 2 * Strategy::ALL.len());
        assert_eq!(s.iter().filter(|v| v.name == "baseline").count(), 1);
    }

    #[test]
    fn unit_ratio_matches_baseline() {
        let base = tiny();
        let mut unit = base.clone();
        unit.grouping.utr = 1.0;
        let mut baseline = base.clone();
        baseline.grouping.enabled = false;
        let rows = run_comparison(&[Variant::new("baseline", baseline), Variant::new("utr1", unit)]).unwrap();
        assert!(rows.iter().all(ComparisonRow::ok));
        assert_eq!(rows[0].psnr, rows[1].psnr);
        assert_eq!(rows[0].blended_ops, rows[1].blended_ops);
        assert_eq!(rows[0].primitives, rows[1].primitives);
    }

    #[test]
    fn failures_are_recorded() {
        let mut bad = tiny();
        bad.grouping.utr = 3.0;
        let rows = run_comparison(&[Variant::new("bad", bad), Variant::new("good", tiny())]).unwrap();
        assert!(!rows[0].ok());
        assert!(rows[0].status.contains("utr"));
        assert!(rows[1].ok());
        let dir = tempfile::tempdir().unwrap();
        write_comparison(&rows, dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap().lines().count(), 3);
    }
}
