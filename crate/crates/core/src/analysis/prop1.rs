//! Opacity and volume statistics of densification contributors against the
//! whole population, per densification step.

use std::path::Path;

use serde::Serialize;

use crate::densify::DensifyState;
use crate::error::Result;
use crate::harness::{train, TrainConfig};
use crate::scene::SyntheticScene;

use super::run_metrics::write_csv;

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop1Step {
    pub iteration: usize,
    pub population: usize,
    pub contributors: usize,
    pub population_mean_opacity: f64,
    /// NaN when no primitive triggered densification.
    pub contributor_mean_opacity: f64,
    pub population_mean_volume: f64,
    pub contributor_mean_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub iteration: usize,
    pub group: &'static str,
    pub quantity: &'static str,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop1Summary {
    pub steps: usize,
    pub steps_with_contributors: usize,
    /// Fraction of steps with contributors whose contributor mean opacity
    /// exceeds the population mean.
    pub opacity_fraction: f64,
    /// Pooled means over steps in the final third of densification.
    pub late_contributor_volume: f64,
    pub late_population_volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub steps: Vec<Prop1Step>,
    pub histograms: Vec<HistogramRow>,
    pub summary: Prop1Summary,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Counts of `values` in `HISTOGRAM_BINS` equal bins over `[lo, hi]`.
pub fn histogram(values: &[f64], lo: f64, hi: f64) -> Vec<usize> {
    let mut counts = vec![0; HISTOGRAM_BINS];
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    for &v in values {
        let b = if width > 0.0 { ((v - lo) / width).floor() } else { 0.0 };
        counts[(b.max(0.0) as usize).min(HISTOGRAM_BINS - 1)] += 1;
    }
    counts
}

fn push_histograms(
    rows: &mut Vec<HistogramRow>,
    iteration: usize,
    quantity: &'static str,
    (lo, hi): (f64, f64),
    groups: [(&'static str, &[f64]); 2],
) {
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    for (group, values) in groups {
        for (bin, count) in histogram(values, lo, hi).into_iter().enumerate() {
            let lo_b = lo + bin as f64 * width;
            rows.push(HistogramRow { iteration, group, quantity, bin, lo: lo_b, hi: lo_b + width, count });
        }
    }
}

/// Builds the report from a densification log. Volumes are binned on a log10
/// scale spanning the population at each step.
pub fn analyse(state: &DensifyState, densify_from: usize, densify_until: usize) -> Prop1Report {
    let late_from = densify_from + 2 * densify_until.saturating_sub(densify_from) / 3;
    let mut steps = Vec::new();
    let mut histograms = Vec::new();
    let (mut late_c, mut late_p) = (Vec::new(), Vec::new());
    for snap in &state.population_log {
        let it = snap.iteration;
        let contrib: Vec<_> = state.contributor_log.iter().filter(|c| c.iteration == it).collect();
        let c_op: Vec<f64> = contrib.iter().map(|c| c.opacity).collect();
        let c_vol: Vec<f64> = contrib.iter().map(|c| c.volume).collect();
        steps.push(Prop1Step {
            iteration: it,
            population: snap.opacities.len(),
            contributors: contrib.len(),
            population_mean_opacity: mean(&snap.opacities),
            contributor_mean_opacity: mean(&c_op),
            population_mean_volume: mean(&snap.volumes),
            contributor_mean_volume: mean(&c_vol),
        });
        if it >= late_from {
            late_c.extend_from_slice(&c_vol);
            late_p.extend_from_slice(&snap.volumes);
        }
        push_histograms(&mut histograms, it, "opacity", (0.0, 1.0), [("population", &snap.opacities), ("contributors", &c_op)]);
        let log_p: Vec<f64> = snap.volumes.iter().map(|v| v.log10()).collect();
        let log_c: Vec<f64> = c_vol.iter().map(|v| v.log10()).collect();
        let lo = log_p.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = log_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi.is_finite() {
            push_histograms(&mut histograms, it, "log10_volume", (lo, hi), [("population", &log_p), ("contributors", &log_c)]);
        }
    }
    let with: Vec<_> = steps.iter().filter(|s| s.contributors > 0).collect();
    let wins = with.iter().filter(|s| s.contributor_mean_opacity > s.population_mean_opacity).count();
    let summary = Prop1Summary {
        steps: steps.len(),
        steps_with_contributors: with.len(),
        opacity_fraction: if with.is_empty() { f64::NAN } else { wins as f64 / with.len() as f64 },
        late_contributor_volume: mean(&late_c),
        late_population_volume: mean(&late_p),
    };
    Prop1Report { steps, histograms, summary }
}

/// Trains with contributor logging on and analyses the log.
pub fn run_prop1(cfg: &TrainConfig, scene: &SyntheticScene) -> Result<Prop1Report> {
    let cfg = TrainConfig { log_contributors: true, ..cfg.clone() };
    let outcome = train(&cfg, scene)?;
    Ok(analyse(&outcome.densify, cfg.densify_from(), cfg.densify_until()))
}

impl Prop1Report {
    /// Writes `prop1_steps.csv`, `prop1_histograms.csv` and `prop1_summary.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("prop1_steps.csv"), &self.steps)?;
        write_csv(&dir.join("prop1_histograms.csv"), &self.histograms)?;
        write_csv(&dir.join("prop1_summary.csv"), &[self.summary])
    }
}
