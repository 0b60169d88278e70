use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::densify::DensifyParams;
use crate::error::{Result, SplatError};
use crate::grouping::{Schedule, Scope, Strategy};
use crate::scene::SceneSpec;

/// Group-training settings. Unset iteration constants derive from
/// `TrainConfig::schedule_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupingConfig {
    pub enabled: bool,
    pub strategy: Strategy,
    pub utr: f64,
    pub scope: Scope,
    pub cyclic_resample: bool,
    pub global_densify: bool,
    pub global_optimize: bool,
    pub interval: Option<usize>,
    pub activate_at: Option<usize>,
    pub merge_densify_at: Option<usize>,
    pub merge_optimize_at: Option<usize>,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            strategy: Strategy::Opacity,
            utr: 0.6,
            scope: Scope::Full,
            cyclic_resample: true,
            global_densify: true,
            global_optimize: true,
            interval: None,
            activate_at: None,
            merge_densify_at: None,
            merge_optimize_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensifyConfig {
    pub grad_threshold: f64,
    pub min_opacity: f64,
    pub percent_dense: f64,
    pub interval: usize,
    pub reset_interval: usize,
    /// Also cap the opacity of cached rows at a reset.
    pub reset_cached: bool,
    pub from: Option<usize>,
    pub until: Option<usize>,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 1e-5,
            min_opacity: 0.005,
            percent_dense: 0.01,
            interval: 50,
            reset_interval: 300,
            reset_cached: false,
            from: None,
            until: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Multiplies the full-length iteration constants (500, 14.5K, 29K, ...).
    pub schedule_scale: f64,
    pub seed: u64,
    pub t_saturation: f64,
    pub ssim_lambda: f64,
    /// Held-out evaluation period in iterations; 0 evaluates only at the end.
    pub eval_every: usize,
    /// Verify cached-group exclusion every iteration.
    pub check_exclusion: bool,
    pub log_contributors: bool,
    pub out: Option<PathBuf>,
    pub grouping: GroupingConfig,
    pub densify: DensifyConfig,
    pub scene: SceneSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            schedule_scale: 0.1,
            seed: 0,
            t_saturation: 1e-4,
            ssim_lambda: 0.2,
            eval_every: 0,
            check_exclusion: false,
            log_contributors: false,
            out: None,
            grouping: GroupingConfig::default(),
            densify: DensifyConfig::default(),
            scene: SceneSpec::default(),
        }
    }
}

fn scaled(base: f64, scale: f64) -> usize {
    (base * scale).round() as usize
}

impl TrainConfig {
    /// Ungrouped trainer with otherwise default settings.
    pub fn baseline() -> Self {
        let mut c = Self::default();
        c.grouping.enabled = false;
        c
    }

    pub fn densify_from(&self) -> usize {
        self.densify.from.unwrap_or_else(|| scaled(500.0, self.schedule_scale))
    }

    pub fn densify_until(&self) -> usize {
        self.densify.until.unwrap_or_else(|| scaled(15_000.0, self.schedule_scale))
    }

    pub fn schedule(&self) -> Schedule {
        let s = self.schedule_scale;
        let g = &self.grouping;
        let interval = g.interval.unwrap_or_else(|| scaled(500.0, s));
        Schedule {
            group_interval: interval,
            activate_at: g.activate_at.unwrap_or_else(|| self.densify_from() + interval),
            merge_densify_at: g.merge_densify_at.unwrap_or_else(|| scaled(14_500.0, s)),
            merge_optimize_at: g.merge_optimize_at.unwrap_or_else(|| scaled(29_000.0, s)),
            densify_end: self.densify_until(),
            total: self.iterations,
            scope: g.scope,
            cyclic_resample: g.cyclic_resample,
            global_densify: g.global_densify,
            global_optimize: g.global_optimize,
        }
    }

    pub fn densify_params(&self, extent: f64) -> DensifyParams {
        DensifyParams {
            grad_threshold: self.densify.grad_threshold,
            min_opacity: self.densify.min_opacity,
            percent_dense: self.densify.percent_dense,
            ..DensifyParams::new(extent)
        }
    }

    /// Same configuration with every derived constant written out.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let s = self.schedule();
        c.grouping.interval = Some(s.group_interval);
        c.grouping.activate_at = Some(s.activate_at);
        c.grouping.merge_densify_at = Some(s.merge_densify_at);
        c.grouping.merge_optimize_at = Some(s.merge_optimize_at);
        c.densify.from = Some(self.densify_from());
        c.densify.until = Some(self.densify_until());
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SplatError::Config(m));
        if !(self.schedule_scale > 0.0 && self.schedule_scale.is_finite()) {
            return bad(format!("schedule_scale must be positive, got {}", self.schedule_scale));
        }
        if !(self.t_saturation >= 0.0 && self.t_saturation < 1.0) {
            return bad(format!("t_saturation must lie in [0, 1), got {}", self.t_saturation));
        }
        if !(0.0..=1.0).contains(&self.ssim_lambda) {
            return bad(format!("ssim_lambda must lie in [0, 1], got {}", self.ssim_lambda));
        }
        let g = &self.grouping;
        if !(g.utr > 0.0 && g.utr <= 1.0) {
            return bad(format!("utr must lie in (0, 1], got {}", g.utr));
        }
        let d = &self.densify;
        if !(d.grad_threshold > 0.0) {
            return bad(format!("grad_threshold must be positive, got {}", d.grad_threshold));
        }
        if !(0.0..1.0).contains(&d.min_opacity) {
            return bad(format!("min_opacity must lie in [0, 1), got {}", d.min_opacity));
        }
        if !(d.percent_dense > 0.0) {
            return bad(format!("percent_dense must be positive, got {}", d.percent_dense));
        }
        if d.interval == 0 || d.reset_interval == 0 {
            return bad("densify intervals must be positive".into());
        }
        if self.densify_from() > self.densify_until() {
            return bad(format!(
                "densify range is empty: from {} until {}",
                self.densify_from(),
                self.densify_until()
            ));
        }
        if g.enabled && self.iterations > 0 {
            self.schedule().validate()?;
        }
        self.scene.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SplatError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SplatError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| SplatError::Config(format!("{}: {e}", path.display())))
    }

    /// Writes the resolved configuration.
    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.resolved().to_toml()).map_err(|e| SplatError::io(path, e))
    }
}
