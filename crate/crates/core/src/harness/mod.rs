//! Configuration, the training loop and run output.

mod config;
mod train;

use std::path::Path;

pub use config::{DensifyConfig, GroupingConfig, TrainConfig};
pub use train::{evaluate, train, TrainOutcome};

use crate::error::{Result, SplatError};
use crate::model::ply;
use crate::render::{io::save_png, render_forward, RenderSettings};
use crate::scene::SyntheticScene;

/// Generates the configured scene and trains on it.
pub fn train_synthetic(cfg: &TrainConfig) -> Result<(SyntheticScene, TrainOutcome)> {
    let scene = SyntheticScene::generate(&cfg.scene, cfg.seed)?;
    let outcome = train(cfg, &scene)?;
    Ok((scene, outcome))
}

/// Writes a run directory: resolved config, model, CSV metrics and test-view renders.
pub fn write_run(dir: &Path, cfg: &TrainConfig, scene: &SyntheticScene, outcome: &TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SplatError::io(dir, e))?;
    cfg.save_snapshot(&dir.join("config.toml"))?;
    ply::save(&outcome.model, &dir.join("model.ply"))?;
    outcome.metrics.write_csvs(dir)?;
    let contributors: Vec<_> = outcome.densify.contributor_log.clone();
    crate::analysis::run_metrics::write_csv(&dir.join("contributors.csv"), &contributors)?;
    let settings = RenderSettings { t_saturation: cfg.t_saturation, ..RenderSettings::default() };
    for &v in &scene.test_views {
        let out = render_forward(&outcome.model, &scene.cameras[v], scene.spec.background, &settings)?;
        save_png(&out.image, &dir.join(format!("test_{v:03}.png")))?;
    }
    Ok(())
}
