use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::run_metrics::{DensifyEvent, EvalRecord, IterationRecord, PartitionEvent, RunMetrics};
use crate::densify::{densify_and_prune, reset_opacity, DensifyState, RowEdit};
use crate::error::{Result, SplatError};
use crate::grouping::{probabilities, resample, sample_weights, Action, GroupPartition, ImportanceState};
use crate::metrics::{photometric_loss, psnr, ssim, TargetStats};
use crate::model::{Gaussian, GaussianSet};
use crate::optim::{self, AdamRow, AdamState, LearningRates};
use crate::render::{render_backward, render_forward, render_forward_masked, RenderSettings};
use crate::scene::SyntheticScene;

use super::TrainConfig;

/// Stream ids derived from the run seed, one per independent consumer.
const VIEW_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GaussianSet,
    pub metrics: RunMetrics,
    pub densify: DensifyState,
    pub partition: GroupPartition,
}

/// Cycles through the training views, reshuffling at every epoch.
struct ViewSampler {
    views: Vec<usize>,
    order: Vec<usize>,
    rng: ChaCha8Rng,
}

impl ViewSampler {
    fn new(views: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(VIEW_STREAM);
        Self { views: views.to_vec(), order: Vec::new(), rng }
    }

    fn next(&mut self) -> usize {
        if self.order.is_empty() {
            self.order = self.views.clone();
            self.order.shuffle(&mut self.rng);
            self.order.reverse();
        }
        self.order.pop().expect("at least one training view")
    }
}

/// Cached rows recorded before an update, for the exclusion check.
struct CachedSnapshot {
    rows: Vec<(usize, Gaussian, AdamRow)>,
}

impl CachedSnapshot {
    fn take(set: &GaussianSet, adam: &AdamState, part: &GroupPartition) -> Self {
        Self { rows: part.cached().into_iter().map(|i| (i, set.row(i), adam.row(i))).collect() }
    }

    fn verify(&self, set: &GaussianSet, adam: &AdamState, edit: Option<&RowEdit>, iteration: usize) -> Result<()> {
        let remap: Option<Vec<Option<usize>>> = edit.map(|e| {
            let mut next = 0;
            e.keep
                .iter()
                .map(|&k| {
                    k.then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        });
        for &(i, row, arow) in &self.rows {
            let j = match &remap {
                Some(r) => r[i].ok_or_else(|| SplatError::CachedExclusion {
                    iteration,
                    detail: format!("cached row {i} was removed by densification"),
                })?,
                None => i,
            };
            if set.row(j) != row || adam.row(j) != arow {
                return Err(SplatError::CachedExclusion {
                    iteration,
                    detail: format!("cached row {i} changed"),
                });
            }
        }
        Ok(())
    }
}

/// Mean PSNR and SSIM of the full model over the held-out views.
pub fn evaluate(set: &GaussianSet, scene: &SyntheticScene, settings: &RenderSettings) -> Result<(f64, f64)> {
    let views = if scene.test_views.is_empty() { &scene.train_views } else { &scene.test_views };
    let (mut p, mut s) = (0.0, 0.0);
    for &v in views {
        let out = render_forward(set, &scene.cameras[v], scene.spec.background, settings)?;
        p += psnr(&out.image, &scene.targets[v])?;
        s += ssim(&out.image, &scene.targets[v])?;
    }
    let n = views.len() as f64;
    Ok((p / n, s / n))
}

/// Runs the training loop on `scene`. Iterations are numbered from 1.
pub fn train(cfg: &TrainConfig, scene: &SyntheticScene) -> Result<TrainOutcome> {
    cfg.validate()?;
    if scene.train_views.is_empty() {
        return Err(SplatError::Config("scene has no training views".into()));
    }
    let settings = RenderSettings { t_saturation: cfg.t_saturation, ..RenderSettings::default() };
    let schedule = cfg.schedule();
    let densify_params = cfg.densify_params(scene.extent);
    let (densify_from, densify_until) = (cfg.densify_from(), cfg.densify_until());
    let bg = scene.spec.background;

    let mut set = scene.initial.clone();
    let n0 = set.len();
    let mut adam = AdamState::new(n0);
    let mut densify = DensifyState::new(n0);
    densify.log_contributors = cfg.log_contributors;
    let mut importance = ImportanceState::new(n0);
    let mut partition = GroupPartition::full(n0, 0);
    let mut metrics = RunMetrics::default();
    let mut views = ViewSampler::new(&scene.train_views, cfg.seed);
    let stats: Vec<Option<TargetStats>> = (0..scene.targets.len())
        .map(|v| scene.train_views.contains(&v).then(|| TargetStats::new(&scene.targets[v])))
        .collect();

    for it in 1..=cfg.iterations {
        let started = Instant::now();
        if cfg.grouping.enabled {
            let action = schedule.tick(it);
            match action {
                Action::None => {}
                Action::Resample => {
                    let g = &cfg.grouping;
                    let p = probabilities(&sample_weights(&set, g.strategy, &importance));
                    let err = (p.iter().sum::<f64>() - 1.0).abs();
                    partition = resample(&set, g.strategy, &importance, g.utr, cfg.seed, it)?;
                    importance.reset();
                    metrics.partitions.push(PartitionEvent {
                        iteration: it,
                        action: action.name(),
                        strategy: g.strategy.name().into(),
                        primitives: set.len(),
                        under_training: partition.under_training_count(),
                        probability_error: if set.is_empty() { 0.0 } else { err },
                    });
                }
                Action::MergeDensify | Action::MergeOptimize => {
                    partition = partition.merge(it);
                    metrics.partitions.push(PartitionEvent {
                        iteration: it,
                        action: action.name(),
                        strategy: "-".into(),
                        primitives: set.len(),
                        under_training: set.len(),
                        probability_error: 0.0,
                    });
                }
            }
        }
        partition.check_len(set.len())?;

        let lr = LearningRates::at(scene.extent, it, cfg.iterations);
        let view = views.next();
        let cam = &scene.cameras[view];
        let active = partition.mask().to_vec();
        let out = render_forward_masked(&set, cam, bg, &settings, Some(&active))?;
        let target_stats = stats[view].as_ref().expect("training views have cached statistics");
        let loss = photometric_loss(&out.image, &scene.targets[view], target_stats, cfg.ssim_lambda)?;
        if !loss.loss.is_finite() {
            return Err(SplatError::Diverged { iteration: it });
        }
        let grads = render_backward(&set, cam, &out, &loss.grad)?;

        let snapshot = if cfg.check_exclusion && !partition.is_merged() {
            for i in partition.cached() {
                if out.per_gaussian_hits[i] != 0 || !grads.row_is_zero(i) {
                    return Err(SplatError::CachedExclusion {
                        iteration: it,
                        detail: format!("cached row {i} was rendered or received a gradient"),
                    });
                }
            }
            Some(CachedSnapshot::take(&set, &adam, &partition))
        } else {
            None
        };

        if it < densify_until {
            densify.accumulate(&grads, &out.visible_mask());
        }
        importance.accumulate_masked(&out, Some(&active));
        optim::step(&mut set, &grads, &mut adam, &active, &lr)?;

        let mut edit = None;
        if it < densify_until {
            let densify_now = it > densify_from && it % cfg.densify.interval == 0;
            if densify_now {
                let report = densify_and_prune(
                    &mut set,
                    &mut densify,
                    &mut adam,
                    &mut partition,
                    &densify_params,
                    lr.means,
                    cfg.seed,
                    it,
                )?;
                importance.retain_rows(&report.edit.keep);
                importance.grow(report.edit.appended);
                metrics.densify.push(DensifyEvent {
                    iteration: it,
                    cloned: report.cloned,
                    split: report.split,
                    pruned: report.pruned,
                    primitives: set.len(),
                    opacity_reset: false,
                });
                edit = Some(report.edit);
            }
            if it % cfg.densify.reset_interval == 0 {
                if cfg.densify.reset_cached {
                    let n = set.len();
                    reset_opacity(&mut set, &GroupPartition::full(n, it));
                } else {
                    reset_opacity(&mut set, &partition);
                }
                match metrics.densify.last_mut() {
                    Some(e) if e.iteration == it => e.opacity_reset = true,
                    _ => metrics.densify.push(DensifyEvent {
                        iteration: it,
                        cloned: 0,
                        split: 0,
                        pruned: 0,
                        primitives: set.len(),
                        opacity_reset: true,
                    }),
                }
            }
        }
        if let Some(s) = snapshot {
            s.verify(&set, &adam, edit.as_ref(), it)?;
        }

        metrics.iterations.push(IterationRecord {
            iteration: it,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            blended_ops: out.total_blends(),
            primitives: set.len(),
            under_training: partition.under_training_count(),
            hits: out.per_gaussian_hits.iter().sum(),
            loss: loss.loss,
        });
        if (cfg.eval_every > 0 && it % cfg.eval_every == 0) || it == cfg.iterations {
            let (p, s) = evaluate(&set, scene, &settings)?;
            metrics.evals.push(EvalRecord { iteration: it, psnr: p, ssim: s });
        }
    }
    Ok(TrainOutcome { model: set, metrics, densify, partition })
}
