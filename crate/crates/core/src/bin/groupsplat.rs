use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use groupsplat::analysis::comparison::{run_comparison_with, standard_variants, with_scopes, write_comparison};
use groupsplat::analysis::prop2::write_prop2;
use groupsplat::analysis::{run_prop1, run_prop2, Prop2Config};
use groupsplat::grouping::{Scope, Strategy};
use groupsplat::harness::{train, write_run, TrainConfig};
use groupsplat::model::ply;
use groupsplat::render::{io::save_png, render_forward, RenderSettings};
use groupsplat::scene::SyntheticScene;

/// CPU Gaussian-splatting trainer with cyclic group training.
#[derive(Parser)]
#[command(name = "groupsplat", version)]
struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the configured synthetic scene and write a run directory.
    Train(TrainFlags),
    /// Render a PLY model from the scene's cameras into PNGs.
    Render {
        #[arg(long)]
        model: PathBuf,
        /// Camera indices to render; defaults to the held-out views.
        #[arg(long, value_delimiter = ',')]
        views: Vec<usize>,
    },
    /// Train the baseline and every sampling strategy with the same budget.
    Compare {
        #[command(flatten)]
        flags: TrainFlags,
        /// Also run every strategy with grouping limited to densification.
        #[arg(long)]
        scopes: bool,
        /// Write a full run directory per variant.
        #[arg(long)]
        keep_runs: bool,
    },
    /// Densification contributor statistics from a logged training run.
    Prop1(TrainFlags),
    /// Blend depth against mean opacity on a fixed random scene.
    Prop2 {
        #[arg(long)]
        primitives: Option<usize>,
        #[arg(long)]
        mc_samples: Option<usize>,
    },
    /// Write the scene's ground truth and initial model as PLY.
    Export,
    /// Read a PLY model, validate it and write it back in canonical form.
    Import {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct TrainFlags {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    schedule_scale: Option<f64>,
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
    #[arg(long)]
    utr: Option<f64>,
    #[arg(long, value_enum)]
    scope: Option<Scope>,
    /// Train without grouping.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    no_cyclic_resample: bool,
    #[arg(long)]
    grad_threshold: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Verify the cached-group exclusion every iteration.
    #[arg(long)]
    check_exclusion: bool,
}

impl TrainFlags {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.iterations {
            cfg.iterations = v;
        }
        if let Some(v) = self.schedule_scale {
            cfg.schedule_scale = v;
        }
        if let Some(v) = self.strategy {
            cfg.grouping.strategy = v;
        }
        if let Some(v) = self.utr {
            cfg.grouping.utr = v;
        }
        if let Some(v) = self.scope {
            cfg.grouping.scope = v;
        }
        if self.baseline {
            cfg.grouping.enabled = false;
        }
        if self.no_cyclic_resample {
            cfg.grouping.cyclic_resample = false;
        }
        if let Some(v) = self.grad_threshold {
            cfg.densify.grad_threshold = v;
        }
        if let Some(v) = self.eval_every {
            cfg.eval_every = v;
        }
        cfg.check_exclusion |= self.check_exclusion;
    }
}

fn load_config(cli: &Cli, flags: &TrainFlags) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    flags.apply(&mut cfg);
    cfg.out = Some(cli.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.clone();
    match &cli.command {
        Command::Train(flags) => {
            let cfg = load_config(&cli, flags)?;
            let scene = SyntheticScene::generate(&cfg.scene, cfg.seed)?;
            let outcome = train(&cfg, &scene)?;
            write_run(&out, &cfg, &scene, &outcome)?;
            let eval = outcome.metrics.final_eval();
            println!(
                "primitives {}  blended ops {}  psnr {:.3}  ssim {:.4}  -> {}",
                outcome.model.len(),
                outcome.metrics.total_blended_ops(),
                eval.map_or(f64::NAN, |e| e.psnr),
                eval.map_or(f64::NAN, |e| e.ssim),
                out.display()
            );
        }
        Command::Render { model, views } => {
            let cfg = load_config(&cli, &TrainFlags::default())?;
            let scene = SyntheticScene::generate(&cfg.scene, cfg.seed)?;
            let set = ply::load(model)?;
            let views = if views.is_empty() { scene.test_views.clone() } else { views.clone() };
            create_dir(&out)?;
            let settings = RenderSettings { t_saturation: cfg.t_saturation, ..RenderSettings::default() };
            for v in views {
                let Some(cam) = scene.cameras.get(v) else {
                    bail!("view {v} out of range: the scene has {} cameras", scene.cameras.len());
                };
                let img = render_forward(&set, cam, scene.spec.background, &settings)?.image;
                save_png(&img, &out.join(format!("render_{v:03}.png")))?;
            }
        }
        Command::Compare { flags, scopes, keep_runs } => {
            let cfg = load_config(&cli, flags)?;
            let mut variants = standard_variants(&cfg);
            if *scopes {
                variants = with_scopes(&variants);
            }
            create_dir(&out)?;
            let rows = run_comparison_with(&variants, |v, outcome| {
                if *keep_runs {
                    let scene = SyntheticScene::generate(&v.config.scene, v.config.seed)?;
                    write_run(&out.join(v.name.replace('/', "_")), &v.config, &scene, outcome)?;
                }
                Ok(())
            })?;
            write_comparison(&rows, &out)?;
            for r in &rows {
                println!(
                    "{:<28} {:>8.3} dB  {:>12} ops  {:>6} prims  {}",
                    r.variant, r.psnr, r.blended_ops, r.primitives, r.status
                );
            }
        }
        Command::Prop1(flags) => {
            let cfg = load_config(&cli, flags)?;
            let scene = SyntheticScene::generate(&cfg.scene, cfg.seed)?;
            let report = run_prop1(&cfg, &scene)?;
            create_dir(&out)?;
            report.write(&out)?;
            let s = report.summary;
            println!(
                "steps {}  contributor opacity above population at {:.1}%  late volume contributors {:.3e} vs population {:.3e}",
                s.steps,
                100.0 * s.opacity_fraction,
                s.late_contributor_volume,
                s.late_population_volume
            );
        }
        Command::Prop2 { primitives, mc_samples } => {
            let mut cfg = match &cli.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => Prop2Config::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if let Some(n) = primitives {
                cfg.primitives = *n;
            }
            if let Some(n) = mc_samples {
                cfg.mc_samples = *n;
            }
            let rows = run_prop2(&cfg)?;
            create_dir(&out)?;
            write_prop2(&rows, &out)?;
            for r in &rows {
                println!(
                    "mu_o {:.1}  blends/px {:>7.2}  closed form {:>7.2}  simulated {:>7.2}",
                    r.mean_opacity_target, r.mean_blends, r.predicted_depth, r.simulated_depth
                );
            }
        }
        Command::Export => {
            let cfg = load_config(&cli, &TrainFlags::default())?;
            let scene = SyntheticScene::generate(&cfg.scene, cfg.seed)?;
            create_dir(&out)?;
            ply::save(&scene.ground_truth, &out.join("ground_truth.ply"))?;
            ply::save(&scene.initial, &out.join("initial.ply"))?;
            println!("{} ground-truth and {} initial primitives -> {}", scene.ground_truth.len(), scene.initial.len(), out.display());
        }
        Command::Import { model } => {
            let set = ply::load(model)?;
            set.check_finite()?;
            create_dir(&out)?;
            ply::save(&set, &out.join("model.ply"))?;
            println!("{} primitives read from {}", set.len(), model.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
