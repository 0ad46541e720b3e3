use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use ovseg::config::RunConfig;
use ovseg::fusion::StrategyId;
use ovseg::io::Manifest;
use ovseg::par;
use ovseg::pipeline::{self, run_pipeline, Session};
use ovseg::studies::{self, PlantedOptions};
use ovseg::synth::{self, Scene, SynthOptions};
use ovseg::views::STUDY_SCALES;

#[derive(Parser)]
#[command(name = "ovseg", version, about = "Open-vocabulary 3D segmentation of posed RGB-D sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and evaluate against the ground truth, if any.
    Run(RunArgs),
    /// Accumulate sampled frames into a downsampled cloud.
    Build(RunArgs),
    /// Estimate normals and grow regions.
    Segment(RunArgs),
    /// Find the frames that see each segment.
    Associate(RunArgs),
    /// Crop and embed every associated view.
    Embed(RunArgs),
    /// Label segments from cached features.
    Classify(RunArgs),
    /// Score the labeled cloud against the ground truth.
    Eval(RunArgs),
    /// Run every stage and print the per-stage timing table.
    Bench(RunArgs),
    /// Render a synthetic scene with manifest, prompts, ground truth and config.
    Synth(SynthArgs),
    /// Run one of the study harnesses.
    Study {
        #[command(subcommand)]
        study: Study,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// TOML run configuration; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    strategy: Option<StrategyId>,
    /// Crop scale factor; repeat for multi-scale crops.
    #[arg(long = "scale")]
    scales: Vec<f64>,
    #[arg(long)]
    stride: Option<u32>,
    #[arg(long)]
    voxel: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.strategy {
            c.strategy = v;
        }
        if !self.scales.is_empty() {
            c.scales = self.scales.clone();
        }
        if let Some(v) = self.stride {
            c.stride = v;
        }
        if let Some(v) = self.voxel {
            c.voxel = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c.validate()?;
        Ok(c)
    }

    fn load(&self) -> Result<(Manifest, RunConfig)> {
        let manifest = Manifest::load(&self.manifest).map_err(|e| e.in_stage("load"))?;
        Ok((manifest, self.config()?))
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Random scene with this many objects instead of the fixed three-object scene.
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long, default_value_t = 40)]
    frames: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct Output {
    /// CSV output path.
    #[arg(long)]
    csv: PathBuf,
    /// Also write a gnuplot data file next to the CSV.
    #[arg(long)]
    dat: bool,
}

#[derive(Args)]
struct PlantedArgs {
    #[arg(long, default_value_t = 20)]
    runs: u64,
    #[arg(long, default_value_t = 200)]
    objects: usize,
    #[arg(long, default_value_t = 5)]
    views: usize,
    #[arg(long, default_value_t = 128)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ovseg::features::DEFAULT_TEMPERATURE)]
    temperature: f64,
}

impl PlantedArgs {
    fn options(&self) -> PlantedOptions {
        PlantedOptions {
            objects: self.objects,
            views: self.views,
            dim: self.dim,
            noise: self.noise,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Weighting {
    Inverse,
    Direct,
}

#[derive(Subcommand)]
enum Study {
    /// Per-view accuracy for every combination of crop scales.
    Crops {
        /// Manifests of the scenes to sweep.
        #[arg(long = "manifest", required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scale factors to combine (default 1.0 1.2 1.5 1.8 2.0).
        #[arg(long = "scale")]
        scales: Vec<f64>,
        /// Directory for intermediate artifacts.
        #[arg(long, default_value = "study-crops")]
        work_dir: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Upper bound against average fusion and mode vote on planted mock scenes.
    Fusion {
        #[command(flatten)]
        planted: PlantedArgs,
        #[command(flatten)]
        out: Output,
    },
    /// Every strategy under several entropy prompt lists on planted mock scenes.
    Selection {
        #[command(flatten)]
        planted: PlantedArgs,
        #[arg(long, value_enum, default_value = "inverse")]
        weighting: Weighting,
        #[command(flatten)]
        out: Output,
    },
}

fn stage(args: &RunArgs, name: &'static str) -> Result<()> {
    let (manifest, config) = args.load()?;
    par::with_workers(config.workers, || -> Result<()> {
        let s = Session::new(&manifest, &config, &args.out_dir)?;
        let line = match name {
            pipeline::BUILD => s.build(),
            pipeline::SEGMENT => s.segment(),
            pipeline::ASSOCIATE => s.associate(),
            pipeline::EMBED => s.embed(),
            pipeline::CLASSIFY => s.classify(),
            _ => unreachable!("not a single stage: {name}"),
        }
        .map_err(|e| e.in_stage(name))?;
        println!("{name}: {line}");
        Ok(())
    })
}

fn eval(args: &RunArgs) -> Result<()> {
    let (manifest, config) = args.load()?;
    let s = Session::new(&manifest, &config, &args.out_dir)?;
    match s.eval().map_err(|e| e.in_stage(pipeline::EVAL))? {
        Some(m) => {
            println!("mIOU {:.4}  F-mIOU {:.4}  mAcc {:.4}", m.miou, m.fmiou, m.macc);
            for c in &m.classes {
                println!("  {:>5} {:<24} IoU {:.4}  acc {:.4}", c.class_id, c.label, c.iou, c.acc);
            }
        }
        None => println!("no ground truth in the manifest; metrics skipped"),
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let scene = match args.objects {
        Some(n) => Scene::random(args.seed, n)?,
        None => Scene::three_objects(),
    };
    let opts = SynthOptions {
        frames: args.frames,
        seed: args.seed,
        ..Default::default()
    };
    let out = synth::write_scene(&scene, &opts, &args.out_dir)?;
    println!("manifest {}", out.manifest.display());
    println!("config   {}", out.config.display());
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
    }
    Ok(())
}

fn study(study: &Study) -> Result<()> {
    match study {
        Study::Crops {
            manifests,
            config,
            scales,
            work_dir,
            out,
        } => {
            let config = match config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            let scales = if scales.is_empty() { STUDY_SCALES.to_vec() } else { scales.clone() };
            let mut rows = Vec::new();
            for (i, m) in manifests.iter().enumerate() {
                let manifest = Manifest::load(m)?;
                let name = m
                    .parent()
                    .and_then(|p| p.file_name())
                    .map_or_else(|| format!("scene {i}"), |n| n.to_string_lossy().into_owned());
                let dir = work_dir.join(format!("{i:03}"));
                rows.extend(par::with_workers(config.workers, || {
                    studies::study1_crops(&name, &manifest, &config, &scales, &dir)
                })?);
            }
            rows.extend(studies::crop_means(&rows));
            ensure_parent(&out.csv)?;
            studies::write_csv(&out.csv, &rows)?;
            if out.dat {
                studies::write_dat(&out.csv, &studies::crops_dat(&rows))?;
            }
            for r in rows.iter().filter(|r| r.scene == "mean") {
                println!("{:<24} view accuracy {:.4}  {:.3} ms/view", r.scales, r.view_accuracy, r.embed_ms_per_view);
            }
        }
        Study::Fusion { planted, out } => {
            let rows = studies::planted_fusion(&planted.options(), planted.runs, planted.temperature)?;
            ensure_parent(&out.csv)?;
            studies::write_csv(&out.csv, &rows)?;
            if out.dat {
                studies::write_dat(&out.csv, &studies::fusion_dat(&rows))?;
            }
            let m = rows.last().expect("mean row");
            println!(
                "upper_bound {:.4}  average {:.4}  mode {:.4}  ({} objects)",
                m.upper_bound, m.average, m.mode, m.objects
            );
        }
        Study::Selection { planted, weighting, out } => {
            let weighting = match weighting {
                Weighting::Inverse => ovseg::fusion::EntropyWeighting::Inverse,
                Weighting::Direct => ovseg::fusion::EntropyWeighting::Direct,
            };
            let rows = studies::planted_selection(&planted.options(), planted.runs, planted.temperature, weighting)?;
            ensure_parent(&out.csv)?;
            studies::write_csv(&out.csv, &rows)?;
            if out.dat {
                studies::write_dat(&out.csv, &studies::selection_dat(&rows))?;
            }
            for r in rows.iter().filter(|r| r.scene == "mean") {
                println!("{:<12} {:<18} {:.4}", r.entropy_list, r.strategy, r.accuracy);
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) | Command::Bench(a) => {
            let (manifest, config) = a.load()?;
            let report = run_pipeline(&manifest, &config, &a.out_dir)?;
            if matches!(cli.command, Command::Bench(_)) {
                println!("{}", report.timing);
            } else {
                println!("{}", report.render());
            }
        }
        Command::Build(a) => stage(a, pipeline::BUILD)?,
        Command::Segment(a) => stage(a, pipeline::SEGMENT)?,
        Command::Associate(a) => stage(a, pipeline::ASSOCIATE)?,
        Command::Embed(a) => stage(a, pipeline::EMBED)?,
        Command::Classify(a) => stage(a, pipeline::CLASSIFY)?,
        Command::Eval(a) => eval(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Study { study: s } => study(s)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
