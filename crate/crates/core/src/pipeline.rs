//! End-to-end pipeline: build → segment → associate → embed → classify → eval.
//!
//! Every stage reads its upstream artifact from the output directory and
//! writes its own, stamped with a digest of all settings that influence it.
//! A stage refuses upstream artifacts whose digest does not match the current
//! manifest and configuration.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::cloud::{backproject_frames, sample_indices, voxel_downsample, LabeledCloud, UNASSIGNED};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::{Embedder, FeatureVector, PromptList};
use crate::fusion::{decide, mean_feature, Context, Decision, StrategyId, StrategyOptions, ViewBundle};
use crate::geometry::Frame;
use crate::io::artifact::{read_cloud, read_features, write_cloud, write_features};
use crate::io::{ply, read_json, write_json, CloudLabels, Digest, Manifest, SegmentReport, ViewFeature};
use crate::kdtree::KdTree;
use crate::metrics::{segmentation_metrics, timing_report, transfer_labels, MaccForm, TimingReport};
use crate::par;
use crate::region::{estimate_geometry_with, region_grow_with, KnnGraph, Segmentation, Viewpoints};
use crate::views::{associate, crop, scale_bbox, top_n, Association};

pub const BUILD: &str = "build";
pub const SEGMENT: &str = "segment";
pub const ASSOCIATE: &str = "associate";
pub const EMBED: &str = "embed";
pub const CLASSIFY: &str = "classify";
pub const EVAL: &str = "eval";

/// Artifact locations inside an output directory.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub dir: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutputPaths { dir: dir.into() }
    }

    pub fn cloud(&self) -> PathBuf {
        self.dir.join("cloud.ovpc")
    }

    pub fn segments(&self) -> PathBuf {
        self.dir.join("segments.ovpc")
    }

    pub fn associations(&self) -> PathBuf {
        self.dir.join("associations.json")
    }

    pub fn features(&self) -> PathBuf {
        self.dir.join("features.ovft")
    }

    pub fn labeled(&self) -> PathBuf {
        self.dir.join("labeled.ply")
    }

    pub fn sidecar(&self) -> PathBuf {
        ply::sidecar_path(&self.labeled())
    }

    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.json")
    }

    pub fn timing(&self) -> PathBuf {
        self.dir.join("timing.txt")
    }

    pub fn config(&self) -> PathBuf {
        self.dir.join("config.toml")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentViews {
    pub segment_id: i32,
    pub points: usize,
    pub views: Vec<Association>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationFile {
    pub digest: Digest,
    pub segments: Vec<SegmentViews>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class_id: i32,
    pub label: String,
    pub iou: f64,
    pub acc: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: Option<String>,
    pub miou: f64,
    pub fmiou: f64,
    pub macc: f64,
    pub macc_form: MaccForm,
    pub gt_points: usize,
    /// Ground-truth points that received a predicted class.
    pub covered_points: usize,
    pub classes: Vec<ClassRow>,
}

/// Ground-truth cloud with classes mapped into evaluation-list indices.
///
/// Ground-truth labels missing from the evaluation list get ids past the end
/// of the list, so they count as classes no prediction can match.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub positions: Vec<[f64; 3]>,
    pub classes: Vec<i32>,
    pub names: BTreeMap<i32, String>,
    pub digest: Digest,
}

impl GroundTruth {
    pub fn load(path: &Path, evaluation: &PromptList) -> Result<GroundTruth> {
        let (cloud, labels) = ply::read_labeled(path)?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut map: HashMap<i32, i32> = HashMap::new();
        let mut names = BTreeMap::new();
        let mut next = evaluation.len() as i32;
        for (&gid, label) in &labels.classes {
            let id = match evaluation.index_of(label) {
                Some(i) => i as i32,
                None => {
                    next += 1;
                    next - 1
                }
            };
            map.insert(gid, id);
            names.insert(id, label.clone());
        }
        let mut classes = Vec::with_capacity(cloud.len());
        for p in &cloud.points {
            classes.push(match p.class_id {
                c if c < 0 => UNASSIGNED,
                c => *map.get(&c).ok_or_else(|| {
                    Error::format(path, "ground-truth", format!("class {c} has no label in the sidecar"))
                })?,
            });
        }
        Ok(GroundTruth {
            positions: cloud.positions(),
            classes,
            names,
            digest: Digest::of_bytes(&bytes),
        })
    }

    /// Majority ground-truth class per segment (smallest id on ties), using
    /// the nearest labeled ground-truth point within `max_dist` of each point.
    pub fn segment_classes(&self, cloud: &LabeledCloud, seg: &Segmentation, max_dist: f64) -> Vec<Option<i32>> {
        let labeled: Vec<usize> = (0..self.classes.len()).filter(|&i| self.classes[i] >= 0).collect();
        let tree = KdTree::build(labeled.iter().map(|&i| self.positions[i]).collect());
        let limit = max_dist * max_dist;
        par::map(&seg.segments, |members| {
            let mut votes: BTreeMap<i32, usize> = BTreeMap::new();
            for &m in members {
                if let Some(n) = tree.nearest_one(&cloud.points[m].xyz()) {
                    if n.dist2 <= limit {
                        *votes.entry(self.classes[labeled[n.index]]).or_default() += 1;
                    }
                }
            }
            let top = votes.values().copied().max()?;
            votes.into_iter().find(|(_, v)| *v == top).map(|(c, _)| c)
        })
    }
}

fn check_fresh(path: &Path, found: &Digest, expected: &Digest, stage: &'static str) -> Result<()> {
    if found != expected {
        return Err(Error::StaleArtifact {
            path: path.to_path_buf(),
            stage,
        });
    }
    Ok(())
}

fn require(path: &Path, stage: &'static str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        })
    }
}

/// Sampled frames, loaded once per session.
#[derive(Debug)]
pub struct FrameSet {
    pub frames: Vec<Frame>,
    index: HashMap<u32, usize>,
}

impl FrameSet {
    pub fn get(&self, id: u32) -> Option<&Frame> {
        self.index.get(&id).map(|&i| &self.frames[i])
    }

    pub fn refs(&self) -> Vec<&Frame> {
        self.frames.iter().collect()
    }
}

/// Manifest, configuration and output directory for a run.
pub struct Session<'a> {
    pub manifest: &'a Manifest,
    pub config: &'a RunConfig,
    pub out: OutputPaths,
    frames: OnceLock<FrameSet>,
}

impl<'a> Session<'a> {
    pub fn new(manifest: &'a Manifest, config: &'a RunConfig, out_dir: &Path) -> Result<Self> {
        config.validate()?;
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        Ok(Session {
            manifest,
            config,
            out: OutputPaths::new(out_dir),
            frames: OnceLock::new(),
        })
    }

    pub fn sampled_indices(&self) -> Vec<usize> {
        sample_indices(self.manifest.len(), self.config.stride)
    }

    pub fn frames(&self) -> Result<&FrameSet> {
        if let Some(f) = self.frames.get() {
            return Ok(f);
        }
        let frames = self.manifest.load_frames(&self.sampled_indices())?;
        let index = frames.iter().enumerate().map(|(i, f)| (f.id, i)).collect();
        Ok(self.frames.get_or_init(|| FrameSet { frames, index }))
    }

    pub fn build_digest(&self) -> Result<Digest> {
        let c = self.config;
        Digest::chain(None, &(BUILD, self.manifest.content_digest, c.stride, c.pixel_step, c.voxel))
    }

    pub fn segment_digest(&self) -> Result<Digest> {
        let c = self.config;
        Digest::chain(
            Some(&self.build_digest()?),
            &(SEGMENT, c.k, c.smoothness, c.curvature_thresh, c.min_size),
        )
    }

    pub fn associate_digest(&self) -> Result<Digest> {
        let c = self.config;
        Digest::chain(
            Some(&self.segment_digest()?),
            &(ASSOCIATE, c.occlusion_tol, c.min_visible, c.max_views),
        )
    }

    pub fn embed_digest(&self) -> Result<Digest> {
        let c = self.config;
        let model = c.embedder.model_dir();
        Digest::chain(
            Some(&self.associate_digest()?),
            &(EMBED, &c.scales, &c.embedder, model, c.seed),
        )
    }

    pub fn classify_digest(&self) -> Result<Digest> {
        let c = self.config;
        let read = |p: &Path| fs::read(p).map(|b| Digest::of_bytes(&b)).map_err(|e| Error::io(p, e));
        let prompts = (
            read(&self.manifest.prompts.evaluation)?,
            read(&self.manifest.prompts.entropy)?,
        );
        let oracle = match (c.strategy, &self.manifest.ground_truth) {
            (StrategyId::UpperBound, Some(g)) => Some((read(g)?, c.max_dist)),
            _ => None,
        };
        Digest::chain(
            Some(&self.embed_digest()?),
            &(CLASSIFY, c.strategy, c.entropy_weighting, c.temperature, prompts, oracle),
        )
    }

    /// Accumulates sampled frames and downsamples the cloud.
    pub fn build(&self) -> Result<String> {
        let frames = self.frames()?;
        let mut cloud = backproject_frames(&frames.refs(), self.config.pixel_step)?;
        cloud.provenance.stride = self.config.stride;
        let raw = cloud.len();
        let cloud = voxel_downsample(&cloud, self.config.voxel)?;
        write_cloud(&self.out.cloud(), &cloud, &self.build_digest()?)?;
        Ok(format!(
            "{} frames sampled, {raw} points, {} after downsampling",
            frames.frames.len(),
            cloud.len()
        ))
    }

    fn read_cloud_checked(&self, path: &Path, stage: &'static str, expected: Digest) -> Result<LabeledCloud> {
        require(path, stage)?;
        let (cloud, d) = read_cloud(path)?;
        check_fresh(path, &d, &expected, stage)?;
        Ok(cloud)
    }

    pub fn segmented_cloud(&self) -> Result<LabeledCloud> {
        self.read_cloud_checked(&self.out.segments(), SEGMENT, self.segment_digest()?)
    }

    /// Estimates normals and grows regions.
    pub fn segment(&self) -> Result<String> {
        let mut cloud = self.read_cloud_checked(&self.out.cloud(), BUILD, self.build_digest()?)?;
        let params = self.config.region_params();
        let graph = KnnGraph::build(&cloud, params.k)?;
        let viewpoints: Viewpoints = self
            .manifest
            .frames
            .iter()
            .zip(&self.manifest.poses)
            .map(|(f, p)| (f.id, p.center()))
            .collect();
        let geometry = estimate_geometry_with(&cloud, &graph, &viewpoints);
        let seg = region_grow_with(&graph, &geometry, &params)?;
        seg.apply(&mut cloud);
        write_cloud(&self.out.segments(), &cloud, &self.segment_digest()?)?;
        Ok(format!(
            "{} segments, {} of {} points unassigned",
            seg.count(),
            seg.unassigned(),
            cloud.len()
        ))
    }

    pub fn associations(&self) -> Result<AssociationFile> {
        let path = self.out.associations();
        require(&path, ASSOCIATE)?;
        let file: AssociationFile = read_json(&path)?;
        check_fresh(&path, &file.digest, &self.associate_digest()?, ASSOCIATE)?;
        Ok(file)
    }

    /// Finds the frames that see each segment.
    pub fn associate(&self) -> Result<String> {
        let cloud = self.segmented_cloud()?;
        let seg = Segmentation::from_cloud(&cloud);
        let frames = self.frames()?;
        let refs = frames.refs();
        let c = self.config;
        let segments = par::map_range(seg.count(), |s| -> Result<SegmentViews> {
            let pts: Vec<_> = seg.segments[s].iter().map(|&i| cloud.points[i].position_f64()).collect();
            let views = associate(&pts, &refs, c.occlusion_tol, c.min_visible)?;
            Ok(SegmentViews {
                segment_id: s as i32,
                points: pts.len(),
                views: top_n(views, c.max_views()),
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let seen = segments.iter().filter(|s| !s.views.is_empty()).count();
        let total: usize = segments.iter().map(|s| s.views.len()).sum();
        write_json(
            &self.out.associations(),
            &AssociationFile {
                digest: self.associate_digest()?,
                segments,
            },
        )?;
        Ok(format!("{total} views for {seen} of {} segments", seg.count()))
    }

    /// Crops every view at every configured scale and embeds the crops.
    pub fn embed(&self) -> Result<String> {
        let assoc = self.associations()?;
        let embedder = self.config.embedder.build(self.config.seed)?;
        let jobs = crop_jobs(&assoc.segments, &self.config.scales);
        let records = embed_jobs(&jobs, self.frames()?, embedder.as_ref())?;
        write_features(&self.out.features(), embedder.dim(), &records, &self.embed_digest()?)?;
        Ok(format!("{} crops embedded", records.len()))
    }

    /// Per-segment view features, scales averaged per view.
    pub fn view_features(&self) -> Result<(usize, ViewsBySegment)> {
        let path = self.out.features();
        require(&path, EMBED)?;
        let (dim, records, d) = read_features(&path)?;
        check_fresh(&path, &d, &self.embed_digest()?, EMBED)?;
        Ok((dim, group_views(&records)?))
    }

    pub fn ground_truth(&self, evaluation: &PromptList) -> Result<Option<GroundTruth>> {
        self.manifest
            .ground_truth
            .as_ref()
            .map(|p| GroundTruth::load(p, evaluation))
            .transpose()
    }

    /// Applies the configured strategy and writes the labeled cloud.
    pub fn classify(&self) -> Result<String> {
        let (dim, views) = self.view_features()?;
        let (evaluation, entropy) = self.manifest.load_prompts()?;
        if evaluation.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: evaluation.dim(),
                actual: dim,
            });
        }
        let ctx = Context::new(&evaluation, &entropy, self.config.temperature)?;
        let mut cloud = self.segmented_cloud()?;
        let seg = Segmentation::from_cloud(&cloud);
        let strategy = self.config.strategy;
        let gt_classes = if strategy == StrategyId::UpperBound {
            let gt = self.ground_truth(&evaluation)?.ok_or_else(|| {
                Error::InvalidArgument("the upper_bound strategy needs a ground-truth cloud in the manifest".into())
            })?;
            gt.segment_classes(&cloud, &seg, self.config.max_dist)
        } else {
            vec![None; seg.count()]
        };
        let opts = StrategyOptions {
            entropy_weighting: self.config.entropy_weighting,
        };
        let decisions = par::map_range(seg.count(), |s| -> Result<Option<(Vec<u32>, Decision)>> {
            let Some(v) = views.get(&(s as i32)) else {
                return Ok(None);
            };
            let frames: Vec<u32> = v.iter().map(|(f, _)| *f).collect();
            let bundle = ViewBundle::new(s as i32, v.iter().map(|(_, f)| f.clone()).collect(), &ctx)?;
            let d = match (strategy, gt_classes[s]) {
                (StrategyId::UpperBound, Some(c)) if (c as usize) < evaluation.len() => {
                    decide(&bundle, strategy, &ctx, opts, Some(evaluation.label(c as usize)))?
                }
                (StrategyId::UpperBound, _) => Decision::for_view(&bundle, 0),
                _ => decide(&bundle, strategy, &ctx, opts, None)?,
            };
            Ok(Some((frames, d)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

        let mut labels = CloudLabels {
            digest: Some(self.classify_digest()?),
            strategy: Some(strategy.to_string()),
            ..Default::default()
        };
        let mut class_of = vec![UNASSIGNED; seg.count()];
        for (s, d) in decisions.iter().enumerate() {
            let report = match d {
                Some((frames, d)) => {
                    let class = d.class as i32;
                    class_of[s] = class;
                    labels.classes.insert(class, evaluation.label(d.class).to_string());
                    SegmentReport {
                        segment_id: s as i32,
                        class_id: class,
                        label: Some(evaluation.label(d.class).to_string()),
                        points: seg.segments[s].len(),
                        views: frames.len(),
                        chosen_view: d.view.map(|v| frames[v]),
                        entropy: Some(d.entropy),
                        score: Some(d.score),
                    }
                }
                None => SegmentReport {
                    segment_id: s as i32,
                    class_id: UNASSIGNED,
                    label: None,
                    points: seg.segments[s].len(),
                    views: 0,
                    chosen_view: None,
                    entropy: None,
                    score: None,
                },
            };
            labels.segments.push(report);
        }
        for p in &mut cloud.points {
            p.class_id = if p.segment_id >= 0 {
                class_of[p.segment_id as usize]
            } else {
                UNASSIGNED
            };
        }
        ply::write_labeled(&self.out.labeled(), &cloud, &labels)?;
        let labeled = class_of.iter().filter(|c| **c >= 0).count();
        Ok(format!(
            "{labeled} of {} segments labeled with {strategy}, {} distinct classes",
            seg.count(),
            labels.classes.len()
        ))
    }

    /// Scores the labeled cloud against the ground truth; `None` without one.
    pub fn eval(&self) -> Result<Option<EvalReport>> {
        let path = self.out.labeled();
        require(&path, CLASSIFY)?;
        let (cloud, labels) = ply::read_labeled(&path)?;
        let found = labels.digest.unwrap_or_default();
        check_fresh(&path, &found, &self.classify_digest()?, CLASSIFY)?;
        let (evaluation, _) = self.manifest.load_prompts()?;
        let Some(gt) = self.ground_truth(&evaluation)? else {
            return Ok(None);
        };
        let pred_class: Vec<i32> = cloud.points.iter().map(|p| p.class_id).collect();
        let transferred = transfer_labels(&cloud.positions(), &pred_class, &gt.positions, self.config.max_dist)?;
        let m = segmentation_metrics(&gt.classes, &transferred, self.config.macc)?;
        let name = |id: i32| {
            gt.names
                .get(&id)
                .cloned()
                .or_else(|| (id >= 0 && (id as usize) < evaluation.len()).then(|| evaluation.label(id as usize).to_string()))
                .unwrap_or_default()
        };
        let report = EvalReport {
            strategy: labels.strategy,
            miou: m.miou,
            fmiou: m.fmiou,
            macc: m.macc,
            macc_form: m.macc_form,
            gt_points: gt.classes.iter().filter(|c| **c >= 0).count(),
            covered_points: gt
                .classes
                .iter()
                .zip(&transferred)
                .filter(|(g, t)| **g >= 0 && **t >= 0)
                .count(),
            classes: m
                .per_class
                .iter()
                .map(|c| ClassRow {
                    class_id: c.class_id,
                    label: name(c.class_id),
                    iou: c.iou,
                    acc: c.acc,
                    tp: c.counts.tp,
                    fp: c.counts.fp,
                    fn_: c.counts.fn_,
                    n: c.counts.n,
                })
                .collect(),
        };
        write_json(&self.out.metrics(), &report)?;
        Ok(Some(report))
    }
}

/// One crop to embed.
#[derive(Debug, Clone, PartialEq)]
pub struct CropJob {
    pub segment_id: i32,
    pub view: Association,
    pub scale: f64,
}

/// Jobs in segment, view, scale order.
pub fn crop_jobs(segments: &[SegmentViews], scales: &[f64]) -> Vec<CropJob> {
    let mut jobs = Vec::new();
    for s in segments {
        for v in &s.views {
            for &scale in scales {
                jobs.push(CropJob {
                    segment_id: s.segment_id,
                    view: v.clone(),
                    scale,
                });
            }
        }
    }
    jobs
}

/// Crops and embeds, concurrently when the embedder allows it.
pub fn embed_jobs(jobs: &[CropJob], frames: &FrameSet, embedder: &dyn Embedder) -> Result<Vec<ViewFeature>> {
    let run = |job: &CropJob| -> Result<ViewFeature> {
        let frame = frames.get(job.view.frame_id).ok_or_else(|| {
            Error::InvalidArgument(format!("frame {} is not among the sampled frames", job.view.frame_id))
        })?;
        let k = &frame.intrinsics;
        let bbox = scale_bbox(&job.view.bbox, job.scale, k.width, k.height)?;
        let feature = embedder.embed_image(&crop(frame, &bbox)?)?;
        if feature.dim() != embedder.dim() {
            return Err(Error::DimensionMismatch {
                expected: embedder.dim(),
                actual: feature.dim(),
            });
        }
        Ok(ViewFeature {
            segment_id: job.segment_id,
            frame_id: job.view.frame_id,
            scale: job.scale as f32,
            visible_points: job.view.visible_points as u32,
            bbox,
            feature,
        })
    };
    let out: Vec<Result<ViewFeature>> = if embedder.concurrent() {
        par::map(jobs, run)
    } else {
        jobs.iter().map(run).collect()
    };
    out.into_iter().collect()
}

/// Groups records by segment and frame, averaging the scales of each view.
pub fn group_views(records: &[ViewFeature]) -> Result<BTreeMap<i32, Vec<(u32, FeatureVector)>>> {
    let mut grouped: BTreeMap<i32, Vec<(u32, Vec<FeatureVector>)>> = BTreeMap::new();
    for r in records {
        let views = grouped.entry(r.segment_id).or_default();
        match views.last_mut() {
            Some((f, feats)) if *f == r.frame_id => feats.push(r.feature.clone()),
            _ => views.push((r.frame_id, vec![r.feature.clone()])),
        }
    }
    grouped
        .into_iter()
        .map(|(s, views)| {
            let views = views
                .into_iter()
                .map(|(f, feats)| Ok((f, mean_feature(&feats)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok((s, views))
        })
        .collect()
}

/// Per-segment `(frame_id, feature)` lists.
pub type ViewsBySegment = BTreeMap<i32, Vec<(u32, FeatureVector)>>;

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub timing: TimingReport,
    pub metrics: Option<EvalReport>,
    pub summaries: Vec<(&'static str, String)>,
}

fn timed<T>(stage: &'static str, times: &mut Vec<(String, Duration)>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    times.push((stage.to_string(), t.elapsed()));
    Ok(out)
}

/// Runs every stage in order and writes all outputs to `out_dir`.
pub fn run_pipeline(manifest: &Manifest, config: &RunConfig, out_dir: &Path) -> Result<PipelineReport> {
    par::with_workers(config.workers, || {
        let s = Session::new(manifest, config, out_dir)?;
        let mut times = Vec::new();
        let mut summaries = Vec::new();
        timed("load", &mut times, || s.frames().map(|_| ()))?;
        summaries.push((BUILD, timed(BUILD, &mut times, || s.build())?));
        summaries.push((SEGMENT, timed(SEGMENT, &mut times, || s.segment())?));
        summaries.push((ASSOCIATE, timed(ASSOCIATE, &mut times, || s.associate())?));
        summaries.push((EMBED, timed(EMBED, &mut times, || s.embed())?));
        summaries.push((CLASSIFY, timed(CLASSIFY, &mut times, || s.classify())?));
        let metrics = timed(EVAL, &mut times, || s.eval())?;
        let timing = timing_report(&times, s.sampled_indices().len())?;
        fs::write(out_dir.join("timing.txt"), format!("{timing}\n")).map_err(|e| Error::io(s.out.timing(), e))?;
        fs::write(s.out.config(), config.to_toml()?).map_err(|e| Error::io(s.out.config(), e))?;
        Ok(PipelineReport {
            timing,
            metrics,
            summaries,
        })
    })
}

impl PipelineReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (stage, line) in &self.summaries {
            let _ = writeln!(s, "{stage}: {line}");
        }
        match &self.metrics {
            Some(m) => {
                let _ = writeln!(s, "mIOU {:.4}  F-mIOU {:.4}  mAcc {:.4}", m.miou, m.fmiou, m.macc);
            }
            None => s.push_str("no ground truth in the manifest; metrics skipped\n"),
        }
        let _ = write!(s, "{}", self.timing);
        s
    }
}
