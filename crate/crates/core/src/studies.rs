//! Study harnesses: crop scaling, fusion against the upper bound, and
//! entropy-based selection under different entropy prompt lists.
//!
//! CSV schemas (one header row, comma separated):
//!
//! * crops: `scene,scales,n_scales,objects,views,view_accuracy,embed_ms_per_view`
//!   where `scales` joins the scale factors with `+`.
//! * fusion: `scene,objects,upper_bound,average,mode`
//! * selection: `scene,entropy_list,strategy,objects,accuracy`
//!
//! Accuracies are fractions in `[0, 1]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{ensure_arg, Error, Result};
use crate::features::{
    build_prompt_list, concept_distribution, labels_match, Embedder, FeatureVector, MockEmbedder, PromptList,
    PromptRole, ConceptTable,
};
use crate::fusion::{decide_all, mean_feature, Context, EntropyWeighting, StrategyId, StrategyOptions, ViewBundle};
use crate::io::Manifest;
use crate::metrics::{view_accuracy, ClassificationRecord};
use crate::par;
use crate::pipeline::{crop_jobs, embed_jobs, FrameSet, Session};
use crate::region::Segmentation;

/// Object accuracy of `strategy` over bundles with known labels.
pub fn strategy_accuracy(
    bundles: &[ViewBundle],
    gt: &[String],
    strategy: StrategyId,
    ctx: &Context,
    opts: StrategyOptions,
) -> Result<f64> {
    ensure_arg!(!bundles.is_empty(), "no bundles");
    ensure_arg!(bundles.len() == gt.len(), "{} labels for {} bundles", gt.len(), bundles.len());
    let gts: Vec<Option<String>> = gt.iter().cloned().map(Some).collect();
    let oracle = (strategy == StrategyId::UpperBound).then_some(gts.as_slice());
    let decisions = decide_all(bundles, strategy, ctx, opts, oracle)?;
    let hits = decisions
        .iter()
        .zip(gt)
        .filter(|(d, g)| labels_match(ctx.evaluation.label(d.class), g))
        .count();
    Ok(hits as f64 / bundles.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionAccuracy {
    pub upper_bound: f64,
    pub average: f64,
    pub mode: f64,
}

/// Upper bound, average fusion and mode vote accuracies.
pub fn study2_fusion(bundles: &[ViewBundle], gt: &[String], ctx: &Context) -> Result<FusionAccuracy> {
    let opts = StrategyOptions::default();
    let acc = |s| strategy_accuracy(bundles, gt, s, ctx, opts);
    Ok(FusionAccuracy {
        upper_bound: acc(StrategyId::UpperBound)?,
        average: acc(StrategyId::Average)?,
        mode: acc(StrategyId::Mode)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCell {
    pub entropy_list: String,
    pub strategy: StrategyId,
    pub accuracy: f64,
}

/// Accuracy of every strategy under every named entropy list.
///
/// `views` holds the per-view features of each object. Bundles are built once
/// per list; the (list, strategy) cells then run in parallel.
pub fn study3_selection(
    views: &[Vec<FeatureVector>],
    gt: &[String],
    evaluation: &PromptList,
    lists: &[(String, PromptList)],
    temperature: f64,
    weighting: EntropyWeighting,
) -> Result<Vec<SelectionCell>> {
    ensure_arg!(!lists.is_empty(), "no entropy lists");
    let mut per_list = Vec::with_capacity(lists.len());
    for (name, list) in lists {
        let list = list.clone().with_role(PromptRole::Entropy);
        let ctx = Context::new(evaluation, &list, temperature)?;
        let bundles = par::map_range(views.len(), |i| ViewBundle::new(i as i32, views[i].clone(), &ctx))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        per_list.push((name.clone(), list, bundles));
    }
    let cells: Vec<(usize, StrategyId)> = (0..per_list.len())
        .flat_map(|l| StrategyId::ALL.into_iter().map(move |s| (l, s)))
        .collect();
    let opts = StrategyOptions {
        entropy_weighting: weighting,
    };
    par::map(&cells, |&(l, strategy)| {
        let (name, list, bundles) = &per_list[l];
        let ctx = Context::new(evaluation, list, temperature)?;
        Ok(SelectionCell {
            entropy_list: name.clone(),
            strategy,
            accuracy: strategy_accuracy(bundles, gt, strategy, &ctx, opts)?,
        })
    })
    .into_iter()
    .collect()
}

/// Settings of the planted-concept mock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedOptions {
    pub objects: usize,
    pub views: usize,
    /// Ground-truth concept pool.
    pub concepts: usize,
    /// Evaluation labels no object carries.
    pub distractors: usize,
    pub dim: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedOptions {
    fn default() -> Self {
        PlantedOptions {
            objects: 200,
            views: 5,
            concepts: 20,
            distractors: 40,
            dim: 128,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Objects seen in several views, exactly one of which shows the true concept;
/// the others show distinct distractor labels.
#[derive(Debug, Clone)]
pub struct PlantedScene {
    pub embedder: MockEmbedder,
    pub concepts: Vec<String>,
    pub distractors: Vec<String>,
    pub evaluation: PromptList,
    pub gt: Vec<String>,
    pub views: Vec<Vec<FeatureVector>>,
    pub correct_view: Vec<usize>,
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix} {i:03}")).collect()
}

/// One seeded run of the planted mock.
pub fn planted(opts: &PlantedOptions, run: u64) -> Result<PlantedScene> {
    ensure_arg!(opts.objects >= 1 && opts.views >= 1 && opts.concepts >= 1, "empty planted scene");
    ensure_arg!(
        opts.distractors + 1 >= opts.views,
        "{} views need at least {} distractors",
        opts.views,
        opts.views - 1
    );
    ensure_arg!(run < 1 << 24 && opts.objects < 1 << 32 && opts.views < 1 << 8, "run, object or view index too large");
    let seed = opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(run);
    let embedder = MockEmbedder::new(seed, opts.dim, ConceptTable::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let concepts = labels("concept", opts.concepts);
    let distractors = labels("distractor", opts.distractors);
    let mut eval_labels: Vec<String> = concepts.iter().chain(&distractors).cloned().collect();
    eval_labels.shuffle(&mut rng);
    let evaluation = build_prompt_list(&eval_labels, &embedder, PromptRole::Evaluation, "{}")?;

    let mut gt = Vec::with_capacity(opts.objects);
    let mut views = Vec::with_capacity(opts.objects);
    let mut correct_view = Vec::with_capacity(opts.objects);
    for o in 0..opts.objects {
        let label = concepts.choose(&mut rng).expect("non-empty").clone();
        let correct = rng.random_range(0..opts.views);
        let mut wrong = distractors.choose_multiple(&mut rng, opts.views - 1);
        let feats = (0..opts.views)
            .map(|v| {
                let shown = if v == correct { &label } else { wrong.next().expect("enough distractors") };
                let key = (run << 40) | ((o as u64) << 8) | v as u64;
                embedder.embed_tagged(shown, opts.noise, key)
            })
            .collect();
        gt.push(label);
        views.push(feats);
        correct_view.push(correct);
    }
    Ok(PlantedScene {
        embedder,
        concepts,
        distractors,
        evaluation,
        gt,
        views,
        correct_view,
    })
}

impl PlantedScene {
    pub fn prompt_list(&self, labels: &[String], role: PromptRole) -> Result<PromptList> {
        build_prompt_list(labels, &self.embedder, role, "{}")
    }

    /// Entropy lists: the concept pool, the full evaluation list, and unrelated labels.
    pub fn entropy_lists(&self) -> Result<Vec<(String, PromptList)>> {
        Ok(vec![
            ("concepts".into(), self.prompt_list(&self.concepts, PromptRole::Entropy)?),
            (
                "evaluation".into(),
                self.evaluation.clone().with_role(PromptRole::Entropy),
            ),
            (
                "unrelated".into(),
                self.prompt_list(&labels("unrelated", self.concepts.len()), PromptRole::Entropy)?,
            ),
        ])
    }

    pub fn bundles(&self, ctx: &Context) -> Result<Vec<ViewBundle>> {
        par::map_range(self.views.len(), |i| ViewBundle::new(i as i32, self.views[i].clone(), ctx))
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRow {
    pub scene: String,
    pub objects: usize,
    pub upper_bound: f64,
    pub average: f64,
    pub mode: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub scene: String,
    pub entropy_list: String,
    pub strategy: StrategyId,
    pub objects: usize,
    pub accuracy: f64,
}

/// Study 2 over `runs` planted scenes, plus a trailing `mean` row.
pub fn planted_fusion(opts: &PlantedOptions, runs: u64, temperature: f64) -> Result<Vec<FusionRow>> {
    ensure_arg!(runs >= 1, "at least one run");
    let mut rows = Vec::new();
    for run in 0..runs {
        let scene = planted(opts, run)?;
        let entropy = scene.evaluation.clone().with_role(PromptRole::Entropy);
        let ctx = Context::new(&scene.evaluation, &entropy, temperature)?;
        let a = study2_fusion(&scene.bundles(&ctx)?, &scene.gt, &ctx)?;
        rows.push(FusionRow {
            scene: format!("run {run}"),
            objects: scene.gt.len(),
            upper_bound: a.upper_bound,
            average: a.average,
            mode: a.mode,
        });
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&FusionRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let total = FusionRow {
        scene: "mean".into(),
        objects: rows.iter().map(|r| r.objects).sum(),
        upper_bound: mean(|r| r.upper_bound),
        average: mean(|r| r.average),
        mode: mean(|r| r.mode),
    };
    rows.push(total);
    Ok(rows)
}

/// Study 3 over `runs` planted scenes, plus `mean` rows per (list, strategy).
pub fn planted_selection(
    opts: &PlantedOptions,
    runs: u64,
    temperature: f64,
    weighting: EntropyWeighting,
) -> Result<Vec<SelectionRow>> {
    ensure_arg!(runs >= 1, "at least one run");
    let mut rows = Vec::new();
    for run in 0..runs {
        let scene = planted(opts, run)?;
        let cells = study3_selection(
            &scene.views,
            &scene.gt,
            &scene.evaluation,
            &scene.entropy_lists()?,
            temperature,
            weighting,
        )?;
        rows.extend(cells.into_iter().map(|c| SelectionRow {
            scene: format!("run {run}"),
            entropy_list: c.entropy_list,
            strategy: c.strategy,
            objects: scene.gt.len(),
            accuracy: c.accuracy,
        }));
    }
    rows.extend(selection_means(&rows));
    Ok(rows)
}

/// Mean accuracy per (list, strategy), in first-appearance order.
pub fn selection_means(rows: &[SelectionRow]) -> Vec<SelectionRow> {
    let mut order = Vec::new();
    let mut acc: BTreeMap<(String, StrategyId), (f64, usize, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.scene != "mean") {
        let key = (r.entropy_list.clone(), r.strategy);
        let e = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0.0, 0, 0)
        });
        e.0 += r.accuracy;
        e.1 += 1;
        e.2 += r.objects;
    }
    order
        .into_iter()
        .map(|key| {
            let (sum, n, objects) = acc[&key];
            SelectionRow {
                scene: "mean".into(),
                entropy_list: key.0,
                strategy: key.1,
                objects,
                accuracy: sum / n as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRow {
    pub scene: String,
    pub scales: String,
    pub n_scales: usize,
    pub objects: usize,
    pub views: usize,
    pub view_accuracy: f64,
    /// Sum of the single-scale per-view embedding times of the set's scales.
    pub embed_ms_per_view: f64,
}

fn scale_name(scales: &[f64]) -> String {
    scales.iter().map(|s| format!("{s:.1}")).collect::<Vec<_>>().join("+")
}

/// Non-empty subsets of `0..n`, by size and then lexicographically.
pub fn subsets(n: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    all.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    all
}

/// Wall time of embedding every crop of `segments` at the given scales, best of `repeats`.
pub fn time_embedding(
    segments: &[crate::pipeline::SegmentViews],
    scales: &[f64],
    frames: &FrameSet,
    embedder: &dyn Embedder,
    repeats: usize,
) -> Result<f64> {
    let jobs = crop_jobs(segments, scales);
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        embed_jobs(&jobs, frames, embedder)?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Study 1 on one scene: per-view accuracy for every non-empty subset of
/// `scales`, with each view's features averaged across the subset.
///
/// Runs the build, segment and associate stages in `work_dir`. Segment labels
/// come from the manifest's ground-truth cloud.
pub fn study1_crops(scene: &str, manifest: &Manifest, config: &RunConfig, scales: &[f64], work_dir: &Path) -> Result<Vec<CropRow>> {
    ensure_arg!(!scales.is_empty() && scales.len() <= 16, "between 1 and 16 scales");
    ensure_arg!(scales.iter().all(|s| *s >= 1.0 && s.is_finite()), "crop scales must be ≥ 1");
    let session = Session::new(manifest, config, work_dir)?;
    session.build()?;
    session.segment()?;
    session.associate()?;
    let (evaluation, _) = manifest.load_prompts()?;
    let gt = session
        .ground_truth(&evaluation)?
        .ok_or_else(|| Error::InvalidArgument("the crop study needs a ground-truth cloud in the manifest".into()))?;
    let cloud = session.segmented_cloud()?;
    let seg = Segmentation::from_cloud(&cloud);
    let seg_gt = gt.segment_classes(&cloud, &seg, config.max_dist);
    let name = |c: i32| {
        if (c as usize) < evaluation.len() {
            evaluation.label(c as usize).to_string()
        } else {
            gt.names.get(&c).cloned().unwrap_or_default()
        }
    };
    let segments: Vec<_> = session
        .associations()?
        .segments
        .into_iter()
        .filter(|s| !s.views.is_empty() && seg_gt[s.segment_id as usize].is_some())
        .collect();
    ensure_arg!(!segments.is_empty(), "no segment has both views and a ground-truth label");
    let frames = session.frames()?;
    let embedder = config.embedder.build(config.seed)?;
    let n_views: usize = segments.iter().map(|s| s.views.len()).sum();

    // Per scale: timing and features in segment, view order.
    let mut per_scale = Vec::with_capacity(scales.len());
    for &s in scales {
        let jobs = crop_jobs(&segments, &[s]);
        let t = Instant::now();
        let records = embed_jobs(&jobs, frames, embedder.as_ref())?;
        let ms = t.elapsed().as_secs_f64() * 1e3 / n_views as f64;
        per_scale.push((ms, records.into_iter().map(|r| r.feature).collect::<Vec<_>>()));
    }

    let mut rows = Vec::new();
    for subset in subsets(scales.len()) {
        let mut k = 0;
        let mut records = Vec::with_capacity(segments.len());
        for s in &segments {
            let mut labels = Vec::with_capacity(s.views.len());
            for _ in &s.views {
                let feats: Vec<FeatureVector> = subset.iter().map(|&i| per_scale[i].1[k].clone()).collect();
                let d = concept_distribution(&mean_feature(&feats)?, &evaluation, config.temperature)?;
                labels.push(evaluation.label(d.argmax).to_string());
                k += 1;
            }
            records.push(ClassificationRecord {
                object_id: s.segment_id,
                views: labels,
                prediction: None,
                ground_truth: name(seg_gt[s.segment_id as usize].expect("filtered")),
            });
        }
        let chosen: Vec<f64> = subset.iter().map(|&i| scales[i]).collect();
        rows.push(CropRow {
            scene: scene.to_string(),
            scales: scale_name(&chosen),
            n_scales: subset.len(),
            objects: records.len(),
            views: n_views,
            view_accuracy: view_accuracy(&records)?,
            embed_ms_per_view: subset.iter().map(|&i| per_scale[i].0).sum(),
        });
    }
    Ok(rows)
}

/// Mean rows per scale set across scenes, in first-appearance order.
pub fn crop_means(rows: &[CropRow]) -> Vec<CropRow> {
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, (CropRow, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.scene != "mean") {
        match acc.get_mut(&r.scales) {
            Some((m, n)) => {
                m.objects += r.objects;
                m.views += r.views;
                m.view_accuracy += r.view_accuracy;
                m.embed_ms_per_view += r.embed_ms_per_view;
                *n += 1;
            }
            None => {
                order.push(r.scales.clone());
                acc.insert(r.scales.clone(), (CropRow { scene: "mean".into(), ..r.clone() }, 1));
            }
        }
    }
    order
        .into_iter()
        .map(|k| {
            let (mut m, n) = acc.remove(&k).expect("present");
            m.view_accuracy /= n as f64;
            m.embed_ms_per_view /= n as f64;
            m
        })
        .collect()
}

/// Writes rows as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, "csv", format!("{other:?}")),
    }
}

/// Whitespace-separated table for gnuplot: a `#` header, then one row per key.
pub fn gnuplot_table(columns: &[&str], rows: &[(String, Vec<f64>)]) -> String {
    let mut s = format!("# {}\n", columns.join(" "));
    for (key, vals) in rows {
        let _ = write!(s, "\"{key}\"");
        for v in vals {
            let _ = write!(s, " {v:.6}");
        }
        s.push('\n');
    }
    s
}

pub fn crops_dat(rows: &[CropRow]) -> String {
    let body: Vec<_> = rows
        .iter()
        .filter(|r| r.scene == "mean")
        .map(|r| (r.scales.clone(), vec![r.n_scales as f64, r.view_accuracy, r.embed_ms_per_view]))
        .collect();
    gnuplot_table(&["scales", "n_scales", "view_accuracy", "embed_ms_per_view"], &body)
}

pub fn fusion_dat(rows: &[FusionRow]) -> String {
    let body: Vec<_> = rows
        .iter()
        .map(|r| (r.scene.clone(), vec![r.upper_bound, r.average, r.mode]))
        .collect();
    gnuplot_table(&["scene", "upper_bound", "average", "mode"], &body)
}

/// One row per entropy list, one column per strategy, from the `mean` rows.
pub fn selection_dat(rows: &[SelectionRow]) -> String {
    let mut lists: Vec<String> = Vec::new();
    let mut table: BTreeMap<(String, StrategyId), f64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.scene == "mean") {
        if !lists.contains(&r.entropy_list) {
            lists.push(r.entropy_list.clone());
        }
        table.insert((r.entropy_list.clone(), r.strategy), r.accuracy);
    }
    let mut columns = vec!["entropy_list"];
    columns.extend(StrategyId::ALL.iter().map(|s| s.name()));
    let body: Vec<_> = lists
        .iter()
        .map(|l| {
            let vals = StrategyId::ALL
                .iter()
                .map(|s| table.get(&(l.clone(), *s)).copied().unwrap_or(f64::NAN))
                .collect();
            (l.clone(), vals)
        })
        .collect();
    gnuplot_table(&columns, &body)
}

/// Writes `text` next to a CSV, with a `.dat` extension.
pub fn write_dat(csv_path: &Path, text: &str) -> Result<()> {
    let path = csv_path.with_extension("dat");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DEFAULT_TEMPERATURE;

    fn small() -> PlantedOptions {
        PlantedOptions {
            objects: 60,
            ..Default::default()
        }
    }

    #[test]
    fn planted_views_are_as_described() {
        let s = planted(&small(), 0).unwrap();
        assert_eq!(s.views.len(), 60);
        assert_eq!(s.evaluation.len(), 60);
        let entropy = s.evaluation.clone().with_role(PromptRole::Entropy);
        let ctx = Context::new(&s.evaluation, &entropy, DEFAULT_TEMPERATURE).unwrap();
        for (i, b) in s.bundles(&ctx).unwrap().iter().enumerate() {
            let classes: Vec<&str> = b.view_classes().iter().map(|&c| s.evaluation.label(c)).collect();
            let hits: Vec<usize> = (0..5).filter(|&v| classes[v] == s.gt[i]).collect();
            assert_eq!(hits, vec![s.correct_view[i]]);
            let mut distinct = classes.clone();
            distinct.sort();
            distinct.dedup();
            assert_eq!(distinct.len(), 5);
        }
    }

    #[test]
    fn planted_is_reproducible() {
        let a = planted(&small(), 3).unwrap();
        let b = planted(&small(), 3).unwrap();
        assert_eq!(a.views, b.views);
        assert_eq!(a.gt, b.gt);
        assert_ne!(planted(&small(), 4).unwrap().gt, a.gt);
    }

    #[test]
    fn single_view_bundles_agree() {
        let opts = PlantedOptions {
            objects: 40,
            views: 1,
            ..Default::default()
        };
        let s = planted(&opts, 0).unwrap();
        let entropy = s.evaluation.clone().with_role(PromptRole::Entropy);
        let ctx = Context::new(&s.evaluation, &entropy, DEFAULT_TEMPERATURE).unwrap();
        let a = study2_fusion(&s.bundles(&ctx).unwrap(), &s.gt, &ctx).unwrap();
        assert_eq!(a.upper_bound, a.average);
        assert_eq!(a.upper_bound, a.mode);
    }

    #[test]
    fn one_list_one_bundle() {
        let s = planted(&PlantedOptions { objects: 1, ..Default::default() }, 0).unwrap();
        let lists = vec![("concepts".to_string(), s.prompt_list(&s.concepts, PromptRole::Entropy).unwrap())];
        let cells = study3_selection(&s.views, &s.gt, &s.evaluation, &lists, DEFAULT_TEMPERATURE, EntropyWeighting::Inverse)
            .unwrap();
        assert_eq!(cells.len(), StrategyId::ALL.len());
        assert!(cells.iter().all(|c| c.entropy_list == "concepts"));
    }

    #[test]
    fn subsets_of_five() {
        let s = subsets(5);
        assert_eq!(s.len(), 31);
        assert_eq!(s[0], vec![0]);
        assert_eq!(s[30], vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn csv_and_dat() {
        let dir = tempfile::tempdir().unwrap();
        let rows = planted_fusion(&small(), 2, DEFAULT_TEMPERATURE).unwrap();
        let path = dir.path().join("fusion.csv");
        write_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("scene,objects,upper_bound,average,mode\n"));
        assert_eq!(text.lines().count(), 4);
        let dat = fusion_dat(&rows);
        assert!(dat.starts_with("# scene upper_bound average mode\n"));
        assert!(dat.contains("\"mean\""));
    }
}
