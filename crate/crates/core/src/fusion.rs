//! Multi-view fusion and selection strategies, plus the upper-bound oracle.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};
use crate::features::{concept_distribution, labels_match, ConceptDistribution, FeatureVector, PromptList, PromptRole};
use crate::par;

/// Floor added to fusion weights.
pub const WEIGHT_EPS: f64 = 1e-6;

/// The two prompt lists and the softmax temperature every strategy works with.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub evaluation: &'a PromptList,
    pub entropy: &'a PromptList,
    pub temperature: f64,
}

impl<'a> Context<'a> {
    pub fn new(evaluation: &'a PromptList, entropy: &'a PromptList, temperature: f64) -> Result<Self> {
        ensure_arg!(
            evaluation.role() == PromptRole::Evaluation,
            "classification needs an evaluation prompt list"
        );
        ensure_arg!(entropy.role() == PromptRole::Entropy, "selection needs an entropy prompt list");
        ensure_arg!(
            evaluation.dim() == entropy.dim(),
            "prompt lists have different dimensions ({} vs {})",
            evaluation.dim(),
            entropy.dim()
        );
        ensure_arg!(temperature > 0.0 && temperature.is_finite(), "temperature must be positive");
        Ok(Context {
            evaluation,
            entropy,
            temperature,
        })
    }
}

/// All views of one segment with their distributions under both prompt lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewBundle {
    pub segment_id: i32,
    pub features: Vec<FeatureVector>,
    pub entropy: Vec<ConceptDistribution>,
    pub evaluation: Vec<ConceptDistribution>,
}

impl ViewBundle {
    pub fn new(segment_id: i32, features: Vec<FeatureVector>, ctx: &Context) -> Result<Self> {
        ensure_arg!(!features.is_empty(), "segment {segment_id} has no views");
        let mut entropy = Vec::with_capacity(features.len());
        let mut evaluation = Vec::with_capacity(features.len());
        for f in &features {
            entropy.push(concept_distribution(f, ctx.entropy, ctx.temperature)?);
            evaluation.push(concept_distribution(f, ctx.evaluation, ctx.temperature)?);
        }
        Ok(ViewBundle {
            segment_id,
            features,
            entropy,
            evaluation,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Per-view predicted class indices in the evaluation list.
    pub fn view_classes(&self) -> Vec<usize> {
        self.evaluation.iter().map(|d| d.argmax).collect()
    }

    fn check(&self) -> Result<()> {
        ensure_arg!(!self.features.is_empty(), "segment {} has no views", self.segment_id);
        ensure_arg!(
            self.entropy.len() == self.features.len() && self.evaluation.len() == self.features.len(),
            "segment {}: view lists have different lengths",
            self.segment_id
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    Average,
    EntropyWeighted,
    ScoreWeighted,
    MinEntropy,
    MaxScore,
    Mode,
    UpperBound,
}

impl StrategyId {
    pub const ALL: [StrategyId; 7] = [
        StrategyId::Average,
        StrategyId::EntropyWeighted,
        StrategyId::ScoreWeighted,
        StrategyId::MinEntropy,
        StrategyId::MaxScore,
        StrategyId::Mode,
        StrategyId::UpperBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyId::Average => "average",
            StrategyId::EntropyWeighted => "entropy_weighted",
            StrategyId::ScoreWeighted => "score_weighted",
            StrategyId::MinEntropy => "min_entropy",
            StrategyId::MaxScore => "max_score",
            StrategyId::Mode => "mode",
            StrategyId::UpperBound => "upper_bound",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = StrategyId::ALL.iter().map(|i| i.name()).collect();
                Error::InvalidArgument(format!("unknown strategy {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

/// How entropies become weights in `entropy_weighted`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyWeighting {
    /// `H_max − Hᵢ + ε`: confident views weigh more.
    #[default]
    Inverse,
    /// `Hᵢ + ε`: the entropy value itself.
    Direct,
}

impl FromStr for EntropyWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(EntropyWeighting::Inverse),
            "direct" => Ok(EntropyWeighting::Direct),
            _ => Err(Error::InvalidArgument(format!(
                "unknown entropy weighting {s:?} (expected inverse or direct)"
            ))),
        }
    }
}

/// Mean of the view features, re-normalized.
pub fn fuse_average(bundle: &ViewBundle) -> Result<FeatureVector> {
    fuse_weighted(bundle, &vec![1.0; bundle.len()])
}

/// `normalize(Σ wᵢ fᵢ / Σ wᵢ)`.
pub fn fuse_weighted(bundle: &ViewBundle, weights: &[f64]) -> Result<FeatureVector> {
    ensure_arg!(!bundle.is_empty(), "segment {} has no views", bundle.segment_id);
    weighted_mean(&bundle.features, weights)
}

/// Unweighted mean of unit features, re-normalized.
pub fn mean_feature(features: &[FeatureVector]) -> Result<FeatureVector> {
    if let [only] = features {
        return Ok(only.clone());
    }
    weighted_mean(features, &vec![1.0; features.len()])
}

fn weighted_mean(features: &[FeatureVector], weights: &[f64]) -> Result<FeatureVector> {
    ensure_arg!(!features.is_empty(), "nothing to fuse");
    ensure_arg!(
        weights.len() == features.len(),
        "{} weights for {} views",
        weights.len(),
        features.len()
    );
    ensure_arg!(
        weights.iter().all(|w| *w >= 0.0 && w.is_finite()),
        "weights must be finite and non-negative"
    );
    let total: f64 = weights.iter().sum();
    ensure_arg!(total > 0.0, "all fusion weights are zero");
    let dim = features[0].dim();
    let mut acc = vec![0.0f64; dim];
    for (f, &w) in features.iter().zip(weights) {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.dim(),
            });
        }
        for (a, &x) in acc.iter_mut().zip(f.as_slice()) {
            *a += w * x as f64;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    FeatureVector::normalized(&acc)
}

pub fn entropy_weights(bundle: &ViewBundle, mode: EntropyWeighting) -> Vec<f64> {
    let hs = bundle.entropy.iter().map(|d| d.entropy);
    match mode {
        EntropyWeighting::Inverse => {
            let h_max = hs.clone().fold(f64::NEG_INFINITY, f64::max);
            hs.map(|h| h_max - h + WEIGHT_EPS).collect()
        }
        EntropyWeighting::Direct => hs.map(|h| h + WEIGHT_EPS).collect(),
    }
}

/// Max scores shifted so the smallest weight is `ε`.
pub fn score_weights(bundle: &ViewBundle) -> Vec<f64> {
    let lo = bundle.entropy.iter().map(|d| d.max_score).fold(f64::INFINITY, f64::min);
    bundle.entropy.iter().map(|d| d.max_score - lo + WEIGHT_EPS).collect()
}

fn first_best(values: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        match best {
            Some((_, b)) if !better(v, b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// View with the lowest entropy under the entropy prompt list; lowest index on ties.
pub fn select_min_entropy(bundle: &ViewBundle) -> Result<(usize, &FeatureVector)> {
    bundle.check()?;
    let i = first_best(bundle.entropy.iter().map(|d| d.entropy), |v, b| v < b);
    Ok((i, &bundle.features[i]))
}

/// View with the highest max cosine under the entropy prompt list; lowest index on ties.
pub fn select_max_score(bundle: &ViewBundle) -> Result<(usize, &FeatureVector)> {
    bundle.check()?;
    let i = first_best(bundle.entropy.iter().map(|d| d.max_score), |v, b| v > b);
    Ok((i, &bundle.features[i]))
}

/// Most frequent per-view class and the earliest view predicting it.
pub fn mode_view(bundle: &ViewBundle) -> Result<(usize, usize)> {
    bundle.check()?;
    let classes = bundle.view_classes();
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &c in &classes {
        *counts.entry(c).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let view = classes.iter().position(|c| counts[c] == top).expect("non-empty");
    Ok((view, classes[view]))
}

pub fn classify_mode<'a>(bundle: &ViewBundle, evaluation: &'a PromptList) -> Result<&'a str> {
    let (_, class) = mode_view(bundle)?;
    Ok(evaluation.label(class))
}

/// Whether any single view predicts the ground truth.
pub fn upper_bound_correct(bundle: &ViewBundle, gt: &str, evaluation: &PromptList) -> Result<bool> {
    Ok(upper_bound_view(bundle, gt, evaluation)?.is_some())
}

fn upper_bound_view(bundle: &ViewBundle, gt: &str, evaluation: &PromptList) -> Result<Option<usize>> {
    bundle.check()?;
    ensure_arg!(
        evaluation.index_of(gt).is_some(),
        "ground-truth label {gt:?} is not in the evaluation prompt list"
    );
    Ok(bundle
        .evaluation
        .iter()
        .position(|d| labels_match(evaluation.label(d.argmax), gt)))
}

/// One segment's outcome under a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// Index into the evaluation prompt list.
    pub class: usize,
    /// View chosen by a selection strategy.
    pub view: Option<usize>,
    /// Entropy and max score of the resulting feature under the entropy list.
    pub entropy: f64,
    pub score: f64,
    /// Selected or fused feature; absent for label-voting strategies.
    pub feature: Option<FeatureVector>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StrategyOptions {
    pub entropy_weighting: EntropyWeighting,
}

impl Decision {
    /// Outcome of picking `view` directly.
    pub fn for_view(bundle: &ViewBundle, view: usize) -> Self {
        Self::from_view(bundle, view, true)
    }

    fn from_view(bundle: &ViewBundle, view: usize, with_feature: bool) -> Self {
        Decision {
            class: bundle.evaluation[view].argmax,
            view: Some(view),
            entropy: bundle.entropy[view].entropy,
            score: bundle.entropy[view].max_score,
            feature: with_feature.then(|| bundle.features[view].clone()),
        }
    }

    fn from_feature(feature: FeatureVector, ctx: &Context) -> Result<Self> {
        let e = concept_distribution(&feature, ctx.entropy, ctx.temperature)?;
        let c = concept_distribution(&feature, ctx.evaluation, ctx.temperature)?;
        Ok(Decision {
            class: c.argmax,
            view: None,
            entropy: e.entropy,
            score: e.max_score,
            feature: Some(feature),
        })
    }
}

/// Applies `strategy` to one bundle. `upper_bound` needs the ground-truth label
/// and returns the first view that matches it (or view 0 when none does).
pub fn decide(
    bundle: &ViewBundle,
    strategy: StrategyId,
    ctx: &Context,
    opts: StrategyOptions,
    gt: Option<&str>,
) -> Result<Decision> {
    bundle.check()?;
    match strategy {
        StrategyId::Average => Decision::from_feature(fuse_average(bundle)?, ctx),
        StrategyId::EntropyWeighted => {
            let w = entropy_weights(bundle, opts.entropy_weighting);
            Decision::from_feature(fuse_weighted(bundle, &w)?, ctx)
        }
        StrategyId::ScoreWeighted => Decision::from_feature(fuse_weighted(bundle, &score_weights(bundle))?, ctx),
        StrategyId::MinEntropy => Ok(Decision::from_view(bundle, select_min_entropy(bundle)?.0, true)),
        StrategyId::MaxScore => Ok(Decision::from_view(bundle, select_max_score(bundle)?.0, true)),
        StrategyId::Mode => Ok(Decision::from_view(bundle, mode_view(bundle)?.0, false)),
        StrategyId::UpperBound => {
            let gt = gt.ok_or_else(|| {
                Error::InvalidArgument("the upper_bound strategy needs a ground-truth label".into())
            })?;
            let view = upper_bound_view(bundle, gt, ctx.evaluation)?.unwrap_or(0);
            Ok(Decision::from_view(bundle, view, false))
        }
    }
}

/// `decide` over many bundles in parallel.
pub fn decide_all(
    bundles: &[ViewBundle],
    strategy: StrategyId,
    ctx: &Context,
    opts: StrategyOptions,
    gts: Option<&[Option<String>]>,
) -> Result<Vec<Decision>> {
    if let Some(g) = gts {
        ensure_arg!(g.len() == bundles.len(), "{} labels for {} bundles", g.len(), bundles.len());
    }
    par::map_range(bundles.len(), |i| {
        let gt = gts.and_then(|g| g[i].as_deref());
        decide(&bundles[i], strategy, ctx, opts, gt)
    })
    .into_iter()
    .collect()
}
