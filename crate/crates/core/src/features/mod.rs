//! Shared image/text feature space, inter-concept distributions and entropy.

mod mock;
#[cfg(feature = "onnx")]
mod onnx;
pub mod ovpe;

use std::collections::HashSet;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_arg, Error, Result};

pub use mock::{label_vector, ConceptTable, MockEmbedder, PaletteEntry};
#[cfg(feature = "onnx")]
pub use onnx::{OnnxEmbedder, Preprocess};

/// Default logit scale applied to cosine similarities before the softmax.
pub const DEFAULT_TEMPERATURE: f64 = 100.0;
/// Prompt template placeholder; the default embeds labels verbatim.
pub const DEFAULT_TEMPLATE: &str = "{}";

const UNIT_TOL: f64 = 1e-4;

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f32>);

impl FeatureVector {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: &[f64]) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(Error::DegenerateFusion);
        }
        Ok(FeatureVector(values.iter().map(|v| (v / norm) as f32).collect()))
    }

    pub fn normalized_f32(values: &[f32]) -> Result<Self> {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        Self::normalized(&v)
    }

    /// Wraps values that are already unit length (within 1e-4).
    pub fn from_unit(values: Vec<f32>) -> Result<Self> {
        let n = norm_f32(&values);
        ensure_arg!(
            (n - 1.0).abs() <= UNIT_TOL,
            "feature norm is {n}, expected 1 within {UNIT_TOL}"
        );
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn dot(&self, other: &[f32]) -> f64 {
        dot(&self.0, other)
    }
}

pub(crate) fn norm_f32(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    /// Labels objects are classified against.
    Evaluation,
    /// Labels used only to measure per-view entropy and score.
    Entropy,
}

/// Ordered labels with one unit-norm text embedding per label.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptList {
    labels: Vec<String>,
    dim: usize,
    embeddings: Vec<f32>,
    role: PromptRole,
}

pub fn fold_label(label: &str) -> String {
    label.trim().to_lowercase()
}

pub fn labels_match(a: &str, b: &str) -> bool {
    fold_label(a) == fold_label(b)
}

impl PromptList {
    /// Builds a list from labels and row-major `n × dim` embeddings.
    pub fn new(labels: Vec<String>, dim: usize, embeddings: Vec<f32>, role: PromptRole) -> Result<Self> {
        Self::with_tolerance(labels, dim, embeddings, role, UNIT_TOL)
    }

    pub(crate) fn with_tolerance(
        labels: Vec<String>,
        dim: usize,
        embeddings: Vec<f32>,
        role: PromptRole,
        tol: f64,
    ) -> Result<Self> {
        ensure_arg!(!labels.is_empty(), "prompt list is empty");
        ensure_arg!(dim > 0, "embedding dimension must be positive");
        if embeddings.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                actual: embeddings.len(),
            });
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(fold_label(l)) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        for (i, row) in embeddings.chunks(dim).enumerate() {
            let n = norm_f32(row);
            ensure_arg!((n - 1.0).abs() <= tol, "row {i} ({:?}) has norm {n}", labels[i]);
        }
        Ok(PromptList {
            labels,
            dim,
            embeddings,
            role,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn role(&self) -> PromptRole {
        self.role
    }

    pub fn with_role(mut self, role: PromptRole) -> Self {
        self.role = role;
        self
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.embeddings[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    /// Index of a label under case-folded comparison.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        let f = fold_label(label);
        self.labels.iter().position(|l| fold_label(l) == f)
    }

    /// Cosine similarity of `feature` with every row.
    pub fn cosines(&self, feature: &FeatureVector) -> Result<Vec<f64>> {
        if feature.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: feature.dim(),
            });
        }
        Ok(self.embeddings.chunks(self.dim).map(|row| feature.dot(row)).collect())
    }
}

/// Embeds each label through `template` (with `{}` replaced by the label).
pub fn build_prompt_list(
    labels: &[String],
    embedder: &dyn Embedder,
    role: PromptRole,
    template: &str,
) -> Result<PromptList> {
    ensure_arg!(!labels.is_empty(), "no labels to embed");
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(fold_label(l)) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    let dim = embedder.dim();
    let mut embeddings = Vec::with_capacity(labels.len() * dim);
    for l in labels {
        let text = template.replace("{}", l);
        let f = embedder.embed_text(&text)?;
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.dim(),
            });
        }
        embeddings.extend(FeatureVector::normalized_f32(f.as_slice())?.into_inner());
    }
    PromptList::new(labels.to_vec(), dim, embeddings, role)
}

/// Softmax over a prompt list (`s^concept`) and its Shannon entropy in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptDistribution {
    pub probs: Vec<f64>,
    pub entropy: f64,
    pub argmax: usize,
    /// Largest raw cosine similarity.
    pub max_score: f64,
}

/// `−Σ pᵢ ln pᵢ` with `0 · ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// First index of the maximum; NaN never wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn concept_distribution(feature: &FeatureVector, prompts: &PromptList, temperature: f64) -> Result<ConceptDistribution> {
    ensure_arg!(temperature > 0.0 && temperature.is_finite(), "temperature must be positive");
    let cos = prompts.cosines(feature)?;
    Ok(distribution_from_cosines(&cos, temperature))
}

pub(crate) fn distribution_from_cosines(cos: &[f64], temperature: f64) -> ConceptDistribution {
    let logits: Vec<f64> = cos.iter().map(|c| c * temperature).collect();
    let probs = softmax(&logits);
    let h = entropy(&probs).min((probs.len() as f64).ln());
    let am = argmax(cos);
    ConceptDistribution {
        probs,
        entropy: h,
        argmax: am,
        max_score: cos[am],
    }
}

/// Label with the highest probability, lowest index on ties.
pub fn classify<'a>(dist: &ConceptDistribution, prompts: &'a PromptList) -> &'a str {
    prompts.label(dist.argmax)
}

/// Backend that maps crops and labels into one feature space.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_image(&self, crop: &RgbImage) -> Result<FeatureVector>;

    fn embed_text(&self, text: &str) -> Result<FeatureVector>;

    /// Whether `embed_image` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn prompts(rows: &[&[f32]]) -> PromptList {
        let labels = (0..rows.len()).map(|i| format!("l{i}")).collect();
        PromptList::new(labels, rows[0].len(), rows.concat(), PromptRole::Evaluation).unwrap()
    }

    #[test]
    fn entropy_closed_forms() {
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
        assert_abs_diff_eq!(entropy(&[0.25; 4]), 4f64.ln(), epsilon = 1e-12);
        // −(0.7 ln 0.7 + 0.2 ln 0.2 + 0.1 ln 0.1)
        assert_abs_diff_eq!(entropy(&[0.7, 0.2, 0.1]), 0.8018, epsilon = 1e-4);
    }

    #[test]
    fn one_hot_at_high_temperature() {
        let p = prompts(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let f = FeatureVector::from_unit(vec![1.0, 0.0]).unwrap();
        let d = concept_distribution(&f, &p, 100.0).unwrap();
        // softmax(100, 0) = (1/(1+e⁻¹⁰⁰), e⁻¹⁰⁰/(1+e⁻¹⁰⁰))
        assert_abs_diff_eq!(d.probs[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.probs[1], (-100f64).exp(), epsilon = 1e-46);
        assert!(d.probs[1] > 3.7e-44 && d.probs[1] < 3.8e-44);
        assert!(d.entropy < 1e-40);
        assert_eq!(classify(&d, &p), "l0");
    }

    #[test]
    fn equidistant_feature_is_uniform() {
        let s = 0.5f32;
        let p = prompts(&[&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 0.0], &[0.0, 0.0, 0.0, 1.0]]);
        let f = FeatureVector::from_unit(vec![s, s, s, s]).unwrap();
        let d = concept_distribution(&f, &p, 100.0).unwrap();
        assert_abs_diff_eq!(d.entropy, 1.3863, epsilon = 1e-4);
        assert_abs_diff_eq!(d.entropy, 4f64.ln(), epsilon = 1e-9);
        for q in d.probs {
            assert_abs_diff_eq!(q, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn ties_go_to_lower_index() {
        let d = distribution_from_cosines(&[0.1, 0.5, 0.5], 100.0);
        assert_eq!(d.argmax, 1);
        let d = distribution_from_cosines(&[0.0, 0.0, 1.0], 100.0);
        assert_eq!(d.argmax, 2);
    }

    #[test]
    fn dimension_mismatch() {
        let p = prompts(&[&[1.0, 0.0]]);
        let f = FeatureVector::from_unit(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            concept_distribution(&f, &p, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(concept_distribution(&FeatureVector::from_unit(vec![1.0, 0.0]).unwrap(), &p, 0.0).is_err());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let r = PromptList::new(
            vec!["chair".into(), "Chair".into()],
            1,
            vec![1.0, 1.0],
            PromptRole::Evaluation,
        );
        assert!(matches!(r, Err(Error::DuplicateLabel(l)) if l == "Chair"));
    }

    #[test]
    fn near_synonyms_share_mass() {
        // "laptop case" and "laptop bag" sit close to "laptop".
        let m = MockEmbedder::new(7, 64, ConceptTable::default())
            .with_related("laptop case", "laptop", 0.97)
            .with_related("laptop bag", "laptop", 0.97);
        let labels: Vec<String> = ["laptop", "laptop case", "laptop bag", "chair", "lamp", "sofa"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let full = build_prompt_list(&labels, &m, PromptRole::Entropy, DEFAULT_TEMPLATE).unwrap();
        let sparse_labels: Vec<String> = vec!["laptop".into(), "chair".into(), "lamp".into(), "sofa".into()];
        let sparse = build_prompt_list(&sparse_labels, &m, PromptRole::Entropy, DEFAULT_TEMPLATE).unwrap();
        let view = m.embed_tagged("laptop", 0.3, 11);
        let d_full = concept_distribution(&view, &full, DEFAULT_TEMPERATURE).unwrap();
        let d_sparse = concept_distribution(&view, &sparse, DEFAULT_TEMPERATURE).unwrap();
        assert!(classify(&d_full, &full).starts_with("laptop"));
        assert!(d_full.entropy > d_sparse.entropy + 0.1);
        let top3: f64 = d_full.probs[..3].iter().sum();
        assert!(top3 > 0.99);
    }

    proptest! {
        #[test]
        fn distribution_invariants(cos in prop::collection::vec(-1.0f64..1.0, 1..50), t in 0.01f64..500.0) {
            let d = distribution_from_cosines(&cos, t);
            let s: f64 = d.probs.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            prop_assert!(d.entropy >= 0.0 && d.entropy <= (cos.len() as f64).ln() + 1e-9);
            prop_assert!(d.probs.iter().all(|&p| p >= 0.0));
            let pmax = d.probs.iter().cloned().fold(0.0, f64::max);
            prop_assert_eq!(d.probs[d.argmax], pmax);
        }

        #[test]
        fn limits_in_temperature(cos in prop::collection::vec(-1.0f64..1.0, 2..30)) {
            let n = cos.len() as f64;
            prop_assert!((distribution_from_cosines(&cos, 1e-9).entropy - n.ln()).abs() < 1e-6);
            let mut distinct = cos.clone();
            distinct.sort_by(f64::total_cmp);
            prop_assume!(distinct[distinct.len() - 1] - distinct[distinct.len() - 2] > 1e-3);
            prop_assert!(distribution_from_cosines(&cos, 1e6).entropy < 1e-6);
        }

        #[test]
        fn argmax_ignores_temperature(cos in prop::collection::vec(-1.0f64..1.0, 2..30), t1 in 0.1f64..50.0, t2 in 50.0f64..400.0) {
            prop_assert_eq!(distribution_from_cosines(&cos, t1).argmax, distribution_from_cosines(&cos, t2).argmax);
        }

        #[test]
        fn entropy_falls_with_temperature(cos in prop::collection::vec(-1.0f64..1.0, 2..30), t in 0.1f64..100.0) {
            let spread = cos.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - cos.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let h1 = distribution_from_cosines(&cos, t).entropy;
            let h2 = distribution_from_cosines(&cos, t * 2.0).entropy;
            prop_assert!(h2 <= h1 + 1e-9);
        }
    }
}
