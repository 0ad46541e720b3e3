//! Deterministic embedding backend for tests, studies and synthetic scenes.
//!
//! Every label maps to a pseudo-random unit vector derived from the seed and
//! the case-folded label. Image crops are tagged with a concept by counting
//! pixels of known palette colors; the embedding is that concept's vector
//! plus seeded Gaussian noise.

use std::collections::BTreeMap;
use std::hint::black_box;

use image::{imageops, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{fold_label, Embedder, FeatureVector};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteEntry {
    pub color: [u8; 3],
    pub label: String,
}

/// Concept palette plus optional near-synonym relations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConceptTable {
    pub palette: Vec<PaletteEntry>,
    /// `label → (base label, cosine to base)`.
    #[serde(default)]
    pub related: BTreeMap<String, (String, f64)>,
}

impl ConceptTable {
    pub fn from_palette(palette: Vec<PaletteEntry>) -> Self {
        ConceptTable {
            palette,
            related: BTreeMap::new(),
        }
    }
}

fn rng_for(seed: u64, domain: &str, key: &[u8]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(domain.as_bytes());
    h.update([0]);
    h.update(key);
    ChaCha8Rng::from_seed(h.finalize().into())
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Pseudo-random unit vector for a label.
pub fn label_vector(seed: u64, dim: usize, label: &str) -> Vec<f64> {
    let mut rng = rng_for(seed, "label", fold_label(label).as_bytes());
    unit(gaussian(&mut rng, dim))
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
    table: ConceptTable,
    noise: f64,
    input_res: u32,
    work: u32,
}

impl MockEmbedder {
    pub fn new(seed: u64, dim: usize, table: ConceptTable) -> Self {
        MockEmbedder {
            seed,
            dim,
            table,
            noise: 0.1,
            input_res: 224,
            work: 0,
        }
    }

    /// Noise magnitude added to image embeddings (relative to the unit concept vector).
    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    /// Simulated forward-pass cost: `passes` sweeps over the crop resized to
    /// `input_res × input_res`. Zero disables it.
    pub fn with_work(mut self, input_res: u32, passes: u32) -> Self {
        self.input_res = input_res.max(1);
        self.work = passes;
        self
    }

    /// Makes `label` a near-synonym of `base` with the given cosine similarity.
    pub fn with_related(mut self, label: &str, base: &str, similarity: f64) -> Self {
        self.table
            .related
            .insert(fold_label(label), (base.to_string(), similarity.clamp(-1.0, 1.0)));
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn table(&self) -> &ConceptTable {
        &self.table
    }

    pub fn concept_vector(&self, label: &str) -> Vec<f64> {
        let Some((base, sim)) = self.table.related.get(&fold_label(label)) else {
            return label_vector(self.seed, self.dim, label);
        };
        let b = label_vector(self.seed, self.dim, base);
        let own = label_vector(self.seed, self.dim, label);
        let along: f64 = own.iter().zip(&b).map(|(x, y)| x * y).sum();
        let orth = unit(own.iter().zip(&b).map(|(x, y)| x - along * y).collect());
        let s = (1.0 - sim * sim).max(0.0).sqrt();
        unit(b.iter().zip(&orth).map(|(x, o)| sim * x + s * o).collect())
    }

    /// `normalize(concept + noise · g)`, with `g` drawn from a generator keyed by `key`.
    pub fn embed_tagged(&self, concept: &str, noise: f64, key: u64) -> FeatureVector {
        let c = self.concept_vector(concept);
        let mut rng = rng_for(self.seed, "view", &key.to_le_bytes());
        let scale = noise / (self.dim as f64).sqrt();
        let v: Vec<f64> = c
            .iter()
            .zip(gaussian(&mut rng, self.dim))
            .map(|(x, g)| x + scale * g)
            .collect();
        FeatureVector::normalized(&v).expect("noisy concept vector is non-zero")
    }

    /// Palette concept covering the most pixels of `crop`, if any.
    pub fn tag(&self, crop: &RgbImage) -> Option<&str> {
        if self.table.palette.is_empty() {
            return None;
        }
        let mut counts = vec![0usize; self.table.palette.len()];
        for px in crop.pixels() {
            if let Some(i) = self.table.palette.iter().position(|e| e.color == px.0) {
                counts[i] += 1;
            }
        }
        let best = (0..counts.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
        (counts[best] > 0).then(|| self.table.palette[best].label.as_str())
    }

    fn simulate_forward(&self, crop: &RgbImage) {
        if self.work == 0 {
            return;
        }
        let resized = imageops::resize(crop, self.input_res, self.input_res, imageops::FilterType::CatmullRom);
        let mut acc = 0.0f32;
        for pass in 0..self.work {
            let w = 1.0 + pass as f32 * 1e-3;
            for px in resized.as_raw() {
                acc = acc.mul_add(0.999, *px as f32 * w);
            }
        }
        black_box(acc);
    }
}

impl Embedder for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_image(&self, crop: &RgbImage) -> Result<FeatureVector> {
        self.simulate_forward(crop);
        let mut h = Sha256::new();
        h.update(crop.width().to_le_bytes());
        h.update(crop.height().to_le_bytes());
        h.update(crop.as_raw());
        let digest = h.finalize();
        let key = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        Ok(match self.tag(crop) {
            Some(label) => self.embed_tagged(label, self.noise, key),
            None => {
                let mut rng = rng_for(self.seed, "untagged", &key.to_le_bytes());
                FeatureVector::normalized(&gaussian(&mut rng, self.dim))?
            }
        })
    }

    fn embed_text(&self, text: &str) -> Result<FeatureVector> {
        FeatureVector::normalized(&self.concept_vector(text))
    }
}
