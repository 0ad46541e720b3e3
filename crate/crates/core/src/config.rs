//! Run configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloud::{DEFAULT_PIXEL_STEP, DEFAULT_STRIDE, DEFAULT_VOXEL};
use crate::error::{ensure_arg, Error, Result};
use crate::features::{ConceptTable, Embedder, MockEmbedder, DEFAULT_TEMPERATURE, DEFAULT_TEMPLATE};
use crate::fusion::{EntropyWeighting, StrategyId};
use crate::geometry::DEFAULT_OCCLUSION_TOL;
use crate::metrics::{MaccForm, DEFAULT_MAX_DIST};
use crate::region::RegionGrowParams;
use crate::views::{DEFAULT_MIN_VISIBLE, DEFAULT_SCALE};

/// Environment variable naming the exported backbone directory.
pub const MODEL_DIR_ENV: &str = "OVSEG_MODEL_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Mock,
    Onnx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    /// Mock feature dimension.
    pub dim: usize,
    /// Mock image-embedding noise.
    pub noise: f64,
    /// Mock simulated forward pass: input resolution and sweep count.
    pub work_res: u32,
    pub work_passes: u32,
    /// Mock concept palette.
    pub concepts: ConceptTable,
    /// Backbone directory for the ONNX backend; falls back to `OVSEG_MODEL_DIR`.
    pub model_dir: Option<PathBuf>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Mock,
            dim: 128,
            noise: 0.1,
            work_res: 224,
            work_passes: 0,
            concepts: ConceptTable::default(),
            model_dir: None,
        }
    }
}

impl EmbedderConfig {
    pub fn model_dir(&self) -> Option<PathBuf> {
        self.model_dir
            .clone()
            .or_else(|| std::env::var_os(MODEL_DIR_ENV).map(PathBuf::from))
    }

    pub fn build(&self, seed: u64) -> Result<Box<dyn Embedder>> {
        match self.kind {
            EmbedderKind::Mock => Ok(Box::new(
                MockEmbedder::new(seed, self.dim, self.concepts.clone())
                    .with_noise(self.noise)
                    .with_work(self.work_res, self.work_passes),
            )),
            EmbedderKind::Onnx => self.build_onnx(),
        }
    }

    #[cfg(feature = "onnx")]
    fn build_onnx(&self) -> Result<Box<dyn Embedder>> {
        let dir = self.model_dir().ok_or_else(|| {
            Error::Embedder(format!("no model directory: set embedder.model_dir or {MODEL_DIR_ENV}"))
        })?;
        Ok(Box::new(crate::features::OnnxEmbedder::load(&dir)?))
    }

    #[cfg(not(feature = "onnx"))]
    fn build_onnx(&self) -> Result<Box<dyn Embedder>> {
        Err(Error::Embedder(
            "this build has no ONNX support (rebuild with the `onnx` feature)".into(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub stride: u32,
    pub pixel_step: u32,
    pub voxel: f64,
    pub k: usize,
    pub smoothness: f64,
    pub curvature_thresh: f64,
    pub min_size: usize,
    pub scales: Vec<f64>,
    pub strategy: StrategyId,
    pub entropy_weighting: EntropyWeighting,
    pub temperature: f64,
    pub template: String,
    pub occlusion_tol: f64,
    pub min_visible: usize,
    /// Keep at most this many views per segment (most visible first); 0 keeps all.
    pub max_views: usize,
    pub max_dist: f64,
    pub macc: MaccForm,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub embedder: EmbedderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rg = RegionGrowParams::default();
        RunConfig {
            stride: DEFAULT_STRIDE,
            pixel_step: DEFAULT_PIXEL_STEP,
            voxel: DEFAULT_VOXEL,
            k: rg.k,
            smoothness: rg.smoothness,
            curvature_thresh: rg.curvature_thresh,
            min_size: rg.min_size,
            scales: vec![DEFAULT_SCALE],
            strategy: StrategyId::MinEntropy,
            entropy_weighting: EntropyWeighting::Inverse,
            temperature: DEFAULT_TEMPERATURE,
            template: DEFAULT_TEMPLATE.into(),
            occlusion_tol: DEFAULT_OCCLUSION_TOL,
            min_visible: DEFAULT_MIN_VISIBLE,
            max_views: 0,
            max_dist: DEFAULT_MAX_DIST,
            macc: MaccForm::Precision,
            seed: 0,
            workers: 0,
            embedder: EmbedderConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(inner) => Error::format(path, "config", inner.to_string()),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("cannot serialize config: {e}")))
    }

    pub fn region_params(&self) -> RegionGrowParams {
        RegionGrowParams {
            k: self.k,
            smoothness: self.smoothness,
            curvature_thresh: self.curvature_thresh,
            min_size: self.min_size,
        }
    }

    pub fn max_views(&self) -> Option<usize> {
        (self.max_views > 0).then_some(self.max_views)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_arg!(self.stride >= 1, "stride must be at least 1");
        ensure_arg!(self.pixel_step >= 1, "pixel_step must be at least 1");
        ensure_arg!(self.voxel > 0.0 && self.voxel.is_finite(), "voxel must be positive");
        self.region_params().validate()?;
        ensure_arg!(!self.scales.is_empty(), "at least one crop scale is needed");
        ensure_arg!(
            self.scales.iter().all(|s| *s >= 1.0 && s.is_finite()),
            "crop scales must be ≥ 1"
        );
        ensure_arg!(
            self.temperature > 0.0 && self.temperature.is_finite(),
            "temperature must be positive"
        );
        ensure_arg!(self.template.contains("{}"), "template must contain {{}}");
        ensure_arg!(self.occlusion_tol > 0.0, "occlusion_tol must be positive");
        ensure_arg!(self.min_visible >= 1, "min_visible must be at least 1");
        ensure_arg!(self.max_dist >= 0.0, "max_dist must be non-negative");
        ensure_arg!(self.embedder.dim >= 1, "embedder dim must be positive");
        ensure_arg!(self.embedder.noise >= 0.0, "embedder noise must be non-negative");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.stride, c.k, c.min_size), (50, 100, 50));
        assert_eq!(c.scales, vec![1.5]);
        assert_eq!(c.strategy, StrategyId::MinEntropy);
        assert_eq!((c.smoothness, c.curvature_thresh, c.temperature), (0.05, 1.0, 100.0));
    }

    #[test]
    fn roundtrip_and_overrides() {
        let c = RunConfig::from_toml(
            "stride = 10\nstrategy = \"average\"\nscales = [1.0, 2.0]\n[embedder]\ndim = 16\n\
             [[embedder.concepts.palette]]\ncolor = [1, 2, 3]\nlabel = \"chair\"\n",
        )
        .unwrap();
        assert_eq!((c.stride, c.strategy, c.embedder.dim), (10, StrategyId::Average, 16));
        assert_eq!(c.embedder.concepts.palette[0].label, "chair");
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("stride = 0").is_err());
        assert!(RunConfig::from_toml("scales = [0.5]").is_err());
        assert!(RunConfig::from_toml("strategy = \"median\"").is_err());
        assert!(RunConfig::from_toml("bogus = 1").is_err());
    }
}
