//! Exported image encoder run through tract.
//!
//! A model directory holds:
//!
//! * `image_encoder.onnx`: maps a `1×3×R×R` float tensor to a `1×D` embedding;
//! * `preprocess.json`: `{"resolution": R, "mean": [..3], "std": [..3]}`;
//! * `text_embeddings.ovpe` (optional): label embeddings for `embed_text`.
//!
//! Crops are resized so the shorter side is `R` (bicubic), center-cropped to
//! `R×R`, scaled to `[0, 1]` and normalized per channel.

use std::fs;
use std::path::Path;

use image::{imageops, RgbImage};
use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use super::{ovpe, Embedder, FeatureVector, PromptList, PromptRole};
use crate::error::{Error, Result};

pub const IMAGE_ENCODER: &str = "image_encoder.onnx";
pub const PREPROCESS: &str = "preprocess.json";
pub const TEXT_EMBEDDINGS: &str = "text_embeddings.ovpe";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    pub resolution: u32,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Preprocess {
    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 {
            return Err(Error::Embedder("preprocess resolution must be positive".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Embedder("preprocess mean/std must be finite with std > 0".into()));
        }
        Ok(())
    }

    /// Resize, center crop and normalize into a `1×3×R×R` tensor.
    pub fn tensor(&self, crop: &RgbImage) -> Result<Tensor> {
        let r = self.resolution;
        let (w, h) = crop.dimensions();
        if w == 0 || h == 0 {
            return Err(Error::Embedder("cannot embed an empty crop".into()));
        }
        let resized;
        let img = if w.min(h) == r {
            crop
        } else {
            let s = r as f64 / w.min(h) as f64;
            let nw = ((w as f64 * s).round() as u32).max(r);
            let nh = ((h as f64 * s).round() as u32).max(r);
            resized = imageops::resize(crop, nw, nh, imageops::FilterType::CatmullRom);
            &resized
        };
        let (x0, y0) = ((img.width() - r) / 2, (img.height() - r) / 2);
        let r = r as usize;
        let arr = tract_ndarray::Array4::from_shape_fn((1, 3, r, r), |(_, c, y, x)| {
            let px = img.get_pixel(x0 + x as u32, y0 + y as u32)[c];
            (px as f32 / 255.0 - self.mean[c]) / self.std[c]
        });
        Ok(arr.into())
    }
}

type Plan = std::sync::Arc<TypedRunnableModel>;

pub struct OnnxEmbedder {
    plan: Plan,
    pre: Preprocess,
    dim: usize,
    text: Option<PromptList>,
}

impl std::fmt::Debug for OnnxEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnnxEmbedder")
            .field("pre", &self.pre)
            .field("dim", &self.dim)
            .field("text_labels", &self.text.as_ref().map_or(0, |t| t.len()))
            .finish_non_exhaustive()
    }
}

fn tract_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Embedder(format!("{}: {e}", path.display()))
}

impl OnnxEmbedder {
    pub fn load(dir: &Path) -> Result<Self> {
        let pre_path = dir.join(PREPROCESS);
        let text = fs::read_to_string(&pre_path).map_err(|e| Error::io(&pre_path, e))?;
        let pre: Preprocess =
            serde_json::from_str(&text).map_err(|e| Error::format(&pre_path, "preprocess", e.to_string()))?;
        pre.validate()?;

        let model_path = dir.join(IMAGE_ENCODER);
        if !model_path.is_file() {
            return Err(Error::io(
                &model_path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
        let r = pre.resolution as usize;
        let mut model = tract_onnx::onnx()
            .model_for_path(&model_path)
            .map_err(|e| tract_err(&model_path, e))?;
        let declared = model.input_fact(0).map_err(|e| tract_err(&model_path, e))?.clone();
        if let Ok(Some(shape)) = declared.shape.as_concrete_finite() {
            if shape.as_slice() != [1, 3, r, r] {
                return Err(Error::Embedder(format!(
                    "{}: model input {shape:?} does not match preprocess resolution {r}",
                    model_path.display()
                )));
            }
        }
        model
            .set_input_fact(0, f32::fact([1, 3, r, r]).into())
            .map_err(|e| tract_err(&model_path, e))?;
        let plan = model
            .into_optimized()
            .and_then(|m| m.into_runnable())
            .map_err(|e| tract_err(&model_path, e))?;

        let text_path = dir.join(TEXT_EMBEDDINGS);
        let text = text_path
            .is_file()
            .then(|| ovpe::read(&text_path, PromptRole::Evaluation))
            .transpose()?;
        let res = pre.resolution;
        let mut e = OnnxEmbedder { plan, pre, dim: 0, text };
        e.dim = e.forward(&RgbImage::new(res, res))?.len();
        if let Some(t) = &e.text {
            if t.dim() != e.dim {
                return Err(Error::DimensionMismatch {
                    expected: e.dim,
                    actual: t.dim(),
                });
            }
        }
        Ok(e)
    }

    pub fn preprocess(&self) -> &Preprocess {
        &self.pre
    }

    fn forward(&self, crop: &RgbImage) -> Result<Vec<f32>> {
        let input = self.pre.tensor(crop)?;
        let out = self
            .plan
            .run(tvec!(input.into()))
            .map_err(|e| Error::Embedder(format!("inference failed: {e}")))?;
        let view = out[0]
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Embedder(format!("unexpected output type: {e}")))?;
        Ok(view.iter().copied().collect())
    }
}

impl Embedder for OnnxEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_image(&self, crop: &RgbImage) -> Result<FeatureVector> {
        FeatureVector::normalized_f32(&self.forward(crop)?)
    }

    /// Looks `text` up in the exported label table.
    fn embed_text(&self, text: &str) -> Result<FeatureVector> {
        let table = self
            .text
            .as_ref()
            .ok_or_else(|| Error::Embedder(format!("no {TEXT_EMBEDDINGS} in the model directory")))?;
        let i = table
            .index_of(text)
            .ok_or_else(|| Error::Embedder(format!("label {text:?} is not in {TEXT_EMBEDDINGS}")))?;
        FeatureVector::normalized_f32(table.row(i))
    }
}
