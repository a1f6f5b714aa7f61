//! The three network blocks: mesh graph network, coarse-correction decoder,
//! and the hyper-network that emits per-face implicit wrinkle fields.

mod net;

pub use net::{FineRequest, ForwardOutput, GdsrModel, Latents, Prediction};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::featgraph::{EDGE_WIDTH, NODE_WIDTH};

pub const MANIFEST_FORMAT: &str = "gdsr-model";
pub const MANIFEST_VERSION: u32 = 1;

/// Widths and depths of every block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub latent: usize,
    pub mlp_hidden: usize,
    pub steps: usize,
    pub hierarchy: bool,
    pub sr_width: usize,
    pub sr_split: usize,
    pub decoder_hidden: usize,
    pub corrector_hidden: usize,
    pub hyper_hidden: usize,
    pub field_hidden: usize,
    pub field_layers: usize,
    pub omega0: f64,
    pub alpha0: f64,
    /// Initial scale of the hyper-network output weights.
    pub hyper_init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent: 128,
            mlp_hidden: 128,
            steps: 6,
            hierarchy: true,
            sr_width: 640,
            sr_split: 128,
            decoder_hidden: 384,
            corrector_hidden: 256,
            hyper_hidden: 1024,
            field_hidden: 16,
            field_layers: 5,
            omega0: 5.0,
            alpha0: 10.0,
            hyper_init_scale: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.latent == 0 || self.mlp_hidden == 0 || self.steps == 0 {
            return bad("latent width, hidden width and steps must be positive");
        }
        if self.sr_split == 0 || self.sr_split >= self.sr_width {
            return bad("super-resolution split must lie strictly inside its width");
        }
        if self.field_layers < 2 || self.field_hidden == 0 {
            return bad("wrinkle field needs at least two layers and a positive width");
        }
        if !(self.omega0 > 0.0 && self.alpha0 > 0.0) {
            return bad("wavelet constants must be positive");
        }
        Ok(())
    }

    /// `[3, h, …, h, 3]` with `field_layers` affine layers.
    pub fn field_widths(&self) -> Vec<usize> {
        let mut w = vec![3];
        w.extend(std::iter::repeat_n(self.field_hidden, self.field_layers - 1));
        w.push(3);
        w
    }

    pub fn wrinkle_width(&self) -> usize {
        self.sr_width - self.sr_split
    }
}

/// Per-channel affine input standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(width: usize) -> Self {
        Normalizer {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    /// Mean and standard deviation per column of row-major data; tiny spreads map to 1.
    pub fn fit(rows: impl Iterator<Item = impl AsRef<[f64]>>, width: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        for r in rows {
            let r = r.as_ref();
            for k in 0..width {
                sum[k] += r[k];
                sq[k] += r[k] * r[k];
            }
            n += 1;
        }
        if n == 0 {
            return Self::identity(width);
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = (0..width)
            .map(|k| {
                let var = (sq[k] / nf - mean[k] * mean[k]).max(0.0);
                let s = var.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, std }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &[f64]) -> Vec<f64> {
        let w = self.width();
        data.iter()
            .enumerate()
            .map(|(i, x)| (x - self.mean[i % w]) / self.std[i % w])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub node: Normalizer,
    pub edge: Normalizer,
    pub layered: Normalizer,
    pub ring2: Normalizer,
}

impl Default for Normalizers {
    fn default() -> Self {
        Normalizers {
            node: Normalizer::identity(NODE_WIDTH),
            edge: Normalizer::identity(EDGE_WIDTH),
            layered: Normalizer::identity(EDGE_WIDTH),
            ring2: Normalizer::identity(EDGE_WIDTH),
        }
    }
}

/// Multipliers applied to the correction decoder and wrinkle field outputs (meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScales {
    pub displacement: f64,
    pub residual: f64,
}

impl Default for OutputScales {
    fn default() -> Self {
        OutputScales {
            displacement: 1.0,
            residual: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub normalizers: Normalizers,
    pub scales: OutputScales,
}

impl ModelManifest {
    pub fn check(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT {
            return Err(CoreError::Manifest(format!("unknown format {:?}", self.format)));
        }
        if self.version != MANIFEST_VERSION {
            return Err(CoreError::Manifest(format!(
                "unsupported version {}",
                self.version
            )));
        }
        self.config.validate()?;
        let n = &self.normalizers;
        for (name, norm, width) in [
            ("node", &n.node, NODE_WIDTH),
            ("edge", &n.edge, EDGE_WIDTH),
            ("layered", &n.layered, EDGE_WIDTH),
            ("ring2", &n.ring2, EDGE_WIDTH),
        ] {
            if norm.mean.len() != width || norm.std.len() != width {
                return Err(CoreError::Manifest(format!("{name} normalizer width")));
            }
            if norm.std.iter().any(|s| !(*s > 0.0)) {
                return Err(CoreError::Manifest(format!("{name} normalizer spread")));
            }
        }
        Ok(())
    }
}
