//! The circumcenter detector: a per-point MLP, a single star-graph
//! convolution that pools the patch into one feature, and a head that emits
//! `t x s x 4` values per patch.

mod checkpoint;
mod encoding;
mod loss;
mod network;
mod optim;
pub mod tape;
mod train;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use encoding::{feature_width, patch_features, positional_encode};
pub use loss::{bce_loss, loc_loss, sigmoid, smooth_l1, LossReport, Targets};
pub use network::{DetectionTensor, Detector, ParameterStore};
pub use optim::{Adam, StepDecay};
pub use tape::graph_conv;
pub use train::{evaluate, predict_local_triangles, sample_batch, EvalReport, Trainer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    /// Positional encoding levels `L`.
    pub pe_levels: usize,
    /// Depth multiplier `beta` of the graph convolution.
    pub depth_multiplier: usize,
    /// Hidden widths of the per-point MLP; the last one is the conv input.
    pub point_widths: Vec<usize>,
    pub conv_width: usize,
    pub head_widths: Vec<usize>,
    /// Number of anchors `t`; must equal the grid size.
    pub anchors: usize,
    /// Predictions per anchor cell `s`.
    pub slots: usize,
    /// Weight of the localization loss.
    pub lambda: f64,
    /// Negatives kept per positive by hard negative mining.
    pub neg_ratio: f64,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            pe_levels: 16,
            depth_multiplier: 16,
            point_widths: vec![64, 128],
            conv_width: 256,
            head_widths: vec![256, 256],
            anchors: 720,
            slots: 2,
            lambda: 1.0,
            neg_ratio: 20.0,
            learning_rate: 1e-3,
            decay_factor: 0.5,
            decay_every: 80_000,
        }
    }
}

impl DetectorConfig {
    pub fn for_anchors(anchors: usize) -> Self {
        Self { anchors, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.pe_levels == 0 {
            return bad("pe_levels must be at least 1");
        }
        if self.depth_multiplier == 0 {
            return bad("depth_multiplier must be at least 1");
        }
        if self.point_widths.is_empty() {
            return bad("point MLP needs at least one layer");
        }
        if self.point_widths.iter().chain(&self.head_widths).any(|&w| w == 0) || self.conv_width == 0 {
            return bad("layer widths must be positive");
        }
        if self.anchors == 0 || self.slots == 0 {
            return bad("anchors and slots must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.neg_ratio >= 0.0 && self.neg_ratio.is_finite()) {
            return bad("neg_ratio must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) || self.decay_every == 0 {
            return bad("decay needs a factor in (0, 1] and a positive period");
        }
        Ok(())
    }

    /// Values per patch in the detection tensor.
    pub fn output_width(&self) -> usize {
        self.anchors * self.slots * 4
    }
}
