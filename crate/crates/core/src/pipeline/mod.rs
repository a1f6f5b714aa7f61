//! Training loop, roll-out driver and evaluation metrics.

mod eval;
mod rollout;
mod ssim;
mod train;

pub use eval::{atlas_normal_image, evaluate, write_eval_csv, EvalReport, EvalRow, ATLAS_RESOLUTION};
pub use rollout::{rollout, FrameHistory, HistoryMode};
pub use ssim::{ssim, ssim_map, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use train::{fit_normalizers, fit_scales, write_loss_csv, LossRecord, TrainConfig, Trainer};

use crate::datagen::Dataset;
use crate::error::Result;
use crate::featgraph::{FeatureConfig, FrameInputs, GraphState, GraphTemplate};

/// Graph for frame `t` with teacher-forced history; warm-up repeats frame 0.
pub fn teacher_forced_graph(
    template: &GraphTemplate,
    data: &Dataset,
    t: usize,
    feat: &FeatureConfig,
) -> Result<GraphState> {
    let f = &data.frames;
    let (p1, p2) = (t.saturating_sub(1), t.saturating_sub(2));
    let inputs = FrameInputs {
        c: &f[t].coarse_in,
        c_prev: &f[p1].coarse_in,
        c_prev2: &f[p2].coarse_in,
        chat_prev: &f[p1].coarse_gt,
        chat_prev2: &f[p2].coarse_gt,
        body: &f[t].body,
    };
    template.build(&inputs, feat)
}
