use std::collections::VecDeque;

use crate::collision::CollisionResolver;
use crate::datagen::Dataset;
use crate::error::{CoreError, Result};
use crate::featgraph::{FeatureConfig, FrameInputs, GraphTemplate};
use crate::mesh::vec3::Vec3;
use crate::model::{FineRequest, GdsrModel, Prediction};

/// Where the corrected-coarse history comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistoryMode {
    /// The model's own previous predictions.
    Autoregressive,
    /// Dataset targets, as during training.
    TeacherForced,
}

/// Last two coarse inputs and corrected-coarse states.
#[derive(Clone, Debug)]
pub struct FrameHistory {
    c: VecDeque<Vec<Vec3>>,
    chat: VecDeque<Vec<Vec3>>,
}

impl FrameHistory {
    /// Both slots of each buffer hold the first frame.
    pub fn warm(c0: &[Vec3], chat0: &[Vec3]) -> Self {
        FrameHistory {
            c: VecDeque::from([c0.to_vec(), c0.to_vec()]),
            chat: VecDeque::from([chat0.to_vec(), chat0.to_vec()]),
        }
    }

    pub fn c_prev(&self) -> &[Vec3] {
        &self.c[1]
    }

    pub fn c_prev2(&self) -> &[Vec3] {
        &self.c[0]
    }

    pub fn chat_prev(&self) -> &[Vec3] {
        &self.chat[1]
    }

    pub fn chat_prev2(&self) -> &[Vec3] {
        &self.chat[0]
    }

    pub fn push(&mut self, c: Vec<Vec3>, chat: Vec<Vec3>) {
        self.c.pop_front();
        self.c.push_back(c);
        self.chat.pop_front();
        self.chat.push_back(chat);
    }
}

/// Predicts `frames` frames in order, feeding back corrected coarse states and
/// resolving collisions on every synthesized fine mesh.
pub fn rollout(
    model: &GdsrModel,
    data: &Dataset,
    frames: usize,
    feat: &FeatureConfig,
    resolver: Option<&CollisionResolver>,
    mode: HistoryMode,
) -> Result<Vec<Prediction>> {
    if frames > data.len() {
        return Err(CoreError::Config(format!(
            "requested {frames} frames, dataset has {}",
            data.len()
        )));
    }
    if frames == 0 {
        return Ok(Vec::new());
    }
    let template = GraphTemplate::new(&data.coarse)?;
    let faces = &data.coarse.faces;
    let request = FineRequest::all(&data.correspondence, faces, data.coarse.vertex_count());
    let first = &data.frames[0];
    let mut history = match mode {
        HistoryMode::Autoregressive => FrameHistory::warm(&first.coarse_in, &first.coarse_in),
        HistoryMode::TeacherForced => FrameHistory::warm(&first.coarse_in, &first.coarse_gt),
    };
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let frame = &data.frames[t];
        let inputs = FrameInputs {
            c: &frame.coarse_in,
            c_prev: history.c_prev(),
            c_prev2: history.c_prev2(),
            chat_prev: history.chat_prev(),
            chat_prev2: history.chat_prev2(),
            body: &frame.body,
        };
        let graph = template.build(&inputs, feat)?;
        let mut pred = model.predict(&graph, &frame.coarse_in, faces, &request)?;
        if pred.fine.iter().chain(&pred.chat).flatten().any(|x| !x.is_finite()) {
            return Err(CoreError::NonFinite {
                what: "prediction".into(),
                frame: t,
            });
        }
        if let Some(r) = resolver {
            pred.fine = r.resolve(&pred.fine, &pred.chat, &frame.body.index())?;
        }
        let chat_next = match mode {
            HistoryMode::Autoregressive => pred.chat.clone(),
            HistoryMode::TeacherForced => frame.coarse_gt.clone(),
        };
        history.push(frame.coarse_in.clone(), chat_next);
        out.push(pred);
    }
    Ok(out)
}
