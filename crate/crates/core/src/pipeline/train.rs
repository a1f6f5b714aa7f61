use std::io::Write;
use std::path::Path;

use gdsr_nnet::{adamw_step, AdamWConfig, AdamWState, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::teacher_forced_graph;
use crate::datagen::Dataset;
use crate::error::{CoreError, Result};
use crate::featgraph::{FeatureConfig, GraphTemplate, EDGE_WIDTH, NODE_WIDTH};
use crate::losses::{
    atlas_bounds, crop_patches, loss_total, positions_tensor, wrinkle_loss, CoarsePlan, LambdaSchedule,
    PatchPlan, PixelCoverage,
};
use crate::mesh::{upsample, vec3::Vec3, Topology, UvLocator};
use crate::model::{FineRequest, GdsrModel, ModelConfig, Normalizer, Normalizers, OutputScales};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_init: f64,
    pub lr_halve_every: usize,
    pub weight_decay: f64,
    pub patches_per_step: usize,
    pub batch_size: usize,
    pub patch_resolution: usize,
    /// Patch edge length in UV units.
    pub patch_size: f64,
    pub schedule: LambdaSchedule,
    pub seed: u64,
    /// Epochs between checkpoints; 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
    /// Train on the first `frames` frames only.
    pub frames: Option<usize>,
    pub model: ModelConfig,
    pub features: FeatureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            lr_init: 1e-4,
            lr_halve_every: 50,
            weight_decay: 0.01,
            patches_per_step: 8,
            batch_size: 1,
            patch_resolution: 64,
            patch_size: 0.16,
            schedule: LambdaSchedule::default(),
            seed: 0,
            checkpoint_every: 0,
            frames: None,
            model: ModelConfig::default(),
            features: FeatureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.lr_halve_every == 0 || self.patches_per_step == 0 || self.patch_resolution == 0 {
            return bad("lr_halve_every, patches_per_step and patch_resolution must be positive");
        }
        if self.batch_size != 1 {
            return bad("only batch_size 1 is supported");
        }
        if !(self.lr_init.is_finite() && self.lr_init > 0.0) || !(self.patch_size > 0.0) {
            return bad("lr_init and patch_size must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        self.model.validate()
    }

    /// `lr_init · 0.5^⌊epoch / lr_halve_every⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_init * 0.5f64.powi((epoch / self.lr_halve_every.max(1)) as i32)
    }
}

/// One row of the loss log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    #[serde(rename = "L_coa")]
    pub l_coa: f64,
    #[serde(rename = "L_wri")]
    pub l_wri: f64,
    pub total: f64,
    pub lr: f64,
    pub lambda_c: f64,
    pub lambda_w: f64,
}

pub fn write_loss_csv(records: &[LossRecord], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,step,L_coa,L_wri,total,lr,lambda_c,lambda_w")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch, r.step, r.l_coa, r.l_wri, r.total, r.lr, r.lambda_c, r.lambda_w
        )?;
    }
    Ok(())
}

fn collect_rows(t: &Tensor, rows: &mut Vec<Vec<f64>>) {
    if t.is_empty() {
        return;
    }
    rows.extend((0..t.rows()).map(|r| t.row(r).to_vec()));
}

/// Feature statistics over teacher-forced graphs of every `stride`-th frame.
pub fn fit_normalizers(
    data: &Dataset,
    template: &GraphTemplate,
    feat: &FeatureConfig,
    frames: usize,
    stride: usize,
) -> Result<Normalizers> {
    let (mut node, mut edge, mut layered, mut ring2) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in (0..frames).step_by(stride.max(1)) {
        let g = teacher_forced_graph(template, data, t, feat)?;
        collect_rows(&g.node_features, &mut node);
        collect_rows(&g.edge_features, &mut edge);
        collect_rows(&g.layered_edge_features, &mut layered);
        collect_rows(&g.ring2_features, &mut ring2);
    }
    let edge_norm = Normalizer::fit(edge.iter(), EDGE_WIDTH);
    Ok(Normalizers {
        node: Normalizer::fit(node.iter(), NODE_WIDTH),
        layered: if layered.is_empty() {
            edge_norm.clone()
        } else {
            Normalizer::fit(layered.iter(), EDGE_WIDTH)
        },
        ring2: Normalizer::fit(ring2.iter(), EDGE_WIDTH),
        edge: edge_norm,
    })
}

fn rms(pairs: impl Iterator<Item = (Vec3, Vec3)>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        for k in 0..3 {
            s += (a[k] - b[k]).powi(2);
        }
        n += 3;
    }
    if n == 0 {
        0.0
    } else {
        (s / n as f64).sqrt()
    }
}

/// Output scales from the RMS coarse correction and the RMS fine residual.
pub fn fit_scales(data: &Dataset, frames: usize) -> OutputScales {
    let faces = &data.coarse.faces;
    let d = rms((0..frames).flat_map(|t| {
        let f = &data.frames[t];
        f.coarse_gt.iter().copied().zip(f.coarse_in.iter().copied())
    }));
    let r = rms((0..frames).flat_map(|t| {
        let f = &data.frames[t];
        let up = upsample(&f.coarse_gt, faces, &data.correspondence);
        f.fine_gt.iter().copied().zip(up).collect::<Vec<_>>()
    }));
    let floor = 1e-6;
    let d = if d > floor { d } else { floor };
    OutputScales {
        displacement: d,
        residual: if r > floor { r } else { d },
    }
}

/// Owns the model, optimizer state and the static per-garment plans.
pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub model: GdsrModel,
    pub log: Vec<LossRecord>,
    data: &'a Dataset,
    template: GraphTemplate,
    coarse_plan: CoarsePlan,
    fine_topology: Topology,
    locator: UvLocator,
    optimizer: AdamWState,
    rng: ChaCha8Rng,
    frames: usize,
    step: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &'a Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let frames = config.frames.unwrap_or(data.len()).min(data.len());
        if frames == 0 {
            return Err(CoreError::Config("dataset has no frames".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = GdsrModel::new(config.model.clone(), &mut rng)?;
        let template = GraphTemplate::new(&data.coarse)?;
        model.normalizers = fit_normalizers(data, &template, &config.features, frames, 4)?;
        model.scales = fit_scales(data, frames);
        let coarse_topology = Topology::from_faces(data.coarse.vertex_count(), &data.coarse.faces)?;
        Ok(Trainer {
            coarse_plan: CoarsePlan::new(&data.coarse, &coarse_topology)?,
            fine_topology: Topology::from_faces(data.fine.vertex_count(), &data.fine.faces)?,
            locator: UvLocator::new(&data.fine),
            optimizer: AdamWState::new(&model.store),
            template,
            model,
            log: Vec::new(),
            data,
            rng,
            frames,
            step: 0,
            config,
        })
    }

    /// Random patch plans for one step.
    pub fn sample_patches(&mut self) -> Result<Vec<PatchPlan>> {
        let fine = &self.data.fine;
        let res = self.config.patch_resolution;
        let locator = &self.locator;
        let windows = crop_patches(
            atlas_bounds(fine),
            self.config.patches_per_step,
            self.config.patch_size,
            &mut self.rng,
            |w| PixelCoverage::new(fine, locator, w, 16).fraction(),
        )?;
        windows
            .into_iter()
            .map(|w| PatchPlan::new(fine, &self.fine_topology, locator, w, res))
            .collect()
    }

    /// Forward, loss, backward and one optimizer update on frame `t`.
    pub fn step(&mut self, epoch: usize, t: usize) -> Result<LossRecord> {
        let data = self.data;
        let frame = &data.frames[t];
        let graph = teacher_forced_graph(&self.template, data, t, &self.config.features)?;
        let plans = self.sample_patches()?;
        let mut union: Vec<usize> = plans.iter().flat_map(|p| p.vertices.iter().copied()).collect();
        union.sort_unstable();
        union.dedup();
        let request = FineRequest::new(
            &data.correspondence,
            &data.coarse.faces,
            data.coarse.vertex_count(),
            union.clone(),
        );
        let mut tape = Tape::new();
        let params = self.model.store.bind(&mut tape);
        let out = self
            .model
            .forward(&mut tape, &params, &graph, &frame.coarse_in, &data.coarse.faces, &request)?;
        let gt_c = tape.constant(positions_tensor(&frame.coarse_gt));
        let l_coa = self.coarse_plan.loss(&mut tape, out.chat, gt_c);
        let fine_gt: Vec<Vec3> = union.iter().map(|&k| frame.fine_gt[k]).collect();
        let gt_f = tape.constant(positions_tensor(&fine_gt));
        let l_wri = wrinkle_loss(&mut tape, &plans, &union, out.fine, gt_f);
        let weights = self.config.schedule.at_epoch(epoch);
        let total = loss_total(&mut tape, l_coa, l_wri, weights);
        let value = tape.value(total).item();
        if !value.is_finite() {
            return Err(CoreError::NonFinite {
                what: "training loss".into(),
                frame: t,
            });
        }
        let mut grads = tape.backward(total)?;
        let grads = params.gradients(&self.model.store, &mut grads);
        let lr = self.config.lr_at(epoch);
        let opt = AdamWConfig {
            lr,
            weight_decay: self.config.weight_decay,
            ..AdamWConfig::default()
        };
        adamw_step(&mut self.model.store, &grads, &mut self.optimizer, &opt).map_err(|e| match e {
            gdsr_nnet::NnetError::NonFiniteGradient(_) => CoreError::NonFinite {
                what: "gradient".into(),
                frame: t,
            },
            other => other.into(),
        })?;
        let record = LossRecord {
            epoch,
            step: self.step,
            l_coa: tape.value(l_coa).item(),
            l_wri: tape.value(l_wri).item(),
            total: value,
            lr,
            lambda_c: weights.lambda_c,
            lambda_w: weights.lambda_w,
        };
        self.step += 1;
        self.log.push(record);
        Ok(record)
    }

    /// One pass over the training frames in a seeded random order.
    pub fn epoch(&mut self, epoch: usize) -> Result<()> {
        let mut order: Vec<usize> = (0..self.frames).collect();
        order.shuffle(&mut self.rng);
        for t in order {
            let r = self.step(epoch, t)?;
            log::debug!("epoch {epoch} frame {t} total {:.6e}", r.total);
        }
        Ok(())
    }

    /// Runs every configured epoch, calling `on_epoch` after each.
    pub fn run(&mut self, mut on_epoch: impl FnMut(usize, &GdsrModel) -> Result<()>) -> Result<()> {
        for e in 0..self.config.epochs {
            self.epoch(e)?;
            on_epoch(e, &self.model)?;
        }
        Ok(())
    }

    pub fn save_log(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        write_loss_csv(&self.log, &mut buf).map_err(|e| CoreError::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| CoreError::io(path, e))
    }
}
