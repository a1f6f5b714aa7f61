//! Training objectives, the UV normal-map rasterizer and patch sampling.

mod ops;
mod patch;
mod raster;

pub use ops::{deformation_terms, dihedral, face_cross, l1, laplacian_operator, mapping_operators, mean_sq_norm, vertex_normals};
pub use patch::{pool_operator, PatchPlan, PYRAMID_FACTORS};
pub use raster::{
    atlas_bounds, atlas_window, crop_patches, rasterize_normal_patch, shade, to_ppm, NormalPatch,
    PatchWindow, PixelCoverage, MIN_PATCH_COVERAGE, PATCH_TRIES,
};

use std::rc::Rc;

use gdsr_nnet::{SparseMatrix, Tape, Tensor, Var};

use crate::error::Result;
use crate::mesh::{GarmentMesh, InteriorEdge, Topology};

pub const NORMAL_WEIGHT: f64 = 0.01;
pub const LAPLACIAN_WEIGHT: f64 = 1e4;
pub const DIHEDRAL_WEIGHT: f64 = 0.1;
pub const DEFORMATION_WEIGHT: f64 = 0.01;
pub const PERCEPTUAL_WEIGHT: f64 = 0.01;

/// Outer weights of the coarse and wrinkle objectives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_c: f64,
    pub lambda_w: f64,
}

/// Starting values and per-interval step of the λ schedule.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LambdaSchedule {
    pub lambda_c0: f64,
    pub lambda_w0: f64,
    pub step: f64,
    pub every: usize,
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule {
            lambda_c0: 1.9,
            lambda_w0: 0.1,
            step: 0.2,
            every: 10,
        }
    }
}

impl LambdaSchedule {
    /// λ_c decreases and λ_w increases by `step` every `every` epochs, each clamped at 1.
    pub fn at_epoch(&self, epoch: usize) -> LossWeights {
        // tenths keep the decimal steps exact: (19 − 2k)/10 rather than 1.9 − 0.2k
        let k = (epoch / self.every.max(1)) as f64;
        let d = 10.0 * self.step * k;
        LossWeights {
            lambda_c: ((10.0 * self.lambda_c0 - d) / 10.0).max(1.0),
            lambda_w: ((10.0 * self.lambda_w0 + d) / 10.0).min(1.0),
        }
    }
}

impl LossWeights {
    pub fn at_epoch(epoch: usize) -> Self {
        LambdaSchedule::default().at_epoch(epoch)
    }
}

/// Static operators of the coarse losses.
#[derive(Clone, Debug)]
pub struct CoarsePlan {
    faces: Vec<[usize; 3]>,
    n: usize,
    edges: Vec<InteriorEdge>,
    lap_op: Rc<SparseMatrix>,
    wu_op: Rc<SparseMatrix>,
    wv_op: Rc<SparseMatrix>,
}

impl CoarsePlan {
    pub fn new(mesh: &GarmentMesh, topology: &Topology) -> Result<Self> {
        let n = mesh.vertex_count();
        let rows = topology.interior_vertices();
        let lap = laplacian_operator(&topology.neighbors, &rows, n);
        let (wu, wv) = mapping_operators(&mesh.uv, &mesh.faces, n, |f| f)?;
        Ok(CoarsePlan {
            faces: mesh.faces.clone(),
            n,
            edges: topology.interior_edges.clone(),
            lap_op: Rc::new(lap),
            wu_op: Rc::new(wu),
            wv_op: Rc::new(wv),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// `mean|Ĉ − Ĉ*| + 0.01·mean|N̂ − N̂*|`.
    pub fn loss_geo(&self, tape: &mut Tape, chat: Var, gt: Var) -> Var {
        let pos = l1(tape, chat, gt);
        let na = vertex_normals(tape, chat, &self.faces, self.n);
        let nb = vertex_normals(tape, gt, &self.faces, self.n);
        let nl = l1(tape, na, nb);
        let nl = tape.scale(nl, NORMAL_WEIGHT);
        tape.add(pos, nl)
    }

    /// `10⁴·mean‖ΔĈ‖² + 0.1·mean|θ − θ*|` plus stretch and shear differences.
    pub fn loss_def(&self, tape: &mut Tape, chat: Var, gt: Var) -> Var {
        let lap = tape.sparse(chat, self.lap_op.clone());
        let lap = mean_sq_norm(tape, lap);
        let lap = tape.scale(lap, LAPLACIAN_WEIGHT);
        let ta = dihedral(tape, chat, &self.faces, &self.edges);
        let tb = dihedral(tape, gt, &self.faces, &self.edges);
        let th = l1(tape, ta, tb);
        let th = tape.scale(th, DIHEDRAL_WEIGHT);
        let def = deformation_terms(tape, chat, gt, &self.wu_op, &self.wv_op);
        let s = tape.add(lap, th);
        tape.add(s, def)
    }

    /// `L_c_geo + 0.01·L_c_def`.
    pub fn loss(&self, tape: &mut Tape, chat: Var, gt: Var) -> Var {
        let g = self.loss_geo(tape, chat, gt);
        let d = self.loss_def(tape, chat, gt);
        let d = tape.scale(d, DEFORMATION_WEIGHT);
        tape.add(g, d)
    }
}

/// `L_w_geo + 0.01·L_w_def` for one patch.
pub fn patch_loss(tape: &mut Tape, plan: &PatchPlan, p: Var, p_gt: Var) -> Var {
    let g = plan.loss_geo(tape, p, p_gt);
    let d = plan.loss_def(tape, p, p_gt);
    let d = tape.scale(d, DEFORMATION_WEIGHT);
    tape.add(g, d)
}

/// Mean of the per-patch wrinkle losses; `fine` rows follow `union` (ascending fine ids).
pub fn wrinkle_loss(tape: &mut Tape, plans: &[PatchPlan], union: &[usize], fine: Var, fine_gt: Var) -> Var {
    let mut total: Option<Var> = None;
    for plan in plans {
        let idx: Rc<[usize]> = plan
            .vertices
            .iter()
            .map(|g| union.binary_search(g).expect("patch vertex in union"))
            .collect();
        let p = tape.gather_rows(fine, idx.clone());
        let q = tape.gather_rows(fine_gt, idx);
        let l = patch_loss(tape, plan, p, q);
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l),
        });
    }
    match total {
        Some(t) => tape.scale(t, 1.0 / plans.len() as f64),
        None => tape.constant(Tensor::scalar(0.0)),
    }
}

/// `λ_c·L_coa + λ_w·L_wri`.
pub fn loss_total(tape: &mut Tape, coarse: Var, wrinkle: Var, w: LossWeights) -> Var {
    let a = tape.scale(coarse, w.lambda_c);
    let b = tape.scale(wrinkle, w.lambda_w);
    tape.add(a, b)
}

/// Scalar value of a loss built from constant inputs.
pub fn evaluate(f: impl FnOnce(&mut Tape) -> Var) -> f64 {
    let mut tape = Tape::new();
    let v = f(&mut tape);
    tape.value(v).item()
}

/// `[n, 3]` tensor from position rows.
pub fn positions_tensor(p: &[[f64; 3]]) -> Tensor {
    Tensor::matrix(p.len(), 3, p.iter().flatten().copied().collect())
}
