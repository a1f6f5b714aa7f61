use std::collections::BTreeMap;
use std::rc::Rc;

use gdsr_nnet::{
    Bound, Checkpoint, FieldLayout, LinearInput, Mlp, MlpSpec, ParamStore, SparseMatrix, Tape,
    Tensor, Var,
};
use rand::{Rng, SeedableRng};

use super::{ModelConfig, ModelManifest, Normalizers, OutputScales, MANIFEST_FORMAT, MANIFEST_VERSION};
use crate::error::{CoreError, Result};
use crate::featgraph::{GraphState, EDGE_WIDTH, NODE_WIDTH};
use crate::mesh::vec3::Vec3;
use crate::mesh::{face_frames, CorrespondenceMap};

struct Step {
    edge: Mlp,
    ring2: Option<Mlp>,
    node: Mlp,
}

struct Blocks {
    enc_node: Mlp,
    enc_edge: Mlp,
    enc_layered: Mlp,
    steps: Vec<Step>,
    decoder: Mlp,
    corrector: Mlp,
    hyper: Mlp,
}

fn specs(cfg: &ModelConfig) -> Vec<(String, MlpSpec)> {
    let (l, h) = (cfg.latent, cfg.mlp_hidden);
    let node_in = if cfg.hierarchy { 4 * l } else { 3 * l };
    let field_params = FieldLayout::new(cfg.field_widths(), cfg.omega0, cfg.alpha0)
        .map(|f| f.param_count())
        .unwrap_or(0);
    let mut out = vec![
        ("enc.node".to_string(), MlpSpec::relu(&[NODE_WIDTH, h, l])),
        ("enc.edge".to_string(), MlpSpec::relu(&[EDGE_WIDTH, h, l])),
        ("enc.layered".to_string(), MlpSpec::relu(&[EDGE_WIDTH, h, l])),
    ];
    for s in 0..cfg.steps {
        out.push((format!("mp{s}.edge"), MlpSpec::relu(&[3 * l, h, l])));
        if cfg.hierarchy {
            out.push((format!("mp{s}.ring2"), MlpSpec::relu(&[3 * l, h, l])));
        }
        out.push((format!("mp{s}.node"), MlpSpec::relu(&[node_in, h, l])));
    }
    out.push(("dec".into(), MlpSpec::relu(&[l, cfg.decoder_hidden, cfg.sr_width])));
    out.push((
        "corr".into(),
        MlpSpec::relu(&[3 * cfg.sr_split, cfg.corrector_hidden, 9]),
    ));
    out.push((
        "hyper".into(),
        MlpSpec::relu(&[3 * cfg.wrinkle_width(), cfg.hyper_hidden, field_params]),
    ));
    out
}

fn attach(store: &ParamStore, cfg: &ModelConfig) -> Result<Blocks> {
    let mut map: BTreeMap<String, Mlp> = BTreeMap::new();
    for (name, spec) in specs(cfg) {
        let mlp = Mlp::attach(store, &name, spec)?;
        map.insert(name, mlp);
    }
    let mut take = |n: &str| map.remove(n).expect("block registered");
    let steps = (0..cfg.steps)
        .map(|s| Step {
            edge: take(&format!("mp{s}.edge")),
            ring2: cfg.hierarchy.then(|| take(&format!("mp{s}.ring2"))),
            node: take(&format!("mp{s}.node")),
        })
        .collect();
    Ok(Blocks {
        enc_node: take("enc.node"),
        enc_edge: take("enc.edge"),
        enc_layered: take("enc.layered"),
        steps,
        decoder: take("dec"),
        corrector: take("corr"),
        hyper: take("hyper"),
    })
}

/// Encoded node, edge, layered-edge and 2-ring latents.
#[derive(Clone, Copy, Debug)]
pub struct Latents {
    pub q: Var,
    pub e: Var,
    pub layered: Option<Var>,
    pub ring2: Option<Var>,
}

/// Which fine vertices to synthesize and where they bind on the coarse mesh.
#[derive(Clone, Debug)]
pub struct FineRequest {
    /// Fine vertex ids, in output row order.
    pub vertices: Vec<usize>,
    /// Coarse faces whose fields are evaluated, ascending.
    pub faces: Vec<usize>,
    face_local: Rc<[usize]>,
    bary: Rc<Tensor>,
    sample: Rc<SparseMatrix>,
}

impl FineRequest {
    pub fn new(corr: &CorrespondenceMap, coarse_faces: &[[usize; 3]], coarse_vertices: usize, vertices: Vec<usize>) -> Self {
        let mut faces: Vec<usize> = vertices.iter().map(|&k| corr.entries[k].face).collect();
        faces.sort_unstable();
        faces.dedup();
        let local = |f: usize| faces.binary_search(&f).expect("face collected above");
        let mut face_local = Vec::with_capacity(vertices.len());
        let mut bary = Vec::with_capacity(3 * vertices.len());
        let mut rows = Vec::with_capacity(vertices.len());
        for &k in &vertices {
            let b = corr.entries[k];
            face_local.push(local(b.face));
            let w = [1.0 - b.u - b.v, b.u, b.v];
            bary.extend_from_slice(&w);
            let tri = coarse_faces[b.face];
            rows.push((0..3).map(|c| (tri[c], w[c])).collect::<Vec<_>>());
        }
        FineRequest {
            sample: Rc::new(SparseMatrix::from_rows(coarse_vertices, &rows)),
            bary: Rc::new(Tensor::matrix(vertices.len(), 3, bary)),
            face_local: face_local.into(),
            vertices,
            faces,
        }
    }

    pub fn all(corr: &CorrespondenceMap, coarse_faces: &[[usize; 3]], coarse_vertices: usize) -> Self {
        Self::new(corr, coarse_faces, coarse_vertices, (0..corr.len()).collect())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    pub displacement: Var,
    pub chat: Var,
    pub fine: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub chat: Vec<Vec3>,
    pub fine: Vec<Vec3>,
}

pub struct GdsrModel {
    pub config: ModelConfig,
    pub normalizers: Normalizers,
    pub scales: OutputScales,
    pub store: ParamStore,
    blocks: Blocks,
    layout: Rc<FieldLayout>,
}

fn rows_to_tensor(v: &[Vec3]) -> Tensor {
    Tensor::matrix(v.len(), 3, v.iter().flatten().copied().collect())
}

pub fn tensor_to_rows(t: &Tensor) -> Vec<Vec3> {
    t.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

impl GdsrModel {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = Rc::new(FieldLayout::new(
            config.field_widths(),
            config.omega0,
            config.alpha0,
        )?);
        let mut store = ParamStore::new();
        for (name, spec) in specs(&config) {
            Mlp::new(&mut store, &name, spec, rng)?;
        }
        let w_id = store.id("hyper.l1.w").expect("hyper output layer");
        for x in store.get_mut(w_id).data_mut() {
            *x *= config.hyper_init_scale;
        }
        let b_id = store.id("hyper.l1.b").expect("hyper output bias");
        let init = layout.init_params(rng);
        store.get_mut(b_id).data_mut().copy_from_slice(&init);
        let blocks = attach(&store, &config)?;
        Ok(GdsrModel {
            config,
            normalizers: Normalizers::default(),
            scales: OutputScales::default(),
            store,
            blocks,
            layout,
        })
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.layout
    }

    pub fn manifest(&self) -> ModelManifest {
        ModelManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            config: self.config.clone(),
            normalizers: self.normalizers.clone(),
            scales: self.scales,
        }
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let manifest = serde_json::to_string(&self.manifest())?;
        Ok(Checkpoint::from_store(manifest, &self.store))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let manifest: ModelManifest = serde_json::from_str(&ckpt.manifest)
            .map_err(|e| CoreError::Manifest(e.to_string()))?;
        manifest.check()?;
        manifest.config.validate()?;
        // refuse before allocating a network the tensors cannot fill
        let expected = specs(&manifest.config).iter().try_fold(0usize, |acc, (_, s)| {
            s.layer_widths.windows(2).try_fold(acc, |acc, w| {
                w[0].checked_mul(w[1])?.checked_add(w[1])?.checked_add(acc)
            })
        });
        let stored: usize = ckpt.tensors.iter().map(|(_, t)| t.data().len()).sum();
        if expected != Some(stored) {
            return Err(CoreError::Manifest(format!(
                "configuration needs {expected:?} parameters, checkpoint holds {stored}"
            )));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(manifest.config, &mut rng)?;
        model
            .store
            .load_from(ckpt.tensors.iter().map(|(n, t)| (n.as_str(), t)))?;
        model.normalizers = manifest.normalizers;
        model.scales = manifest.scales;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let bytes = self.to_checkpoint()?.encode();
        std::fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_checkpoint(&Checkpoint::decode(&bytes)?)
    }

    /// Loads a checkpoint, refusing one whose widths differ from `expected`.
    pub fn from_checkpoint_expecting(ckpt: &Checkpoint, expected: &ModelConfig) -> Result<Self> {
        let model = Self::from_checkpoint(ckpt)?;
        if &model.config != expected {
            return Err(CoreError::Manifest(format!(
                "checkpoint config {:?} differs from expected {:?}",
                model.config, expected
            )));
        }
        Ok(model)
    }

    fn constant_normalized(tape: &mut Tape, t: &Tensor, norm: &super::Normalizer) -> Var {
        tape.constant(Tensor::matrix(t.rows(), t.cols(), norm.apply(t.data())))
    }

    pub fn encode(&self, tape: &mut Tape, params: &Bound, graph: &GraphState) -> Result<Latents> {
        let n = &self.normalizers;
        let b = &self.blocks;
        let q_in = Self::constant_normalized(tape, &graph.node_features, &n.node);
        let e_in = Self::constant_normalized(tape, &graph.edge_features, &n.edge);
        let q = b.enc_node.forward(tape, params, q_in)?;
        let e = b.enc_edge.forward(tape, params, e_in)?;
        let layered = if graph.layered_edges.is_empty() {
            None
        } else {
            let l_in = Self::constant_normalized(tape, &graph.layered_edge_features, &n.layered);
            Some(b.enc_layered.forward(tape, params, l_in)?)
        };
        let ring2 = if self.config.hierarchy {
            let r_in = Self::constant_normalized(tape, &graph.ring2_features, &n.ring2);
            Some(b.enc_edge.forward(tape, params, r_in)?)
        } else {
            None
        };
        Ok(Latents {
            q,
            e,
            layered,
            ring2,
        })
    }

    pub fn message_pass(
        &self,
        tape: &mut Tape,
        params: &Bound,
        latents: Latents,
        graph: &GraphState,
    ) -> Result<Var> {
        let n = graph.node_count();
        let split = |pairs: &[[usize; 2]]| -> (Rc<[usize]>, Rc<[usize]>) {
            (
                pairs.iter().map(|p| p[0]).collect(),
                pairs.iter().map(|p| p[1]).collect(),
            )
        };
        let (er, es) = split(&graph.edges);
        let (lr, ls) = split(&graph.layered_edges);
        let (rr, rs) = split(&graph.ring2_edges);
        let zeros = tape.constant(Tensor::zeros(&[n, self.config.latent]));
        let Latents {
            mut q,
            mut e,
            mut layered,
            mut ring2,
        } = latents;
        for step in &self.blocks.steps {
            let update = |tape: &mut Tape, mlp: &Mlp, x: Var, r: &Rc<[usize]>, s: &Rc<[usize]>| -> Result<Var> {
                let inputs = [
                    LinearInput::dense(x),
                    LinearInput::gathered(q, r.clone()),
                    LinearInput::gathered(q, s.clone()),
                ];
                let y = mlp.forward_multi(tape, params, &inputs)?;
                Ok(tape.add(y, x))
            };
            e = update(tape, &step.edge, e, &er, &es)?;
            let agg_e = tape.scatter_add_rows(e, er.clone(), n);
            let agg_l = match layered {
                Some(l) => {
                    let l2 = update(tape, &step.edge, l, &lr, &ls)?;
                    layered = Some(l2);
                    tape.scatter_add_rows(l2, lr.clone(), n)
                }
                None => zeros,
            };
            let mut node_inputs = vec![
                LinearInput::dense(q),
                LinearInput::dense(agg_e),
                LinearInput::dense(agg_l),
            ];
            if let (Some(mlp), Some(r)) = (&step.ring2, ring2) {
                let r2 = update(tape, mlp, r, &rr, &rs)?;
                ring2 = Some(r2);
                node_inputs.push(LinearInput::dense(tape.scatter_add_rows(r2, rr.clone(), n)));
            }
            let dq = step.node.forward_multi(tape, params, &node_inputs)?;
            q = tape.add(dq, q);
        }
        Ok(q)
    }

    /// Returns `(ẑ, z̃)`: the correction and wrinkle parts of the decoded features.
    pub fn decode_sr(&self, tape: &mut Tape, params: &Bound, q: Var) -> Result<(Var, Var)> {
        let z = self.blocks.decoder.forward(tape, params, q)?;
        let split = self.config.sr_split;
        let width = self.config.sr_width;
        Ok((tape.slice_cols(z, 0, split), tape.slice_cols(z, split, width)))
    }

    /// Per-face local displacements rotated by the face frames of `c` and averaged per vertex.
    pub fn correct_coarse(
        &self,
        tape: &mut Tape,
        params: &Bound,
        zhat: Var,
        c: &[Vec3],
        faces: &[[usize; 3]],
    ) -> Result<(Var, Var)> {
        let frames = face_frames(c, faces)?;
        let corner = |k: usize| -> Rc<[usize]> { faces.iter().map(|f| f[k]).collect() };
        let inputs = [
            LinearInput::gathered(zhat, corner(0)),
            LinearInput::gathered(zhat, corner(1)),
            LinearInput::gathered(zhat, corner(2)),
        ];
        let local = self.blocks.corrector.forward_multi(tape, params, &inputs)?;
        let local = tape.scale(local, self.scales.displacement);
        let local = tape.reshape(local, &[3 * faces.len(), 3]);
        let mats: Rc<[[f64; 9]]> = frames
            .iter()
            .flat_map(|f| std::iter::repeat_n(f.rotation(), 3))
            .collect();
        let world = tape.rotate_rows(local, mats);
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); c.len()];
        for (f, tri) in faces.iter().enumerate() {
            for (k, &v) in tri.iter().enumerate() {
                incident[v].push(3 * f + k);
            }
        }
        let rows: Vec<Vec<(usize, f64)>> = incident
            .iter()
            .enumerate()
            .map(|(v, slots)| {
                if slots.is_empty() {
                    log::warn!("coarse vertex {v} has no incident face; displacement set to zero");
                    return Vec::new();
                }
                let w = 1.0 / slots.len() as f64;
                slots.iter().map(|&s| (s, w)).collect()
            })
            .collect();
        let avg = Rc::new(SparseMatrix::from_rows(3 * faces.len(), &rows));
        let d = tape.sparse(world, avg);
        let c_var = tape.constant(rows_to_tensor(c));
        let chat = tape.add(c_var, d);
        Ok((d, chat))
    }

    /// Flattened field parameters for the listed faces, one row each.
    pub fn hyper_weights(
        &self,
        tape: &mut Tape,
        params: &Bound,
        ztilde: Var,
        faces: &[[usize; 3]],
        active: &[usize],
    ) -> Result<Var> {
        let corner = |k: usize| -> Rc<[usize]> { active.iter().map(|&f| faces[f][k]).collect() };
        let inputs = [
            LinearInput::gathered(ztilde, corner(0)),
            LinearInput::gathered(ztilde, corner(1)),
            LinearInput::gathered(ztilde, corner(2)),
        ];
        Ok(self.blocks.hyper.forward_multi(tape, params, &inputs)?)
    }

    /// Differentiable frames `(e1, e2, n)` of the listed faces of `positions`.
    pub fn face_frames_var(
        tape: &mut Tape,
        positions: Var,
        faces: &[[usize; 3]],
        active: &[usize],
    ) -> (Var, Var, Var) {
        let corner = |k: usize| -> Rc<[usize]> { active.iter().map(|&f| faces[f][k]).collect() };
        let p0 = tape.gather_rows(positions, corner(0));
        let p1 = tape.gather_rows(positions, corner(1));
        let p2 = tape.gather_rows(positions, corner(2));
        let d1 = tape.sub(p1, p0);
        let d2 = tape.sub(p2, p0);
        let e1 = tape.rows_normalize(d1, [1.0, 0.0, 0.0]);
        let c = tape.rows_cross(d1, d2);
        let n = tape.rows_normalize(c, [0.0, 0.0, 1.0]);
        let e2 = tape.rows_cross(n, e1);
        (e1, e2, n)
    }

    /// `g = S[Ĉ, f, u, v] + Ĥ^f · r` for the requested fine vertices.
    pub fn synthesize_fine(
        &self,
        tape: &mut Tape,
        chat: Var,
        faces: &[[usize; 3]],
        request: &FineRequest,
        weights: Var,
    ) -> Result<Var> {
        let rows = tape.value(weights).rows();
        if rows != request.faces.len() {
            let missing = request.faces.get(rows).copied().unwrap_or(rows);
            return Err(CoreError::MissingField(missing));
        }
        let base = tape.sparse(chat, request.sample.clone());
        let r = tape.wire_field(
            weights,
            request.bary.clone(),
            request.face_local.clone(),
            self.layout.clone(),
        );
        let r = tape.scale(r, self.scales.residual);
        let (e1, e2, n) = Self::face_frames_var(tape, chat, faces, &request.faces);
        let mut g = base;
        for (k, axis) in [e1, e2, n].into_iter().enumerate() {
            let a = tape.gather_rows(axis, request.face_local.clone());
            let rk = tape.slice_cols(r, k, k + 1);
            let t = tape.mul_rows(a, rk);
            g = tape.add(g, t);
        }
        Ok(g)
    }

    /// Full composition from a built graph to corrected coarse and fine positions.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Bound,
        graph: &GraphState,
        c: &[Vec3],
        faces: &[[usize; 3]],
        request: &FineRequest,
    ) -> Result<ForwardOutput> {
        if graph.node_count() != c.len() {
            return Err(CoreError::ShapeMismatch {
                what: "graph nodes",
                expected: c.len(),
                got: graph.node_count(),
            });
        }
        let latents = self.encode(tape, params, graph)?;
        let q = self.message_pass(tape, params, latents, graph)?;
        let (zhat, ztilde) = self.decode_sr(tape, params, q)?;
        let (displacement, chat) = self.correct_coarse(tape, params, zhat, c, faces)?;
        let weights = self.hyper_weights(tape, params, ztilde, faces, &request.faces)?;
        let fine = self.synthesize_fine(tape, chat, faces, request, weights)?;
        Ok(ForwardOutput {
            displacement,
            chat,
            fine,
        })
    }

    /// Gradient-free forward pass over every fine vertex.
    pub fn predict(
        &self,
        graph: &GraphState,
        c: &[Vec3],
        faces: &[[usize; 3]],
        request: &FineRequest,
    ) -> Result<Prediction> {
        let mut tape = Tape::new();
        let params = self.store.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &params, graph, c, faces, request)?;
        Ok(Prediction {
            chat: tensor_to_rows(tape.value(out.chat)),
            fine: tensor_to_rows(tape.value(out.fine)),
        })
    }
}
