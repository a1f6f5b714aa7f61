use std::collections::BTreeSet;
use std::rc::Rc;

use gdsr_nnet::{SparseMatrix, Tape, Var};

use super::ops::{deformation_terms, l1, laplacian_operator, mapping_operators, mean_sq_norm, vertex_normals};
use super::raster::{PatchWindow, PixelCoverage};
use super::PERCEPTUAL_WEIGHT;
use crate::error::Result;
use crate::mesh::{GarmentMesh, Topology, UvLocator};

/// Downsampling factors of the normal-map pyramid.
pub const PYRAMID_FACTORS: [usize; 3] = [1, 2, 4];

/// Everything about one patch that depends only on the UV atlas.
#[derive(Clone, Debug)]
pub struct PatchPlan {
    pub window: PatchWindow,
    pub coverage: PixelCoverage,
    /// Fine vertices whose positions the patch losses read, ascending.
    pub vertices: Vec<usize>,
    /// Local rows of vertices whose UV lies inside the window.
    pub inside: Rc<[usize]>,
    faces_local: Vec<[usize; 3]>,
    pixel_op: Rc<SparseMatrix>,
    pools: Vec<Rc<SparseMatrix>>,
    lap_op: Rc<SparseMatrix>,
    wu_op: Rc<SparseMatrix>,
    wv_op: Rc<SparseMatrix>,
    def_faces: usize,
}

/// Masked average pooling of covered pixels into `factor × factor` blocks.
pub fn pool_operator(mask: &[bool], resolution: usize, factor: usize) -> SparseMatrix {
    let mut col_of = vec![usize::MAX; mask.len()];
    let mut k = 0;
    for (i, &m) in mask.iter().enumerate() {
        if m {
            col_of[i] = k;
            k += 1;
        }
    }
    let cells = resolution.div_ceil(factor);
    let mut rows = Vec::new();
    for by in 0..cells {
        for bx in 0..cells {
            let mut members = Vec::new();
            for y in by * factor..((by + 1) * factor).min(resolution) {
                for x in bx * factor..((bx + 1) * factor).min(resolution) {
                    let i = y * resolution + x;
                    if mask[i] {
                        members.push(col_of[i]);
                    }
                }
            }
            if !members.is_empty() {
                let w = 1.0 / members.len() as f64;
                rows.push(members.into_iter().map(|c| (c, w)).collect());
            }
        }
    }
    SparseMatrix::from_rows(k, &rows)
}

impl PatchPlan {
    pub fn new(
        fine: &GarmentMesh,
        topology: &Topology,
        locator: &UvLocator,
        window: PatchWindow,
        resolution: usize,
    ) -> Result<Self> {
        let coverage = PixelCoverage::new(fine, locator, &window, resolution);
        let inside_global: Vec<usize> = (0..fine.vertex_count())
            .filter(|&k| fine.uv_inside(k, &window))
            .collect();
        let mut core: BTreeSet<usize> = inside_global.iter().copied().collect();
        for &(_, f, _) in &coverage.pixels {
            core.extend(fine.faces[f]);
        }
        let ring_faces: BTreeSet<usize> = core
            .iter()
            .flat_map(|&v| topology.vertex_faces[v].iter().copied())
            .collect();
        let mut all: BTreeSet<usize> = core.clone();
        for &f in &ring_faces {
            all.extend(fine.faces[f]);
        }
        let vertices: Vec<usize> = all.into_iter().collect();
        let local = |g: usize| vertices.binary_search(&g).expect("vertex collected");
        let n = vertices.len();
        let faces_local: Vec<[usize; 3]> = ring_faces
            .iter()
            .map(|&f| fine.faces[f].map(local))
            .collect();
        let pixel_rows: Vec<Vec<(usize, f64)>> = coverage
            .pixels
            .iter()
            .map(|&(_, f, w)| {
                let tri = fine.faces[f];
                (0..3).map(|c| (local(tri[c]), w[c])).collect()
            })
            .collect();
        let mask = coverage.mask();
        let pools = PYRAMID_FACTORS[1..]
            .iter()
            .map(|&k| Rc::new(pool_operator(&mask, resolution, k)))
            .collect();
        let inside_set: BTreeSet<usize> = inside_global.iter().copied().collect();
        let def_global: Vec<usize> = ring_faces
            .iter()
            .copied()
            .filter(|&f| fine.faces[f].iter().all(|v| inside_set.contains(v)))
            .collect();
        let def_vertices: BTreeSet<usize> = def_global.iter().flat_map(|&f| fine.faces[f]).collect();
        let boundary = topology.boundary_vertices();
        let def_rows: Vec<usize> = def_vertices.iter().copied().filter(|&g| !boundary[g]).collect();
        let local_neighbors: Vec<Vec<usize>> = vertices
            .iter()
            .map(|&g| {
                if def_vertices.contains(&g) {
                    topology.neighbors[g].iter().map(|&j| local(j)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        let def_rows_local: Vec<usize> = def_rows.iter().map(|&g| local(g)).collect();
        let lap_op = laplacian_operator(&local_neighbors, &def_rows_local, n);
        let def_faces_local: Vec<[usize; 3]> =
            def_global.iter().map(|&f| fine.faces[f].map(local)).collect();
        let uv_local: Vec<[f64; 2]> = vertices.iter().map(|&g| fine.uv[g]).collect();
        let (wu, wv) = mapping_operators(&uv_local, &def_faces_local, n, |i| def_global[i])?;
        Ok(PatchPlan {
            window,
            coverage,
            inside: inside_global.iter().map(|&g| local(g)).collect(),
            vertices,
            faces_local,
            pixel_op: Rc::new(SparseMatrix::from_rows(n, &pixel_rows)),
            pools,
            lap_op: Rc::new(lap_op),
            wu_op: Rc::new(wu),
            wv_op: Rc::new(wv),
            def_faces: def_global.len(),
        })
    }

    pub fn covered_pixels(&self) -> usize {
        self.coverage.pixels.len()
    }

    /// Rendered pixel normals (covered pixels only) of local positions `p`.
    pub fn render(&self, tape: &mut Tape, p: Var) -> Var {
        let n = vertex_normals(tape, p, &self.faces_local, self.vertices.len());
        let px = tape.sparse(n, self.pixel_op.clone());
        tape.rows_normalize(px, [0.0, 0.0, 1.0])
    }

    /// Sum over pyramid levels of the mean absolute normal-map difference.
    pub fn pyramid_l1(&self, tape: &mut Tape, p: Var, p_gt: Var) -> Var {
        let a = self.render(tape, p);
        let b = self.render(tape, p_gt);
        let mut total = l1(tape, a, b);
        for pool in &self.pools {
            let pa = tape.sparse(a, pool.clone());
            let pb = tape.sparse(b, pool.clone());
            let t = l1(tape, pa, pb);
            total = tape.add(total, t);
        }
        total
    }

    /// Position L1 inside the window plus the weighted pyramid term.
    pub fn loss_geo(&self, tape: &mut Tape, p: Var, p_gt: Var) -> Var {
        let a = tape.gather_rows(p, self.inside.clone());
        let b = tape.gather_rows(p_gt, self.inside.clone());
        let pos = l1(tape, a, b);
        if self.covered_pixels() == 0 {
            return pos;
        }
        let pyr = self.pyramid_l1(tape, p, p_gt);
        let pyr = tape.scale(pyr, PERCEPTUAL_WEIGHT);
        tape.add(pos, pyr)
    }

    /// Laplacian, stretch and shear terms over faces lying fully inside the window.
    pub fn loss_def(&self, tape: &mut Tape, p: Var, p_gt: Var) -> Var {
        if self.def_faces == 0 {
            return tape.constant(gdsr_nnet::Tensor::scalar(0.0));
        }
        let lap = tape.sparse(p, self.lap_op.clone());
        let lap = mean_sq_norm(tape, lap);
        let def = deformation_terms(tape, p, p_gt, &self.wu_op, &self.wv_op);
        tape.add(lap, def)
    }
}
