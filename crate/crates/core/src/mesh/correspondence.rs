use crate::error::{CoreError, Result};
use crate::spatial::PointGrid;

use super::vec3::uv_cross;
use super::GarmentMesh;

/// Point-in-triangle tolerance in barycentric units.
pub const BARY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Binding {
    pub face: usize,
    pub u: f64,
    pub v: f64,
}

/// Per fine vertex: containing coarse face and barycentric `(u, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceMap {
    pub entries: Vec<Binding>,
}

impl CorrespondenceMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> (f64, f64) {
    let d = uv_cross(a, b, c);
    let u = uv_cross(a, p, c) / d;
    let v = uv_cross(a, b, p) / d;
    (u, v)
}

/// Clamps a slightly-outside barycentric pair onto the triangle.
fn snap(u: f64, v: f64) -> (f64, f64) {
    let (mut u, mut v) = (u.max(0.0), v.max(0.0));
    let s = u + v;
    if s > 1.0 {
        u /= s;
        v /= s;
    }
    (u, v)
}

/// Uniform UV bins over the faces of one mesh for point location.
pub struct UvLocator {
    cell: f64,
    origin: [f64; 2],
    dims: [usize; 2],
    bins: Vec<Vec<usize>>,
}

impl UvLocator {
    pub fn new(mesh: &GarmentMesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for t in &mesh.uv {
            for k in 0..2 {
                lo[k] = lo[k].min(t[k]);
                hi[k] = hi[k].max(t[k]);
            }
        }
        let mean_edge = mesh
            .faces
            .iter()
            .map(|&[a, b, _]| {
                let (p, q) = (mesh.uv[a], mesh.uv[b]);
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
            })
            .sum::<f64>()
            / mesh.faces.len().max(1) as f64;
        let cell = if mean_edge > 0.0 { mean_edge } else { 1.0 };
        let dims = [0, 1].map(|k| (((hi[k] - lo[k]) / cell).floor() as usize + 1).min(4096));
        let mut bins = vec![Vec::new(); dims[0] * dims[1]];
        let mut this = UvLocator {
            cell,
            origin: lo,
            dims,
            bins: Vec::new(),
        };
        for (f, tri) in mesh.faces.iter().enumerate() {
            let mut flo = [f64::INFINITY; 2];
            let mut fhi = [f64::NEG_INFINITY; 2];
            for &i in tri {
                for k in 0..2 {
                    flo[k] = flo[k].min(mesh.uv[i][k]);
                    fhi[k] = fhi[k].max(mesh.uv[i][k]);
                }
            }
            let (x0, y0) = this.cell_of([flo[0] - 1e-9, flo[1] - 1e-9]);
            let (x1, y1) = this.cell_of([fhi[0] + 1e-9, fhi[1] + 1e-9]);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    bins[y * dims[0] + x].push(f);
                }
            }
        }
        this.bins = bins;
        this
    }

    fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let c = [0, 1].map(|k| {
            let i = ((p[k] - self.origin[k]) / self.cell).floor();
            (i.max(0.0) as usize).min(self.dims[k] - 1)
        });
        (c[0], c[1])
    }

    pub fn candidates(&self, p: [f64; 2]) -> &[usize] {
        let (x, y) = self.cell_of(p);
        &self.bins[y * self.dims[0] + x]
    }
}

impl UvLocator {
    /// Best face for `p` among accepted faces: `(face, u, v, score)` where
    /// `score` is the smallest barycentric weight (negative when outside).
    pub fn locate(
        &self,
        mesh: &GarmentMesh,
        p: [f64; 2],
        accept: impl Fn(usize) -> bool,
    ) -> Option<(usize, f64, f64, f64)> {
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for &f in self.candidates(p) {
            if !accept(f) {
                continue;
            }
            let [a, b, c] = mesh.faces[f];
            let (u, v) = barycentric(p, mesh.uv[a], mesh.uv[b], mesh.uv[c]);
            let score = (1.0 - u - v).min(u).min(v);
            if best.is_none_or(|(_, _, _, s)| score > s) {
                best = Some((f, u, v, score));
            }
        }
        best
    }
}

/// Locates every fine vertex in the coarse UV atlas (same layer only).
pub fn build_correspondence(coarse: &GarmentMesh, fine: &GarmentMesh) -> Result<CorrespondenceMap> {
    let bins = UvLocator::new(coarse);
    let entries = fine
        .uv
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let layer = fine.layer_id[k];
            match bins.locate(coarse, p, |f| coarse.face_layer(f) == layer) {
                Some((face, u, v, score)) if score >= -BARY_TOL => {
                    let (u, v) = if score < 0.0 { snap(u, v) } else { (u, v) };
                    Ok(Binding { face, u, v })
                }
                _ => Err(CoreError::UncoveredVertex(k)),
            }
        })
        .collect::<Result<_>>()?;
    Ok(CorrespondenceMap { entries })
}

fn uv_grid(mesh: &GarmentMesh) -> PointGrid<2> {
    let n = mesh.vertex_count().max(1) as f64;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for t in &mesh.uv {
        for k in 0..2 {
            lo[k] = lo[k].min(t[k]);
            hi[k] = hi[k].max(t[k]);
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let cell = if extent > 0.0 { extent / n.sqrt() } else { 1.0 };
    PointGrid::new(mesh.uv.clone(), cell)
}

/// For each coarse vertex, the fine vertex at the same UV position (same layer).
pub fn coincident_vertices(coarse: &GarmentMesh, fine: &GarmentMesh) -> Result<Vec<usize>> {
    let grid = uv_grid(fine);
    coarse
        .uv
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let layer = coarse.layer_id[i];
            grid.nearest(p, |k| fine.layer_id[k] == layer)
                .filter(|&k| {
                    let q = fine.uv[k];
                    (p[0] - q[0]).abs() <= BARY_TOL && (p[1] - q[1]).abs() <= BARY_TOL
                })
                .ok_or(CoreError::NoCoincidentVertex(i))
        })
        .collect()
}

/// For each fine vertex, the nearest coarse vertex in UV (same layer).
pub fn nearest_uv_vertices(coarse: &GarmentMesh, fine: &GarmentMesh) -> Result<Vec<usize>> {
    let grid = uv_grid(coarse);
    fine.uv
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let layer = fine.layer_id[k];
            grid.nearest(p, |i| coarse.layer_id[i] == layer)
                .ok_or(CoreError::UncoveredVertex(k))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri_mesh() -> GarmentMesh {
        GarmentMesh::new(
            vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 3.0, 0.0], [3.0, 3.0, 0.0]],
            vec![[0, 1, 2], [3, 2, 1]],
            vec![[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [3.0, 3.0]],
        )
        .unwrap()
    }

    fn points(uv: Vec<[f64; 2]>) -> GarmentMesh {
        let n = uv.len();
        GarmentMesh {
            vertices: vec![[0.0; 3]; n],
            faces: Vec::new(),
            rest_positions: vec![[0.0; 3]; n],
            uv,
            layer_id: vec![0; n],
        }
    }

    #[test]
    fn coincident_vertex_gets_unit_weight() {
        let c = tri_mesh();
        let corr = build_correspondence(&c, &points(vec![[3.0, 0.0]])).unwrap();
        let b = corr.entries[0];
        let w = [1.0 - b.u - b.v, b.u, b.v];
        let corner = c.faces[b.face].iter().position(|&i| i == 1).unwrap();
        assert!((w[corner] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn centroid_binding() {
        let c = tri_mesh();
        let corr = build_correspondence(&c, &points(vec![[1.0, 1.0]])).unwrap();
        let b = corr.entries[0];
        assert_eq!(b.face, 0);
        assert!((b.u - 1.0 / 3.0).abs() < 1e-15 && (b.v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tiny_overshoot_is_snapped() {
        let c = tri_mesh();
        let corr = build_correspondence(&c, &points(vec![[1.0, -1e-10]])).unwrap();
        let b = corr.entries[0];
        assert!(b.u >= 0.0 && b.v >= 0.0 && b.u + b.v <= 1.0);
    }

    #[test]
    fn outside_point_is_reported() {
        let c = tri_mesh();
        let err = build_correspondence(&c, &points(vec![[1.0, 1.0], [5.0, 1.0]])).unwrap_err();
        assert!(matches!(err, CoreError::UncoveredVertex(1)));
    }

    #[test]
    fn nearest_and_coincident() {
        let c = tri_mesh();
        let f = points(vec![[0.0, 0.0], [2.9, 0.2], [3.0, 3.0], [0.0, 3.0], [3.0, 0.0]]);
        assert_eq!(nearest_uv_vertices(&c, &f).unwrap(), vec![0, 1, 3, 2, 1]);
        assert_eq!(coincident_vertices(&c, &f).unwrap(), vec![0, 4, 3, 2]);
        assert!(coincident_vertices(&c, &points(vec![[0.0, 0.0]])).is_err());
    }
}
