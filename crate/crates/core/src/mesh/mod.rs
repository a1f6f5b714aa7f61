//! Triangle meshes with per-vertex UV and the geometric kernels built on them.

mod correspondence;
mod geometry;
mod obj;
mod subdivide;
mod topology;
pub mod vec3;

pub use correspondence::{
    build_correspondence, coincident_vertices, nearest_uv_vertices, Binding, CorrespondenceMap,
    UvLocator,
};
pub use geometry::{
    barycentric_sample, bending_angle, dihedral_angles, face_frames, face_normals,
    mapping_coefficients, mapping_matrix,
    stretch_shear_energies, triangle_frame, uniform_laplacian, upsample, vertex_normals,
    Energies, LocalFrame, MappingMatrix,
};
pub use obj::{
    format_layers, parse_layers, parse_obj, write_obj, write_obj_with_normals, ObjCorner, ObjData,
};
pub use subdivide::{subdivide, Subdivision};
pub use topology::{InteriorEdge, Topology};

use std::path::Path;

use crate::error::{CoreError, Result};
use vec3::{uv_cross, Vec3};

/// Minimum UV or world triangle area treated as non-degenerate.
pub const AREA_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GarmentMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub uv: Vec<[f64; 2]>,
    pub rest_positions: Vec<Vec3>,
    pub layer_id: Vec<u8>,
}

impl GarmentMesh {
    /// Builds a mesh whose rest state equals `vertices`, all on layer 0.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, uv: Vec<[f64; 2]>) -> Result<Self> {
        let n = vertices.len();
        let mesh = GarmentMesh {
            rest_positions: vertices.clone(),
            vertices,
            faces,
            uv,
            layer_id: vec![0; n],
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn layer_count(&self) -> usize {
        self.layer_id.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    /// Layer of a face, taken from its first vertex.
    pub fn face_layer(&self, f: usize) -> u8 {
        self.layer_id[self.faces[f][0]]
    }

    /// Whether vertex `k` lies inside an axis-aligned UV square.
    pub fn uv_inside(&self, k: usize, window: &crate::losses::PatchWindow) -> bool {
        window.contains(self.uv[k])
    }

    pub fn uv_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        0.5 * uv_cross(self.uv[a], self.uv[b], self.uv[c])
    }

    /// Checks indices, array lengths, UV degeneracy and edge manifoldness.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (what, len) in [
            ("uv", self.uv.len()),
            ("rest_positions", self.rest_positions.len()),
            ("layer_id", self.layer_id.len()),
        ] {
            if len != n {
                return Err(CoreError::ShapeMismatch {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        for face in &self.faces {
            if let Some(&bad) = face.iter().find(|&&i| i >= n) {
                return Err(CoreError::IndexOutOfRange {
                    line: 0,
                    index: bad as i64,
                    count: n,
                });
            }
        }
        let degenerate: Vec<usize> = (0..self.faces.len())
            .filter(|&f| !(self.uv_area(f).abs() > AREA_EPS))
            .collect();
        if !degenerate.is_empty() {
            return Err(CoreError::DegenerateUv(degenerate));
        }
        Topology::new(self).map(|_| ())
    }

    /// Reads an OBJ file plus an optional `<path>.layers` sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let obj = parse_obj(&text)?;
        let sidecar = layers_path(path);
        let layers = if sidecar.exists() {
            let t = std::fs::read_to_string(&sidecar).map_err(|e| CoreError::io(&sidecar, e))?;
            Some(parse_layers(&t, obj.positions.len())?)
        } else {
            None
        };
        Self::from_obj(&obj, layers.as_deref())
    }

    /// Splits OBJ vertices at UV seams so each output vertex has one UV.
    ///
    /// Vertex `i` of the file keeps index `i` with the first texture
    /// coordinate it is used with; further coordinates get appended copies.
    pub fn from_obj(obj: &ObjData, layers: Option<&[u8]>) -> Result<Self> {
        let n = obj.positions.len();
        let mut vertices = obj.positions.clone();
        let mut uv = vec![[0.0; 2]; n];
        let mut layer_id: Vec<u8> = match layers {
            Some(l) => l.to_vec(),
            None => vec![0; n],
        };
        let mut first_uv: Vec<Option<usize>> = vec![None; n];
        let mut copies = std::collections::HashMap::new();
        let mut faces = Vec::with_capacity(obj.faces.len());
        for (fi, face) in obj.faces.iter().enumerate() {
            let mut tri = [0usize; 3];
            for (k, corner) in face.iter().enumerate() {
                let Some(t) = corner.uv else {
                    return Err(CoreError::Parse {
                        line: obj.face_lines[fi],
                        message: "face corner without a texture coordinate".into(),
                    });
                };
                let p = corner.position;
                tri[k] = match first_uv[p] {
                    None => {
                        first_uv[p] = Some(t);
                        uv[p] = obj.uvs[t];
                        p
                    }
                    Some(t0) if t0 == t => p,
                    Some(_) => *copies.entry((p, t)).or_insert_with(|| {
                        vertices.push(obj.positions[p]);
                        uv.push(obj.uvs[t]);
                        layer_id.push(layer_id[p]);
                        vertices.len() - 1
                    }),
                };
            }
            faces.push(tri);
        }
        let mesh = GarmentMesh {
            rest_positions: vertices.clone(),
            vertices,
            faces,
            uv,
            layer_id,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Writes the current positions (and the layer sidecar when multi-layer).
    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_positions(path, &self.vertices)
    }

    pub fn save_positions(&self, path: &Path, positions: &[Vec3]) -> Result<()> {
        let text = write_obj(positions, &self.uv, &self.faces);
        std::fs::write(path, text).map_err(|e| CoreError::io(path, e))?;
        if self.layer_count() > 1 {
            let sidecar = layers_path(path);
            std::fs::write(&sidecar, format_layers(&self.layer_id))
                .map_err(|e| CoreError::io(&sidecar, e))?;
        }
        Ok(())
    }

    /// Loads only vertex positions from an OBJ with this mesh's layout.
    pub fn load_positions(&self, path: &Path) -> Result<Vec<Vec3>> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let other = Self::from_obj(&parse_obj(&text)?, None)?;
        if other.faces != self.faces {
            return Err(CoreError::TopologyMismatch(format!(
                "{} does not share the reference connectivity",
                path.display()
            )));
        }
        Ok(other.vertices)
    }
}

pub fn layers_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".layers");
    s.into()
}

/// Convenience wrapper over [`GarmentMesh::load`].
pub fn load_mesh(path: &Path) -> Result<GarmentMesh> {
    GarmentMesh::load(path)
}
