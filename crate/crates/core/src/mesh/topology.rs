use std::collections::BTreeMap;

use crate::error::{CoreError, Result};

use super::GarmentMesh;

/// Edge shared by exactly two faces; `a → b` follows the winding of `face_lo`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InteriorEdge {
    pub a: usize,
    pub b: usize,
    pub face_lo: usize,
    pub face_hi: usize,
}

/// Connectivity derived from a face list.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub vertex_count: usize,
    /// Undirected edges `(i, j)` with `i < j`, sorted.
    pub edges: Vec<[usize; 2]>,
    /// Sorted 1-ring neighbours per vertex.
    pub neighbors: Vec<Vec<usize>>,
    /// Incident faces per vertex, ascending.
    pub vertex_faces: Vec<Vec<usize>>,
    pub interior_edges: Vec<InteriorEdge>,
    /// Vertices at graph distance exactly two, sorted.
    pub ring2: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(mesh: &GarmentMesh) -> Result<Self> {
        Self::from_faces(mesh.vertex_count(), &mesh.faces)
    }

    pub fn from_faces(vertex_count: usize, faces: &[[usize; 3]]) -> Result<Self> {
        let mut edge_faces: BTreeMap<[usize; 2], Vec<(usize, usize, usize)>> = BTreeMap::new();
        let mut vertex_faces = vec![Vec::new(); vertex_count];
        for (f, tri) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edge_faces
                    .entry([a.min(b), a.max(b)])
                    .or_default()
                    .push((f, a, b));
                vertex_faces[tri[k]].push(f);
            }
        }
        let mut neighbors = vec![Vec::new(); vertex_count];
        let mut edges = Vec::with_capacity(edge_faces.len());
        let mut interior_edges = Vec::new();
        for (&[i, j], inc) in &edge_faces {
            if inc.len() > 2 {
                return Err(CoreError::NonManifoldEdge(i, j));
            }
            edges.push([i, j]);
            neighbors[i].push(j);
            neighbors[j].push(i);
            if inc.len() == 2 {
                let (lo, hi) = if inc[0].0 < inc[1].0 {
                    (inc[0], inc[1])
                } else {
                    (inc[1], inc[0])
                };
                interior_edges.push(InteriorEdge {
                    a: lo.1,
                    b: lo.2,
                    face_lo: lo.0,
                    face_hi: hi.0,
                });
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        for vf in &mut vertex_faces {
            vf.dedup();
        }
        let ring2 = (0..vertex_count)
            .map(|i| {
                let mut r: Vec<usize> = neighbors[i]
                    .iter()
                    .flat_map(|&j| neighbors[j].iter().copied())
                    .filter(|&k| k != i && neighbors[i].binary_search(&k).is_err())
                    .collect();
                r.sort_unstable();
                r.dedup();
                r
            })
            .collect();
        Ok(Topology {
            vertex_count,
            edges,
            neighbors,
            vertex_faces,
            interior_edges,
            ring2,
        })
    }

    /// Vertices on an edge used by exactly one face.
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut interior = std::collections::HashSet::new();
        for e in &self.interior_edges {
            interior.insert([e.a.min(e.b), e.a.max(e.b)]);
        }
        let mut flag = vec![false; self.vertex_count];
        for e in &self.edges {
            if !interior.contains(e) {
                flag[e[0]] = true;
                flag[e[1]] = true;
            }
        }
        flag
    }

    /// Vertices with a closed 1-ring, ascending.
    pub fn interior_vertices(&self) -> Vec<usize> {
        let boundary = self.boundary_vertices();
        (0..self.vertex_count)
            .filter(|&i| !boundary[i] && !self.neighbors[i].is_empty())
            .collect()
    }

    /// Both directions of every mesh edge as `(receiver, sender)` pairs, grouped by receiver.
    pub fn directed_edges(&self) -> Vec<[usize; 2]> {
        Self::directed(&self.neighbors)
    }

    /// Directed 2-ring pairs in the same `(receiver, sender)` layout.
    pub fn directed_ring2(&self) -> Vec<[usize; 2]> {
        Self::directed(&self.ring2)
    }

    fn directed(adj: &[Vec<usize>]) -> Vec<[usize; 2]> {
        adj.iter()
            .enumerate()
            .flat_map(|(i, n)| n.iter().map(move |&j| [i, j]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> Vec<[usize; 3]> {
        // 0-1-2 on the bottom, 3-4-5 on top
        vec![[0, 1, 3], [4, 3, 1], [1, 2, 4], [5, 4, 2]]
    }

    #[test]
    fn counts_and_adjacency() {
        let t = Topology::from_faces(6, &strip()).unwrap();
        assert_eq!(t.edges.len(), 9);
        assert_eq!(t.interior_edges.len(), 3);
        assert_eq!(t.neighbors[1], vec![0, 2, 3, 4]);
        assert_eq!(t.vertex_faces[4], vec![1, 2, 3]);
        assert_eq!(t.ring2[0], vec![2, 4]);
        assert_eq!(t.directed_edges().len(), 18);
    }

    #[test]
    fn interior_edge_follows_lower_face_winding() {
        let t = Topology::from_faces(6, &strip()).unwrap();
        let e = t.interior_edges.iter().find(|e| e.face_lo == 0).unwrap();
        assert_eq!((e.a, e.b, e.face_hi), (1, 3, 1));
    }

    #[test]
    fn three_faces_on_an_edge_is_rejected() {
        let faces = vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]];
        assert!(matches!(
            Topology::from_faces(5, &faces),
            Err(CoreError::NonManifoldEdge(0, 1))
        ));
    }
}
