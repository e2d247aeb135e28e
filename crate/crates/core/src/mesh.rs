//! Indexed triangle meshes with canonical faces and edge adjacency.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geometry::{cross, norm, sub, Point3, Triangle};

/// Vertices plus deduplicated canonical triangles.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IndexedMesh {
    pub vertices: Vec<Point3>,
    faces: Vec<Triangle>,
}

impl IndexedMesh {
    /// Builds a mesh, checking index ranges and dropping repeated faces
    /// (first occurrence wins).
    pub fn new(vertices: Vec<Point3>, faces: Vec<Triangle>) -> Result<Self> {
        let count = vertices.len();
        for (f, t) in faces.iter().enumerate() {
            if let Some(&bad) = t.indices().iter().find(|&&i| i >= count) {
                return Err(Error::IndexOutOfRange { face: f, index: bad as i64, count });
            }
        }
        let mut seen = BTreeSet::new();
        let faces = faces.into_iter().filter(|t| seen.insert(*t)).collect();
        Ok(Self { vertices, faces })
    }

    /// Builds from raw index triplets, skipping triplets with repeated indices.
    pub fn from_triplets(vertices: Vec<Point3>, triplets: &[[usize; 3]]) -> Result<Self> {
        let faces = triplets.iter().filter_map(|&[a, b, c]| Triangle::new(a, b, c)).collect();
        Self::new(vertices, faces)
    }

    pub fn faces(&self) -> &[Triangle] {
        &self.faces
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Same mesh with faces sorted canonically; handy for set comparisons.
    pub fn face_set(&self) -> BTreeSet<Triangle> {
        self.faces.iter().copied().collect()
    }

    pub fn with_faces(&self, faces: Vec<Triangle>) -> Result<Self> {
        Self::new(self.vertices.clone(), faces)
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].positions(&self.vertices);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    /// Unit normal of the canonical winding; zero for degenerate faces.
    pub fn face_normal(&self, f: usize) -> Point3 {
        let [a, b, c] = self.faces[f].positions(&self.vertices);
        crate::geometry::normalize(cross(sub(b, a), sub(c, a)))
    }

    pub fn edge_adjacency(&self) -> EdgeAdjacency {
        EdgeAdjacency::from_faces(&self.faces)
    }

    /// For each vertex, the indices of faces incident to it.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (f, t) in self.faces.iter().enumerate() {
            for v in t.indices() {
                out[v].push(f);
            }
        }
        out
    }

    pub fn is_edge_manifold(&self) -> bool {
        self.edge_adjacency().non_manifold_edge_count() == 0
    }
}

/// Map from undirected edge `(low, high)` to indices of incident faces.
#[derive(Clone, Debug, Default)]
pub struct EdgeAdjacency {
    edges: BTreeMap<(usize, usize), Vec<usize>>,
}

impl EdgeAdjacency {
    pub fn from_faces(faces: &[Triangle]) -> Self {
        let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (f, t) in faces.iter().enumerate() {
            for e in t.edges() {
                edges.entry(e).or_default().push(f);
            }
        }
        Self { edges }
    }

    pub fn faces_of(&self, edge: (usize, usize)) -> &[usize] {
        let key = if edge.0 <= edge.1 { edge } else { (edge.1, edge.0) };
        self.edges.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<usize>)> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn non_manifold_edge_count(&self) -> usize {
        self.edges.values().filter(|f| f.len() > 2).count()
    }

    /// Percentage of edges incident to more than two faces.
    pub fn non_manifold_percentage(&self) -> f64 {
        if self.edges.is_empty() {
            0.0
        } else {
            100.0 * self.non_manifold_edge_count() as f64 / self.edges.len() as f64
        }
    }

    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().filter(|(_, f)| f.len() == 1).map(|(&e, _)| e).collect()
    }
}
