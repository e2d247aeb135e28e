//! Topology repair of the primitive mesh: greedy edge-manifold selection and
//! filling of small boundary loops.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::duality::RecoveredTriangle;
use crate::geometry::{Point3, Triangle};
use crate::mesh::IndexedMesh;

pub const DEFAULT_MAX_HOLE_EDGES: usize = 4;

fn edge_counts(faces: &[Triangle]) -> BTreeMap<(usize, usize), usize> {
    let mut counts = BTreeMap::new();
    for t in faces {
        for e in t.edges() {
            *counts.entry(e).or_insert(0) += 1;
        }
    }
    counts
}

fn priority_order(a: &RecoveredTriangle, b: &RecoveredTriangle) -> Ordering {
    b.multiplicity.cmp(&a.multiplicity).then(b.confidence.total_cmp(&a.confidence)).then(a.triangle.cmp(&b.triangle))
}

/// Inserts faces by descending (multiplicity, confidence), ties in
/// lexicographic face order, skipping any face that would give one of its
/// edges a third incident face.
pub fn enforce_edge_manifold(vertices: Vec<Point3>, faces: &[RecoveredTriangle]) -> IndexedMesh {
    let mut order: Vec<&RecoveredTriangle> = faces.iter().collect();
    order.sort_by(|a, b| priority_order(a, b));
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    for f in order {
        let edges = f.triangle.edges();
        if seen.contains(&f.triangle) || edges.iter().any(|e| counts.get(e).copied().unwrap_or(0) >= 2) {
            continue;
        }
        for e in edges {
            *counts.entry(e).or_insert(0) += 1;
        }
        seen.insert(f.triangle);
        kept.push(f.triangle);
    }
    IndexedMesh::new(vertices, kept).expect("faces come from a valid mesh")
}

/// [`enforce_edge_manifold`] with equal priority for every face.
pub fn enforce_edge_manifold_mesh(mesh: &IndexedMesh) -> IndexedMesh {
    let faces: Vec<RecoveredTriangle> =
        mesh.faces().iter().map(|&triangle| RecoveredTriangle { triangle, confidence: 1.0, multiplicity: 1 }).collect();
    enforce_edge_manifold(mesh.vertices.clone(), &faces)
}

/// Cycles of boundary edges (edges with one incident face) with at most
/// `max_len` edges, shortest first, then lexicographic. Each cycle starts
/// at its smallest vertex.
pub fn boundary_cycles(mesh: &IndexedMesh, max_len: usize) -> Vec<Vec<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for ((a, b), faces) in edge_counts(mesh.faces()) {
        if faces == 1 {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
    }
    fn walk(adj: &BTreeMap<usize, Vec<usize>>, path: &mut Vec<usize>, max_len: usize, out: &mut Vec<Vec<usize>>) {
        let start = path[0];
        let last = *path.last().expect("non-empty path");
        for &n in &adj[&last] {
            if n == start && path.len() >= 3 && path[1] < last {
                out.push(path.clone());
            } else if n > start && path.len() < max_len && !path.contains(&n) {
                path.push(n);
                walk(adj, path, max_len, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for &s in adj.keys() {
        walk(&adj, &mut vec![s], max_len, &mut out);
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Closes boundary cycles of at most `max_hole_edges` edges with a fan from
/// their lowest-index vertex, whenever the whole fan keeps the mesh
/// edge-manifold and adds no existing face. Larger loops, such as the rims
/// of open surfaces, stay.
pub fn fill_small_holes(mesh: &IndexedMesh, max_hole_edges: usize) -> IndexedMesh {
    let mut counts = edge_counts(mesh.faces());
    let mut faces = mesh.faces().to_vec();
    let mut present: BTreeSet<Triangle> = faces.iter().copied().collect();
    for cycle in boundary_cycles(mesh, max_hole_edges) {
        let n = cycle.len();
        let fan: Vec<Triangle> = (1..n - 1)
            .map(|i| Triangle::new(cycle[0], cycle[i], cycle[i + 1]).expect("loop vertices are distinct"))
            .collect();
        if fan.iter().any(|t| present.contains(t)) {
            continue;
        }
        let mut added: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in &fan {
            for e in t.edges() {
                *added.entry(e).or_insert(0) += 1;
            }
        }
        if added.iter().any(|(e, c)| counts.get(e).copied().unwrap_or(0) + c > 2) {
            continue;
        }
        for (e, c) in added {
            *counts.entry(e).or_insert(0) += c;
        }
        for t in fan {
            present.insert(t);
            faces.push(t);
        }
    }
    IndexedMesh::new(mesh.vertices.clone(), faces).expect("fan uses existing vertices")
}

/// Edge-manifold enforcement followed by hole filling.
pub fn postprocess(vertices: Vec<Point3>, faces: &[RecoveredTriangle], max_hole_edges: usize) -> IndexedMesh {
    fill_small_holes(&enforce_edge_manifold(vertices, faces), max_hole_edges)
}
