//! Procedural meshes used for training data, demos and verification.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{circumradius, normalize, Point3, Triangle};
use crate::mesh::IndexedMesh;

/// Planar patch of equilateral triangles: `nx * ny` vertices on a sheared
/// lattice with the given edge length, `2 (nx-1)(ny-1)` faces.
pub fn triangular_grid(nx: usize, ny: usize, spacing: f64) -> IndexedMesh {
    let h = 3f64.sqrt() / 2.0;
    let mut vertices = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            vertices.push([(i as f64 + 0.5 * j as f64) * spacing, j as f64 * h * spacing, 0.0]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut faces = Vec::new();
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            faces.push([id(i, j), id(i + 1, j), id(i, j + 1)]);
            faces.push([id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    IndexedMesh::from_triplets(vertices, &faces).expect("indices in range")
}

/// Adds isotropic Gaussian noise to the x/y coordinates; connectivity is kept.
pub fn jitter_in_plane(mesh: &IndexedMesh, sigma: f64, seed: u64) -> IndexedMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let vertices =
        mesh.vertices.iter().map(|p| [p[0] + normal.sample(&mut rng), p[1] + normal.sample(&mut rng), p[2]]).collect();
    IndexedMesh::new(vertices, mesh.faces().to_vec()).expect("same connectivity")
}

/// Moves every vertex by Gaussian noise along all three axes.
pub fn jitter(mesh: &IndexedMesh, sigma: f64, seed: u64) -> IndexedMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("valid sigma");
    let vertices = mesh.vertices.iter().map(|p| p.map(|c| c + normal.sample(&mut rng))).collect();
    IndexedMesh::new(vertices, mesh.faces().to_vec()).expect("same connectivity")
}

/// Unit icosphere; subdivision level `n` gives `20 * 4^n` faces.
pub fn icosphere(subdivisions: usize) -> IndexedMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(normalize([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    IndexedMesh::from_triplets(vertices, &faces).expect("indices in range")
}

/// Open cylinder of radius 1 along z with `rings` vertex rings of
/// `segments` vertices; alternate rings are rotated by half a segment so
/// the faces are isosceles rather than halves of rectangles.
pub fn open_cylinder(segments: usize, rings: usize, height: f64) -> IndexedMesh {
    let mut vertices = Vec::with_capacity(segments * rings);
    for r in 0..rings {
        let z = if rings > 1 { height * r as f64 / (rings - 1) as f64 } else { 0.0 };
        let shift = if r % 2 == 1 { PI / segments as f64 } else { 0.0 };
        for s in 0..segments {
            let a = 2.0 * PI * s as f64 / segments as f64 + shift;
            vertices.push([a.cos(), a.sin(), z]);
        }
    }
    let id = |r: usize, s: usize| r * segments + s % segments;
    let mut faces = Vec::new();
    for r in 0..rings.saturating_sub(1) {
        for s in 0..segments {
            if r % 2 == 0 {
                faces.push([id(r, s), id(r, s + 1), id(r + 1, s)]);
                faces.push([id(r, s + 1), id(r + 1, s + 1), id(r + 1, s)]);
            } else {
                faces.push([id(r, s), id(r + 1, s + 1), id(r + 1, s)]);
                faces.push([id(r, s), id(r, s + 1), id(r + 1, s + 1)]);
            }
        }
    }
    IndexedMesh::from_triplets(vertices, &faces).expect("indices in range")
}

/// Axis-aligned cube `[-1, 1]^3`, each side an `n x n` grid of split squares.
pub fn cube(n: usize) -> IndexedMesh {
    let n = n.max(1);
    let mut vertices: Vec<Point3> = Vec::new();
    let mut lookup: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vid = |p: [i64; 3], vertices: &mut Vec<Point3>| {
        *lookup.entry(p).or_insert_with(|| {
            vertices.push(p.map(|c| 2.0 * c as f64 / n as f64 - 1.0));
            vertices.len() - 1
        })
    };
    let n_i = n as i64;
    let mut faces = Vec::new();
    for axis in 0..3 {
        for side in [0, n_i] {
            for a in 0..n_i {
                for b in 0..n_i {
                    let corner = |da: i64, db: i64| {
                        let mut p = [0i64; 3];
                        p[axis] = side;
                        p[(axis + 1) % 3] = a + da;
                        p[(axis + 2) % 3] = b + db;
                        p
                    };
                    let v00 = vid(corner(0, 0), &mut vertices);
                    let v10 = vid(corner(1, 0), &mut vertices);
                    let v01 = vid(corner(0, 1), &mut vertices);
                    let v11 = vid(corner(1, 1), &mut vertices);
                    faces.push([v00, v10, v11]);
                    faces.push([v00, v11, v01]);
                }
            }
        }
    }
    IndexedMesh::from_triplets(vertices, &faces).expect("indices in range")
}

/// The `cube(n)` mesh with every vertex projected onto a box of half-size 1
/// whose edges and corners are rounded with `radius`.
pub fn rounded_cube(n: usize, radius: f64) -> IndexedMesh {
    let base = cube(n);
    let inner = 1.0 - radius;
    let vertices = base
        .vertices
        .iter()
        .map(|p| {
            let core = p.map(|c| c.clamp(-inner, inner));
            let d = normalize([p[0] - core[0], p[1] - core[1], p[2] - core[2]]);
            [core[0] + radius * d[0], core[1] + radius * d[1], core[2] + radius * d[2]]
        })
        .collect();
    IndexedMesh::new(vertices, base.faces().to_vec()).expect("same connectivity")
}

/// Two square planes sharing the x-axis edge, the second tilted by
/// `angle_deg` about it. Each plane is an `n x n` grid on `[0, 1]^2`.
pub fn hinged_planes(n: usize, angle_deg: f64) -> (IndexedMesh, IndexedMesh) {
    let flat = |rot: f64| {
        let (s, c) = rot.to_radians().sin_cos();
        let mut vertices = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                let (x, y) = (i as f64 / n as f64, j as f64 / n as f64);
                vertices.push([x, y * c, y * s]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut faces = Vec::new();
        for j in 0..n {
            for i in 0..n {
                faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        IndexedMesh::from_triplets(vertices, &faces).expect("indices in range")
    };
    (flat(0.0), flat(angle_deg))
}

/// 2D Delaunay triangulation (Bowyer-Watson). Returns index triplets into
/// `points`; quadratic time, meant for a few thousand points at most.
pub fn delaunay_2d(points: &[[f64; 2]]) -> Vec<[usize; 3]> {
    let n = points.len();
    if n < 3 {
        return Vec::new();
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for c in 0..2 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let mid = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.push([mid[0] - 20.0 * span, mid[1] - span]);
    pts.push([mid[0], mid[1] + 20.0 * span]);
    pts.push([mid[0] + 20.0 * span, mid[1] - span]);

    struct Tri {
        v: [usize; 3],
        center: [f64; 2],
        r2: f64,
    }
    let make = |v: [usize; 3], pts: &[[f64; 2]]| {
        let (a, b, c) = (pts[v[0]], pts[v[1]], pts[v[2]]);
        let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
        let (a2, b2, c2) = (a[0] * a[0] + a[1] * a[1], b[0] * b[0] + b[1] * b[1], c[0] * c[0] + c[1] * c[1]);
        let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
        let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
        let r2 = (a[0] - ux).powi(2) + (a[1] - uy).powi(2);
        Tri { v, center: [ux, uy], r2 }
    };
    let mut tris = vec![make([n, n + 1, n + 2], &pts)];
    for i in 0..n {
        let p = pts[i];
        let (bad, keep): (Vec<Tri>, Vec<Tri>) =
            tris.into_iter().partition(|t| (p[0] - t.center[0]).powi(2) + (p[1] - t.center[1]).powi(2) < t.r2);
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &bad {
            for (a, b) in [(t.v[0], t.v[1]), (t.v[1], t.v[2]), (t.v[2], t.v[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        tris = keep;
        let mut boundary: Vec<(usize, usize)> =
            edge_count.into_iter().filter(|&(_, c)| c == 1).map(|(e, _)| e).collect();
        boundary.sort_unstable();
        for (a, b) in boundary {
            tris.push(make([a, b, i], &pts));
        }
    }
    let mut out: Vec<[usize; 3]> = tris.into_iter().filter(|t| t.v.iter().all(|&v| v < n)).map(|t| t.v).collect();
    out.sort_unstable();
    out
}

/// A random well-spaced height-field surface: dart-thrown points in the unit
/// square (minimum spacing `min_spacing`), Delaunay-triangulated, lifted by
/// a smooth random height function. Sliver faces along the hull (circumradius
/// above twice the spacing) are removed, as are vertices left without faces.
pub fn random_delaunay_surface(n_points: usize, min_spacing: f64, amplitude: f64, seed: u64) -> IndexedMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts2: Vec<[f64; 2]> = Vec::with_capacity(n_points);
    let mut attempts = 0;
    while pts2.len() < n_points && attempts < 200 * n_points {
        attempts += 1;
        let c = [rng.random::<f64>(), rng.random::<f64>()];
        if pts2.iter().all(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) >= min_spacing * min_spacing) {
            pts2.push(c);
        }
    }
    let (fx, fy, phase) = (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0), rng.random_range(0.0..PI));
    let vertices: Vec<Point3> = pts2
        .iter()
        .map(|p| [p[0], p[1], amplitude * (fx * PI * p[0] + phase).sin() * (fy * PI * p[1]).cos()])
        .collect();
    let faces: Vec<[usize; 3]> = delaunay_2d(&pts2)
        .into_iter()
        .filter(|&[a, b, c]| circumradius(vertices[a], vertices[b], vertices[c]).is_ok_and(|r| r <= 2.0 * min_spacing))
        .collect();
    compact(&vertices, &faces)
}

/// Drops unreferenced vertices and reindexes the faces.
pub fn compact(vertices: &[Point3], faces: &[[usize; 3]]) -> IndexedMesh {
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::new();
    for f in faces {
        for &v in f {
            if remap[v] == usize::MAX {
                remap[v] = kept.len();
                kept.push(vertices[v]);
            }
        }
    }
    let faces: Vec<Triangle> =
        faces.iter().filter_map(|f| Triangle::new(remap[f[0]], remap[f[1]], remap[f[2]])).collect();
    IndexedMesh::new(kept, faces).expect("remapped indices in range")
}

/// Mean distance from each vertex to its nearest other vertex.
pub fn mean_spacing(points: &[Point3]) -> f64 {
    let tree = crate::kdtree::KdTree::build(points);
    let total: f64 =
        points.iter().enumerate().map(|(i, &p)| tree.knn_excluding(p, 1, i).first().map_or(0.0, |x| x.1)).sum();
    total / points.len().max(1) as f64
}

/// Smallest pairwise vertex distance (brute force over a KD tree).
pub fn min_spacing(points: &[Point3]) -> f64 {
    let tree = crate::kdtree::KdTree::build(points);
    points
        .iter()
        .enumerate()
        .filter_map(|(i, &p)| tree.knn_excluding(p, 1, i).first().map(|x| x.1))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        let g = triangular_grid(5, 5, 1.0);
        assert_eq!(g.vertex_count(), 25);
        assert_eq!(g.face_count(), 32);
        assert!(g.is_edge_manifold());
        for f in 0..g.face_count() {
            assert!((g.face_area(f) - 3f64.sqrt() / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn icosphere_counts() {
        let s = icosphere(2);
        assert_eq!(s.vertex_count(), 162);
        assert_eq!(s.face_count(), 320);
        let adj = s.edge_adjacency();
        assert!(adj.iter().all(|(_, f)| f.len() == 2));
    }

    #[test]
    fn cylinder_is_open_manifold() {
        let c = open_cylinder(12, 5, 2.0);
        assert_eq!(c.face_count(), 2 * 12 * 4);
        let adj = c.edge_adjacency();
        assert_eq!(adj.non_manifold_edge_count(), 0);
        assert_eq!(adj.boundary_edges().len(), 24);
    }

    #[test]
    fn cube_is_closed() {
        let c = cube(2);
        assert_eq!(c.vertex_count(), 26);
        assert_eq!(c.face_count(), 48);
        assert!(c.edge_adjacency().iter().all(|(_, f)| f.len() == 2));
    }

    #[test]
    fn delaunay_square() {
        let tris = delaunay_2d(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.1], [0.5, 0.4]]);
        assert_eq!(tris.len(), 4);
    }

    #[test]
    fn random_surface_is_manifold() {
        let m = random_delaunay_surface(150, 0.06, 0.05, 4);
        assert!(m.face_count() > 150);
        assert!(m.is_edge_manifold());
    }
}
