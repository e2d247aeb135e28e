//! Training labels from reference meshes: per-vertex KNN patches with their
//! ground-truth circumcenters matched to anchor cells, plus the mesh
//! normalization, decimation and augmentation used to produce them.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::anchors::{AnchorCell, AnchorGrid, OffsetCoords};
use crate::binary::{put_f32, put_f64, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::geometry::{
    build_knn_index, circumcenter, extract_patch, norm, to_spherical, Patch, Point3, PointCloud, Triangle,
};
use crate::kdtree::KdTree;
use crate::mesh::IndexedMesh;

/// Translates the vertex centroid to the origin and scales uniformly so the
/// farthest vertex has norm 1.
pub fn normalize_mesh(mesh: &IndexedMesh) -> IndexedMesh {
    let n = mesh.vertices.len().max(1) as f64;
    let mut c = [0.0; 3];
    for v in &mesh.vertices {
        for k in 0..3 {
            c[k] += v[k] / n;
        }
    }
    let centered: Vec<Point3> = mesh.vertices.iter().map(|v| crate::geometry::sub(*v, c)).collect();
    let r = centered.iter().map(|v| norm(*v)).fold(0.0, f64::max);
    let s = if r > 0.0 { 1.0 / r } else { 1.0 };
    let vertices = centered.into_iter().map(|v| crate::geometry::scale(v, s)).collect();
    IndexedMesh::new(vertices, mesh.faces().to_vec()).expect("connectivity unchanged")
}

/// Vertex-clustering decimation on a grid of cell size `voxel`: vertices in
/// the same cell merge to their mean, faces that collapse are dropped.
pub fn voxel_decimate(mesh: &IndexedMesh, voxel: f64) -> Result<IndexedMesh> {
    if !(voxel > 0.0) {
        return Err(Error::InvalidParameter(format!("voxel must be positive, got {voxel}")));
    }
    let mut cell_of: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<([f64; 3], usize)> = Vec::new();
    let remap: Vec<usize> = mesh
        .vertices
        .iter()
        .map(|v| {
            let key = v.map(|c| (c / voxel).floor() as i64);
            let id = *cell_of.entry(key).or_insert_with(|| {
                sums.push(([0.0; 3], 0));
                sums.len() - 1
            });
            for k in 0..3 {
                sums[id].0[k] += v[k];
            }
            sums[id].1 += 1;
            id
        })
        .collect();
    let vertices = sums.into_iter().map(|(s, n)| s.map(|c| c / n as f64)).collect();
    let faces = mesh
        .faces()
        .iter()
        .filter_map(|t| {
            let [a, b, c] = t.indices();
            Triangle::new(remap[a], remap[b], remap[c])
        })
        .collect();
    IndexedMesh::new(vertices, faces)
}

/// Faces incident to `vertex`, in canonical order.
pub fn adjacent_triangles(mesh: &IndexedMesh, vertex: usize) -> Vec<Triangle> {
    let mut out: Vec<Triangle> = mesh.faces().iter().filter(|t| t.contains(vertex)).copied().collect();
    out.sort_unstable();
    out
}

/// Ground-truth offsets of the circumcenters that fall in one anchor cell,
/// ordered by (rho, theta, phi).
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveCell {
    pub cell: AnchorCell,
    pub offsets: Vec<OffsetCoords>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub patch: Patch,
    /// Sorted by flat anchor index.
    pub positive_cells: Vec<PositiveCell>,
    /// All faces incident to the patch center in the reference mesh.
    pub gt_triangles: Vec<Triangle>,
    pub dropped_out_of_range: usize,
    pub dropped_outside_patch: usize,
}

impl TrainingSample {
    pub fn dropped_count(&self) -> usize {
        self.dropped_out_of_range + self.dropped_outside_patch
    }

    pub fn positive_count(&self) -> usize {
        self.positive_cells.len()
    }
}

/// Precomputed lookup structures for labelling every vertex of one mesh.
pub struct LabelBuilder<'a> {
    mesh: &'a IndexedMesh,
    cloud: PointCloud,
    index: KdTree,
    vertex_faces: Vec<Vec<usize>>,
}

impl<'a> LabelBuilder<'a> {
    pub fn new(mesh: &'a IndexedMesh) -> Result<Self> {
        let cloud = PointCloud::new(mesh.vertices.clone())?;
        let index = build_knn_index(&cloud);
        Ok(Self { mesh, vertex_faces: mesh.vertex_faces(), cloud, index })
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    pub fn mesh(&self) -> &IndexedMesh {
        self.mesh
    }

    /// Normalized circumradius of every face incident to `vertex` in the
    /// frame of `patch`, whether or not it fits the anchor grid.
    pub fn normalized_radii(&self, patch: &Patch) -> Result<Vec<f64>> {
        self.vertex_faces[patch.center_index]
            .iter()
            .map(|&f| {
                let [a, b, c] = self.mesh.faces()[f].positions(&self.mesh.vertices);
                circumcenter(a, b, c).map(|x| norm(patch.normalize(x)))
            })
            .collect()
    }

    pub fn make_sample(&self, vertex: usize, grid: &AnchorGrid, k: usize, eta0: f64) -> Result<TrainingSample> {
        let patch = extract_patch(&self.cloud, &self.index, vertex, k, eta0)?;
        self.label_patch(patch, grid)
    }

    /// Labels an already extracted patch of this mesh.
    pub fn label_patch(&self, patch: Patch, grid: &AnchorGrid) -> Result<TrainingSample> {
        let vertex = patch.center_index;
        let mut gt_triangles = Vec::new();
        let mut cells: BTreeMap<usize, Vec<OffsetCoords>> = BTreeMap::new();
        let (mut out_of_range, mut outside) = (0, 0);
        for &f in &self.vertex_faces[vertex] {
            let tri = self.mesh.faces()[f];
            gt_triangles.push(tri);
            let covered = tri.indices().iter().all(|&v| v == vertex || patch.neighbor_indices.contains(&v));
            if !covered {
                outside += 1;
                continue;
            }
            let [a, b, c] = tri.positions(&self.mesh.vertices);
            let x = circumcenter(a, b, c)?;
            match grid.locate(to_spherical(patch.normalize(x))) {
                Some((cell, off)) => cells.entry(grid.flat_index(cell)).or_default().push(off),
                None => out_of_range += 1,
            }
        }
        gt_triangles.sort_unstable();
        let positive_cells = cells
            .into_iter()
            .map(|(flat, mut offsets)| {
                offsets.sort_by(|a, b| {
                    a.rho.total_cmp(&b.rho).then(a.theta.total_cmp(&b.theta)).then(a.phi.total_cmp(&b.phi))
                });
                PositiveCell { cell: grid.cell(flat), offsets }
            })
            .collect();
        Ok(TrainingSample {
            patch,
            positive_cells,
            gt_triangles,
            dropped_out_of_range: out_of_range,
            dropped_outside_patch: outside,
        })
    }

    /// One sample per vertex, in vertex order.
    pub fn all_samples(&self, grid: &AnchorGrid, k: usize, eta0: f64) -> Result<Vec<TrainingSample>> {
        (0..self.cloud.len()).map(|v| self.make_sample(v, grid, k, eta0)).collect()
    }
}

/// Labels a single vertex; builds the lookup structures on every call, so
/// prefer [`LabelBuilder`] for whole meshes.
pub fn make_sample(
    mesh: &IndexedMesh,
    vertex: usize,
    grid: &AnchorGrid,
    k: usize,
    eta0: f64,
) -> Result<TrainingSample> {
    LabelBuilder::new(mesh)?.make_sample(vertex, grid, k, eta0)
}

/// Random similarity transform plus vertex noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub scale_range: (f64, f64),
    pub rotate: bool,
    /// Standard deviation of the per-coordinate jitter, as a multiple of the
    /// mean nearest-neighbour distance.
    pub noise_sigma: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self { scale_range: (0.5, 2.0), rotate: true, noise_sigma: 0.0 }
    }
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { scale_range: (1.0, 1.0), rotate: false, noise_sigma: 0.0 }
    }
}

/// Uniformly distributed rotation (unit quaternion from three uniforms).
pub fn random_rotation(rng: &mut impl Rng) -> [[f64; 3]; 3] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rotate(p: Point3, r: &[[f64; 3]; 3]) -> Point3 {
    std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2])
}

/// Deterministic given `seed`.
pub fn augment(mesh: &IndexedMesh, params: &AugmentParams, seed: u64) -> IndexedMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = params.scale_range;
    let s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let rot =
        if params.rotate { random_rotation(&mut rng) } else { [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] };
    let sigma = if params.noise_sigma > 0.0 {
        params.noise_sigma * crate::synthetic::mean_spacing(&mesh.vertices) * s
    } else {
        0.0
    };
    let noise = Normal::new(0.0, sigma).expect("non-negative sigma");
    let vertices = mesh
        .vertices
        .iter()
        .map(|&p| {
            let q = rotate(crate::geometry::scale(p, s), &rot);
            if sigma > 0.0 {
                q.map(|c| c + noise.sample(&mut rng))
            } else {
                q
            }
        })
        .collect();
    IndexedMesh::new(vertices, mesh.faces().to_vec()).expect("connectivity unchanged")
}

// ---------------------------------------------------------------------------
// Binary record stream

pub const RECORD_MAGIC: &[u8; 4] = b"CTRS";
pub const RECORD_VERSION: u32 = 1;

/// Stream-level parameters every record was produced with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordHeader {
    pub k: usize,
    pub eta0: f64,
    pub grid: AnchorGrid,
}

pub fn write_header(w: &mut impl Write, header: &RecordHeader) -> Result<()> {
    w.write_all(RECORD_MAGIC)?;
    put_u32(w, RECORD_VERSION as usize)?;
    put_u32(w, header.k)?;
    put_f64(w, header.eta0)?;
    let g = &header.grid;
    for v in [g.delta_rho, g.delta_theta, g.delta_phi, g.max_radius] {
        put_f64(w, v)?;
    }
    Ok(())
}

pub fn write_record(w: &mut impl Write, grid: &AnchorGrid, s: &TrainingSample) -> Result<()> {
    let p = &s.patch;
    put_u32(w, p.center_index)?;
    for c in p.center {
        put_f64(w, c)?;
    }
    put_f64(w, p.scale)?;
    put_u32(w, p.k())?;
    for &i in &p.neighbor_indices {
        put_u32(w, i)?;
    }
    for q in &p.normalized_neighbors {
        for &c in q {
            put_f32(w, c)?;
        }
    }
    put_u32(w, s.positive_cells.len())?;
    for cell in &s.positive_cells {
        put_u32(w, grid.flat_index(cell.cell))?;
        put_u32(w, cell.offsets.len())?;
        for g in &cell.offsets {
            for c in g.as_array() {
                put_f32(w, c)?;
            }
        }
    }
    put_u32(w, s.gt_triangles.len())?;
    for t in &s.gt_triangles {
        for i in t.indices() {
            put_u32(w, i)?;
        }
    }
    put_u32(w, s.dropped_out_of_range)?;
    put_u32(w, s.dropped_outside_patch)?;
    Ok(())
}

pub fn write_records(w: &mut impl Write, header: &RecordHeader, samples: &[TrainingSample]) -> Result<()> {
    write_header(w, header)?;
    for s in samples {
        write_record(w, &header.grid, s)?;
    }
    Ok(())
}

/// Reads a whole record stream.
pub fn read_records(r: impl Read) -> Result<(RecordHeader, Vec<TrainingSample>)> {
    let mut rd = ByteReader::new(r);
    if &rd.bytes::<4>()? != RECORD_MAGIC {
        return Err(Error::ParseBinary { offset: 0, message: "bad magic, expected CTRS".into() });
    }
    let version = rd.u32()?;
    if version != RECORD_VERSION as usize {
        return Err(Error::ParseBinary { offset: 4, message: format!("unsupported version {version}") });
    }
    let k = rd.u32()?;
    let eta0 = rd.f64()?;
    let grid = AnchorGrid::new(rd.f64()?, rd.f64()?, rd.f64()?, rd.f64()?)?;
    let header = RecordHeader { k, eta0, grid };
    let mut samples = Vec::new();
    while let Some(center_index) = rd.try_u32()? {
        let center = [rd.f64()?, rd.f64()?, rd.f64()?];
        let scale = rd.f64()?;
        let kk = rd.u32()?;
        let neighbor_indices = (0..kk).map(|_| rd.u32()).collect::<Result<Vec<_>>>()?;
        let normalized_neighbors =
            (0..kk).map(|_| Ok([rd.f32()?, rd.f32()?, rd.f32()?])).collect::<Result<Vec<_>>>()?;
        let n_pos = rd.u32()?;
        let mut positive_cells = Vec::with_capacity(n_pos);
        for _ in 0..n_pos {
            let at = rd.offset;
            let flat = rd.u32()?;
            if flat >= grid.len() {
                return Err(Error::ParseBinary { offset: at, message: format!("anchor index {flat} out of range") });
            }
            let tau = rd.u32()?;
            let offsets = (0..tau)
                .map(|_| Ok(OffsetCoords { rho: rd.f32()?, theta: rd.f32()?, phi: rd.f32()? }))
                .collect::<Result<Vec<_>>>()?;
            positive_cells.push(PositiveCell { cell: grid.cell(flat), offsets });
        }
        let n_gt = rd.u32()?;
        let mut gt_triangles = Vec::with_capacity(n_gt);
        for _ in 0..n_gt {
            let at = rd.offset;
            let (a, b, c) = (rd.u32()?, rd.u32()?, rd.u32()?);
            gt_triangles.push(
                Triangle::new(a, b, c)
                    .ok_or(Error::ParseBinary { offset: at, message: "repeated index in triangle".into() })?,
            );
        }
        let dropped_out_of_range = rd.u32()?;
        let dropped_outside_patch = rd.u32()?;
        samples.push(TrainingSample {
            patch: Patch {
                center_index: center_index as usize,
                center,
                neighbor_indices,
                normalized_neighbors,
                scale,
                nn_distance: eta0 / scale,
            },
            positive_cells,
            gt_triangles,
            dropped_out_of_range,
            dropped_outside_patch,
        });
    }
    Ok((header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{icosphere, triangular_grid};

    #[test]
    fn normalize_unit_mesh_is_identity() {
        let m = IndexedMesh::from_triplets(
            vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, -0.5, 0.0]],
            &[[0, 1, 2], [0, 1, 3]],
        )
        .unwrap();
        assert_eq!(normalize_mesh(&m), m);
    }

    #[test]
    fn normalize_offset_cube() {
        let cube = crate::synthetic::cube(1);
        let moved: Vec<Point3> = cube.vertices.iter().map(|v| [v[0] + 11.0, v[1] + 11.0, v[2] + 11.0]).collect();
        let m = normalize_mesh(&IndexedMesh::new(moved, cube.faces().to_vec()).unwrap());
        // centroid (11,11,11), half-diagonal sqrt(3)
        let r = m.vertices.iter().map(|v| norm(*v)).fold(0.0, f64::max);
        assert!((r - 1.0).abs() < 1e-12);
        assert!((m.vertices[0][0].abs() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn normalize_single_triangle() {
        let m = IndexedMesh::from_triplets(vec![[0.0; 3], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0]], &[[0, 1, 2]]).unwrap();
        let n = normalize_mesh(&m);
        assert_eq!(n.face_count(), 1);
        assert!((n.vertices.iter().map(|v| norm(*v)).fold(0.0, f64::max) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decimate_extremes() {
        let g = triangular_grid(6, 6, 0.1);
        let collapsed = voxel_decimate(&g, 100.0).unwrap();
        assert_eq!(collapsed.vertex_count(), 1);
        assert_eq!(collapsed.face_count(), 0);
        let same = voxel_decimate(&g, 0.01).unwrap();
        assert_eq!(same.vertex_count(), g.vertex_count());
        assert_eq!(same.face_set(), g.face_set());
        assert!(voxel_decimate(&g, 0.0).is_err());
    }

    #[test]
    fn decimate_icosphere() {
        // unit icosphere(3) edges (~0.11-0.13) rarely share a 0.1 voxel
        for (level, voxel) in [(3, 0.2), (4, 0.1)] {
            let s = icosphere(level);
            let d = voxel_decimate(&s, voxel).unwrap();
            assert!(d.face_count() < s.face_count());
            assert!(d.faces().iter().all(|t| {
                let [a, b, c] = t.indices();
                a != b && b != c
            }));
            assert!(PointCloud::new(d.vertices.clone()).is_ok());
        }
    }

    #[test]
    fn grid_valence() {
        let g = triangular_grid(5, 5, 1.0);
        assert_eq!(adjacent_triangles(&g, 12).len(), 6);
        for corner in [0, 4, 20, 24] {
            let n = adjacent_triangles(&g, corner).len();
            assert!(n == 1 || n == 2);
        }
    }

    #[test]
    fn adjacent_matches_scan() {
        let m = crate::synthetic::random_delaunay_surface(80, 0.08, 0.1, 2);
        for v in 0..m.vertex_count() {
            let scan: Vec<Triangle> = m.faces().iter().filter(|t| t.indices().contains(&v)).copied().collect();
            let mut scan = scan;
            scan.sort();
            assert_eq!(adjacent_triangles(&m, v), scan);
        }
    }

    #[test]
    fn equilateral_labels_sit_in_first_radius_bin() {
        let g = triangular_grid(7, 7, 1.0);
        let grid = AnchorGrid::default_grid();
        let s = make_sample(&g, 24, &grid, 20, 0.01).unwrap();
        assert_eq!(s.gt_triangles.len(), 6);
        assert_eq!(s.dropped_count(), 0);
        let radii = LabelBuilder::new(&g).unwrap().normalized_radii(&s.patch).unwrap();
        for r in radii {
            assert!((r - 0.01 / 3f64.sqrt()).abs() < 1e-12);
        }
        for c in &s.positive_cells {
            assert_eq!(c.cell.j_rho, 0);
        }
        // flat samples: at most two centers per cell, few cells occupied
        let total: usize = s.positive_cells.iter().map(|c| c.offsets.len()).sum();
        assert_eq!(total, 6);
        assert!(s.positive_cells.iter().all(|c| (1..=2).contains(&c.offsets.len())));
        assert!((s.positive_count() as f64) < 0.1 * grid.len() as f64);
    }

    #[test]
    fn needle_face_is_dropped() {
        // a far-away apex makes a face with circumradius far beyond R
        let mut g = triangular_grid(5, 5, 1.0);
        let apex = g.vertices.len();
        g.vertices.push([2.0, -40.0, 0.0]);
        let mut faces = g.faces().to_vec();
        faces.push(Triangle::new(0, 1, apex).unwrap());
        let g = IndexedMesh::new(g.vertices.clone(), faces).unwrap();
        let s = make_sample(&g, 0, &AnchorGrid::default_grid(), 25, 0.01).unwrap();
        assert_eq!(s.dropped_out_of_range, 1);
        assert_eq!(s.gt_triangles.len(), 2);
    }

    #[test]
    fn outside_patch_is_counted() {
        let g = triangular_grid(5, 5, 1.0);
        let s = make_sample(&g, 12, &AnchorGrid::default_grid(), 3, 0.01).unwrap();
        assert!(s.dropped_outside_patch > 0);
    }

    #[test]
    fn identity_augment() {
        let m = icosphere(1);
        assert_eq!(augment(&m, &AugmentParams::identity(), 7), m);
        let a = augment(&m, &AugmentParams { noise_sigma: 0.1, ..Default::default() }, 3);
        let b = augment(&m, &AugmentParams { noise_sigma: 0.1, ..Default::default() }, 3);
        assert_eq!(a, b);
    }

    #[test]
    fn labels_invariant_to_scale_and_rotation() {
        let m = crate::synthetic::random_delaunay_surface(120, 0.07, 0.1, 8);
        let grid = AnchorGrid::default_grid();
        let base = LabelBuilder::new(&m).unwrap();
        let scaled = augment(&m, &AugmentParams { scale_range: (1.7, 1.7), rotate: false, noise_sigma: 0.0 }, 0);
        let rotated = augment(&m, &AugmentParams { scale_range: (1.0, 1.0), rotate: true, noise_sigma: 0.0 }, 5);
        let sb = LabelBuilder::new(&scaled).unwrap();
        let rb = LabelBuilder::new(&rotated).unwrap();
        for v in (0..m.vertex_count()).step_by(7) {
            let a = base.make_sample(v, &grid, 30, 0.01).unwrap();
            let b = sb.make_sample(v, &grid, 30, 0.01).unwrap();
            assert_eq!(a.positive_cells.len(), b.positive_cells.len());
            for (x, y) in a.positive_cells.iter().zip(&b.positive_cells) {
                assert_eq!(x.cell, y.cell);
                for (g, h) in x.offsets.iter().zip(&y.offsets) {
                    for (p, q) in g.as_array().into_iter().zip(h.as_array()) {
                        assert!((p - q).abs() < 1e-9);
                    }
                }
            }
            let mut ra = base.normalized_radii(&a.patch).unwrap();
            let r = rb.make_sample(v, &grid, 30, 0.01).unwrap();
            let mut rr = rb.normalized_radii(&r.patch).unwrap();
            ra.sort_by(f64::total_cmp);
            rr.sort_by(f64::total_cmp);
            for (p, q) in ra.iter().zip(&rr) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn record_stream_round_trip() {
        let g = triangular_grid(6, 6, 1.0);
        let grid = AnchorGrid::default_grid();
        let samples = LabelBuilder::new(&g).unwrap().all_samples(&grid, 10, 0.01).unwrap();
        let header = RecordHeader { k: 10, eta0: 0.01, grid };
        let mut buf = Vec::new();
        write_records(&mut buf, &header, &samples).unwrap();
        assert_eq!(&buf[..4], b"CTRS");
        let (h, back) = read_records(buf.as_slice()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.patch.neighbor_indices, b.patch.neighbor_indices);
            assert_eq!(a.gt_triangles, b.gt_triangles);
            assert_eq!(a.positive_cells.len(), b.positive_cells.len());
            for (p, q) in a.patch.normalized_neighbors.iter().zip(&b.patch.normalized_neighbors) {
                for c in 0..3 {
                    assert_eq!(p[c] as f32, q[c] as f32);
                }
            }
        }
        // truncation is reported with an offset
        let err = read_records(&buf[..buf.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::ParseBinary { .. }));
    }
}
