//! Mesh comparison metrics on area-weighted surface samples.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{add, dist2, dot, norm, scale, sub, Point3, Triangle};
use crate::kdtree::KdTree;
use crate::mesh::IndexedMesh;

pub const DEFAULT_EPS: f64 = 0.005;
pub const DEFAULT_DIHEDRAL_DEG: f64 = 30.0;
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Points drawn on a mesh with the unit normal and index of their face.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SurfaceSample {
    pub points: Vec<Point3>,
    pub normals: Vec<Point3>,
    pub faces: Vec<usize>,
}

impl SurfaceSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn subset(&self, keep: &[bool]) -> Self {
        let mut out = Self::default();
        for (i, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            out.points.push(self.points[i]);
            out.normals.push(self.normals[i]);
            out.faces.push(self.faces[i]);
        }
        out
    }
}

/// Area-weighted uniform sampling of `n` points.
pub fn sample_surface(mesh: &IndexedMesh, n: usize, seed: u64) -> Result<SurfaceSample> {
    // faces and corners in coordinate order, so equal geometry gives equal
    // samples regardless of how the mesh is indexed
    let corners: Vec<[Point3; 3]> = mesh
        .faces()
        .iter()
        .map(|t| {
            let mut c = t.positions(&mesh.vertices);
            c.sort_by(cmp_point);
            c
        })
        .collect();
    let mut order: Vec<usize> = (0..corners.len()).collect();
    order.sort_by(|&x, &y| {
        (0..3).map(|i| cmp_point(&corners[x][i], &corners[y][i])).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    });
    let areas: Vec<f64> = order.iter().map(|&f| mesh.face_area(f)).collect();
    if !areas.iter().any(|&a| a > 0.0) {
        return Err(Error::EmptyMesh);
    }
    let pick = WeightedIndex::new(&areas).map_err(|_| Error::EmptyMesh)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SurfaceSample::default();
    for _ in 0..n {
        let f = order[pick.sample(&mut rng)];
        let [a, b, c] = corners[f];
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        let p = add(add(scale(a, 1.0 - r1), scale(b, r1 * (1.0 - r2))), scale(c, r1 * r2));
        out.points.push(p);
        out.normals.push(mesh.face_normal(f));
        out.faces.push(f);
    }
    Ok(out)
}

fn cmp_point(a: &Point3, b: &Point3) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])).then(a[2].total_cmp(&b[2]))
}

/// Squared distance from each point of `from` to its nearest point in `to`.
fn nearest_squared(from: &[Point3], to: &KdTree) -> Vec<(usize, f64)> {
    from.par_iter().map(|&p| to.nearest_squared(p).expect("target set is non-empty")).collect()
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

/// Nearest-neighbour squared distances in both directions.
struct Pairing {
    forward: Vec<(usize, f64)>,
    backward: Vec<(usize, f64)>,
}

impl Pairing {
    fn new(a: &[Point3], b: &[Point3]) -> Self {
        assert!(!a.is_empty() && !b.is_empty(), "point sets must be non-empty");
        let (ta, tb) = (KdTree::build(a), KdTree::build(b));
        Self { forward: nearest_squared(a, &tb), backward: nearest_squared(b, &ta) }
    }

    fn chamfer(&self) -> (f64, f64) {
        let (f, b) = (&self.forward, &self.backward);
        let cd1 = mean(f.iter().map(|x| x.1.sqrt()), f.len()) + mean(b.iter().map(|x| x.1.sqrt()), b.len());
        let cd2 = mean(f.iter().map(|x| x.1), f.len()) + mean(b.iter().map(|x| x.1), b.len());
        (cd1, cd2)
    }

    fn f_score(&self, eps: f64) -> (f64, f64, f64) {
        let hit = |v: &[(usize, f64)]| v.iter().filter(|x| x.1.sqrt() < eps).count() as f64 / v.len() as f64;
        let recall = hit(&self.forward);
        let precision = hit(&self.backward);
        let f1 = if recall + precision == 0.0 { 0.0 } else { 2.0 * recall * precision / (recall + precision) };
        (f1, recall, precision)
    }
}

/// `(CD1, CD2)` of two non-empty point sets.
pub fn chamfer(q: &[Point3], q_hat: &[Point3]) -> (f64, f64) {
    Pairing::new(q, q_hat).chamfer()
}

/// `(F1, recall, precision)`; recall counts points of `q` within `eps`
/// (strictly) of `q_hat`, precision the converse.
pub fn f_score(q: &[Point3], q_hat: &[Point3], eps: f64) -> (f64, f64, f64) {
    Pairing::new(q, q_hat).f_score(eps)
}

fn unoriented_cos(a: Point3, b: Point3) -> f64 {
    dot(a, b).abs().min(1.0)
}

/// `(NC, NR in degrees)` pairing every sample with its nearest neighbour in
/// the other set, comparing normals without orientation.
pub fn normal_metrics(gt: &SurfaceSample, recon: &SurfaceSample) -> (f64, f64) {
    let pairing = Pairing::new(&gt.points, &recon.points);
    normal_metrics_paired(&pairing, gt, recon)
}

fn normal_metrics_paired(pairing: &Pairing, gt: &SurfaceSample, recon: &SurfaceSample) -> (f64, f64) {
    let cosines = |pairs: &[(usize, f64)], from: &SurfaceSample, to: &SurfaceSample| -> Vec<f64> {
        pairs.iter().enumerate().map(|(i, &(j, _))| unoriented_cos(from.normals[i], to.normals[j])).collect()
    };
    let f = cosines(&pairing.forward, gt, recon);
    let b = cosines(&pairing.backward, recon, gt);
    let nc = 0.5 * (mean(f.iter().copied(), f.len()) + mean(b.iter().copied(), b.len()));
    let deg = |v: &[f64]| mean(v.iter().map(|c| c.acos().to_degrees()), v.len());
    let nr = 0.5 * (deg(&f) + deg(&b));
    (nc, nr)
}

/// Edges shared by two faces whose unoriented normals differ by more than
/// `threshold_deg`.
pub fn sharp_edges(mesh: &IndexedMesh, threshold_deg: f64) -> Vec<(usize, usize)> {
    let cos_limit = threshold_deg.to_radians().cos();
    mesh.edge_adjacency()
        .iter()
        .filter(|(_, faces)| {
            faces.len() == 2 && unoriented_cos(mesh.face_normal(faces[0]), mesh.face_normal(faces[1])) < cos_limit
        })
        .map(|(e, _)| *e)
        .collect()
}

fn segment_dist2(p: Point3, a: Point3, b: Point3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 { (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist2(p, add(a, scale(ab, t)))
}

/// Samples on faces incident to a sharp edge, or within `eps` of one.
pub fn edge_samples(mesh: &IndexedMesh, sample: &SurfaceSample, threshold_deg: f64, eps: f64) -> SurfaceSample {
    let edges = sharp_edges(mesh, threshold_deg);
    if edges.is_empty() {
        return SurfaceSample::default();
    }
    let adjacency = mesh.edge_adjacency();
    let sharp_faces: BTreeSet<usize> = edges.iter().flat_map(|e| adjacency.faces_of(*e).iter().copied()).collect();
    // bucket edge segments by the cells their eps-expanded box touches
    let cell = eps.max(1e-12) * 4.0;
    let key = |p: Point3| p.map(|c| (c / cell).floor() as i64);
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, &(a, b)) in edges.iter().enumerate() {
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let lo = key(std::array::from_fn(|d| pa[d].min(pb[d]) - eps));
        let hi = key(std::array::from_fn(|d| pa[d].max(pb[d]) + eps));
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    buckets.entry([x, y, z]).or_default().push(i);
                }
            }
        }
    }
    let eps2 = eps * eps;
    let keep: Vec<bool> = sample
        .points
        .par_iter()
        .zip(&sample.faces)
        .map(|(&p, f)| {
            sharp_faces.contains(f)
                || buckets.get(&key(p)).is_some_and(|list| {
                    list.iter().any(|&i| {
                        let (a, b) = edges[i];
                        segment_dist2(p, mesh.vertices[a], mesh.vertices[b]) < eps2
                    })
                })
        })
        .collect();
    sample.subset(&keep)
}

/// `(ECD1, EF1)` from edge subsets. Both empty gives `(0, 1)`; exactly one
/// empty gives `(inf, 0)`.
pub fn edge_metrics_from_samples(gt_edges: &SurfaceSample, recon_edges: &SurfaceSample, eps: f64) -> (f64, f64) {
    match (gt_edges.is_empty(), recon_edges.is_empty()) {
        (true, true) => (0.0, 1.0),
        (true, false) | (false, true) => (f64::INFINITY, 0.0),
        _ => {
            let p = Pairing::new(&gt_edges.points, &recon_edges.points);
            (p.chamfer().0, p.f_score(eps).0)
        }
    }
}

pub fn edge_metrics(
    gt: &IndexedMesh,
    recon: &IndexedMesh,
    dihedral_threshold_deg: f64,
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let sg = sample_surface(gt, samples, seed)?;
    let sr = sample_surface(recon, samples, seed)?;
    Ok(edge_metrics_from_samples(
        &edge_samples(gt, &sg, dihedral_threshold_deg, eps),
        &edge_samples(recon, &sr, dihedral_threshold_deg, eps),
        eps,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalParams {
    pub samples: usize,
    pub eps: f64,
    pub seed: u64,
    pub dihedral_deg: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, eps: DEFAULT_EPS, seed: 0, dihedral_deg: DEFAULT_DIHEDRAL_DEG }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub cd1: f64,
    pub cd2: f64,
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub nc: f64,
    pub nr: f64,
    pub ecd1: f64,
    pub ef1: f64,
}

impl MetricReport {
    /// Table-style values: CD1 and ECD1 times 10^2, CD2 times 10^5.
    fn scaled(&self) -> [(&'static str, f64); 9] {
        [
            ("cd1_x1e2", self.cd1 * 1e2),
            ("cd2_x1e5", self.cd2 * 1e5),
            ("f1", self.f1),
            ("recall", self.recall),
            ("precision", self.precision),
            ("nc", self.nc),
            ("nr_deg", self.nr),
            ("ecd1_x1e2", self.ecd1 * 1e2),
            ("ef1", self.ef1),
        ]
    }

    pub fn to_key_value(&self) -> String {
        self.scaled().iter().map(|(k, v)| format!("{k}={v:.6}\n")).collect()
    }

    /// One JSON object; infinite values are written as null.
    pub fn to_json_line(&self) -> String {
        let map: serde_json::Map<String, serde_json::Value> =
            self.scaled().iter().map(|(k, v)| (k.to_string(), serde_json::json!(v))).collect();
        serde_json::Value::Object(map).to_string()
    }
}

/// All metrics between a reference and a reconstruction. Both meshes are
/// sampled with the same seed, so identical meshes give identical samples.
pub fn evaluate_meshes(gt: &IndexedMesh, recon: &IndexedMesh, params: &EvalParams) -> Result<MetricReport> {
    let sg = sample_surface(gt, params.samples, params.seed)?;
    let sr = sample_surface(recon, params.samples, params.seed)?;
    let pairing = Pairing::new(&sg.points, &sr.points);
    let (cd1, cd2) = pairing.chamfer();
    let (f1, recall, precision) = pairing.f_score(params.eps);
    let (nc, nr) = normal_metrics_paired(&pairing, &sg, &sr);
    let (ecd1, ef1) = edge_metrics_from_samples(
        &edge_samples(gt, &sg, params.dihedral_deg, params.eps),
        &edge_samples(recon, &sr, params.dihedral_deg, params.eps),
        params.eps,
    );
    Ok(MetricReport { cd1, cd2, f1, recall, precision, nc, nr, ecd1, ef1 })
}

/// Largest interior angle of a triangle, in degrees.
pub fn max_interior_angle(a: Point3, b: Point3, c: Point3) -> f64 {
    let angle = |p: Point3, q: Point3, r: Point3| {
        let (u, v) = (sub(q, p), sub(r, p));
        let d = norm(u) * norm(v);
        if d == 0.0 {
            0.0
        } else {
            (dot(u, v) / d).clamp(-1.0, 1.0).acos().to_degrees()
        }
    };
    angle(a, b, c).max(angle(b, c, a)).max(angle(c, a, b))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleBin {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub gt_faces: usize,
    pub recovered: usize,
}

impl AngleBin {
    /// `None` for bins without reference faces.
    pub fn accuracy(&self) -> Option<f64> {
        (self.gt_faces > 0).then(|| self.recovered as f64 / self.gt_faces as f64)
    }
}

/// Reference faces binned by their largest interior angle over
/// `[0, 180)`, with the number reproduced exactly (same vertex triplet) by
/// `recon`.
pub fn angle_accuracy_report(gt: &IndexedMesh, recon: &IndexedMesh, bin_width_deg: f64) -> Result<Vec<AngleBin>> {
    if !(bin_width_deg > 0.0 && bin_width_deg.is_finite()) {
        return Err(Error::InvalidParameter("bin width must be positive".into()));
    }
    let bins = (180.0 / bin_width_deg).ceil() as usize;
    let found: BTreeSet<Triangle> = recon.face_set();
    let mut counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for t in gt.faces() {
        let [a, b, c] = t.positions(&gt.vertices);
        let j = ((max_interior_angle(a, b, c) / bin_width_deg).floor() as usize).min(bins - 1);
        let e = counts.entry(j).or_insert((0, 0));
        e.0 += 1;
        e.1 += usize::from(found.contains(t));
    }
    Ok((0..bins)
        .map(|j| {
            let (g, r) = counts.get(&j).copied().unwrap_or((0, 0));
            AngleBin {
                lo_deg: j as f64 * bin_width_deg,
                hi_deg: ((j + 1) as f64 * bin_width_deg).min(180.0),
                gt_faces: g,
                recovered: r,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{cube, hinged_planes, icosphere, rounded_cube};

    fn brute_chamfer(a: &[Point3], b: &[Point3]) -> (f64, f64) {
        let near = |p: Point3, s: &[Point3]| s.iter().map(|&q| dist2(p, q)).fold(f64::INFINITY, f64::min);
        let fa: Vec<f64> = a.iter().map(|&p| near(p, b)).collect();
        let fb: Vec<f64> = b.iter().map(|&p| near(p, a)).collect();
        (
            mean(fa.iter().map(|d| d.sqrt()), a.len()) + mean(fb.iter().map(|d| d.sqrt()), b.len()),
            mean(fa.iter().copied(), a.len()) + mean(fb.iter().copied(), b.len()),
        )
    }

    fn random_points(n: usize, seed: u64) -> Vec<Point3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn samples_lie_in_the_triangle() {
        let m =
            IndexedMesh::from_triplets(vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[[0, 1, 2]]).unwrap();
        let s = sample_surface(&m, 1000, 3).unwrap();
        assert!(s.points.iter().all(|p| p[0] >= 0.0 && p[1] >= 0.0 && p[0] / 2.0 + p[1] <= 1.0 + 1e-12 && p[2] == 0.0));
        assert_eq!(s, sample_surface(&m, 1000, 3).unwrap());
    }

    #[test]
    fn sampling_follows_area() {
        // areas 1 and 3
        let v = vec![
            [0.0, 0.0, 0.0],
            [2.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [10.0, 0.0, 0.0],
            [16.0, 0.0, 0.0],
            [10.0, 1.0, 0.0],
        ];
        let m = IndexedMesh::from_triplets(v, &[[0, 1, 2], [3, 4, 5]]).unwrap();
        let n = 20_000;
        let s = sample_surface(&m, n, 8).unwrap();
        let frac = s.faces.iter().filter(|&&f| f == 1).count() as f64 / n as f64;
        let sigma = (0.75 * 0.25 / n as f64).sqrt();
        assert!((frac - 0.75).abs() < 3.0 * sigma);
    }

    #[test]
    fn square_mean_is_centered() {
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
        let m = IndexedMesh::from_triplets(v, &[[0, 1, 2], [0, 2, 3]]).unwrap();
        let n = 20_000;
        let s = sample_surface(&m, n, 5).unwrap();
        let sd = (1.0 / 12.0 / n as f64).sqrt();
        for d in 0..2 {
            let mean = s.points.iter().map(|p| p[d]).sum::<f64>() / n as f64;
            assert!((mean - 0.5).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn empty_mesh_cannot_be_sampled() {
        let m = IndexedMesh::new(vec![[0.0; 3]; 3], vec![]).unwrap();
        assert!(matches!(sample_surface(&m, 10, 0), Err(Error::EmptyMesh)));
    }

    #[test]
    fn chamfer_closed_forms_and_oracle() {
        assert_eq!(chamfer(&[[0.0; 3]], &[[1.0, 0.0, 0.0]]), (2.0, 2.0));
        let a = random_points(300, 1);
        let b = random_points(300, 2);
        assert_eq!(chamfer(&a, &a), (0.0, 0.0));
        assert_eq!(chamfer(&a, &b), brute_chamfer(&a, &b));
        let (x, y) = (chamfer(&a, &b), chamfer(&b, &a));
        assert!((x.0 - y.0).abs() < 1e-15 && (x.1 - y.1).abs() < 1e-15);
    }

    #[test]
    fn f_score_cases() {
        let a = random_points(100, 3);
        assert_eq!(f_score(&a, &a, 1e-6), (1.0, 1.0, 1.0));
        let far: Vec<Point3> = a.iter().map(|p| add(*p, [10.0, 0.0, 0.0])).collect();
        assert_eq!(f_score(&a, &far, 0.1), (0.0, 0.0, 0.0));
        // half of q sits on q_hat, the other half far away
        let q: Vec<Point3> = (0..10).map(|i| [i as f64, if i % 2 == 0 { 0.0 } else { 50.0 }, 0.0]).collect();
        let q_hat: Vec<Point3> = (0..10).step_by(2).map(|i| [i as f64, 0.0, 0.0]).collect();
        let (_, recall, precision) = f_score(&q, &q_hat, 0.5);
        assert_eq!((recall, precision), (0.5, 1.0));
        let mut last = 0.0;
        for eps in [0.01, 0.1, 0.3, 1.0] {
            let f = f_score(&a, &random_points(100, 4), eps).0;
            assert!(f >= last);
            last = f;
        }
    }

    #[test]
    fn normals_of_same_and_flipped_planes() {
        let s = icosphere(1);
        let a = sample_surface(&s, 2000, 1).unwrap();
        let (nc, nr) = normal_metrics(&a, &a);
        assert!((nc - 1.0).abs() < 1e-12 && nr.abs() < 1e-4);
        let v = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let up = IndexedMesh::from_triplets(v.clone(), &[[0, 1, 2]]).unwrap();
        let mut flipped = sample_surface(&up, 500, 2).unwrap();
        flipped.normals.iter_mut().for_each(|n| *n = scale(*n, -1.0));
        let (nc, nr) = normal_metrics(&sample_surface(&up, 500, 3).unwrap(), &flipped);
        assert!((nc - 1.0).abs() < 1e-12 && nr.abs() < 1e-4);
    }

    #[test]
    fn hinged_planes_give_thirty_degrees() {
        let (flat, tilted) = hinged_planes(6, 30.0);
        let a = sample_surface(&flat, 5000, 1).unwrap();
        let b = sample_surface(&tilted, 5000, 2).unwrap();
        let (_, nr) = normal_metrics(&a, &b);
        assert!((nr - 30.0).abs() < 0.5, "{nr}");
    }

    #[test]
    fn edge_metric_conventions() {
        let c = cube(3);
        assert!(!sharp_edges(&c, 30.0).is_empty());
        assert_eq!(edge_metrics(&c, &c, 30.0, 0.01, 5000, 4).unwrap(), (0.0, 1.0));
        let s = icosphere(3);
        assert!(sharp_edges(&s, 30.0).is_empty());
        assert_eq!(edge_metrics(&s, &s, 30.0, 0.01, 2000, 4).unwrap(), (0.0, 1.0));
        let (ecd, ef) = edge_metrics(&c, &s, 30.0, 0.01, 2000, 4).unwrap();
        assert!(ecd.is_infinite() && ef == 0.0);
        let rounded = rounded_cube(6, 0.3);
        assert!(edge_metrics(&c, &rounded, 30.0, 0.01, 5000, 4).unwrap().0 > 0.0);
    }

    #[test]
    fn identical_subsets_are_exact() {
        let c = cube(2);
        let s = sample_surface(&c, 1000, 1).unwrap();
        let e = edge_samples(&c, &s, 30.0, 0.01);
        assert_eq!(edge_metrics_from_samples(&e, &e, 0.01), (0.0, 1.0));
    }

    #[test]
    fn sampling_ignores_indexing() {
        let s = icosphere(2);
        let n = s.vertex_count();
        // reverse the vertex array, rotate corners and reverse the face list
        let vertices: Vec<Point3> = s.vertices.iter().rev().copied().collect();
        let faces: Vec<Triangle> = s
            .faces()
            .iter()
            .rev()
            .map(|t| {
                let [a, b, c] = t.indices();
                Triangle::new(n - 1 - b, n - 1 - c, n - 1 - a).unwrap()
            })
            .collect();
        let p = IndexedMesh::new(vertices, faces).unwrap();
        assert_eq!(sample_surface(&s, 500, 3).unwrap().points, sample_surface(&p, 500, 3).unwrap().points);
        let r = evaluate_meshes(&s, &p, &EvalParams { samples: 2000, ..EvalParams::default() }).unwrap();
        assert_eq!((r.cd1, r.f1), (0.0, 1.0));
    }

    #[test]
    fn report_formats() {
        let s = icosphere(2);
        let r = evaluate_meshes(&s, &s, &EvalParams { samples: 3000, ..EvalParams::default() }).unwrap();
        assert_eq!((r.cd1, r.cd2, r.f1), (0.0, 0.0, 1.0));
        // |n . n| can round one ulp below 1
        assert!((r.nc - 1.0).abs() < 1e-12 && r.nr < 1e-5);
        let kv = r.to_key_value();
        assert!(kv.lines().any(|l| l.starts_with("cd1_x1e2=")));
        let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
        assert!(v["f1"].as_f64().unwrap() > 0.9);
    }

    #[test]
    fn angle_bins_match_set_intersection() {
        let m = crate::synthetic::random_delaunay_surface(120, 0.05, 0.1, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let subset: Vec<Triangle> = m.faces().iter().copied().filter(|_| rng.random_bool(0.5)).collect();
        let recon = m.with_faces(subset.clone()).unwrap();
        let bins = angle_accuracy_report(&m, &recon, 10.0).unwrap();
        assert_eq!(bins.len(), 18);
        assert_eq!(bins.iter().map(|b| b.gt_faces).sum::<usize>(), m.face_count());
        for b in &bins {
            let brute = m
                .faces()
                .iter()
                .filter(|t| {
                    let [x, y, z] = t.positions(&m.vertices);
                    let a = max_interior_angle(x, y, z);
                    a >= b.lo_deg && a < b.hi_deg
                })
                .filter(|t| subset.contains(t))
                .count();
            assert_eq!(b.recovered, brute);
        }
        let same = angle_accuracy_report(&m, &m, 10.0).unwrap();
        assert!(same.iter().all(|b| b.accuracy().is_none_or(|a| a == 1.0)));
        let no_obtuse = m
            .with_faces(
                m.faces()
                    .iter()
                    .copied()
                    .filter(|t| {
                        let [x, y, z] = t.positions(&m.vertices);
                        max_interior_angle(x, y, z) <= 120.0
                    })
                    .collect(),
            )
            .unwrap();
        let r = angle_accuracy_report(&m, &no_obtuse, 10.0).unwrap();
        assert!(r.iter().filter(|b| b.lo_deg >= 120.0).all(|b| b.recovered == 0));
    }
}
