//! End-to-end triangulation: patches, detections, recovery and union.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;

use crate::anchors::AnchorGrid;
use crate::dataset::LabelBuilder;
use crate::detector::{sigmoid, Detector};
use crate::duality::{merge_into_list, recover_triangle, DetectedCenter, RecoveredTriangle};
use crate::error::{Error, Result};
use crate::geometry::{build_knn_index, extract_patch, from_spherical, Patch, PointCloud, Triangle};
use crate::mesh::IndexedMesh;

/// Patches per forward pass.
const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimings {
    pub patches_secs: f64,
    pub inference_secs: f64,
    pub recovery_secs: f64,
}

/// A primitive mesh plus the per-face priorities needed for post-processing.
#[derive(Clone, Debug)]
pub struct Triangulation {
    pub mesh: IndexedMesh,
    /// Sorted by canonical face.
    pub triangles: Vec<RecoveredTriangle>,
    pub detections: usize,
    pub timings: StageTimings,
}

fn merge(per_point: Vec<Vec<(Triangle, f64)>>) -> Vec<RecoveredTriangle> {
    let mut merged: BTreeMap<Triangle, (f64, BTreeSet<usize>)> = BTreeMap::new();
    for (source, faces) in per_point.into_iter().enumerate() {
        for (tri, conf) in faces {
            let e = merged.entry(tri).or_insert((f64::NEG_INFINITY, BTreeSet::new()));
            e.0 = e.0.max(conf);
            e.1.insert(source);
        }
    }
    merge_into_list(merged)
}

fn recover_point(p: usize, centers: &[DetectedCenter], patch: &Patch, cloud: &PointCloud) -> Vec<(Triangle, f64)> {
    centers.iter().map(|c| (recover_triangle(p, c, patch, cloud), c.confidence)).collect()
}

fn extract_all(cloud: &PointCloud, k: usize, eta0: f64) -> Result<Vec<Patch>> {
    let index = build_knn_index(cloud);
    (0..cloud.len()).into_par_iter().map(|i| extract_patch(cloud, &index, i, k, eta0)).collect()
}

/// Detected circumcenters of one patch in model coordinates.
fn decode(
    detector: &Detector,
    patch: &Patch,
    out: &crate::detector::DetectionTensor,
    row: usize,
    threshold: f64,
) -> Vec<DetectedCenter> {
    let grid = detector.grid();
    let mut centers = Vec::new();
    for anchor in 0..out.anchors {
        for slot in 0..out.slots {
            let confidence = sigmoid(out.logit(row, anchor, slot));
            if confidence < threshold {
                continue;
            }
            let g = crate::anchors::OffsetCoords::from_array(out.offsets(row, anchor, slot));
            let local = from_spherical(grid.decode_offsets(grid.cell(anchor), g));
            centers.push(DetectedCenter {
                position: patch.denormalize(local),
                confidence,
                source_point: patch.center_index,
            });
        }
    }
    centers
}

/// Runs the detector on every point's patch and unions the recovered faces.
/// The output vertices are the input points, untouched.
pub fn triangulate(
    cloud: &PointCloud,
    detector: &Detector,
    k: usize,
    eta0: f64,
    threshold: f64,
) -> Result<Triangulation> {
    let t0 = Instant::now();
    let patches = extract_all(cloud, k, eta0)?;
    let t1 = Instant::now();
    let centers: Vec<Vec<DetectedCenter>> = patches
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            let refs: Vec<&Patch> = chunk.iter().collect();
            let out = detector.forward(&refs);
            chunk.iter().enumerate().map(|(row, p)| decode(detector, p, &out, row, threshold)).collect::<Vec<_>>()
        })
        .collect();
    let t2 = Instant::now();
    let detections = centers.iter().map(Vec::len).sum();
    let per_point: Vec<Vec<(Triangle, f64)>> =
        centers.par_iter().enumerate().map(|(p, c)| recover_point(p, c, &patches[p], cloud)).collect();
    let triangles = merge(per_point);
    let mesh = IndexedMesh::new(cloud.points().to_vec(), triangles.iter().map(|t| t.triangle).collect())?;
    let t3 = Instant::now();
    Ok(Triangulation {
        mesh,
        triangles,
        detections,
        timings: StageTimings {
            patches_secs: (t1 - t0).as_secs_f64(),
            inference_secs: (t2 - t1).as_secs_f64(),
            recovery_secs: (t3 - t2).as_secs_f64(),
        },
    })
}

/// Ground-truth circumcenters lost before recovery.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleStats {
    pub centers: usize,
    pub dropped_out_of_range: usize,
    pub dropped_outside_patch: usize,
}

#[derive(Clone, Debug)]
pub struct OracleTriangulation {
    pub triangulation: Triangulation,
    pub stats: OracleStats,
}

/// Feeds the exact circumcenters of each vertex's incident faces in
/// `reference` through the anchor encoding and back, then through the same
/// recovery and union as [`triangulate`]. The cloud is the reference's
/// vertex array.
pub fn oracle_triangulate(
    reference: &IndexedMesh,
    k: usize,
    eta0: f64,
    grid: &AnchorGrid,
) -> Result<OracleTriangulation> {
    let t0 = Instant::now();
    let builder = LabelBuilder::new(reference)?;
    let cloud = builder.cloud();
    let samples =
        (0..cloud.len()).into_par_iter().map(|v| builder.make_sample(v, grid, k, eta0)).collect::<Result<Vec<_>>>()?;
    let t1 = Instant::now();
    let mut stats = OracleStats::default();
    let centers: Vec<Vec<DetectedCenter>> = samples
        .iter()
        .map(|s| {
            stats.dropped_out_of_range += s.dropped_out_of_range;
            stats.dropped_outside_patch += s.dropped_outside_patch;
            s.positive_cells
                .iter()
                .flat_map(|c| {
                    c.offsets.iter().map(|&g| DetectedCenter {
                        position: s.patch.denormalize(from_spherical(grid.decode_offsets(c.cell, g))),
                        confidence: 1.0,
                        source_point: s.patch.center_index,
                    })
                })
                .collect()
        })
        .collect();
    let t2 = Instant::now();
    stats.centers = centers.iter().map(Vec::len).sum();
    let per_point: Vec<Vec<(Triangle, f64)>> =
        centers.par_iter().enumerate().map(|(p, c)| recover_point(p, c, &samples[p].patch, cloud)).collect();
    let triangles = merge(per_point);
    let mesh = IndexedMesh::new(cloud.points().to_vec(), triangles.iter().map(|t| t.triangle).collect())?;
    let t3 = Instant::now();
    Ok(OracleTriangulation {
        triangulation: Triangulation {
            mesh,
            triangles,
            detections: stats.centers,
            timings: StageTimings {
                patches_secs: (t1 - t0).as_secs_f64(),
                inference_secs: (t2 - t1).as_secs_f64(),
                recovery_secs: (t3 - t2).as_secs_f64(),
            },
        },
        stats,
    })
}

/// Face-set comparison of a recovered mesh against a reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceRecovery {
    pub reference: usize,
    pub recovered: usize,
    pub matched: usize,
    pub spurious: usize,
}

impl FaceRecovery {
    pub fn compare(reference: &IndexedMesh, recovered: &IndexedMesh) -> Result<Self> {
        if reference.vertex_count() != recovered.vertex_count() {
            return Err(Error::InvalidParameter("meshes must share their vertex array".into()));
        }
        let gt = reference.face_set();
        let got = recovered.face_set();
        let matched = gt.intersection(&got).count();
        Ok(Self { reference: gt.len(), recovered: got.len(), matched, spurious: got.len() - matched })
    }

    /// Percentage of reference faces recovered.
    pub fn percentage(&self) -> f64 {
        if self.reference == 0 {
            100.0
        } else {
            100.0 * self.matched as f64 / self.reference as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorConfig;
    use crate::synthetic::{icosphere, triangular_grid};

    #[test]
    fn oracle_on_grid_plane() {
        let mesh = triangular_grid(5, 5, 1.0);
        let out =
            oracle_triangulate(&mesh, 50.min(mesh.vertex_count() - 1), 0.01, &AnchorGrid::default_grid()).unwrap();
        let r = FaceRecovery::compare(&mesh, &out.triangulation.mesh).unwrap();
        assert_eq!((r.reference, r.matched, r.spurious), (32, 32, 0));
        assert_eq!(out.stats.dropped_out_of_range + out.stats.dropped_outside_patch, 0);
        assert_eq!(out.triangulation.mesh.vertices, mesh.vertices);
    }

    #[test]
    fn oracle_on_icosphere() {
        let mesh = icosphere(2);
        let out = oracle_triangulate(&mesh, 50, 0.01, &AnchorGrid::default_grid()).unwrap();
        assert_eq!(out.triangulation.mesh.face_set(), mesh.face_set());
        assert!(out.triangulation.triangles.iter().all(|t| t.multiplicity == 3));
    }

    #[test]
    fn needle_face_is_reported_not_recovered() {
        // hexagonal fan around vertex 0 plus a sliver spanning it
        let mut v = vec![[0.0, 0.0, 0.0]];
        for i in 0..6 {
            let a = i as f64 * std::f64::consts::PI / 3.0;
            v.push([a.cos(), a.sin(), 0.0]);
        }
        v.push([0.0, 0.02, 0.0]);
        let mut faces: Vec<[usize; 3]> = (0..6).map(|i| [0, 1 + i, 1 + (i + 1) % 6]).collect();
        faces.push([1, 4, 7]);
        let mesh = IndexedMesh::from_triplets(v, &faces).unwrap();
        let out = oracle_triangulate(&mesh, 7, 0.01, &AnchorGrid::default_grid()).unwrap();
        assert!(out.stats.dropped_out_of_range >= 3);
        let got = out.triangulation.mesh.face_set();
        assert!(!got.contains(&Triangle::new(1, 4, 7).unwrap()));
        assert!(got.contains(&Triangle::new(0, 1, 2).unwrap()));
    }

    #[test]
    fn threshold_one_gives_no_faces_and_keeps_vertices() {
        let mesh = triangular_grid(4, 4, 1.0);
        let grid = AnchorGrid::new(0.05, std::f64::consts::PI / 2.0, std::f64::consts::PI / 2.0, 0.2).unwrap();
        let config = DetectorConfig {
            pe_levels: 2,
            depth_multiplier: 2,
            point_widths: vec![8],
            conv_width: 8,
            head_widths: vec![8],
            anchors: grid.len(),
            ..DetectorConfig::default()
        };
        let det = Detector::new(config, grid, 1).unwrap();
        let cloud = PointCloud::new(mesh.vertices.clone()).unwrap();
        let out = triangulate(&cloud, &det, 6, 0.01, 1.0).unwrap();
        assert_eq!(out.mesh.face_count(), 0);
        assert_eq!(out.mesh.vertices, mesh.vertices);
        let low = triangulate(&cloud, &det, 6, 0.01, 0.0).unwrap();
        assert!(low.mesh.face_count() > 0);
        assert!(low.mesh.faces().iter().all(|t| t.indices().iter().all(|&i| i < 16)));
    }
}
