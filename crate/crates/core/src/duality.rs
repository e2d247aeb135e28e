//! Triangle recovery from circumcenters: the two neighbours whose distance
//! to a detected center best matches the patch center's distance complete
//! the triangle.

use std::collections::{BTreeMap, BTreeSet};

use crate::geometry::{dist, Patch, Point3, PointCloud, Triangle};

/// A circumcenter hypothesis in model coordinates, proposed from the patch
/// of `source_point`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectedCenter {
    pub position: Point3,
    pub confidence: f64,
    pub source_point: usize,
}

/// A deduplicated recovered face with its best confidence and the number of
/// distinct points that proposed it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveredTriangle {
    pub triangle: Triangle,
    pub confidence: f64,
    pub multiplicity: usize,
}

/// Picks the two neighbours with the smallest |d(q, X) - d(p, X)|; ties go
/// to the lower point index.
pub fn recover_from_distances(
    center_distance: f64,
    neighbor_distances: impl IntoIterator<Item = (usize, f64)>,
) -> Option<(usize, usize)> {
    let mut best: [Option<(f64, usize)>; 2] = [None, None];
    let better = |a: (f64, usize), b: Option<(f64, usize)>| match b {
        None => true,
        Some(b) => a.0 < b.0 || (a.0 == b.0 && a.1 < b.1),
    };
    for (idx, d) in neighbor_distances {
        let cand = ((d - center_distance).abs(), idx);
        if better(cand, best[0]) {
            best[1] = best[0];
            best[0] = Some(cand);
        } else if better(cand, best[1]) {
            best[1] = Some(cand);
        }
    }
    match best {
        [Some(a), Some(b)] => Some((a.1, b.1)),
        _ => None,
    }
}

/// Recovers the face dual to `center` at patch point `p_idx`, with distances
/// measured in model coordinates.
pub fn recover_triangle(p_idx: usize, center: &DetectedCenter, patch: &Patch, cloud: &PointCloud) -> Triangle {
    let x = center.position;
    let dp = dist(cloud[p_idx], x);
    let (u, v) = recover_from_distances(dp, patch.neighbor_indices.iter().map(|&q| (q, dist(cloud[q], x))))
        .expect("patch has at least two neighbours");
    Triangle::new(p_idx, u, v).expect("neighbours exclude the patch center")
}

/// Same as [`recover_triangle`] but evaluated in a patch's normalized frame,
/// where the center sits at the origin. Returns neighbour slots, not point
/// indices.
pub fn recover_local(neighbors: &[Point3], center: Point3) -> Option<(usize, usize)> {
    let dp = crate::geometry::norm(center);
    recover_from_distances(dp, neighbors.iter().enumerate().map(|(k, &q)| (k, dist(q, center))))
}

/// Recovers every detection at or above `conf_threshold` and merges the
/// result into sorted canonical faces. `patches[i]` must be the patch of
/// point `i`.
pub fn recover_all(
    detections: &[DetectedCenter],
    cloud: &PointCloud,
    patches: &[Patch],
    conf_threshold: f64,
) -> Vec<RecoveredTriangle> {
    let mut merged: BTreeMap<Triangle, (f64, BTreeSet<usize>)> = BTreeMap::new();
    for det in detections.iter().filter(|d| d.confidence >= conf_threshold) {
        let patch = &patches[det.source_point];
        let tri = recover_triangle(det.source_point, det, patch, cloud);
        let entry = merged.entry(tri).or_insert((f64::NEG_INFINITY, BTreeSet::new()));
        entry.0 = entry.0.max(det.confidence);
        entry.1.insert(det.source_point);
    }
    merge_into_list(merged)
}

pub(crate) fn merge_into_list(merged: BTreeMap<Triangle, (f64, BTreeSet<usize>)>) -> Vec<RecoveredTriangle> {
    merged
        .into_iter()
        .map(|(triangle, (confidence, sources))| RecoveredTriangle {
            triangle,
            confidence,
            multiplicity: sources.len(),
        })
        .collect()
}
