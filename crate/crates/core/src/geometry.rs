//! Geometric primitives: point clouds, KNN patches, spherical coordinates
//! and triangle circumcenters.

use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kdtree::KdTree;

pub type Point3 = [f64; 3];

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

#[inline]
pub fn dist(a: Point3, b: Point3) -> f64 {
    dist2(a, b).sqrt()
}

pub fn normalize(a: Point3) -> Point3 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        a
    }
}

/// An ordered set of distinct 3D points. Triangulation never moves them.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub const MIN_POINTS: usize = 4;

    /// Validates the point set. Exact duplicates are rejected, listing every
    /// group of coincident indices.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(Error::TooFewPoints { min: Self::MIN_POINTS, got: points.len() });
        }
        if let Some(p) = points.iter().find(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidParameter(format!("non-finite point {p:?}")));
        }
        let mut seen: HashMap<[u64; 3], Vec<usize>> = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            // -0.0 and 0.0 are the same position
            let key = p.map(|c| (c + 0.0).to_bits());
            seen.entry(key).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = seen.into_values().filter(|g| g.len() > 1).collect();
        if !groups.is_empty() {
            groups.sort();
            return Err(Error::DuplicatePoints(groups));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point3;
    fn index(&self, i: usize) -> &Point3 {
        &self.points[i]
    }
}

/// Exact KNN index over a point cloud.
pub fn build_knn_index(cloud: &PointCloud) -> KdTree {
    KdTree::build(cloud.points())
}

/// A point together with its K nearest neighbours, rescaled so that the
/// nearest neighbour sits at distance `eta0` from the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub center_index: usize,
    pub center: Point3,
    pub neighbor_indices: Vec<usize>,
    pub normalized_neighbors: Vec<Point3>,
    /// eta0 / nn_distance
    pub scale: f64,
    pub nn_distance: f64,
}

impl Patch {
    pub fn k(&self) -> usize {
        self.neighbor_indices.len()
    }

    /// Maps a point from the normalized frame back to model coordinates.
    pub fn denormalize(&self, local: Point3) -> Point3 {
        add(self.center, scale(local, 1.0 / self.scale))
    }

    /// Maps a model-space point into the normalized frame.
    pub fn normalize(&self, world: Point3) -> Point3 {
        scale(sub(world, self.center), self.scale)
    }
}

pub fn extract_patch(cloud: &PointCloud, index: &KdTree, point_idx: usize, k: usize, eta0: f64) -> Result<Patch> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!("k must be >= 3, got {k}")));
    }
    if !(eta0 > 0.0) {
        return Err(Error::InvalidParameter(format!("eta0 must be positive, got {eta0}")));
    }
    if cloud.len() <= k {
        return Err(Error::InvalidParameter(format!("k = {k} needs more than {k} points, cloud has {}", cloud.len())));
    }
    let center = cloud[point_idx];
    let neighbors = index.knn_excluding(center, k, point_idx);
    let nn_distance = neighbors[0].1;
    if nn_distance == 0.0 {
        return Err(Error::DegeneratePatch { point: point_idx });
    }
    let eta = eta0 / nn_distance;
    let neighbor_indices: Vec<usize> = neighbors.iter().map(|&(i, _)| i).collect();
    let normalized_neighbors = neighbor_indices.iter().map(|&i| scale(sub(cloud[i], center), eta)).collect();
    Ok(Patch { center_index: point_idx, center, neighbor_indices, normalized_neighbors, scale: eta, nn_distance })
}

/// Spherical coordinates: radius, azimuth in (-pi, pi], inclination in
/// [-pi/2, pi/2].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spherical {
    pub rho: f64,
    pub theta: f64,
    pub phi: f64,
}

pub fn to_spherical(v: Point3) -> Spherical {
    let rho = norm(v);
    if rho == 0.0 {
        return Spherical { rho: 0.0, theta: 0.0, phi: 0.0 };
    }
    let theta = if v[0] == 0.0 && v[1] == 0.0 {
        0.0
    } else {
        let t = v[1].atan2(v[0]);
        if t <= -PI {
            PI
        } else {
            t
        }
    };
    let phi = v[2].atan2(v[0].hypot(v[1]));
    Spherical { rho, theta, phi }
}

pub fn from_spherical(s: Spherical) -> Point3 {
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.phi.sin_cos();
    [s.rho * cp * ct, s.rho * cp * st, s.rho * sp]
}

/// Triangles whose area relative to the squared longest edge falls below
/// this are rejected by [`circumcenter`].
pub const MIN_NORMALIZED_AREA: f64 = 1e-12;

/// Circumcenter of a 3D triangle, lying in the triangle's plane.
pub fn circumcenter(a: Point3, b: Point3, c: Point3) -> Result<Point3> {
    let u = sub(b, a);
    let v = sub(c, a);
    let w = cross(u, v);
    let w2 = dot(w, w);
    let longest = dot(u, u).max(dot(v, v)).max(dist2(b, c));
    let normalized_area = if longest > 0.0 { 0.5 * w2.sqrt() / longest } else { 0.0 };
    if !(normalized_area >= MIN_NORMALIZED_AREA) {
        return Err(Error::DegenerateTriangle { normalized_area });
    }
    let t1 = scale(cross(v, w), dot(u, u));
    let t2 = scale(cross(w, u), dot(v, v));
    Ok(add(a, scale(add(t1, t2), 0.5 / w2)))
}

pub fn circumradius(a: Point3, b: Point3, c: Point3) -> Result<f64> {
    circumcenter(a, b, c).map(|x| dist(a, x))
}

/// An unordered vertex triplet stored in canonical ascending order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triangle([usize; 3]);

impl Triangle {
    /// Returns `None` when the indices are not pairwise distinct.
    pub fn new(a: usize, b: usize, c: usize) -> Option<Self> {
        let mut idx = [a, b, c];
        idx.sort_unstable();
        if idx[0] == idx[1] || idx[1] == idx[2] {
            None
        } else {
            Some(Self(idx))
        }
    }

    pub fn indices(&self) -> [usize; 3] {
        self.0
    }

    pub fn contains(&self, v: usize) -> bool {
        self.0.contains(&v)
    }

    /// The three undirected edges, each as (low, high).
    pub fn edges(&self) -> [(usize, usize); 3] {
        let [a, b, c] = self.0;
        [(a, b), (a, c), (b, c)]
    }

    pub fn positions(&self, vertices: &[Point3]) -> [Point3; 3] {
        self.0.map(|i| vertices[i])
    }
}
