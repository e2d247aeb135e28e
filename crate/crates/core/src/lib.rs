//! Point cloud triangulation by circumcenter detection.
//!
//! Each point's KNN patch is normalized to a fixed resolution, and a detector
//! predicts the circumcenters of the point's incident triangles relative to a
//! grid of spherical anchors. A triangle is recovered from each circumcenter
//! by picking the two neighbours whose distance to it best matches the
//! point's own. The union of recovered triangles is then made edge-manifold
//! and small holes are closed.
//!
//! The [`pipeline::oracle_triangulate`] mode feeds exact circumcenters from a
//! reference mesh through the same recovery path, which checks the geometry
//! independently of any trained model.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod anchors;
mod binary;
pub mod dataset;
pub mod detector;
pub mod duality;
pub mod error;
pub mod geometry;
pub mod io;
pub mod kdtree;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod postprocess;
pub mod synthetic;

pub use anchors::{AnchorCell, AnchorGrid, OffsetCoords};
pub use error::{Error, Result};
pub use geometry::{Patch, Point3, PointCloud, Spherical, Triangle};
pub use mesh::IndexedMesh;
