//! Spherical anchor grid: anchor points, half-open anchor cells and the
//! step-normalized offsets of a coordinate relative to its cell's anchor.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Spherical;

/// Uniform partition of (0, R] x (-pi, pi] x [-pi/2, pi/2].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnchorGrid {
    pub delta_rho: f64,
    pub delta_theta: f64,
    pub delta_phi: f64,
    pub max_radius: f64,
    pub t_rho: usize,
    pub t_theta: usize,
    pub t_phi: usize,
}

/// Zero-based cell coordinates `(j_rho, j_theta, j_phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AnchorCell {
    pub j_rho: usize,
    pub j_theta: usize,
    pub j_phi: usize,
}

impl AnchorCell {
    /// One-based triple as written in the usual anchor notation.
    pub fn one_based(&self) -> (usize, usize, usize) {
        (self.j_rho + 1, self.j_theta + 1, self.j_phi + 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct OffsetCoords {
    pub rho: f64,
    pub theta: f64,
    pub phi: f64,
}

impl OffsetCoords {
    pub fn as_array(&self) -> [f64; 3] {
        [self.rho, self.theta, self.phi]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self { rho: a[0], theta: a[1], phi: a[2] }
    }
}

/// Number of bins of width `step` covering `range`. A quotient within 1e-9
/// of an integer counts as that integer so that e.g. 2pi/(pi/6) gives 12.
fn split_count(range: f64, step: f64) -> usize {
    let q = range / step;
    let r = q.round();
    let n = if (q - r).abs() < 1e-9 { r } else { q.ceil() };
    (n as usize).max(1)
}

/// Half-open binning against boundaries `low + j * step`; the top bin is
/// closed and absorbs everything above it.
fn bin(x: f64, low: f64, step: f64, count: usize) -> usize {
    let boundary = |j: usize| low + j as f64 * step;
    let guess = ((x - low) / step).floor();
    let mut j = if guess < 0.0 { 0 } else { (guess as usize).min(count - 1) };
    while j > 0 && x < boundary(j) {
        j -= 1;
    }
    while j + 1 < count && x >= boundary(j + 1) {
        j += 1;
    }
    j
}

impl AnchorGrid {
    pub const THETA_LOW: f64 = -PI;
    pub const PHI_LOW: f64 = -PI / 2.0;

    pub fn new(delta_rho: f64, delta_theta: f64, delta_phi: f64, max_radius: f64) -> Result<Self> {
        for (name, v) in [
            ("delta_rho", delta_rho),
            ("delta_theta", delta_theta),
            ("delta_phi", delta_phi),
            ("max_radius", max_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            delta_rho,
            delta_theta,
            delta_phi,
            max_radius,
            t_rho: split_count(max_radius, delta_rho),
            t_theta: split_count(2.0 * PI, delta_theta),
            t_phi: split_count(PI, delta_phi),
        })
    }

    /// 0.02, pi/6, pi/6, R = 0.2: 720 anchors.
    pub fn default_grid() -> Self {
        Self::new(0.02, PI / 6.0, PI / 6.0, 0.2).expect("valid defaults")
    }

    pub fn len(&self) -> usize {
        self.t_rho * self.t_theta * self.t_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat_index(&self, cell: AnchorCell) -> usize {
        (cell.j_rho * self.t_theta + cell.j_theta) * self.t_phi + cell.j_phi
    }

    pub fn cell(&self, flat: usize) -> AnchorCell {
        debug_assert!(flat < self.len());
        let j_phi = flat % self.t_phi;
        let rest = flat / self.t_phi;
        AnchorCell { j_rho: rest / self.t_theta, j_theta: rest % self.t_theta, j_phi }
    }

    pub fn cells(&self) -> impl Iterator<Item = AnchorCell> + '_ {
        (0..self.len()).map(|j| self.cell(j))
    }

    pub fn anchor(&self, cell: AnchorCell) -> Spherical {
        Spherical {
            rho: self.delta_rho / 2.0 + cell.j_rho as f64 * self.delta_rho,
            theta: Self::THETA_LOW + self.delta_theta / 2.0 + cell.j_theta as f64 * self.delta_theta,
            phi: Self::PHI_LOW + self.delta_phi / 2.0 + cell.j_phi as f64 * self.delta_phi,
        }
    }

    /// Per-axis `[low, high)` bounds of a cell (the top bin of each axis is
    /// closed).
    pub fn bounds(&self, cell: AnchorCell) -> [(f64, f64); 3] {
        let b = |low: f64, step: f64, j: usize| (low + j as f64 * step, low + (j + 1) as f64 * step);
        [
            b(0.0, self.delta_rho, cell.j_rho),
            b(Self::THETA_LOW, self.delta_theta, cell.j_theta),
            b(Self::PHI_LOW, self.delta_phi, cell.j_phi),
        ]
    }

    /// The unique cell containing `s`, or `None` when `rho > R`.
    pub fn match_cell(&self, s: Spherical) -> Option<AnchorCell> {
        if !(s.rho <= self.max_radius) {
            return None;
        }
        Some(AnchorCell {
            j_rho: bin(s.rho, 0.0, self.delta_rho, self.t_rho),
            j_theta: bin(s.theta, Self::THETA_LOW, self.delta_theta, self.t_theta),
            j_phi: bin(s.phi, Self::PHI_LOW, self.delta_phi, self.t_phi),
        })
    }

    pub fn encode_offsets(&self, cell: AnchorCell, s: Spherical) -> OffsetCoords {
        let a = self.anchor(cell);
        OffsetCoords {
            rho: (s.rho - a.rho) / self.delta_rho,
            theta: (s.theta - a.theta) / self.delta_theta,
            phi: (s.phi - a.phi) / self.delta_phi,
        }
    }

    pub fn decode_offsets(&self, cell: AnchorCell, g: OffsetCoords) -> Spherical {
        let a = self.anchor(cell);
        Spherical {
            rho: a.rho + g.rho * self.delta_rho,
            theta: a.theta + g.theta * self.delta_theta,
            phi: a.phi + g.phi * self.delta_phi,
        }
    }

    /// Matches and encodes in one go.
    pub fn locate(&self, s: Spherical) -> Option<(AnchorCell, OffsetCoords)> {
        self.match_cell(s).map(|c| (c, self.encode_offsets(c, s)))
    }
}

/// Fixed-width histogram of values over `[0, max)`; the last bin also
/// counts everything above `max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(bin_width: f64, max: f64) -> Self {
        let n = split_count(max, bin_width) + 1;
        Self { bin_width, counts: vec![0; n] }
    }

    pub fn add(&mut self, v: f64) {
        let last = self.counts.len() - 1;
        let j = if v < 0.0 { 0 } else { ((v / self.bin_width) as usize).min(last) };
        self.counts[j] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Smallest bin upper edge below which at least `q` of the mass lies.
    pub fn quantile(&self, q: f64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let target = (q * total as f64).ceil() as usize;
        let mut acc = 0;
        for (j, &c) in self.counts.iter().enumerate() {
            acc += c;
            if acc >= target {
                return (j + 1) as f64 * self.bin_width;
            }
        }
        self.counts.len() as f64 * self.bin_width
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive containment scan, independent of the binning arithmetic.
    fn containing_cells(grid: &AnchorGrid, s: Spherical) -> Vec<AnchorCell> {
        grid.cells()
            .filter(|&c| {
                let b = grid.bounds(c);
                let inside = |x: f64, (lo, hi): (f64, f64), j: usize, count: usize| {
                    (x >= lo || j == 0) && (x < hi || j + 1 == count)
                };
                inside(s.rho, b[0], c.j_rho, grid.t_rho)
                    && inside(s.theta, b[1], c.j_theta, grid.t_theta)
                    && inside(s.phi, b[2], c.j_phi, grid.t_phi)
            })
            .collect()
    }

    #[test]
    fn default_grid_has_720_anchors() {
        let g = AnchorGrid::default_grid();
        assert_eq!((g.t_rho, g.t_theta, g.t_phi), (10, 12, 6));
        assert_eq!(g.len(), 720);
        assert!(g.len() < 50 * 50);
    }

    #[test]
    fn small_grid_counts() {
        let g = AnchorGrid::new(0.1, PI, PI / 2.0, 0.1).unwrap();
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(AnchorGrid::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(AnchorGrid::new(0.1, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn first_anchor() {
        let g = AnchorGrid::default_grid();
        let a = g.anchor(g.cell(0));
        assert!((a.rho - 0.01).abs() < 1e-15);
        assert!((a.theta - (-PI + PI / 12.0)).abs() < 1e-15);
        assert!((a.phi - (-PI / 2.0 + PI / 12.0)).abs() < 1e-15);
    }

    #[test]
    fn flat_index_layout() {
        let g = AnchorGrid::default_grid();
        for j in 0..g.len() {
            let c = g.cell(j);
            assert_eq!(g.flat_index(c), j);
            assert_eq!(j, (c.j_rho * g.t_theta + c.j_theta) * g.t_phi + c.j_phi);
        }
    }

    #[test]
    fn match_examples() {
        let g = AnchorGrid::default_grid();
        let s = Spherical { rho: 0.01, theta: -PI + PI / 12.0, phi: -PI / 2.0 + PI / 12.0 };
        let (cell, off) = g.locate(s).unwrap();
        assert_eq!(cell.one_based(), (1, 1, 1));
        for v in off.as_array() {
            assert!(v.abs() < 1e-12);
        }
        assert_eq!(g.match_cell(Spherical { rho: 0.25, theta: 0.0, phi: 0.0 }), None);
        let s = Spherical { rho: 0.03, theta: 0.0, phi: 0.0 };
        let cell = g.match_cell(s).unwrap();
        assert_eq!(cell.one_based(), (2, 7, 4));
        assert_eq!(containing_cells(&g, s), vec![cell]);
    }

    #[test]
    fn low_corner_offsets() {
        // dyadic steps keep the arithmetic exact
        let g = AnchorGrid::new(0.25, PI / 4.0, PI / 4.0, 1.0).unwrap();
        let cell = AnchorCell { j_rho: 2, j_theta: 3, j_phi: 1 };
        let [(r, _), (t, _), (p, _)] = g.bounds(cell);
        let off = g.encode_offsets(cell, Spherical { rho: r, theta: t, phi: p });
        assert_eq!(off.rho, -0.5);
        assert!((off.theta + 0.5).abs() < 1e-15);
        assert!((off.phi + 0.5).abs() < 1e-15);
        assert_eq!(g.match_cell(Spherical { rho: r, theta: t, phi: p }), Some(cell));
    }

    #[test]
    fn top_edges_are_closed() {
        let g = AnchorGrid::default_grid();
        let c = g.match_cell(Spherical { rho: 0.2, theta: PI, phi: PI / 2.0 }).unwrap();
        assert_eq!(c.one_based(), (10, 12, 6));
        let c = g.match_cell(Spherical { rho: 1e-9, theta: -PI + 1e-12, phi: -PI / 2.0 }).unwrap();
        assert_eq!(c.one_based(), (1, 1, 1));
    }

    #[test]
    fn random_partition_and_round_trip() {
        let g = AnchorGrid::default_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..10_000 {
            let s = Spherical {
                rho: rng.random_range(1e-9..=0.2),
                theta: rng.random_range(-PI..PI).max(-PI + 1e-15),
                phi: rng.random_range(-PI / 2.0..=PI / 2.0),
            };
            let (cell, off) = g.locate(s).unwrap();
            if i % 10 == 0 {
                assert_eq!(containing_cells(&g, s), vec![cell]);
            }
            for v in off.as_array() {
                assert!((-0.5 - 1e-12..=0.5 + 1e-12).contains(&v));
            }
            let back = g.decode_offsets(cell, off);
            assert!((back.rho - s.rho).abs() < 1e-12);
            assert!((back.theta - s.theta).abs() < 1e-12);
            assert!((back.phi - s.phi).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_quantile() {
        let mut h = Histogram::new(0.1, 1.0);
        for v in [0.05, 0.15, 0.15, 0.95, 5.0] {
            h.add(v);
        }
        assert_eq!(h.total(), 5);
        assert_eq!(*h.counts.last().unwrap(), 1);
        assert!((h.quantile(0.6) - 0.2).abs() < 1e-12);
    }
}
