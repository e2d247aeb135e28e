use std::f64::consts::PI;

use ndarray::Array2;

use crate::geometry::{Patch, Point3};

/// Raw xyz followed by `[sin(2^l pi x), cos(2^l pi x)]` for `l = 0..L` per
/// coordinate.
pub fn positional_encode(x: Point3, levels: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_width(levels));
    out.extend_from_slice(&x);
    for c in x {
        let mut freq = PI;
        for _ in 0..levels {
            out.push((freq * c).sin());
            out.push((freq * c).cos());
            freq *= 2.0;
        }
    }
    out
}

pub fn feature_width(levels: usize) -> usize {
    3 + 6 * levels
}

/// Encodes the normalized neighbours of each patch into consecutive row
/// blocks of one `(sum K) x (3 + 6L)` matrix. All patches must share `K`.
pub fn patch_features<'a>(patches: impl IntoIterator<Item = &'a Patch>, levels: usize) -> Array2<f64> {
    let mut data = Vec::new();
    let mut rows = 0;
    for p in patches {
        for &q in &p.normalized_neighbors {
            data.extend(positional_encode(q, levels));
            rows += 1;
        }
    }
    Array2::from_shape_vec((rows, feature_width(levels)), data).expect("rows match data")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_encoding() {
        let f = positional_encode([0.0; 3], 4);
        assert_eq!(f.len(), 27);
        assert!(f[..3].iter().all(|&v| v == 0.0));
        for c in 0..3 {
            for l in 0..4 {
                assert_eq!(f[3 + c * 8 + 2 * l], 0.0);
                assert_eq!(f[3 + c * 8 + 2 * l + 1], 1.0);
            }
        }
    }

    #[test]
    fn first_slot_closed_form() {
        let f = positional_encode([0.5, 0.0, 0.0], 1);
        assert_eq!(f.len(), 9);
        assert!((f[3] - 1.0).abs() < 1e-15);
        assert!(f[4].abs() < 1e-15);
    }

    #[test]
    fn width_for_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for levels in 1..20 {
            let x = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            assert_eq!(positional_encode(x, levels).len(), 3 + 6 * levels);
        }
    }
}
