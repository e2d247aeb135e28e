use ndarray::Array2;

use super::DetectorConfig;
use crate::anchors::AnchorGrid;
use crate::dataset::TrainingSample;
use crate::error::{Error, Result};

const LOGIT_CLIP: f64 = 30.0;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Smooth-L1 with the transition at 1; returns value and derivative.
pub fn smooth_l1(x: f64) -> (f64, f64) {
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub classification: f64,
    pub localization: f64,
    /// Positive confidence slots.
    pub positives: usize,
    /// Negatives kept by hard negative mining.
    pub negatives: usize,
    pub positive_cells: usize,
}

/// Binary cross-entropy over positives plus the `ratio * N_p` negatives
/// with the largest logits (ties to the lower index). Returns the loss and
/// its gradient with respect to every logit.
pub fn bce_loss(logits: &[f64], positive: &[bool], ratio: f64) -> Result<(f64, Vec<f64>)> {
    bce_with_counts(logits, positive, ratio).map(|(l, g, _, _)| (l, g))
}

fn bce_with_counts(logits: &[f64], positive: &[bool], ratio: f64) -> Result<(f64, Vec<f64>, usize, usize)> {
    assert_eq!(logits.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut negatives: Vec<usize> = (0..logits.len()).filter(|&i| !positive[i]).collect();
    let n_neg = ((ratio * n_pos as f64).round() as usize).min(negatives.len());
    negatives.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    negatives.truncate(n_neg);

    let mut grad = vec![0.0; logits.len()];
    let clip = |z: f64| (z.clamp(-LOGIT_CLIP, LOGIT_CLIP), z.abs() < LOGIT_CLIP);
    let mut pos_sum = 0.0;
    for (i, _) in positive.iter().enumerate().filter(|(_, &p)| p) {
        let (z, live) = clip(logits[i]);
        pos_sum += softplus(-z);
        if live {
            grad[i] = (sigmoid(z) - 1.0) / n_pos as f64;
        }
    }
    let mut loss = pos_sum / n_pos as f64;
    if n_neg > 0 {
        let mut neg_sum = 0.0;
        for &i in &negatives {
            let (z, live) = clip(logits[i]);
            neg_sum += softplus(z);
            if live {
                grad[i] = sigmoid(z) / n_neg as f64;
            }
        }
        loss += neg_sum / n_neg as f64;
    }
    Ok((loss, grad, n_pos, n_neg))
}

/// Slot-to-ground-truth assignments for one cell: injective maps when
/// `tau >= slots`, otherwise maps that cover every ground truth.
fn assignments(tau: usize, slots: usize) -> Vec<Vec<usize>> {
    let total = tau.pow(slots as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut a = Vec::with_capacity(slots);
        let mut c = code;
        for _ in 0..slots {
            a.push(c % tau);
            c /= tau;
        }
        a.reverse();
        let mut seen = vec![false; tau];
        let mut distinct = 0;
        for &g in &a {
            if !seen[g] {
                seen[g] = true;
                distinct += 1;
            }
        }
        if distinct == tau.min(slots) {
            out.push(a);
        }
    }
    out
}

fn pair_cost(pred: &[f64; 3], gt: &[f64; 3]) -> f64 {
    pred.iter().zip(gt).map(|(p, g)| smooth_l1(p - g).0).sum()
}

/// Localization loss averaged over positive cells: each cell takes the
/// cheapest assignment of its predicted slots to its ground-truth offsets.
/// Returns the loss and the gradient for every predicted offset.
pub fn loc_loss(predictions: &[Vec<[f64; 3]>], targets: &[Vec<[f64; 3]>]) -> (f64, Vec<Vec<[f64; 3]>>) {
    assert_eq!(predictions.len(), targets.len());
    let cells = predictions.len();
    let mut grads: Vec<Vec<[f64; 3]>> = predictions.iter().map(|p| vec![[0.0; 3]; p.len()]).collect();
    if cells == 0 {
        return (0.0, grads);
    }
    let mut total = 0.0;
    for (c, (pred, gt)) in predictions.iter().zip(targets).enumerate() {
        assert!(!gt.is_empty(), "positive cell without ground truth");
        let mut best: Option<(f64, Vec<usize>)> = None;
        for a in assignments(gt.len(), pred.len()) {
            let cost: f64 = a.iter().enumerate().map(|(slot, &g)| pair_cost(&pred[slot], &gt[g])).sum();
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, a));
            }
        }
        let (cost, a) = best.expect("at least one assignment");
        total += cost;
        for (slot, &g) in a.iter().enumerate() {
            for d in 0..3 {
                grads[c][slot][d] = smooth_l1(pred[slot][d] - gt[g][d]).1 / cells as f64;
            }
        }
    }
    (total / cells as f64, grads)
}

/// Positive anchors and ground-truth offsets for each patch of a batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Targets {
    pub patches: Vec<Vec<(usize, Vec<[f64; 3]>)>>,
}

impl Targets {
    pub fn from_samples(samples: &[&TrainingSample], grid: &AnchorGrid) -> Self {
        let patches = samples
            .iter()
            .map(|s| {
                s.positive_cells
                    .iter()
                    .map(|c| (grid.flat_index(c.cell), c.offsets.iter().map(|o| o.as_array()).collect()))
                    .collect()
            })
            .collect();
        Self { patches }
    }
}

/// `L1 + lambda * L2` on a raw output matrix, with its gradient.
pub(crate) fn detection_loss(
    out: &Array2<f64>,
    targets: &Targets,
    config: &DetectorConfig,
) -> Result<(LossReport, Array2<f64>)> {
    let (batch, width) = out.dim();
    let s = config.slots;
    assert_eq!(width, config.output_width());
    assert_eq!(batch, targets.patches.len(), "one target list per patch");
    let per_patch = config.anchors * s;
    let mut logits = Vec::with_capacity(batch * per_patch);
    for b in 0..batch {
        logits.extend((0..per_patch).map(|j| out[[b, j * 4]]));
    }
    let mut positive = vec![false; logits.len()];
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut where_ = Vec::new();
    for (b, cells) in targets.patches.iter().enumerate() {
        for (anchor, offsets) in cells {
            let pred: Vec<[f64; 3]> = (0..s)
                .map(|slot| {
                    let base = (anchor * s + slot) * 4;
                    positive[b * per_patch + anchor * s + slot] = true;
                    [out[[b, base + 1]], out[[b, base + 2]], out[[b, base + 3]]]
                })
                .collect();
            preds.push(pred);
            gts.push(offsets.clone());
            where_.push((b, *anchor));
        }
    }
    let (l1, dz, n_pos, n_neg) = bce_with_counts(&logits, &positive, config.neg_ratio)?;
    let (l2, doff) = loc_loss(&preds, &gts);
    let mut grad = Array2::zeros((batch, width));
    for (i, g) in dz.iter().enumerate() {
        grad[[i / per_patch, (i % per_patch) * 4]] = *g;
    }
    if config.lambda != 0.0 {
        for ((b, anchor), g) in where_.iter().zip(&doff) {
            for (slot, gs) in g.iter().enumerate() {
                let base = (anchor * s + slot) * 4;
                for d in 0..3 {
                    grad[[*b, base + 1 + d]] = config.lambda * gs[d];
                }
            }
        }
    }
    let report = LossReport {
        total: l1 + config.lambda * l2,
        classification: l1,
        localization: l2,
        positives: n_pos,
        negatives: n_neg,
        positive_cells: preds.len(),
    };
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_two_ln_two() {
        let (l, _) = bce_loss(&[0.0, 0.0], &[true, false], 1.0).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_predictions_vanish() {
        let (l, _) = bce_loss(&[40.0, -40.0, -50.0], &[true, false, false], 20.0).unwrap();
        assert!((0.0..1e-12).contains(&l));
    }

    #[test]
    fn no_positives_is_an_error() {
        assert!(matches!(bce_loss(&[0.0, 1.0], &[false, false], 1.0), Err(Error::NoPositives)));
    }

    #[test]
    fn hard_negatives_are_the_largest_logits() {
        let logits = [0.0, 3.0, -1.0, 3.0, 2.0];
        let pos = [true, false, false, false, false];
        let (_, g) = bce_loss(&logits, &pos, 2.0).unwrap();
        // ties at 3.0: both kept, 2.0 and -1.0 ignored
        assert!(g[1] > 0.0 && g[3] > 0.0);
        assert_eq!((g[2], g[4]), (0.0, 0.0));
        let (_, g) = bce_loss(&logits, &pos, 1.0).unwrap();
        assert!(g[1] > 0.0 && g[3] == 0.0);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let n = rng.random_range(5..30);
            let z: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let mut pos: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            pos[0] = true;
            let ratio = rng.random_range(0.5..3.0);
            let (_, g) = bce_loss(&z, &pos, ratio).unwrap();
            for i in 0..n {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += 1e-5;
                zm[i] -= 1e-5;
                let fd = (bce_loss(&zp, &pos, ratio).unwrap().0 - bce_loss(&zm, &pos, ratio).unwrap().0) / 2e-5;
                assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn smooth_l1_pieces() {
        assert_eq!(smooth_l1(0.5), (0.125, 0.5));
        assert_eq!(smooth_l1(-2.0), (1.5, -1.0));
        assert_eq!(smooth_l1(1.0), (0.5, 1.0));
    }

    #[test]
    fn assignment_sets() {
        assert_eq!(assignments(1, 2), vec![vec![0, 0]]);
        assert_eq!(assignments(2, 2), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(assignments(3, 2).len(), 6);
        assert_eq!(assignments(4, 2).len(), 12);
        assert_eq!(assignments(2, 1), vec![vec![0], vec![1]]);
    }

    #[test]
    fn exact_predictions_cost_nothing() {
        let gt = vec![vec![[0.1, -0.2, 0.3], [0.0, 0.4, -0.1]]];
        let (l, g) = loc_loss(&gt, &gt);
        assert_eq!(l, 0.0);
        assert!(g[0].iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn crossed_assignment_is_found() {
        let (l, _) = loc_loss(&[vec![[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]], &[vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]]);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn single_truth_is_shared_by_both_slots() {
        let (l, _) = loc_loss(&[vec![[0.5, 0.0, 0.0], [0.0, 0.0, 2.0]]], &[vec![[0.0; 3]]]);
        assert!((l - (0.125 + 1.5)).abs() < 1e-15);
    }

    fn offsets(n: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), n)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn losses_are_non_negative(
            logits in prop::collection::vec(-40.0f64..40.0, 2..30),
            pred in offsets(2),
            gt in (1usize..5).prop_flat_map(offsets),
        ) {
            let mut positive = vec![false; logits.len()];
            positive[0] = true;
            prop_assert!(bce_loss(&logits, &positive, 20.0).unwrap().0 >= 0.0);
            prop_assert!(loc_loss(&[pred], &[gt]).0 >= 0.0);
        }

        #[test]
        fn moving_a_matched_slot_closer_never_hurts(
            pred in offsets(2),
            gt in (1usize..5).prop_flat_map(offsets),
            slot in 0usize..2,
            t in 0.0f64..1.0,
        ) {
            let (before, grads) = loc_loss(std::slice::from_ref(&pred), std::slice::from_ref(&gt));
            // recover the matched target from the gradient-free assignment
            let matched = assignments(gt.len(), 2)
                .into_iter()
                .min_by(|a, b| {
                    let cost = |a: &Vec<usize>| a.iter().enumerate().map(|(s, &g)| pair_cost(&pred[s], &gt[g])).sum::<f64>();
                    cost(a).total_cmp(&cost(b))
                })
                .unwrap();
            let target = gt[matched[slot]];
            let mut moved = pred.clone();
            for d in 0..3 {
                moved[slot][d] += t * (target[d] - pred[slot][d]);
            }
            let (after, _) = loc_loss(&[moved], &[gt]);
            prop_assert!(after <= before + 1e-12, "{before} -> {after}");
            prop_assert_eq!(grads[0].len(), 2);
        }
    }
}
