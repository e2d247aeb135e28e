use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{sigmoid, LossReport};
use super::network::{DetectionTensor, Detector};
use super::optim::{Adam, StepDecay};
use crate::anchors::OffsetCoords;
use crate::dataset::TrainingSample;
use crate::duality::recover_local;
use crate::error::{Error, Result};
use crate::geometry::{from_spherical, Patch, Triangle};

/// Draws `size` distinct sample indices (all of them if `size >= n`),
/// returned in ascending order.
pub fn sample_batch(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut picked = index::sample(rng, n, size).into_vec();
    picked.sort_unstable();
    picked
}

pub struct Trainer {
    detector: Detector,
    adam: Adam,
    schedule: StepDecay,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl Trainer {
    pub fn new(detector: Detector, seed: u64) -> Self {
        let c = detector.config();
        let schedule = StepDecay { base: c.learning_rate, factor: c.decay_factor, every: c.decay_every };
        let adam = Adam::new(detector.parameters().tensors().iter().map(|t| t.dim()));
        Self { detector, adam, schedule, rng: ChaCha8Rng::seed_from_u64(seed), iteration: 0 }
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn into_detector(self) -> Detector {
        self.detector
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// One Adam update on `L1 + lambda * L2` over `batch`.
    pub fn train_step(&mut self, batch: &[&TrainingSample]) -> Result<LossReport> {
        let (report, grads) = self.detector.loss_and_gradients(batch)?;
        if !report.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                detail: format!("classification {} localization {}", report.classification, report.localization),
            });
        }
        if let Some((name, _)) =
            self.detector.parameters().names().iter().zip(&grads).find(|(_, g)| g.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                detail: format!("gradient of {name} is not finite"),
            });
        }
        let lr = self.schedule.rate(self.iteration);
        self.adam.step(self.detector.parameters_mut().tensors_mut(), &grads, lr);
        self.detector.parameters().check_finite()?;
        self.iteration += 1;
        Ok(report)
    }

    /// Samples a batch from `samples` and trains on it; batches without any
    /// positive cell are redrawn.
    pub fn train_random_batch(&mut self, samples: &[TrainingSample], batch_size: usize) -> Result<LossReport> {
        if !samples.iter().any(|s| s.positive_count() > 0) {
            return Err(Error::NoPositives);
        }
        loop {
            let idx = sample_batch(samples.len(), batch_size, &mut self.rng);
            let batch: Vec<&TrainingSample> = idx.iter().map(|&i| &samples[i]).collect();
            match self.train_step(&batch) {
                Err(Error::NoPositives) => continue,
                other => return other,
            }
        }
    }
}

/// Faces recovered from one patch's detections above `threshold`, evaluated
/// in the patch's normalized frame.
pub fn predict_local_triangles(
    detector: &Detector,
    patch: &Patch,
    output: &DetectionTensor,
    row: usize,
    threshold: f64,
) -> BTreeSet<Triangle> {
    let grid = detector.grid();
    let mut out = BTreeSet::new();
    for anchor in 0..output.anchors {
        for slot in 0..output.slots {
            if sigmoid(output.logit(row, anchor, slot)) < threshold {
                continue;
            }
            let s = grid.decode_offsets(grid.cell(anchor), OffsetCoords::from_array(output.offsets(row, anchor, slot)));
            let center = from_spherical(s);
            if let Some((u, v)) = recover_local(&patch.normalized_neighbors, center) {
                let tri = Triangle::new(patch.center_index, patch.neighbor_indices[u], patch.neighbor_indices[v]);
                out.extend(tri);
            }
        }
    }
    out
}

/// Per-patch triangle accuracy and intersection-over-union, averaged over
/// patches.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalReport {
    /// Mean of `|P & G| / |G|` over patches with ground truth.
    pub m_acc: f64,
    /// Mean of `|P & G| / |P | G|`; a patch with both sets empty scores 1.
    pub m_iou: f64,
    pub patches: usize,
}

pub fn evaluate(detector: &Detector, samples: &[TrainingSample], threshold: f64, batch_size: usize) -> EvalReport {
    let mut acc = (0.0, 0usize);
    let mut iou = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let patches: Vec<&Patch> = chunk.iter().map(|s| &s.patch).collect();
        let out = detector.forward(&patches);
        for (row, s) in chunk.iter().enumerate() {
            let pred = predict_local_triangles(detector, &s.patch, &out, row, threshold);
            let gt: BTreeSet<Triangle> = s.gt_triangles.iter().copied().collect();
            let inter = pred.intersection(&gt).count();
            let union = pred.union(&gt).count();
            iou += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
            if !gt.is_empty() {
                acc.0 += inter as f64 / gt.len() as f64;
                acc.1 += 1;
            }
        }
    }
    let n = samples.len();
    EvalReport {
        m_acc: if acc.1 == 0 { 0.0 } else { acc.0 / acc.1 as f64 },
        m_iou: if n == 0 { 0.0 } else { iou / n as f64 },
        patches: n,
    }
}
