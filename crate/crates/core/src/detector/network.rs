use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoding::{feature_width, patch_features};
use super::loss::{detection_loss, LossReport, Targets};
use super::tape::{Gradients, Tape, Var};
use super::DetectorConfig;
use crate::anchors::AnchorGrid;
use crate::dataset::TrainingSample;
use crate::error::{Error, Result};
use crate::geometry::Patch;

/// Prior probability of the confidence logits at initialization.
const PRIOR: f64 = 0.01;

/// Named dense tensors in a fixed canonical order. Vectors are stored as
/// `1 x n` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    names: Vec<String>,
    tensors: Vec<Array2<f64>>,
}

impl ParameterStore {
    /// Names and shapes implied by `config`.
    pub fn layout(config: &DetectorConfig) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        let mut width = feature_width(config.pe_levels);
        for (i, &w) in config.point_widths.iter().enumerate() {
            out.push((format!("point.{i}.weight"), (width, w)));
            out.push((format!("point.{i}.bias"), (1, w)));
            width = w;
        }
        let beta = config.depth_multiplier;
        out.push(("conv.inner".to_string(), (beta * width, width)));
        out.push(("conv.outer".to_string(), (config.conv_width, beta * width)));
        out.push(("conv.bias".to_string(), (1, config.conv_width)));
        width = config.conv_width;
        for (i, &w) in config.head_widths.iter().enumerate() {
            out.push((format!("head.{i}.weight"), (width, w)));
            out.push((format!("head.{i}.bias"), (1, w)));
            width = w;
        }
        out.push(("out.weight".to_string(), (width, config.output_width())));
        out.push(("out.bias".to_string(), (1, config.output_width())));
        out
    }

    /// Uniform fan-in scaled initialization; confidence logits start at the
    /// log-odds of a small prior.
    pub fn initialize(config: &DetectorConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, (r, c)) in Self::layout(config) {
            let t = if name.ends_with("bias") {
                if name == "out.bias" {
                    let logit = (PRIOR / (1.0 - PRIOR)).ln();
                    Array2::from_shape_fn((r, c), |(_, j)| if j % 4 == 0 { logit } else { 0.0 })
                } else {
                    Array2::zeros((r, c))
                }
            } else {
                let bound = match name.as_str() {
                    // quadratic in its input, so start small
                    "conv.inner" => 1.0 / c as f64,
                    "conv.outer" => (3.0 / c as f64).sqrt(),
                    "out.weight" => (1.0 / r as f64).sqrt(),
                    _ => (6.0 / r as f64).sqrt(),
                };
                Array2::from_shape_fn((r, c), |_| rng.random_range(-bound..bound))
            };
            names.push(name);
            tensors.push(t);
        }
        Self { names, tensors }
    }

    /// Builds a store from named tensors, checking names and shapes against
    /// `config`.
    pub fn from_tensors(config: &DetectorConfig, named: Vec<(String, Array2<f64>)>) -> Result<Self> {
        let layout = Self::layout(config);
        if layout.len() != named.len() {
            return Err(Error::FormatMismatch(format!("expected {} tensors, found {}", layout.len(), named.len())));
        }
        for ((name, shape), (got_name, t)) in layout.iter().zip(&named) {
            if name != got_name || *shape != t.dim() {
                return Err(Error::FormatMismatch(format!(
                    "tensor {got_name} {:?} does not match expected {name} {shape:?}",
                    t.dim()
                )));
            }
        }
        let (names, tensors): (Vec<_>, Vec<_>) = named.into_iter().unzip();
        let store = Self { names, tensors };
        store.check_finite()?;
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Array2<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Array2::len).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, t) in self.iter() {
            if let Some(i) = t.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteParameter(format!("{name}[{i}]")));
            }
        }
        Ok(())
    }
}

/// Raw detector output: one row of `t * s * 4` values per patch, laid out
/// as `[anchor][slot][logit, g_rho, g_theta, g_phi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionTensor {
    pub values: Array2<f64>,
    pub anchors: usize,
    pub slots: usize,
}

impl DetectionTensor {
    pub fn batch_size(&self) -> usize {
        self.values.nrows()
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.values.nrows(), self.anchors, self.slots, 4)
    }

    pub fn logit(&self, patch: usize, anchor: usize, slot: usize) -> f64 {
        self.values[[patch, (anchor * self.slots + slot) * 4]]
    }

    pub fn offsets(&self, patch: usize, anchor: usize, slot: usize) -> [f64; 3] {
        let base = (anchor * self.slots + slot) * 4;
        std::array::from_fn(|d| self.values[[patch, base + 1 + d]])
    }
}

#[derive(Clone, Debug)]
pub struct Detector {
    config: DetectorConfig,
    grid: AnchorGrid,
    params: ParameterStore,
}

struct Graph {
    tape: Tape,
    params: Vec<Var>,
    output: Var,
}

impl Detector {
    pub fn new(config: DetectorConfig, grid: AnchorGrid, seed: u64) -> Result<Self> {
        Self::check(&config, &grid)?;
        let params = ParameterStore::initialize(&config, seed);
        Ok(Self { config, grid, params })
    }

    pub fn with_parameters(config: DetectorConfig, grid: AnchorGrid, params: ParameterStore) -> Result<Self> {
        Self::check(&config, &grid)?;
        let params = ParameterStore::from_tensors(&config, params.names.into_iter().zip(params.tensors).collect())?;
        Ok(Self { config, grid, params })
    }

    fn check(config: &DetectorConfig, grid: &AnchorGrid) -> Result<()> {
        config.validate()?;
        if config.anchors != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "detector has {} anchors but the grid has {}",
                config.anchors,
                grid.len()
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn grid(&self) -> &AnchorGrid {
        &self.grid
    }

    pub fn parameters(&self) -> &ParameterStore {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    fn build(&self, features: Array2<f64>, k: usize, constant_params: bool) -> Graph {
        let mut tape = Tape::new();
        let params: Vec<Var> = self
            .params
            .tensors
            .iter()
            .map(|t| if constant_params { tape.constant(t.clone()) } else { tape.input(t.clone()) })
            .collect();
        let mut next = params.iter().copied();
        let mut take = || next.next().expect("layout matches layers");
        let mut h = tape.constant(features);
        for _ in &self.config.point_widths {
            let (w, b) = (take(), take());
            let y = tape.linear(h, w, b);
            h = tape.relu(y);
        }
        let (inner, outer, bias) = (take(), take(), take());
        let pooled = tape.star_conv(h, inner, outer, bias, k);
        let mut h = tape.relu(pooled);
        for _ in &self.config.head_widths {
            let (w, b) = (take(), take());
            let y = tape.linear(h, w, b);
            h = tape.relu(y);
        }
        let (w, b) = (take(), take());
        let output = tape.linear(h, w, b);
        Graph { tape, params, output }
    }

    /// Runs the network on pre-encoded features: `features` holds one block
    /// of `k` rows per patch.
    pub fn forward_features(&self, features: Array2<f64>, k: usize) -> DetectionTensor {
        let graph = self.build(features, k, true);
        DetectionTensor {
            values: graph.tape.value(graph.output).clone(),
            anchors: self.config.anchors,
            slots: self.config.slots,
        }
    }

    /// Runs the network on a batch of patches sharing the same `K`.
    pub fn forward(&self, patches: &[&Patch]) -> DetectionTensor {
        let k = patches.first().map_or(1, |p| p.k());
        assert!(patches.iter().all(|p| p.k() == k), "patches in a batch must share K");
        let features = patch_features(patches.iter().copied(), self.config.pe_levels);
        if patches.is_empty() {
            return DetectionTensor {
                values: Array2::zeros((0, self.config.output_width())),
                anchors: self.config.anchors,
                slots: self.config.slots,
            };
        }
        self.forward_features(features, k)
    }

    /// Loss and parameter gradients on pre-encoded features.
    pub fn loss_and_gradients_features(
        &self,
        features: Array2<f64>,
        k: usize,
        targets: &Targets,
    ) -> Result<(LossReport, Vec<Array2<f64>>)> {
        let graph = self.build(features, k, false);
        let out = graph.tape.value(graph.output);
        let (report, seed) = detection_loss(out, targets, &self.config)?;
        let mut grads: Gradients = graph.tape.backward(graph.output, seed);
        let per_param = graph
            .params
            .iter()
            .zip(&self.params.tensors)
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Array2::zeros(t.raw_dim())))
            .collect();
        Ok((report, per_param))
    }

    /// Loss and parameter gradients on labelled samples sharing the same `K`.
    pub fn loss_and_gradients(&self, samples: &[&TrainingSample]) -> Result<(LossReport, Vec<Array2<f64>>)> {
        let k = samples.first().map_or(1, |s| s.patch.k());
        if samples.iter().any(|s| s.patch.k() != k) {
            return Err(Error::InvalidParameter("samples in a batch must share K".into()));
        }
        let features = patch_features(samples.iter().map(|s| &s.patch), self.config.pe_levels);
        let targets = Targets::from_samples(samples, &self.grid);
        self.loss_and_gradients_features(features, k, &targets)
    }

    /// Loss only, without building gradients.
    pub fn loss_features(&self, features: Array2<f64>, k: usize, targets: &Targets) -> Result<LossReport> {
        let out = self.forward_features(features, k);
        detection_loss(&out.values, targets, &self.config).map(|(r, _)| r)
    }
}
