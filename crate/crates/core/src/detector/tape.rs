//! A small reverse-mode tape over dense row-major matrices.
//!
//! Nodes are appended in evaluation order, so walking them backwards is a
//! valid topological order for gradient propagation.

use ndarray::{s, Array2, ArrayView2, Axis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Constant,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    StarConv(Box<StarConvCache>),
}

struct StarConvCache {
    features: Var,
    inner: Var,
    outer: Var,
    bias: Var,
    group: usize,
    /// Per-patch Gram matrices of the leaf features.
    grams: Vec<Array2<f64>>,
    /// `B x (beta * C_in)` stacked `sum_k (W_i1 h_k) * h_k`.
    mixed: Array2<f64>,
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients indexed by [`Var`]; `None` for constants and unreachable nodes.
pub struct Gradients(Vec<Option<Array2<f64>>>);

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.0[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.0[v.0].take()
    }
}

/// Star-graph depthwise separable convolution on one patch.
///
/// `features` is `K x C_in`, `inner` stacks the `beta` matrices `W_i1`
/// (`C_in x C_in`) vertically, `outer` concatenates the `beta` matrices
/// `W_i2` (`C_out x C_in`) horizontally. The sum over leaves is folded into
/// the Gram matrix `sum_k h_k h_k^T`, which gives the same result as the
/// per-leaf form at a cost independent of `beta * K`.
pub fn graph_conv(features: ArrayView2<f64>, inner: ArrayView2<f64>, outer: ArrayView2<f64>, bias: &[f64]) -> Vec<f64> {
    let gram = features.t().dot(&features);
    let mixed = mix(&gram, inner);
    let mut out = outer.dot(&ndarray::ArrayView1::from(&mixed));
    for (o, b) in out.iter_mut().zip(bias) {
        *o += b;
    }
    out.to_vec()
}

fn mix(gram: &Array2<f64>, inner: ArrayView2<f64>) -> Vec<f64> {
    let c = gram.nrows();
    let beta = inner.nrows() / c;
    let mut out = vec![0.0; beta * c];
    for i in 0..beta {
        for r in 0..c {
            let w = inner.row(i * c + r);
            let g = gram.row(r);
            out[i * c + r] = w.dot(&g);
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A node that receives a gradient (parameters).
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    /// A node that never receives a gradient (data).
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a + 1 * bias` with `bias` of shape `1 x cols`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let value = self.value(a) + &self.value(bias).row(0);
        self.push(value, Op::AddRow(a, bias))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push(value, Op::Relu(a))
    }

    /// Affine layer `x W + b`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Var {
        let y = self.matmul(x, weight);
        self.add_row(y, bias)
    }

    /// Batched [`graph_conv`]: `features` holds `B` consecutive groups of
    /// `group` rows; the result is `B x C_out`.
    pub fn star_conv(&mut self, features: Var, inner: Var, outer: Var, bias: Var, group: usize) -> Var {
        let h = self.value(features);
        assert!(group > 0 && h.nrows().is_multiple_of(group), "feature rows must split into groups");
        let batch = h.nrows() / group;
        let c = h.ncols();
        let w1 = self.value(inner);
        assert_eq!(w1.ncols(), c);
        let mixed_width = w1.nrows();
        let mut grams = Vec::with_capacity(batch);
        let mut mixed = Array2::zeros((batch, mixed_width));
        for b in 0..batch {
            let hb = h.slice(s![b * group..(b + 1) * group, ..]);
            let gram = hb.t().dot(&hb);
            let m = mix(&gram, w1.view());
            mixed.row_mut(b).assign(&ndarray::ArrayView1::from(&m));
            grams.push(gram);
        }
        let value = mixed.dot(&self.value(outer).t()) + self.value(bias).row(0);
        self.push(value, Op::StarConv(Box::new(StarConvCache { features, inner, outer, bias, group, grams, mixed })))
    }

    /// Propagates `seed` (the gradient of some scalar with respect to `out`)
    /// back through the tape.
    pub fn backward(&self, out: Var, seed: Array2<f64>) -> Gradients {
        assert_eq!(seed.dim(), self.value(out).dim(), "seed shape must match output");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        let accumulate = |grads: &mut Vec<Option<Array2<f64>>>, v: Var, g: Array2<f64>| {
            if matches!(self.nodes[v.0].op, Op::Constant) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => *acc += &g,
                slot @ None => *slot = Some(g),
            }
        };
        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Input | Op::Constant => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, *bias, gb);
                    accumulate(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let mask = &self.nodes[id].value;
                    let mut ga = g;
                    ga.zip_mut_with(mask, |d, &y| {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::StarConv(cache) => {
                    let (gf, gi, go, gb) = self.star_conv_backward(cache, &g);
                    accumulate(&mut grads, cache.bias, gb);
                    accumulate(&mut grads, cache.outer, go);
                    accumulate(&mut grads, cache.inner, gi);
                    accumulate(&mut grads, cache.features, gf);
                }
            }
        }
        Gradients(grads)
    }

    fn star_conv_backward(
        &self,
        cache: &StarConvCache,
        g: &Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let h = self.value(cache.features);
        let w1 = self.value(cache.inner);
        let w2 = self.value(cache.outer);
        let c = h.ncols();
        let beta = w1.nrows() / c;
        let group = cache.group;
        let gbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
        let gouter = g.t().dot(&cache.mixed);
        let gmixed = g.dot(w2);
        let mut ginner = Array2::<f64>::zeros(w1.raw_dim());
        let mut gfeat = Array2::<f64>::zeros(h.raw_dim());
        let mut m = Array2::<f64>::zeros((c, c));
        for (b, gram) in cache.grams.iter().enumerate() {
            let gm = gmixed.row(b);
            m.fill(0.0);
            for i in 0..beta {
                for r in 0..c {
                    let coef = gm[i * c + r];
                    if coef == 0.0 {
                        continue;
                    }
                    let row = i * c + r;
                    ginner.row_mut(row).scaled_add(coef, &gram.row(r));
                    m.row_mut(r).scaled_add(coef, &w1.row(row));
                }
            }
            let sym = &m + &m.t();
            let hb = h.slice(s![b * group..(b + 1) * group, ..]);
            gfeat.slice_mut(s![b * group..(b + 1) * group, ..]).assign(&hb.dot(&sym));
        }
        (gfeat, ginner, gouter, gbias)
    }
}
