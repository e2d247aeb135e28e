use ndarray::{Array2, Zip};

/// Learning rate multiplied by `factor` every `every` iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecay {
    pub base: f64,
    pub factor: f64,
    pub every: u64,
}

impl StepDecay {
    pub fn rate(&self, iteration: u64) -> f64 {
        self.base * self.factor.powi((iteration / self.every) as i32)
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (first, second) = shapes.into_iter().map(|s| (Array2::zeros(s), Array2::zeros(s))).unzip();
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8, steps: 0, first, second }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>], lr: f64) {
        assert_eq!(params.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.steps += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.steps as i32);
        let c2 = 1.0 - b2.powi(self.steps as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(&mut self.second)) {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves() {
        let s = StepDecay { base: 1e-3, factor: 0.5, every: 80_000 };
        assert_eq!(s.rate(0), 1e-3);
        assert_eq!(s.rate(79_999), 1e-3);
        assert_eq!(s.rate(80_000), 5e-4);
        assert_eq!(s.rate(160_000), 2.5e-4);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![Array2::from_elem((1, 2), 1.0)];
        let g = vec![Array2::from_shape_vec((1, 2), vec![3.0, -0.5]).unwrap()];
        let mut adam = Adam::new([(1, 2)]);
        adam.step(&mut p, &g, 0.1);
        assert!((p[0][[0, 0]] - 0.9).abs() < 1e-7);
        assert!((p[0][[0, 1]] - 1.1).abs() < 1e-7);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![Array2::from_elem((1, 1), 5.0)];
        let mut adam = Adam::new([(1, 1)]);
        for _ in 0..2000 {
            let g = vec![p[0].mapv(|x| 2.0 * (x - 1.5))];
            adam.step(&mut p, &g, 0.05);
        }
        assert!((p[0][[0, 0]] - 1.5).abs() < 1e-3);
    }
}
