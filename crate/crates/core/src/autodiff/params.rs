use rand::Rng;

use super::matrix::Matrix;
use super::tape::Tape;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

/// Named learnable tensors with gradient accumulators.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        let grad = Matrix::zeros(value.rows, value.cols);
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        self.params.len() - 1
    }

    /// Adds a tensor drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn push_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.push(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: usize) -> &Param {
        &self.params[id]
    }

    pub fn value(&self, id: usize) -> &Matrix {
        &self.params[id].value
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Matrix {
        &mut self.params[id].value
    }

    pub fn grad(&self, id: usize) -> &Matrix {
        &self.params[id].grad
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.data.len()).sum()
    }

    /// Adds `weight` times the tape's parameter gradients to the accumulators.
    pub fn accumulate(&mut self, tape: &Tape, weight: f64) {
        for (id, g) in tape.param_grads() {
            for (acc, x) in self.params[id].grad.data.iter_mut().zip(&g.data) {
                *acc += weight * x;
            }
        }
    }

    pub fn add_grads(&mut self, other: &ParamSet) {
        for (p, q) in self.params.iter_mut().zip(&other.params) {
            p.grad.add_assign(&q.grad);
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.data.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Matrix>,
    second_moment: Vec<Matrix>,
}

impl Adam {
    pub fn new(params: &ParamSet, learning_rate: f64) -> Adam {
        let zeros = || -> Vec<Matrix> {
            params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows, p.value.cols))
                .collect()
        };
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: zeros(),
            second_moment: zeros(),
        }
    }

    /// One update from the accumulated gradients, which are then zeroed.
    pub fn step(&mut self, params: &mut ParamSet) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for k in 0..p.value.data.len() {
                let g = p.grad.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * g;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * g * g;
                let m_hat = m.data[k] / c1;
                let v_hat = v.data[k] / c2;
                p.value.data[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        params.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Matrix::scalar(v));
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = one_param(1.5);
        let mut adam = Adam::new(&p, 1e-4);
        for _ in 0..10 {
            adam.step(&mut p);
        }
        assert_eq!(p.value(0).data[0], 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient() {
        for g in [3.0, -0.02] {
            let mut p = one_param(0.0);
            let mut adam = Adam::new(&p, 1e-4);
            p.iter_mut().next().unwrap().grad.data[0] = g;
            adam.step(&mut p);
            let delta = p.value(0).data[0];
            assert!((delta + 1e-4 * g.signum()).abs() < 1e-9, "{delta}");
            assert_eq!(p.grad(0).data[0], 0.0);
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_learning_rate() {
        let mut p = one_param(0.0);
        let mut adam = Adam::new(&p, 1e-3);
        let mut prev = 0.0;
        let mut last_step = 0.0;
        for _ in 0..5000 {
            p.iter_mut().next().unwrap().grad.data[0] = 0.7;
            adam.step(&mut p);
            let now = p.value(0).data[0];
            last_step = prev - now;
            prev = now;
        }
        assert!((last_step - 1e-3).abs() < 1e-9, "{last_step}");
    }
}
