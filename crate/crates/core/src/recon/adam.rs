/// Adaptive-moment optimizer taking ascent steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64, (beta1, beta2): (f64, f64), epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            first: vec![0.0; len],
            second: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second
    }

    /// `params += lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.first[i] = self.beta1 * self.first[i] + (1.0 - self.beta1) * g;
            self.second[i] = self.beta2 * self.second[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first[i] / c1;
            let v_hat = self.second[i] / c2;
            params[i] += self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2, 0.1, (0.5, 0.999), 1e-8);
        let mut p = vec![1.0, 1.0];
        adam.ascend(&mut p, &[3.0, -0.01]);
        assert!((p[0] - 1.1).abs() < 1e-7);
        assert!((p[1] - 0.9).abs() < 1e-5);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(3, 0.1, (0.5, 0.999), 1e-8);
        let mut p = vec![0.3, -2.0, 5.0];
        for _ in 0..10 {
            adam.ascend(&mut p, &[0.0; 3]);
        }
        assert_eq!(p, vec![0.3, -2.0, 5.0]);
    }

    #[test]
    fn maximizes_concave_quadratic() {
        // f(x) = -(x - 3)^2
        let mut adam = Adam::new(1, 0.1, (0.5, 0.999), 1e-8);
        let mut x = vec![0.0];
        for _ in 0..500 {
            let g = -2.0 * (x[0] - 3.0);
            adam.ascend(&mut x, &[g]);
        }
        assert!((x[0] - 3.0).abs() < 1e-2);
    }
}
