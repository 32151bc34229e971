/// Adam over a flat parameter vector with a per-parameter learning rate.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn with_defaults(n: usize) -> Self {
        Self::new(n, 0.9, 0.999, 1e-8)
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One bias-corrected update; `lr(i)` gives the learning rate of parameter `i`.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: impl Fn(usize) -> f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr(i) * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_has_magnitude_lr() {
        for g in [3.0, -0.02, 1e4] {
            let mut adam = Adam::with_defaults(1);
            let mut p = [1.0];
            adam.update(&mut p, &[g], |_| 0.01);
            let step = (1.0 - p[0]).abs();
            let expect = 0.01 * g.abs() / (g.abs() + 1e-8);
            assert!((step - expect).abs() < 1e-15);
            assert!((step - 0.01).abs() < 1e-8);
            assert_eq!((1.0 - p[0]).signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_does_not_move() {
        let mut adam = Adam::with_defaults(2);
        let mut p = [0.5, -0.5];
        adam.update(&mut p, &[0.0, 0.0], |_| 1.0);
        assert_eq!(p, [0.5, -0.5]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut adam = Adam::with_defaults(2);
        let mut p = [3.0, -2.0];
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
            adam.update(&mut p, &g, |i| if i == 0 { 0.05 } else { 0.02 });
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
        assert!((p[1] + 0.5).abs() < 1e-3);
    }
}
