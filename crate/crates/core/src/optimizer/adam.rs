use nalgebra::DMatrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment accumulators for one matrix parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    first_moment: DMatrix<f64>,
    second_moment: DMatrix<f64>,
    steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            first_moment: DMatrix::zeros(rows, cols),
            second_moment: DMatrix::zeros(rows, cols),
            steps: 0,
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Per-coordinate effective step `lr / (sqrt(v_hat) + eps)` of the most
    /// recent update, written into `out`.
    pub fn effective_steps(&self, lr: f64, out: &mut DMatrix<f64>) {
        assert_eq!(out.shape(), self.shape(), "output shape mismatch");
        let bias2 = 1.0 - self.beta2.powi(self.steps.max(1) as i32);
        for (o, &v) in out.iter_mut().zip(self.second_moment.iter()) {
            *o = lr / ((v / bias2).sqrt() + self.epsilon);
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.first_moment.shape()
    }

    /// One bias-corrected Adam update of `param` in place.
    ///
    /// Panics if `param`, `grad` and the accumulators disagree in shape.
    pub fn step(&mut self, param: &mut DMatrix<f64>, grad: &DMatrix<f64>, lr: f64) {
        assert_eq!(param.shape(), self.shape(), "parameter shape changed");
        assert_eq!(grad.shape(), self.shape(), "gradient shape mismatch");
        self.steps += 1;
        let t = self.steps as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (((p, &g), m), v) in param
            .iter_mut()
            .zip(grad.iter())
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
