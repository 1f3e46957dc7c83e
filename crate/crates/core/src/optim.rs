//! Adam with one learning rate per Gaussian parameter group.

use crate::model::{offsets, Gaussian, PARAM_COUNT};

#[derive(Clone, Debug, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
    pub feature: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            log_scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            color: 2.5e-3,
            feature: 2.5e-3,
        }
    }
}

impl LearningRates {
    /// Learning rate of every slot in the flat parameter layout.
    pub fn per_param(&self) -> [f64; PARAM_COUNT] {
        let mut lr = [0.0; PARAM_COUNT];
        for (k, v) in lr.iter_mut().enumerate() {
            *v = match k {
                k if k < offsets::LOG_SCALE => self.position,
                k if k < offsets::ROTATION => self.log_scale,
                k if k < offsets::OPACITY => self.rotation,
                k if k < offsets::COLOR => self.opacity,
                k if k < offsets::FEATURE => self.color,
                _ => self.feature,
            };
        }
        lr
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    lr: [f64; PARAM_COUNT],
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<[f64; PARAM_COUNT]>,
    v: Vec<[f64; PARAM_COUNT]>,
}

impl Adam {
    pub fn new(n: usize, rates: &LearningRates, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr: rates.per_param(),
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![[0.0; PARAM_COUNT]; n],
            v: vec![[0.0; PARAM_COUNT]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step(&mut self, gaussians: &mut [Gaussian], grads: &[[f64; PARAM_COUNT]]) {
        assert_eq!(gaussians.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((g, grad), (m, v)) in gaussians
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let mut p = g.params();
            for k in 0..PARAM_COUNT {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * grad[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= self.lr[k] * m_hat / (v_hat.sqrt() + self.eps);
            }
            g.set_params(&p);
        }
    }

    /// Rebuilds moment buffers after densification: `sources[i]` names the
    /// old slot whose state the new slot `i` inherits, `None` starts fresh.
    pub fn remap(&mut self, sources: &[Option<usize>]) {
        let fresh = [0.0; PARAM_COUNT];
        self.m = sources.iter().map(|s| s.map_or(fresh, |i| self.m[i])).collect();
        self.v = sources.iter().map(|s| s.map_or(fresh, |i| self.v[i])).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut gs = vec![Gaussian::new([0.0; 3])];
        let rates = LearningRates::default();
        let mut adam = Adam::new(1, &rates, 0.9, 0.999, 1e-15);
        let mut grad = [0.0; PARAM_COUNT];
        grad[0] = 3.0;
        grad[offsets::FEATURE] = -0.01;
        adam.step(&mut gs, &[grad]);
        assert!((gs[0].position[0] + rates.position).abs() < 1e-15);
        assert!((gs[0].feature[0] - rates.feature).abs() < 1e-15);
        assert_eq!(gs[0].position[1], 0.0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut gs = vec![Gaussian::new([1.0, -2.0, 0.5])];
        let rates = LearningRates {
            position: 0.05,
            ..LearningRates::default()
        };
        let mut adam = Adam::new(1, &rates, 0.9, 0.999, 1e-15);
        for _ in 0..500 {
            let mut grad = [0.0; PARAM_COUNT];
            for k in 0..3 {
                grad[k] = 2.0 * gs[0].position[k];
            }
            adam.step(&mut gs, &[grad]);
        }
        assert!(gs[0].position.iter().all(|v| v.abs() < 0.05));
    }

    #[test]
    fn remap_keeps_and_resets_state() {
        let mut adam = Adam::new(2, &LearningRates::default(), 0.9, 0.999, 1e-15);
        let mut gs = vec![Gaussian::new([0.0; 3]), Gaussian::new([1.0; 3])];
        let mut g = [[0.0; PARAM_COUNT]; 2];
        g[1][0] = 1.0;
        adam.step(&mut gs, &g);
        adam.remap(&[Some(1), None]);
        assert_eq!(adam.len(), 2);
        assert!(adam.m[0][0] > 0.0);
        assert_eq!(adam.m[1][0], 0.0);
    }
}
