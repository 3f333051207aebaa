//! Adam with bias correction.

use super::tensor::Tensor;
use super::NeuralError;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

pub struct Adam {
    config: AdamConfig,
    params: Vec<Tensor>,
    slots: Vec<Slot>,
    t: u64,
}

impl Adam {
    pub fn new(params: Vec<Tensor>, config: AdamConfig) -> Adam {
        let slots = params
            .iter()
            .map(|p| Slot { m: vec![0.0; p.len()], v: vec![0.0; p.len()] })
            .collect();
        Adam { config, params, slots, t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update from the gradients currently stored on the parameters.
    /// A parameter untouched by the last backward pass (empty grad) is
    /// skipped. Non-finite gradients abort with the parameter's name.
    pub fn step(&mut self) -> Result<(), NeuralError> {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (p, slot) in self.params.iter().zip(self.slots.iter_mut()) {
            let g = p.grad();
            if g.is_empty() {
                continue;
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NeuralError::NonFinite {
                    name: p.name().unwrap_or("<unnamed>").to_string(),
                });
            }
            let mut new = p.data().clone();
            for i in 0..new.len() {
                slot.m[i] = c.beta1 * slot.m[i] + (1.0 - c.beta1) * g[i];
                slot.v[i] = c.beta2 * slot.v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                new[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
            drop(g);
            p.set_data(&new);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ops;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_moves_by_lr() {
        // with bias correction the first update is lr * sign(g) (eps aside)
        let w = Tensor::param("w", &[2], vec![1.0, -1.0]);
        let mut opt = Adam::new(vec![w.clone()], AdamConfig { lr: 0.1, ..Default::default() });
        let loss = ops::sum(&ops::mul(&w, &w).unwrap()).unwrap();
        loss.backward().unwrap();
        opt.step().unwrap();
        let d = w.data();
        assert_abs_diff_eq!(d[0], 0.9, epsilon = 1e-6);
        assert_abs_diff_eq!(d[1], -0.9, epsilon = 1e-6);
    }

    #[test]
    fn converges_on_quadratic() {
        // minimize (w - 3)^2
        let w = Tensor::param("w", &[1], vec![0.0]);
        let target = Tensor::constant(&[1], vec![3.0]);
        let mut opt = Adam::new(vec![w.clone()], AdamConfig { lr: 0.05, ..Default::default() });
        for _ in 0..2000 {
            let d = ops::sub(&w, &target).unwrap();
            let loss = ops::sum(&ops::mul(&d, &d).unwrap()).unwrap();
            loss.backward().unwrap();
            opt.step().unwrap();
        }
        assert_abs_diff_eq!(w.data()[0], 3.0, epsilon = 1e-3);
    }

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let w = Tensor::param("w", &[2], vec![1.5, -2.5]);
        let mut opt = Adam::new(vec![w.clone()], AdamConfig::default());
        let zero = Tensor::constant(&[2], vec![0.0, 0.0]);
        let loss = ops::sum(&ops::mul(&w, &zero).unwrap()).unwrap();
        loss.backward().unwrap();
        opt.step().unwrap();
        assert_eq!(*w.data(), vec![1.5, -2.5]);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn hundred_steps_on_quadratic_from_five() {
        let w = Tensor::param("w", &[1], vec![5.0]);
        let mut opt = Adam::new(vec![w.clone()], AdamConfig { lr: 0.1, ..Default::default() });
        for _ in 0..100 {
            let loss = ops::sum(&ops::mul(&w, &w).unwrap()).unwrap();
            loss.backward().unwrap();
            opt.step().unwrap();
        }
        assert!(w.data()[0].abs() < 0.5, "got {}", w.data()[0]);
    }

    #[test]
    fn non_finite_grad_names_parameter() {
        let w = Tensor::param("encoder.w1", &[1], vec![1e308]);
        let mut opt = Adam::new(vec![w.clone()], AdamConfig::default());
        let loss = ops::sum(&ops::mul(&w, &w).unwrap()).unwrap();
        loss.backward().unwrap();
        let err = opt.step().unwrap_err();
        assert!(err.to_string().contains("encoder.w1"));
    }

    #[test]
    fn untouched_param_is_skipped() {
        let a = Tensor::param("a", &[1], vec![1.0]);
        let b = Tensor::param("b", &[1], vec![5.0]);
        let mut opt = Adam::new(vec![a.clone(), b.clone()], AdamConfig::default());
        let loss = ops::sum(&a).unwrap();
        loss.backward().unwrap();
        opt.step().unwrap();
        assert_eq!(b.data()[0], 5.0);
        assert!(a.data()[0] < 1.0);
    }
}
