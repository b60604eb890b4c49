use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Tensor2D;

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor2D,
    pub grad: Tensor2D,
    pub adam_m: Tensor2D,
    pub adam_v: Tensor2D,
    pub step_count: u64,
}

impl Param {
    pub fn new(value: Tensor2D) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Tensor2D::zeros(r, c),
            adam_m: Tensor2D::zeros(r, c),
            adam_v: Tensor2D::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Tensor2D::zeros(rows, cols))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Rounds every value to the nearest `f32`, so persisted checkpoints are lossless.
    pub fn snap_to_f32(&mut self) {
        for v in self.value.data_mut() {
            *v = *v as f32 as f64;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. The gradient is left in place.
pub fn adam_step(p: &mut Param, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<()> {
    if !p.grad.is_finite() {
        return Err(Error::numeric("adam_step: non-finite gradient"));
    }
    p.step_count += 1;
    let t = p.step_count as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    let grads = p.grad.data();
    let m = p.adam_m.data_mut();
    for (mi, &g) in m.iter_mut().zip(grads) {
        *mi = beta1 * *mi + (1.0 - beta1) * g;
    }
    let v = p.adam_v.data_mut();
    for (vi, &g) in v.iter_mut().zip(grads) {
        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
    }
    if lr == 0.0 {
        return Ok(());
    }
    for ((x, &mi), &vi) in p
        .value
        .data_mut()
        .iter_mut()
        .zip(p.adam_m.data())
        .zip(p.adam_v.data())
    {
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        *x -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

impl AdamConfig {
    pub fn step(&self, p: &mut Param) -> Result<()> {
        adam_step(p, self.lr, self.beta1, self.beta2, self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_keeps_value() {
        let mut p = Param::new(Tensor2D::from_rows(&[&[1.0, -2.0]]));
        let before = p.value.clone();
        adam_step(&mut p, 0.1, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p.value, before);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps) ≈ lr.
        let mut p = Param::new(Tensor2D::filled(1, 1, 0.0));
        p.grad.fill(1.0);
        adam_step(&mut p, 0.1, 0.9, 0.999, 1e-8).unwrap();
        assert!((p.value.get(0, 0) + 0.1).abs() < 1e-6);
        assert_eq!(p.grad.get(0, 0), 1.0);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = Param::new(Tensor2D::from_rows(&[&[0.3, 0.4]]));
        p.grad = Tensor2D::from_rows(&[&[5.0, -1.0]]);
        let before = p.value.clone();
        for _ in 0..5 {
            adam_step(&mut p, 0.0, 0.9, 0.999, 1e-8).unwrap();
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn deterministic_twins() {
        let mut a = Param::new(Tensor2D::from_rows(&[&[0.1, 0.2, 0.3]]));
        let mut b = a.clone();
        for step in 0..20 {
            let g = Tensor2D::from_rows(&[&[(step as f64).sin(), 0.5, -(step as f64)]]);
            a.grad = g.clone();
            b.grad = g;
            adam_step(&mut a, 0.01, 0.9, 0.999, 1e-8).unwrap();
            adam_step(&mut b, 0.01, 0.9, 0.999, 1e-8).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_grad_rejected() {
        let mut p = Param::zeros(1, 1);
        p.grad.fill(f64::NAN);
        assert!(matches!(adam_step(&mut p, 0.1, 0.9, 0.999, 1e-8), Err(Error::Numeric(_))));
    }
}
