use serde::{Deserialize, Serialize};

use super::{NeuralError, Parameter, Result};

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
            lr: 1e-5,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(NeuralError::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(NeuralError::Config(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(self.eps > 0.0) {
            return Err(NeuralError::Config(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// Bias-corrected Adam update at step `t` (1-based); zeroes gradients.
///
/// All gradients are checked before any parameter is touched, so a
/// non-finite gradient leaves the model unchanged.
pub fn adam_step(params: &mut [&mut Parameter], cfg: &AdamConfig, t: u64) -> Result<()> {
    cfg.validate()?;
    if t == 0 {
        return Err(NeuralError::Config("Adam step index must be >= 1".into()));
    }
    for p in params.iter() {
        if !p.grad.is_finite() {
            return Err(NeuralError::NonFiniteGradient(p.name.clone()));
        }
    }
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
    for p in params.iter_mut() {
        let Parameter {
            value, grad, m, v, ..
        } = &mut **p;
        for (((w, g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data_mut().iter_mut())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * *g;
            *v = b2 * *v + (1.0 - b2) * *g * *g;
            let m_hat = *m as f64 / bc1;
            let v_hat = *v as f64 / bc2;
            *w -= (cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)) as f32;
            *g = 0.0;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    fn scalar(v: f32, g: f32) -> Parameter {
        let mut p = Parameter::new("p", Tensor::from_vec([1, 1, 1, 1, 1], vec![v]).unwrap());
        p.grad.data_mut()[0] = g;
        p
    }

    #[test]
    fn first_step_is_lr_sign() {
        let cfg = AdamConfig {
            lr: 1e-3,
            ..Default::default()
        };
        for g in [0.37f32, -5.0] {
            let mut p = scalar(1.0, g);
            adam_step(&mut [&mut p], &cfg, 1).unwrap();
            let expected = 1.0 - 1e-3 * g.signum();
            assert!((p.value.data()[0] - expected).abs() < 1e-6);
            assert_eq!(p.grad.data()[0], 0.0);
        }
    }

    #[test]
    fn zero_gradient_fixed_point() {
        let cfg = AdamConfig::default();
        let mut p = scalar(2.5, 0.0);
        adam_step(&mut [&mut p], &cfg, 1).unwrap();
        assert_eq!(p.value.data()[0], 2.5);
        assert_eq!(p.m.data()[0], 0.0);
        assert_eq!(p.v.data()[0], 0.0);
    }

    #[test]
    fn opposite_gradients_partially_cancel() {
        let cfg = AdamConfig {
            lr: 1e-2,
            ..Default::default()
        };
        let mut p = scalar(0.0, 1.0);
        adam_step(&mut [&mut p], &cfg, 1).unwrap();
        p.grad.data_mut()[0] = -1.0;
        adam_step(&mut [&mut p], &cfg, 2).unwrap();
        assert!(p.value.data()[0].abs() < 2.0 * 1e-2);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar(0.0, f32::NAN);
        p.name = "g.head.weight".into();
        match adam_step(&mut [&mut p], &AdamConfig::default(), 1) {
            Err(NeuralError::NonFiniteGradient(name)) => assert_eq!(name, "g.head.weight"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.value.data()[0], 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig {
            lr: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdamConfig {
            beta1: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(AdamConfig {
            eps: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
