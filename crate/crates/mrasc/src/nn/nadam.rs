//! Nesterov-accelerated Adam with fixed betas.

use super::tensor::{Param, Scalar};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Nadam hyperparameters. `lr` changes across epochs via the plateau
/// schedule; the betas stay fixed.
#[derive(Debug, Clone, Copy)]
pub struct NadamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for NadamHyper {
    fn default() -> Self {
        Self {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPS,
        }
    }
}

/// One Nadam update on a parameter from its accumulated gradient:
///
/// ```text
/// t += 1
/// m  = b1*m + (1-b1)*g            v = b2*v + (1-b2)*g^2
/// m^ = m / (1 - b1^(t+1))         v^ = v / (1 - b2^t)
/// theta -= lr * (b1*m^ + (1-b1)*g / (1 - b1^t)) / (sqrt(v^) + eps)
/// ```
pub fn nadam_step<T: Scalar>(param: &mut Param<T>, lr: f64, hp: &NadamHyper) {
    assert!(lr > 0.0, "learning rate must be positive");
    assert!((0.0..1.0).contains(&hp.beta1) && (0.0..1.0).contains(&hp.beta2));
    param.t += 1;
    let t = param.t as i32;
    let b1 = T::from_f64(hp.beta1);
    let b2 = T::from_f64(hp.beta2);
    let one_minus_b1 = T::from_f64(1.0 - hp.beta1);
    let one_minus_b2 = T::from_f64(1.0 - hp.beta2);
    let m_corr = T::from_f64(1.0 / (1.0 - hp.beta1.powi(t + 1)));
    let v_corr = T::from_f64(1.0 / (1.0 - hp.beta2.powi(t)));
    let g_corr = T::from_f64(1.0 / (1.0 - hp.beta1.powi(t)));
    let lr_t = T::from_f64(lr);
    let eps = T::from_f64(hp.eps);

    let grads = param.grad.data();
    let ms = param.m.data_mut();
    let vs = param.v.data_mut();
    for ((m, v), &g) in ms.iter_mut().zip(vs.iter_mut()).zip(grads) {
        *m = b1 * *m + one_minus_b1 * g;
        *v = b2 * *v + one_minus_b2 * g * g;
    }
    let values = param.value.data_mut();
    for ((th, (&m, &v)), &g) in values
        .iter_mut()
        .zip(param.m.data().iter().zip(param.v.data()))
        .zip(grads)
    {
        let m_hat = m * m_corr;
        let v_hat = v * v_corr;
        let update = (b1 * m_hat + one_minus_b1 * g * g_corr) / (v_hat.sqrt() + eps);
        *th -= lr_t * update;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn scalar_param(v: f64) -> Param<f64> {
        Param::new(Tensor::from_vec(&[1], vec![v]))
    }

    #[test]
    fn first_step_is_bounded_and_opposes_gradient() {
        let mut p = scalar_param(0.0);
        p.grad.data_mut()[0] = 1.0;
        let lr = 1e-2;
        nadam_step(&mut p, lr, &NadamHyper::default());
        let delta = p.value.data()[0];
        assert!(delta < 0.0, "step must oppose the gradient");
        assert!(delta.abs() > 0.0 && delta.abs() <= 2.0 * lr, "delta {delta}");
        assert_eq!(p.t, 1);
    }

    #[test]
    fn zero_gradients_leave_theta_unchanged() {
        let mut p = scalar_param(0.37);
        for _ in 0..50 {
            p.zero_grad();
            nadam_step(&mut p, 1e-2, &NadamHyper::default());
        }
        assert_eq!(p.value.data()[0], 0.37);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        // f(theta) = 0.5 * ||theta - target||^2, grad = theta - target
        let target = [1.25f64, -0.75];
        let mut p = Param::new(Tensor::from_vec(&[2], vec![0.0, 0.0]));
        let hp = NadamHyper::default();
        for _ in 0..2000 {
            p.zero_grad();
            for i in 0..2 {
                p.grad.data_mut()[i] = p.value.data()[i] - target[i];
            }
            nadam_step(&mut p, 0.05, &hp);
        }
        let dist = (0..2)
            .map(|i| (p.value.data()[i] - target[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(dist < 1e-3, "distance to minimum {dist}");
    }
}
