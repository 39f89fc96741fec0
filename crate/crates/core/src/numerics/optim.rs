use super::params::{ParamStore, Parameter};
use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of a single parameter at step `t ≥ 1`.
pub fn adam_step<S: Scalar>(param: &mut Parameter<S>, grad: &Tensor<S>, cfg: &AdamConfig, t: u64) {
    debug_assert!(t >= 1);
    let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
    let c1 = S::lit(1.0 - libm::pow(cfg.beta1, t as f64));
    let c2 = S::lit(1.0 - libm::pow(cfg.beta2, t as f64));
    let (lr, eps) = (S::lit(cfg.lr), S::lit(cfg.eps));
    let values = param.value.data_mut();
    for (((w, &g), m), v) in values
        .iter_mut()
        .zip(grad.data())
        .zip(param.first_moment.iter_mut())
        .zip(param.second_moment.iter_mut())
    {
        *m = b1 * *m + (S::one() - b1) * g;
        *v = b2 * *v + (S::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam over a whole [`ParamStore`]; parameters without a gradient are left
/// untouched (their moments do not decay).
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0 }
    }

    pub fn step<S: Scalar>(&mut self, store: &mut ParamStore<S>, grads: &[Option<Tensor<S>>]) {
        self.t += 1;
        for (p, g) in store.iter_mut().zip(grads) {
            if let Some(g) = g {
                adam_step(p, g, &self.config, self.t);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tape;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Parameter::new("w".into(), Tensor::<f64>::from_f64(&[3], &[1.0, -2.0, 0.5]).unwrap());
        let before = p.value.clone();
        for t in 1..=5 {
            adam_step(&mut p, &Tensor::zeros(&[3]), &AdamConfig::default(), t);
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        for g in [0.3, -5.0, 1e-3] {
            let mut p = Parameter::new("w".into(), Tensor::<f64>::from_f64(&[1], &[2.0]).unwrap());
            adam_step(&mut p, &Tensor::from_f64(&[1], &[g]).unwrap(), &cfg, 1);
            let moved = (p.value.data()[0] - 2.0).abs();
            assert!((moved - 0.01).abs() < 1e-6, "g={g} moved={moved}");
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::from_f64(&[2], &[1.0, 1.0]).unwrap());
        let mut adam = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() });
        for _ in 0..200 {
            let grads = {
                let mut tape = Tape::new(&store);
                let x = tape.param(w);
                let sq = tape.mul(x, x).unwrap();
                let loss = tape.sum(sq);
                tape.backward(loss).unwrap().into_param_grads()
            };
            adam.step(&mut store, &grads);
        }
        let v = store.get(w).value.data();
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        assert!(norm < 1e-2, "{norm}");
        assert_eq!(adam.t, 200);
    }
}
