use serde::{Deserialize, Serialize};

use super::Module;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum {} is outside [0, 1)",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay {} is invalid",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Classical momentum SGD with L2 weight decay:
///
/// ```text
/// g' = grad + wd · param
/// v  = momentum · v + g'
/// param -= lr · v
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new<M: Module>(cfg: SgdConfig, model: &M) -> Self {
        let velocity = model
            .named_params()
            .iter()
            .map(|(_, p)| Tensor::zeros(p.shape()))
            .collect();
        Sgd {
            lr: cfg.lr,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            velocity,
        }
    }

    /// Restores an optimizer from saved velocity buffers.
    pub fn with_velocity<M: Module>(cfg: SgdConfig, model: &M, velocity: Vec<Tensor>) -> Result<Self> {
        let params = model.named_params();
        if params.len() != velocity.len()
            || params
                .iter()
                .zip(&velocity)
                .any(|((_, p), v)| p.shape() != v.shape())
        {
            return Err(Error::ShapeMismatch(
                "velocity buffers do not match parameters".into(),
            ));
        }
        Ok(Sgd {
            lr: cfg.lr,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            velocity,
        })
    }

    pub fn config(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite
    /// or mis-shaped.
    pub fn step<M: Module>(&mut self, model: &mut M, grads: &[Tensor]) -> Result<()> {
        {
            let named = model.named_params();
            if named.len() != grads.len() || named.len() != self.velocity.len() {
                return Err(Error::dim(
                    "sgd_step",
                    &[named.len()],
                    &[grads.len(), self.velocity.len()],
                ));
            }
            for ((name, p), g) in named.iter().zip(grads) {
                if p.shape() != g.shape() {
                    return Err(Error::dim("sgd_step", p.shape(), g.shape()));
                }
                if !g.is_finite() {
                    return Err(Error::NonFiniteGradient(name.clone()));
                }
            }
        }
        let (lr, mom, wd) = (self.lr, self.momentum, self.weight_decay);
        for ((p, g), v) in model
            .params_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.velocity)
        {
            for ((pi, &gi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(v.data_mut().iter_mut())
            {
                *vi = mom * *vi + (gi + wd * *pi);
                *pi -= lr * *vi;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Toy(Tensor);

    impl Module for Toy {
        fn named_params(&self) -> Vec<(String, &Tensor)> {
            vec![("w".into(), &self.0)]
        }
        fn params_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    fn sgd(lr: f64, momentum: f64, weight_decay: f64, model: &Toy) -> Sgd {
        Sgd::new(SgdConfig { lr, momentum, weight_decay }, model)
    }

    #[test]
    fn zero_grad_decays_velocity_only() {
        let mut m = Toy(Tensor::vector(vec![1.0, -2.0]));
        let mut opt = sgd(0.1, 0.9, 0.0, &m);
        opt.step(&mut m, &[Tensor::vector(vec![1.0, 1.0])]).unwrap();
        let before = m.0.clone();
        let v_before = opt.velocity()[0].clone();
        opt.step(&mut m, &[Tensor::vector(vec![0.0, 0.0])]).unwrap();
        let v_after = &opt.velocity()[0];
        for (a, b) in v_after.data().iter().zip(v_before.data()) {
            assert_eq!(*a, 0.9 * b);
        }
        // params still move by the decayed velocity
        assert_ne!(m.0, before);

        let mut m = Toy(Tensor::vector(vec![1.0, -2.0]));
        let mut opt = sgd(0.1, 0.9, 0.0, &m);
        opt.step(&mut m, &[Tensor::vector(vec![0.0, 0.0])]).unwrap();
        assert_eq!(m.0.data(), &[1.0, -2.0]);
    }

    #[test]
    fn plain_gradient_descent() {
        let mut m = Toy(Tensor::vector(vec![1.0, -2.0]));
        let mut opt = sgd(0.5, 0.0, 0.0, &m);
        opt.step(&mut m, &[Tensor::vector(vec![0.2, -0.4])]).unwrap();
        assert_eq!(m.0.data(), &[1.0 - 0.5 * 0.2, -2.0 + 0.5 * 0.4]);
    }

    #[test]
    fn two_momentum_steps_match_recurrence() {
        let (lr, mom, wd) = (0.05, 0.9, 5e-4);
        let mut m = Toy(Tensor::vector(vec![0.7]));
        let mut opt = sgd(lr, mom, wd, &m);
        let (g1, g2) = (0.3, -0.1);
        opt.step(&mut m, &[Tensor::vector(vec![g1])]).unwrap();
        opt.step(&mut m, &[Tensor::vector(vec![g2])]).unwrap();

        let mut p: f64 = 0.7;
        let v1 = g1 + wd * p;
        p -= lr * v1;
        let v2 = mom * v1 + g2 + wd * p;
        p -= lr * v2;
        assert!((m.0.data()[0] - p).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let mut m = Toy(Tensor::vector(vec![0.25, 4.0]));
        let mut opt = sgd(0.0, 0.9, 5e-4, &m);
        opt.step(&mut m, &[Tensor::vector(vec![3.0, -1.0])]).unwrap();
        assert_eq!(m.0.data(), &[0.25, 4.0]);
    }

    #[test]
    fn non_finite_gradient_aborts_atomically() {
        let mut m = Toy(Tensor::vector(vec![1.0, 1.0]));
        let mut opt = sgd(0.1, 0.9, 0.0, &m);
        let err = opt
            .step(&mut m, &[Tensor::vector(vec![1.0, f64::NAN])])
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(m.0.data(), &[1.0, 1.0]);
        assert!(opt.velocity()[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_validation() {
        let ok = SgdConfig { lr: 0.05, momentum: 0.9, weight_decay: 5e-4 };
        assert!(ok.validate().is_ok());
        assert!(SgdConfig { momentum: 1.0, ..ok }.validate().is_err());
        assert!(SgdConfig { lr: -1.0, ..ok }.validate().is_err());
    }
}
