use std::collections::BTreeMap;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{dim_err, numeric_err, Result};
use crate::scalar::Real;

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
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

#[derive(Clone, Debug)]
struct Moments<T> {
    first: Vec<T>,
    second: Vec<T>,
}

/// Adaptive-moment optimizer state: per-parameter moments, step count and
/// the (mutable) learning rate.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Parameters missing from `grads` are
    /// updated with a zero gradient.
    pub fn step(
        &mut self,
        params: &mut ParamStore<T>,
        grads: &BTreeMap<String, Tensor<T>>,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params
                .get(name)
                .ok_or_else(|| dim_err!("gradient for unknown parameter `{name}`"))?;
            if p.shape() != g.shape() {
                return Err(dim_err!(
                    "gradient for `{name}` has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                ));
            }
            if !g.is_finite() {
                return Err(numeric_err!("non-finite gradient for parameter `{name}`"));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::c(self.config.beta1), T::c(self.config.beta2));
        let bc1 = T::one() - b1.powi(t);
        let bc2 = T::one() - b2.powi(t);
        let lr = T::c(self.config.lr);
        let eps = T::c(self.config.eps);
        for (name, p) in params.iter_mut() {
            let n = p.numel();
            let m = self.moments.entry(name.to_string()).or_insert_with(|| Moments {
                first: vec![T::zero(); n],
                second: vec![T::zero(); n],
            });
            let g = grads.get(name).map(Tensor::data);
            for (j, v) in p.data_mut().iter_mut().enumerate() {
                let gj = g.map_or(T::zero(), |g| g[j]);
                m.first[j] = b1 * m.first[j] + (T::one() - b1) * gj;
                m.second[j] = b2 * m.second[j] + (T::one() - b2) * gj * gj;
                let mh = m.first[j] / bc1;
                let vh = m.second[j] / bc2;
                *v -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::new([1], vec![v]).unwrap());
        p
    }

    fn grad(v: f64) -> BTreeMap<String, Tensor<f64>> {
        BTreeMap::from([("w".to_string(), Tensor::new([1], vec![v]).unwrap())])
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::new([2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        p.insert("b", Tensor::new([3], vec![0.1, 0.2, 0.3]).unwrap());
        let before = p.clone();
        let mut opt = Adam::new(AdamConfig::default());
        let zeros = BTreeMap::from([
            ("a".to_string(), Tensor::zeros([2, 2])),
            ("b".to_string(), Tensor::zeros([3])),
        ]);
        opt.step(&mut p, &zeros).unwrap();
        assert_eq!(p, before);
        assert_eq!(opt.step_count(), 1);
        opt.step(&mut p, &BTreeMap::new()).unwrap();
        assert_eq!(opt.step_count(), 2);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = 1, v_hat = 1 after one bias-corrected step: delta = lr / (1 + eps).
        let mut p = one_param(0.0);
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        opt.step(&mut p, &grad(1.0)).unwrap();
        let w = p.get("w").unwrap().item();
        assert!(w < 0.0);
        assert!((w + 0.1 / (1.0 + 1e-8)).abs() < 1e-12, "w = {w}");
    }

    #[test]
    fn quadratic_converges() {
        let mut p = one_param(0.0);
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        for _ in 0..500 {
            let w = p.get("w").unwrap().item();
            opt.step(&mut p, &grad(2.0 * (w - 3.0))).unwrap();
        }
        let w = p.get("w").unwrap().item();
        assert!((w - 3.0).abs() < 1e-2, "w = {w}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = one_param(0.0);
        let mut opt = Adam::new(AdamConfig::default());
        let err = opt.step(&mut p, &grad(f64::NAN)).unwrap_err().to_string();
        assert!(err.contains("`w`"), "{err}");
        assert_eq!(opt.step_count(), 0);
    }
}
