use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};
use crate::pruning::Mask;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
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

/// First/second moment buffers for every parameter tensor.
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let (m, v) = params
            .into_iter()
            .map(|p| (vec![T::zero(); p.numel()], vec![T::zero(); p.numel()]))
            .unzip();
        AdamState {
            config,
            step: 0,
            m,
            v,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Entries a mask marks as pruned get a
    /// zero gradient and are held at exactly zero afterwards.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[&Tensor<T>],
        mask: Option<&Mask>,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::dim(format!(
                "optimizer tracks {} tensors but got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.numel() != self.m[i].len() || g.shape() != p.shape() {
                return Err(Error::dim(format!(
                    "parameter {} has shape {:?}, gradient {:?}, state {}",
                    i,
                    p.shape(),
                    g.shape(),
                    self.m[i].len()
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let step_size = T::from_f64_lossy(c.lr / (1.0 - c.beta1.powi(self.step as i32)));
        let inv_sqrt_bc2 = T::from_f64_lossy(1.0 / (1.0 - c.beta2.powi(self.step as i32)).sqrt());
        let eps = T::from_f64_lossy(c.eps);
        let (a1, a2) = (one - b1, one - b2);
        let tiny = T::min_positive_value();
        let sqrt_tiny = tiny.sqrt();

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            // Branch-free so the loop vectorizes; `keep` is 1 or 0.
            let update = |w: &mut T, m: &mut T, v: &mut T, gj: T, keep: T| {
                let gj = gj * keep;
                let small = gj.abs() < sqrt_tiny;
                let g2 = if small { T::zero() } else { gj * gj };
                let mj = b1 * *m + a1 * gj;
                let vj = b2 * *v + a2 * g2;
                // decaying moments would otherwise spend many steps subnormal
                *m = if mj.abs() < tiny { T::zero() } else { mj };
                *v = if vj < tiny { T::zero() } else { vj };
                // `+ 0` turns a masked -0.0 into +0.0
                *w = (*w - step_size * *m / (v.sqrt() * inv_sqrt_bc2 + eps)) * keep + T::zero();
            };
            let it = p.data_mut().iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data());
            match mask.and_then(|m| m.get(i)) {
                None => it.for_each(|(((w, m), v), &gj)| update(w, m, v, gj, one)),
                Some(k) => it
                    .zip(k)
                    .for_each(|((((w, m), v), &gj), &k)| update(w, m, v, gj, if k != 0 { one } else { T::zero() })),
            }
        }
        Ok(())
    }
}
