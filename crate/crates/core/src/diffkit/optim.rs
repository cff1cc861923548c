use std::collections::BTreeMap;

use super::{DiffError, Float, ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment buffers, one pair per parameter of the store it was built for.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Tensor<F>>,
    pub second: Vec<Tensor<F>>,
}

impl<F: Float> AdamState<F> {
    pub fn new(store: &ParamStore<F>, config: AdamConfig) -> Self {
        let zeros = |s: &ParamStore<F>| {
            s.iter()
                .map(|(_, p)| Tensor::zeros(p.value.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            first: zeros(store),
            second: zeros(store),
        }
    }

    /// One bias-corrected Adam update of every trainable parameter that has a
    /// gradient. Parameters without a gradient are left untouched.
    pub fn step(
        &mut self,
        store: &mut ParamStore<F>,
        grads: &BTreeMap<ParamId, Tensor<F>>,
        lr: f64,
    ) -> Result<(), DiffError> {
        if self.first.len() != store.len() {
            return Err(DiffError::Contract(format!(
                "optimizer built for {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2, eps) = (F::lit(beta1), F::lit(beta2), F::lit(eps));
        let one = F::one();
        let step_size = F::lit(lr / c1);
        let c2_sqrt = F::lit(c2.sqrt());
        for (&id, g) in grads {
            if !store.is_trainable(id) {
                continue;
            }
            let i = id.index();
            let p = store.get_mut(id);
            if p.shape() != g.shape() {
                return Err(DiffError::Shape {
                    op: "adam",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let denom = vv.sqrt() / c2_sqrt + eps;
                *w = *w - step_size * *mv / denom;
            }
        }
        Ok(())
    }
}

/// Inverse-square-root schedule with linear warm-up:
/// `scale * d_model^-1/2 * min(step^-1/2, step * warmup^-3/2)`.
pub fn noam_lr(step: u64, warmup: u64, d_model: usize, scale: f64) -> Result<f64, DiffError> {
    if step == 0 {
        return Err(DiffError::Contract("learning-rate step counts from 1".into()));
    }
    if warmup == 0 {
        return Err(DiffError::Contract("warm-up must be at least one step".into()));
    }
    let s = step as f64;
    let w = warmup as f64;
    Ok(scale * (d_model as f64).powf(-0.5) * s.powf(-0.5).min(s * w.powf(-1.5)))
}
