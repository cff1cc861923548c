//! Parameterised building blocks. Each layer owns only [`ParamId`]s; the
//! values live in a [`ParamStore`] so one architecture serves both `f32`
//! training and `f64` gradient checks.

use rand::Rng;

use super::params::{normal, xavier_uniform};
use super::{DiffError, Float, ParamId, ParamStore, Tensor, Var};

type Result<T> = std::result::Result<T, DiffError>;

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier_uniform(rng, in_dim, out_dim));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(vec![out_dim])));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<'g, F: Float>(&self, x: Var<'g, F>) -> Result<Var<'g, F>> {
        let tape = x.tape();
        let y = x.matmul(tape.param(self.weight))?;
        match self.bias {
            Some(b) => y.add_row(tape.param(b)),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub const EPS: f64 = 1e-5;

    pub fn new<F: Float>(store: &mut ParamStore<F>, name: &str, dim: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(vec![dim], F::one())),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(vec![dim])),
        }
    }

    pub fn forward<'g, F: Float>(&self, x: Var<'g, F>) -> Result<Var<'g, F>> {
        let tape = x.tape();
        x.layer_norm(tape.param(self.gamma), tape.param(self.beta), F::lit(Self::EPS))
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new<F: Float>(store: &mut ParamStore<F>, name: &str, vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let std = 1.0 / (dim as f64).sqrt();
        Self {
            table: store.add(format!("{name}.table"), normal(rng, vec![vocab, dim], std)),
            vocab,
            dim,
        }
    }

    pub fn forward<'g, F: Float>(&self, tape: &'g super::Tape<'g, F>, ids: &[usize]) -> Result<Var<'g, F>> {
        Var::embedding_lookup(tape.param(self.table), ids)
    }
}

/// Position-wise two-layer ReLU network.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new<F: Float>(store: &mut ParamStore<F>, name: &str, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.inner"), dim, hidden, true, rng),
            outer: Linear::new(store, &format!("{name}.outer"), hidden, dim, true, rng),
        }
    }

    pub fn forward<'g, F: Float>(&self, x: Var<'g, F>) -> Result<Var<'g, F>> {
        self.outer.forward(self.inner.forward(x)?.relu())
    }
}

/// Fixed sinusoidal position table, `[len, dim]`.
pub fn sinusoidal_positions<F: Float>(len: usize, dim: usize) -> Tensor<F> {
    Tensor::from_fn(vec![len, dim], |k| {
        let (pos, i) = (k / dim, k % dim);
        let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
        let angle = pos as f64 * rate;
        F::lit(if i % 2 == 0 { angle.sin() } else { angle.cos() })
    })
}
