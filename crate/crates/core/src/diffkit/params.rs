use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::{DiffError, Float, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub trainable: bool,
}

/// Named parameter tensors of a model. Models hold [`ParamId`]s into a store
/// so the same architecture can be evaluated in `f32` or `f64`.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
}

impl<F: Float> ParamStore<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name,
            value,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Freezes or unfreezes every parameter whose name starts with `prefix`.
    pub fn set_trainable_prefix(&mut self, prefix: &str, trainable: bool) {
        for p in &mut self.params {
            if p.name.starts_with(prefix) {
                p.trainable = trainable;
            }
        }
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn cast<G: Float>(&self) -> ParamStore<G> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    trainable: p.trainable,
                })
                .collect(),
        }
    }

    /// Overwrites values from `(name, tensor)` pairs; every stored parameter
    /// must be present with a matching shape.
    pub fn load_named<'a>(&mut self, tensors: impl IntoIterator<Item = (&'a str, Tensor<F>)>) -> Result<(), DiffError> {
        let mut seen = vec![false; self.params.len()];
        for (name, t) in tensors {
            let Some(id) = self.find(name) else {
                continue;
            };
            let slot = &mut self.params[id.0];
            if slot.value.shape() != t.shape() {
                return Err(DiffError::Shape {
                    op: "load",
                    lhs: slot.value.shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            slot.value = t;
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(DiffError::Contract(format!(
                "parameter {} missing from checkpoint",
                self.params[missing].name
            )));
        }
        Ok(())
    }
}

/// Glorot-uniform initialisation for a `[fan_in, fan_out]` weight.
pub fn xavier_uniform<F: Float>(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor<F> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    Tensor::from_fn(vec![fan_in, fan_out], |_| F::lit(dist.sample(rng)))
}

pub fn normal<F: Float>(rng: &mut impl Rng, shape: impl Into<Vec<usize>>, std: f64) -> Tensor<F> {
    let dist = Normal::new(0.0, std).expect("non-negative std");
    Tensor::from_fn(shape, |_| F::lit(dist.sample(rng)))
}
