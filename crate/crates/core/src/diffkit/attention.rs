use rand::Rng;

use super::nn::{FeedForward, LayerNorm, Linear};
use super::{DiffError, Float, Mask, ParamStore, Var};

type Result<T> = std::result::Result<T, DiffError>;

/// `softmax(q k^T / sqrt(d) | mask) v`. Returns the output and the
/// attention weights.
pub fn scaled_dot_product_attention<'g, F: Float>(
    q: Var<'g, F>,
    k: Var<'g, F>,
    v: Var<'g, F>,
    mask: Option<&Mask>,
) -> Result<(Var<'g, F>, Var<'g, F>)> {
    let d = q.value().cols();
    let scores = q.matmul_t(k)?.scale(F::lit(1.0 / (d as f64).sqrt()));
    if let Some(m) = mask {
        let s = scores.value();
        if (m.rows, m.cols) != (s.rows(), s.cols()) {
            return Err(DiffError::Shape {
                op: "attention_mask",
                lhs: s.shape().to_vec(),
                rhs: vec![m.rows, m.cols],
            });
        }
    }
    let weights = scores.softmax_masked(mask)?;
    Ok((weights.matmul(v)?, weights))
}

#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(DiffError::Contract(format!(
                "model dim {dim} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::new(store, &format!("{name}.q"), dim, dim, true, rng),
            key: Linear::new(store, &format!("{name}.k"), dim, dim, true, rng),
            value: Linear::new(store, &format!("{name}.v"), dim, dim, true, rng),
            output: Linear::new(store, &format!("{name}.o"), dim, dim, true, rng),
            heads,
            dim,
        })
    }

    /// `queries` is `[q_len, dim]`, `memory` is `[k_len, dim]`; the mask is
    /// `[q_len, k_len]`.
    pub fn forward<'g, F: Float>(
        &self,
        queries: Var<'g, F>,
        memory: Var<'g, F>,
        mask: Option<&Mask>,
    ) -> Result<Var<'g, F>> {
        let q = self.query.forward(queries)?;
        let k = self.key.forward(memory)?;
        let v = self.value.forward(memory)?;
        let hd = self.dim / self.heads;
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (s, e) = (h * hd, (h + 1) * hd);
            let (o, _) =
                scaled_dot_product_attention(q.slice_cols(s, e)?, k.slice_cols(s, e)?, v.slice_cols(s, e)?, mask)?;
            outs.push(o);
        }
        let joined = if outs.len() == 1 {
            outs[0]
        } else {
            Var::concat_cols(&outs)?
        };
        self.output.forward(joined)
    }
}

/// Pre-norm encoder block: self-attention then feed-forward, each residual.
#[derive(Clone, Debug)]
pub struct TransformerEncoderLayer {
    pub norm_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl TransformerEncoderLayer {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            norm_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            norm_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), dim),
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, ff_dim, rng),
        })
    }

    pub fn forward<'g, F: Float>(&self, x: Var<'g, F>, mask: Option<&Mask>) -> Result<Var<'g, F>> {
        let h = self.norm_attn.forward(x)?;
        let x = x.add(self.attn.forward(h, h, mask)?)?;
        let h = self.norm_ff.forward(x)?;
        x.add(self.ff.forward(h)?)
    }
}

/// Pre-norm decoder block: causal self-attention, cross-attention over the
/// memory, feed-forward.
#[derive(Clone, Debug)]
pub struct TransformerDecoderLayer {
    pub norm_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm_cross: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

impl TransformerDecoderLayer {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            norm_self: LayerNorm::new(store, &format!("{name}.ln_self"), dim),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self"), dim, heads, rng)?,
            norm_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), dim),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross"), dim, heads, rng)?,
            norm_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), dim),
            ff: FeedForward::new(store, &format!("{name}.ff"), dim, ff_dim, rng),
        })
    }

    pub fn forward<'g, F: Float>(
        &self,
        x: Var<'g, F>,
        memory: Var<'g, F>,
        memory_mask: Option<&Mask>,
    ) -> Result<Var<'g, F>> {
        let len = x.value().rows();
        let causal = Mask::causal(len);
        let h = self.norm_self.forward(x)?;
        let x = x.add(self.self_attn.forward(h, h, Some(&causal))?)?;
        let h = self.norm_cross.forward(x)?;
        let x = x.add(self.cross_attn.forward(h, memory, memory_mask)?)?;
        let h = self.norm_ff.forward(x)?;
        x.add(self.ff.forward(h)?)
    }
}
