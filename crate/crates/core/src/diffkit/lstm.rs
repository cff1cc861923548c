use rand::Rng;

use super::nn::Linear;
use super::{DiffError, Float, ParamStore, Tensor, Var};

type Result<T> = std::result::Result<T, DiffError>;

/// LSTM cell with gate order input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub input: Linear,
    pub recurrent: Linear,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            input: Linear::new(store, &format!("{name}.wx"), input_dim, 4 * hidden, true, rng),
            recurrent: Linear::new(store, &format!("{name}.wh"), hidden, 4 * hidden, false, rng),
            hidden,
        }
    }

    /// One step over a batch: `x` is `[batch, in]`, `h` and `c` are
    /// `[batch, hidden]`.
    pub fn forward<'g, F: Float>(
        &self,
        x: Var<'g, F>,
        h: Var<'g, F>,
        c: Var<'g, F>,
    ) -> Result<(Var<'g, F>, Var<'g, F>)> {
        let hd = self.hidden;
        let gates = self.input.forward(x)?.add(self.recurrent.forward(h)?)?;
        let i = gates.slice_cols(0, hd)?.sigmoid();
        let f = gates.slice_cols(hd, 2 * hd)?.sigmoid();
        let g = gates.slice_cols(2 * hd, 3 * hd)?.tanh();
        let o = gates.slice_cols(3 * hd, 4 * hd)?.sigmoid();
        let c_next = f.mul(c)?.add(i.mul(g)?)?;
        let h_next = o.mul(c_next.tanh())?;
        Ok((h_next, c_next))
    }

    /// Runs the cell over `inputs` from zero state, optionally in reverse.
    /// The returned outputs are aligned with `inputs`.
    pub fn run<'g, F: Float>(&self, inputs: &[Var<'g, F>], reverse: bool) -> Result<Vec<Var<'g, F>>> {
        let first = inputs
            .first()
            .ok_or_else(|| DiffError::Contract("LSTM over an empty sequence".into()))?;
        let tape = first.tape();
        let batch = first.value().rows();
        let mut h = tape.constant(Tensor::zeros(vec![batch, self.hidden]));
        let mut c = h;
        let mut outs: Vec<Option<Var<'g, F>>> = vec![None; inputs.len()];
        let order: Vec<usize> = if reverse {
            (0..inputs.len()).rev().collect()
        } else {
            (0..inputs.len()).collect()
        };
        for t in order {
            let (hn, cn) = self.forward(inputs[t], h, c)?;
            h = hn;
            c = cn;
            outs[t] = Some(h);
        }
        Ok(outs.into_iter().map(Option::unwrap).collect())
    }
}

/// Stacked bidirectional LSTM; each layer emits `concat(forward_h, backward_h)`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub layers: Vec<(LstmCell, LstmCell)>,
    pub hidden: usize,
}

impl BiLstm {
    pub fn new<F: Float>(
        store: &mut ParamStore<F>,
        name: &str,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { 2 * hidden };
                (
                    LstmCell::new(store, &format!("{name}.l{l}.fwd"), in_dim, hidden, rng),
                    LstmCell::new(store, &format!("{name}.l{l}.bwd"), in_dim, hidden, rng),
                )
            })
            .collect();
        Self { layers, hidden }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    /// `inputs[t]` is the `[batch, in]` slice at step `t`.
    pub fn forward<'g, F: Float>(&self, inputs: &[Var<'g, F>]) -> Result<Vec<Var<'g, F>>> {
        if inputs.is_empty() {
            return Err(DiffError::Contract("Bi-LSTM over zero time steps".into()));
        }
        let mut seq = inputs.to_vec();
        for (fwd, bwd) in &self.layers {
            let f = fwd.run(&seq, false)?;
            let b = bwd.run(&seq, true)?;
            seq = f
                .into_iter()
                .zip(b)
                .map(|(x, y)| Var::concat_cols(&[x, y]))
                .collect::<Result<_>>()?;
        }
        Ok(seq)
    }
}
