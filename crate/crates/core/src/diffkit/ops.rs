//! Differentiable operations on [`Var`]. Every op views its operands as
//! `rows x cols` matrices (see [`Tensor::rows`]).

use std::rc::Rc;

use super::tensor::{mm, mm_nt, mm_tn};
use super::{DiffError, Float, Tensor, Var};

type Result<T> = std::result::Result<T, DiffError>;

fn shape_err(op: &'static str, a: &Tensor<impl Float>, b: &Tensor<impl Float>) -> DiffError {
    DiffError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn map<F: Float>(t: &Tensor<F>, f: impl Fn(F) -> F) -> Tensor<F> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).unwrap()
}

fn zip<F: Float>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .unwrap()
}

fn matrix<F: Float>(rows: usize, cols: usize, data: Vec<F>) -> Tensor<F> {
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Boolean attention/selection mask; `true` marks an admissible entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    allowed: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if allowed.len() != rows * cols {
            return Err(DiffError::Contract(format!(
                "mask {rows}x{cols} needs {} flags, got {}",
                rows * cols,
                allowed.len()
            )));
        }
        Ok(Self { rows, cols, allowed })
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            allowed: vec![true; rows * cols],
        }
    }

    /// Position `i` may attend to `j` iff `j <= i`.
    pub fn causal(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| j <= i)
    }

    /// Every query may attend to the keys flagged valid.
    pub fn keys(rows: usize, key_valid: &[bool]) -> Self {
        Self::from_fn(rows, key_valid.len(), |_, j| key_valid[j])
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut allowed = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                allowed.push(f(i, j));
            }
        }
        Self { rows, cols, allowed }
    }

    pub fn and(&self, other: &Mask) -> Result<Self> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(DiffError::Shape {
                op: "mask_and",
                lhs: vec![self.rows, self.cols],
                rhs: vec![other.rows, other.cols],
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            allowed: self.allowed.iter().zip(&other.allowed).map(|(a, b)| *a && *b).collect(),
        })
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn flags(&self) -> &[bool] {
        &self.allowed
    }
}

fn softmax_rows<F: Float>(x: &Tensor<F>, mask: Option<&Mask>) -> Result<Tensor<F>> {
    let (r, c) = (x.rows(), x.cols());
    let mut out = vec![F::zero(); r * c];
    for i in 0..r {
        let row = x.row(i);
        let keep = |j: usize| mask.is_none_or(|m| m.allowed(i, j));
        let mut max = F::neg_infinity();
        for (j, &v) in row.iter().enumerate() {
            if keep(j) && v > max {
                max = v;
            }
        }
        if max == F::neg_infinity() {
            return Err(DiffError::Contract(format!("softmax row {i} has no admissible entry")));
        }
        let mut total = F::zero();
        for (j, &v) in row.iter().enumerate() {
            if keep(j) {
                let e = (v - max).exp();
                out[i * c + j] = e;
                total = total + e;
            }
        }
        for o in &mut out[i * c..(i + 1) * c] {
            *o = *o / total;
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), out).unwrap())
}

fn log_softmax_rows<F: Float>(x: &Tensor<F>) -> Tensor<F> {
    let (r, c) = (x.rows(), x.cols());
    let mut out = vec![F::zero(); r * c];
    for i in 0..r {
        let row = x.row(i);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<F>().ln();
        for (o, &v) in out[i * c..(i + 1) * c].iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

/// Backward of a row softmax given its output `y`: `y * (g - <g, y>)`.
fn softmax_rows_grad<F: Float>(y: &Tensor<F>, g: &Tensor<F>) -> Tensor<F> {
    let (r, c) = (y.rows(), y.cols());
    let mut out = vec![F::zero(); r * c];
    for i in 0..r {
        let yr = y.row(i);
        let gr = g.row(i);
        let dot: F = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for j in 0..c {
            out[i * c + j] = yr[j] * (gr[j] - dot);
        }
    }
    Tensor::new(y.shape().to_vec(), out).unwrap()
}

impl<'g, F: Float> Var<'g, F> {
    fn same_tape(&self, other: &Var<'g, F>) {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    // ----- linear algebra -----

    /// `self[m,k] * rhs[k,n]`.
    pub fn matmul(self, rhs: Var<'g, F>) -> Result<Self> {
        self.same_tape(&rhs);
        let (a, b) = (self.value(), rhs.value());
        let (m, k, n) = (a.rows(), a.cols(), b.cols());
        if b.rows() != k {
            return Err(shape_err("matmul", &a, &b));
        }
        let value = matrix(m, n, mm(a.data(), b.data(), m, k, n));
        Ok(self.tape.push(value, &[self.id, rhs.id], || {
            Box::new(move |g| {
                let ga = mm_nt(g.data(), b.data(), m, n, k);
                let gb = mm_tn(a.data(), g.data(), m, k, n);
                vec![
                    Some(Tensor::new(a.shape().to_vec(), ga).unwrap()),
                    Some(Tensor::new(b.shape().to_vec(), gb).unwrap()),
                ]
            })
        }))
    }

    /// `self[m,k] * rhs[n,k]^T`.
    pub fn matmul_t(self, rhs: Var<'g, F>) -> Result<Self> {
        self.same_tape(&rhs);
        let (a, b) = (self.value(), rhs.value());
        let (m, k, n) = (a.rows(), a.cols(), b.rows());
        if b.cols() != k {
            return Err(shape_err("matmul_t", &a, &b));
        }
        let value = matrix(m, n, mm_nt(a.data(), b.data(), m, k, n));
        Ok(self.tape.push(value, &[self.id, rhs.id], || {
            Box::new(move |g| {
                let ga = mm(g.data(), b.data(), m, n, k);
                let gb = mm_tn(g.data(), a.data(), m, n, k);
                vec![
                    Some(Tensor::new(a.shape().to_vec(), ga).unwrap()),
                    Some(Tensor::new(b.shape().to_vec(), gb).unwrap()),
                ]
            })
        }))
    }

    pub fn transpose(self) -> Self {
        let a = self.value();
        let value = a.transposed();
        let shape = a.shape().to_vec();
        self.tape.push(value, &[self.id], || {
            Box::new(move |g| vec![Some(g.transposed().reshaped(shape.clone()).unwrap())])
        })
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let a = self.value();
        let value = (*a).clone().reshaped(shape)?;
        let orig = a.shape().to_vec();
        Ok(self.tape.push(value, &[self.id], || {
            Box::new(move |g| vec![Some(g.clone().reshaped(orig.clone()).unwrap())])
        }))
    }

    // ----- elementwise binary -----

    fn binary(
        self,
        rhs: Var<'g, F>,
        op: &'static str,
        f: impl Fn(F, F) -> F,
        grad: impl Fn(&Tensor<F>, &Tensor<F>, &Tensor<F>) -> [Option<Tensor<F>>; 2] + 'static,
    ) -> Result<Self> {
        self.same_tape(&rhs);
        let (a, b) = (self.value(), rhs.value());
        if a.shape() != b.shape() {
            return Err(shape_err(op, &a, &b));
        }
        let value = zip(&a, &b, f);
        Ok(self
            .tape
            .push(value, &[self.id, rhs.id], || Box::new(move |g| grad(g, &a, &b).into())))
    }

    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops`
    pub fn add(self, rhs: Var<'g, F>) -> Result<Self> {
        self.binary(rhs, "add", |x, y| x + y, |g, _, _| [Some(g.clone()), Some(g.clone())])
    }

    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops`
    pub fn sub(self, rhs: Var<'g, F>) -> Result<Self> {
        self.binary(
            rhs,
            "sub",
            |x, y| x - y,
            |g, _, _| [Some(g.clone()), Some(map(g, |v| -v))],
        )
    }

    #[allow(clippy::should_implement_trait)] // fallible, so not `std::ops`
    pub fn mul(self, rhs: Var<'g, F>) -> Result<Self> {
        self.binary(
            rhs,
            "mul",
            |x, y| x * y,
            |g, a, b| [Some(zip(g, b, |u, v| u * v)), Some(zip(g, a, |u, v| u * v))],
        )
    }

    /// Adds a row vector (`cols` elements) to every row.
    pub fn add_row(self, row: Var<'g, F>) -> Result<Self> {
        self.same_tape(&row);
        let (a, b) = (self.value(), row.value());
        let (r, c) = (a.rows(), a.cols());
        if b.numel() != c {
            return Err(shape_err("add_row", &a, &b));
        }
        let mut out = a.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = out[i * c + j] + b.data()[j];
            }
        }
        let value = Tensor::new(a.shape().to_vec(), out).unwrap();
        let bshape = b.shape().to_vec();
        Ok(self.tape.push(value, &[self.id, row.id], || {
            Box::new(move |g| {
                let mut gb = vec![F::zero(); c];
                for i in 0..r {
                    for (acc, &v) in gb.iter_mut().zip(g.row(i)) {
                        *acc = *acc + v;
                    }
                }
                vec![Some(g.clone()), Some(Tensor::new(bshape.clone(), gb).unwrap())]
            })
        }))
    }

    /// `out[i][j] = self[i] + row[j]` for a column `[m,1]` and a row `[1,n]`.
    pub fn outer_sum(self, row: Var<'g, F>) -> Result<Self> {
        self.same_tape(&row);
        let (a, b) = (self.value(), row.value());
        if a.cols() != 1 || b.rows() != 1 {
            return Err(shape_err("outer_sum", &a, &b));
        }
        let (m, n) = (a.rows(), b.cols());
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(a.data()[i] + b.data()[j]);
            }
        }
        let (ashape, bshape) = (a.shape().to_vec(), b.shape().to_vec());
        Ok(self.tape.push(matrix(m, n, out), &[self.id, row.id], || {
            Box::new(move |g| {
                let mut ga = vec![F::zero(); m];
                let mut gb = vec![F::zero(); n];
                #[allow(clippy::needless_range_loop)]
                for i in 0..m {
                    for j in 0..n {
                        let v = g.data()[i * n + j];
                        ga[i] = ga[i] + v;
                        gb[j] = gb[j] + v;
                    }
                }
                vec![
                    Some(Tensor::new(ashape.clone(), ga).unwrap()),
                    Some(Tensor::new(bshape.clone(), gb).unwrap()),
                ]
            })
        }))
    }

    // ----- scalar affine -----

    pub fn scale(self, s: F) -> Self {
        let value = map(&self.value(), |x| x * s);
        self.tape
            .push(value, &[self.id], || Box::new(move |g| vec![Some(map(g, |v| v * s))]))
    }

    pub fn add_scalar(self, s: F) -> Self {
        let value = map(&self.value(), |x| x + s);
        self.tape
            .push(value, &[self.id], || Box::new(|g| vec![Some(g.clone())]))
    }

    #[allow(clippy::should_implement_trait)] // chains like the other ops
    pub fn neg(self) -> Self {
        self.scale(-F::one())
    }

    // ----- structural -----

    /// Stacks operands with equal column counts on top of each other.
    pub fn concat_rows(parts: &[Var<'g, F>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| DiffError::Contract("concat of zero tensors".into()))?;
        let values: Vec<Rc<Tensor<F>>> = parts.iter().map(Var::value).collect();
        let c = values[0].cols();
        let mut data = Vec::new();
        let mut rows = Vec::with_capacity(parts.len());
        for v in &values {
            if v.cols() != c {
                return Err(shape_err("concat_rows", &values[0], v));
            }
            rows.push(v.rows());
            data.extend_from_slice(v.data());
        }
        let total: usize = rows.iter().sum();
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.tape.push(matrix(total, c, data), &ids, || {
            Box::new(move |g| {
                let mut start = 0;
                shapes
                    .iter()
                    .zip(&rows)
                    .map(|(s, &r)| {
                        let part = g.data()[start * c..(start + r) * c].to_vec();
                        start += r;
                        Some(Tensor::new(s.clone(), part).unwrap())
                    })
                    .collect()
            })
        }))
    }

    /// Joins operands with equal row counts side by side.
    pub fn concat_cols(parts: &[Var<'g, F>]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| DiffError::Contract("concat of zero tensors".into()))?;
        let values: Vec<Rc<Tensor<F>>> = parts.iter().map(Var::value).collect();
        let r = values[0].rows();
        for v in &values {
            if v.rows() != r {
                return Err(shape_err("concat_cols", &values[0], v));
            }
        }
        let widths: Vec<usize> = values.iter().map(|v| v.cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for v in &values {
                data.extend_from_slice(v.row(i));
            }
        }
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.tape.push(matrix(r, total, data), &ids, || {
            Box::new(move |g| {
                let mut out: Vec<Vec<F>> = widths.iter().map(|w| Vec::with_capacity(w * r)).collect();
                for i in 0..r {
                    let grow = g.row(i);
                    let mut off = 0;
                    for (k, &w) in widths.iter().enumerate() {
                        out[k].extend_from_slice(&grow[off..off + w]);
                        off += w;
                    }
                }
                out.into_iter()
                    .zip(&shapes)
                    .map(|(d, s)| Some(Tensor::new(s.clone(), d).unwrap()))
                    .collect()
            })
        }))
    }

    pub fn slice_rows(self, start: usize, end: usize) -> Result<Self> {
        let a = self.value();
        let (r, c) = (a.rows(), a.cols());
        if start >= end || end > r {
            return Err(DiffError::Contract(format!("row slice {start}..{end} out of {r} rows")));
        }
        let value = matrix(end - start, c, a.data()[start * c..end * c].to_vec());
        let shape = a.shape().to_vec();
        Ok(self.tape.push(value, &[self.id], || {
            Box::new(move |g| {
                let mut full = Tensor::zeros(shape.clone());
                full.data_mut()[start * c..end * c].copy_from_slice(g.data());
                vec![Some(full)]
            })
        }))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Result<Self> {
        let a = self.value();
        let (r, c) = (a.rows(), a.cols());
        if start >= end || end > c {
            return Err(DiffError::Contract(format!(
                "column slice {start}..{end} out of {c} columns"
            )));
        }
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&a.row(i)[start..end]);
        }
        let shape = a.shape().to_vec();
        Ok(self.tape.push(matrix(r, w, data), &[self.id], || {
            Box::new(move |g| {
                let mut full = Tensor::zeros(shape.clone());
                for i in 0..r {
                    full.data_mut()[i * c + start..i * c + end].copy_from_slice(g.row(i));
                }
                vec![Some(full)]
            })
        }))
    }

    /// Row gather; as an embedding lookup `self` is the `[vocab, dim]` table.
    pub fn gather_rows(self, indices: &[usize]) -> Result<Self> {
        let a = self.value();
        let (r, c) = (a.rows(), a.cols());
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(DiffError::Contract(format!("row index {bad} out of {r} rows")));
        }
        if indices.is_empty() {
            return Err(DiffError::Contract("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(a.row(i));
        }
        let shape = a.shape().to_vec();
        let idx = indices.to_vec();
        Ok(self.tape.push(matrix(indices.len(), c, data), &[self.id], || {
            Box::new(move |g| {
                let mut full = Tensor::zeros(shape.clone());
                for (k, &i) in idx.iter().enumerate() {
                    let dst = &mut full.data_mut()[i * c..(i + 1) * c];
                    for (d, &v) in dst.iter_mut().zip(g.row(k)) {
                        *d = *d + v;
                    }
                }
                vec![Some(full)]
            })
        }))
    }

    pub fn embedding_lookup(table: Var<'g, F>, ids: &[usize]) -> Result<Self> {
        table.gather_rows(ids)
    }

    // ----- elementwise unary -----

    fn unary_from_output(self, f: impl Fn(F) -> F, df_dy: impl Fn(F) -> F + 'static) -> Self {
        let value = map(&self.value(), f);
        let y = Rc::new(value.clone());
        self.tape.push(value, &[self.id], || {
            Box::new(move |g| vec![Some(zip(g, &y, |gv, yv| gv * df_dy(yv)))])
        })
    }

    fn unary_from_input(self, f: impl Fn(F) -> F, df_dx: impl Fn(F) -> F + 'static) -> Self {
        let x = self.value();
        let value = map(&x, f);
        self.tape.push(value, &[self.id], || {
            Box::new(move |g| vec![Some(zip(g, &x, |gv, xv| gv * df_dx(xv)))])
        })
    }

    pub fn tanh(self) -> Self {
        self.unary_from_output(F::tanh, |y| F::one() - y * y)
    }

    pub fn sigmoid(self) -> Self {
        self.unary_from_output(|x| F::one() / (F::one() + (-x).exp()), |y| y * (F::one() - y))
    }

    pub fn exp(self) -> Self {
        self.unary_from_output(F::exp, |y| y)
    }

    pub fn log(self) -> Self {
        self.unary_from_input(F::ln, |x| F::one() / x)
    }

    pub fn relu(self) -> Self {
        self.unary_from_input(
            |x| if x > F::zero() { x } else { F::zero() },
            |x| if x > F::zero() { F::one() } else { F::zero() },
        )
    }

    pub fn leaky_relu(self, slope: F) -> Self {
        self.unary_from_input(
            move |x| if x > F::zero() { x } else { slope * x },
            move |x| if x > F::zero() { F::one() } else { slope },
        )
    }

    // ----- normalisation -----

    /// Softmax along `axis` (0 = down columns, 1 = along rows).
    pub fn softmax(self, axis: usize) -> Result<Self> {
        match axis {
            1 => self.softmax_masked(None),
            0 => Ok(self.transpose().softmax_masked(None)?.transpose()),
            _ => Err(DiffError::Contract(format!("softmax axis {axis} not in 0..2"))),
        }
    }

    /// Row softmax restricted to admissible entries; the rest are exactly 0.
    pub fn softmax_masked(self, mask: Option<&Mask>) -> Result<Self> {
        let a = self.value();
        if let Some(m) = mask {
            if (m.rows, m.cols) != (a.rows(), a.cols()) {
                return Err(DiffError::Shape {
                    op: "softmax_mask",
                    lhs: a.shape().to_vec(),
                    rhs: vec![m.rows, m.cols],
                });
            }
        }
        let value = softmax_rows(&a, mask)?;
        let y = Rc::new(value.clone());
        Ok(self.tape.push(value, &[self.id], || {
            Box::new(move |g| vec![Some(softmax_rows_grad(&y, g))])
        }))
    }

    pub fn log_softmax(self) -> Self {
        let value = log_softmax_rows(&self.value());
        let y = Rc::new(value.clone());
        self.tape.push(value, &[self.id], || {
            Box::new(move |g| {
                let (r, c) = (y.rows(), y.cols());
                let mut out = vec![F::zero(); r * c];
                for i in 0..r {
                    let gs: F = g.row(i).iter().copied().sum();
                    for j in 0..c {
                        out[i * c + j] = g.row(i)[j] - y.row(i)[j].exp() * gs;
                    }
                }
                vec![Some(Tensor::new(y.shape().to_vec(), out).unwrap())]
            })
        })
    }

    /// Row-wise layer normalisation with affine `gamma`, `beta` (`cols` each).
    pub fn layer_norm(self, gamma: Var<'g, F>, beta: Var<'g, F>, eps: F) -> Result<Self> {
        let (x, gm, bt) = (self.value(), gamma.value(), beta.value());
        let (r, c) = (x.rows(), x.cols());
        if gm.numel() != c || bt.numel() != c {
            return Err(shape_err("layer_norm", &x, &gm));
        }
        let n = F::lit(c as f64);
        let mut xhat = vec![F::zero(); r * c];
        let mut inv_std = vec![F::zero(); r];
        let mut out = vec![F::zero(); r * c];
        for i in 0..r {
            let row = x.row(i);
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let is = F::one() / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = h * gm.data()[j] + bt.data()[j];
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out).unwrap();
        let (xshape, gshape, bshape) = (x.shape().to_vec(), gm.shape().to_vec(), bt.shape().to_vec());
        Ok(self.tape.push(value, &[self.id, gamma.id, beta.id], || {
            Box::new(move |g| {
                let mut gx = vec![F::zero(); r * c];
                let mut gg = vec![F::zero(); c];
                let mut gb = vec![F::zero(); c];
                for i in 0..r {
                    let grow = g.row(i);
                    let h = &xhat[i * c..(i + 1) * c];
                    let mut mean_d = F::zero();
                    let mut mean_dh = F::zero();
                    for j in 0..c {
                        let d = grow[j] * gm.data()[j];
                        mean_d = mean_d + d;
                        mean_dh = mean_dh + d * h[j];
                        gg[j] = gg[j] + grow[j] * h[j];
                        gb[j] = gb[j] + grow[j];
                    }
                    mean_d = mean_d / n;
                    mean_dh = mean_dh / n;
                    for j in 0..c {
                        let d = grow[j] * gm.data()[j];
                        gx[i * c + j] = inv_std[i] * (d - mean_d - h[j] * mean_dh);
                    }
                }
                vec![
                    Some(Tensor::new(xshape.clone(), gx).unwrap()),
                    Some(Tensor::new(gshape.clone(), gg).unwrap()),
                    Some(Tensor::new(bshape.clone(), gb).unwrap()),
                ]
            })
        }))
    }

    // ----- reductions and losses -----

    pub fn sum(self) -> Self {
        let a = self.value();
        let total: F = a.data().iter().copied().sum();
        let shape = a.shape().to_vec();
        self.tape.push(Tensor::scalar(total), &[self.id], || {
            Box::new(move |g| vec![Some(Tensor::full(shape.clone(), g.item()))])
        })
    }

    pub fn mean(self) -> Self {
        let n = F::lit(self.value().numel() as f64);
        self.sum().scale(F::one() / n)
    }

    /// Summed cross-entropy of row logits against `targets`, with the target
    /// distribution smoothed as `(1 - eps) * onehot + eps / classes`.
    pub fn cross_entropy_ls(self, targets: &[usize], eps: F) -> Result<Self> {
        let logits = self.value();
        let (r, c) = (logits.rows(), logits.cols());
        if targets.len() != r {
            return Err(DiffError::Contract(format!(
                "{} targets for {r} logit rows",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(DiffError::Contract(format!("target {bad} out of {c} classes")));
        }
        let logp = log_softmax_rows(&logits);
        let off = eps / F::lit(c as f64);
        let on = F::one() - eps + off;
        let mut total = F::zero();
        for (i, &t) in targets.iter().enumerate() {
            let row = logp.row(i);
            let mut l = -on * row[t];
            if off != F::zero() {
                for (j, &lp) in row.iter().enumerate() {
                    if j != t {
                        l = l - off * lp;
                    }
                }
            }
            total = total + l;
        }
        let targets = targets.to_vec();
        Ok(self.tape.push(Tensor::scalar(total), &[self.id], || {
            Box::new(move |g| {
                let s = g.item();
                let mut out = vec![F::zero(); r * c];
                for (i, &t) in targets.iter().enumerate() {
                    for j in 0..c {
                        let q = if j == t { on } else { off };
                        out[i * c + j] = s * (logp.row(i)[j].exp() - q);
                    }
                }
                vec![Some(Tensor::new(logp.shape().to_vec(), out).unwrap())]
            })
        }))
    }

    /// Row-wise Euclidean distance, `[m,n] x [m,n] -> [m,1]`. The gradient at
    /// zero distance is taken as zero.
    pub fn l2_distance(self, rhs: Var<'g, F>) -> Result<Self> {
        self.same_tape(&rhs);
        let (a, b) = (self.value(), rhs.value());
        if a.shape() != b.shape() {
            return Err(shape_err("l2_distance", &a, &b));
        }
        let (r, c) = (a.rows(), a.cols());
        let dist: Vec<F> = (0..r)
            .map(|i| {
                a.row(i)
                    .iter()
                    .zip(b.row(i))
                    .map(|(&x, &y)| (x - y) * (x - y))
                    .sum::<F>()
                    .sqrt()
            })
            .collect();
        let value = matrix(r, 1, dist.clone());
        Ok(self.tape.push(value, &[self.id, rhs.id], || {
            Box::new(move |g| {
                let mut ga = vec![F::zero(); r * c];
                for i in 0..r {
                    if dist[i] == F::zero() {
                        continue;
                    }
                    let s = g.data()[i] / dist[i];
                    for j in 0..c {
                        ga[i * c + j] = s * (a.row(i)[j] - b.row(i)[j]);
                    }
                }
                let gb = ga.iter().map(|&v| -v).collect();
                vec![
                    Some(Tensor::new(a.shape().to_vec(), ga).unwrap()),
                    Some(Tensor::new(b.shape().to_vec(), gb).unwrap()),
                ]
            })
        }))
    }
}
