//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] is built fresh for every minibatch. Each operation evaluates its
//! forward value immediately and records enough information to propagate the
//! adjoint in [`Tape::backward`]. Parameters enter the tape through
//! [`Tape::param`] and their gradients are accumulated back into the owning
//! [`ParamStore`].

use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    Param(ParamId),
    /// `x · wᵀ + b` with `x: [B×n]`, `w: [p×n]`, `b: [p]`.
    Affine {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    /// `a · b` with `a: [B×k]`, `b: [k×m]`.
    MatMul {
        a: Var,
        b: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    Tanh(Var),
    Sigmoid(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Var, Var),
    GatherRows {
        table: Var,
        rows: Vec<usize>,
    },
    /// Row `i` comes from `new` when `take_new[i]`, else from `old`.
    BlendRows {
        take_new: Vec<bool>,
        new: Var,
        old: Var,
    },
    /// Row-wise `softmax((a + g) / tau)`; the noise `g` is a constant.
    GumbelSoftmax {
        logits: Var,
        inv_tau: F,
    },
    /// Mean cross entropy over rows; `probs` caches the softmax.
    SoftmaxXent {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<F>,
    },
    Sum(Var),
}

struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

/// Recording of one forward computation.
pub struct Tape<F: Scalar = f32> {
    nodes: Vec<Node<F>>,
}

/// Adjoints of every node after [`Tape::backward`].
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads[v.0].as_ref()
    }
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn check(cond: bool, op: &'static str, detail: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::shape(op, detail()))
    }
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

#[inline]
fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut acc = F::ZERO;
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

#[inline]
fn axpy<F: Scalar>(alpha: F, x: &[F], y: &mut [F]) {
    for (xi, yi) in x.iter().zip(y.iter_mut()) {
        *yi += alpha * *xi;
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Brings a trainable tensor onto the tape.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        check(wv.rank() == 2, "affine", || {
            format!("weight must be a matrix, got {:?}", wv.shape())
        })?;
        let (rows, n, p) = (xv.rows(), xv.cols(), wv.shape()[0]);
        check(wv.shape()[1] == n, "affine", || {
            format!("input width {n} vs weight {:?}", wv.shape())
        })?;
        let mut out = match b {
            Some(b) => {
                let bv = self.value(b);
                check(bv.len() == p, "affine", || {
                    format!("bias length {} vs output width {p}", bv.len())
                })?;
                let mut out = Vec::with_capacity(rows * p);
                for _ in 0..rows {
                    out.extend_from_slice(bv.data());
                }
                out
            }
            None => vec![F::ZERO; rows * p],
        };
        for r in 0..rows {
            let xr = xv.row(r);
            let orow = &mut out[r * p..(r + 1) * p];
            for (j, o) in orow.iter_mut().enumerate() {
                *o += dot(xr, wv.row(j));
            }
        }
        let shape = if xv.rank() == 1 { vec![p] } else { vec![rows, p] };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Affine { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (rows, k) = (av.rows(), av.cols());
        check(bv.rank() == 2 && bv.shape()[0] == k, "matmul", || {
            format!("{:?} x {:?}", av.shape(), bv.shape())
        })?;
        let m = bv.shape()[1];
        let mut out = vec![F::ZERO; rows * m];
        for r in 0..rows {
            let orow = &mut out[r * m..(r + 1) * m];
            for (j, &aj) in av.row(r).iter().enumerate() {
                axpy(aj, bv.row(j), orow);
            }
        }
        let shape = if av.rank() == 1 { vec![m] } else { vec![rows, m] };
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul { a, b }))
    }

    fn zip_with(&self, op: &'static str, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        let (av, bv) = (self.value(a), self.value(b));
        check(av.same_shape(bv), op, || {
            format!("{:?} vs {:?}", av.shape(), bv.shape())
        })?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    fn map(&self, a: Var, f: impl Fn(F) -> F) -> Tensor<F> {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| f(x)).collect();
        Tensor::new(av.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: F) -> Var {
        let v = self.map(a, |x| x * factor);
        self.push(v, Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, Scalar::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, Scalar::sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    /// Columns `[start, start + len)` of every row.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        check(start + len <= cols, "slice_cols", || {
            format!("[{start}, {}) of {cols} columns", start + len)
        })?;
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let shape = if xv.rank() == 1 { vec![len] } else { vec![rows, len] };
        Ok(self.push(Tensor::new(shape, out)?, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        check(av.rows() == bv.rows() && av.rank() == bv.rank(), "concat_cols", || {
            format!("{:?} and {:?}", av.shape(), bv.shape())
        })?;
        let (rows, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut out = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            out.extend_from_slice(av.row(r));
            out.extend_from_slice(bv.row(r));
        }
        let shape = if av.rank() == 1 {
            vec![ca + cb]
        } else {
            vec![rows, ca + cb]
        };
        Ok(self.push(Tensor::new(shape, out)?, Op::ConcatCols(a, b)))
    }

    /// Row lookup: output row `i` is `table[rows[i]]`.
    pub fn gather_rows(&mut self, table: Var, rows: Vec<usize>) -> Result<Var> {
        let tv = self.value(table);
        let (n, c) = (tv.rows(), tv.cols());
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::IdOutOfRange { id: bad, limit: n });
        }
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in &rows {
            out.extend_from_slice(tv.row(r));
        }
        let value = Tensor::matrix(rows.len(), c, out)?;
        Ok(self.push(value, Op::GatherRows { table, rows }))
    }

    pub fn blend_rows(&mut self, take_new: Vec<bool>, new: Var, old: Var) -> Result<Var> {
        let (nv, ov) = (self.value(new), self.value(old));
        check(nv.same_shape(ov) && nv.rows() == take_new.len(), "blend_rows", || {
            format!("{:?} / {:?} with {} mask rows", nv.shape(), ov.shape(), take_new.len())
        })?;
        let mut out = Vec::with_capacity(nv.len());
        for (r, &t) in take_new.iter().enumerate() {
            out.extend_from_slice(if t { nv.row(r) } else { ov.row(r) });
        }
        let value = Tensor::new(nv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::BlendRows { take_new, new, old }))
    }

    /// Row-wise Gumbel-Softmax relaxation `softmax((a + g) / tau)`.
    ///
    /// `noise` has the same shape as `logits` and is treated as a constant.
    pub fn gumbel_softmax(&mut self, logits: Var, noise: &[F], tau: F) -> Result<Var> {
        if !(tau > F::ZERO) {
            return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
        }
        let lv = self.value(logits);
        check(noise.len() == lv.len(), "gumbel_softmax", || {
            format!("{} noise values for {:?}", noise.len(), lv.shape())
        })?;
        let inv_tau = F::ONE / tau;
        let k = lv.cols();
        let mut out = Vec::with_capacity(lv.len());
        for r in 0..lv.rows() {
            let start = out.len();
            let row = lv.row(r);
            let g = &noise[r * k..(r + 1) * k];
            out.extend(row.iter().zip(g).map(|(&a, &g)| (a + g) * inv_tau));
            softmax_in_place(&mut out[start..]);
        }
        let value = Tensor::new(lv.shape().to_vec(), out)?;
        Ok(self.push(value, Op::GumbelSoftmax { logits, inv_tau }))
    }

    /// Mean softmax cross entropy of each row of `logits` against `labels`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, c) = (lv.rows(), lv.cols());
        check(rows == labels.len(), "softmax_cross_entropy", || {
            format!("{rows} rows vs {} labels", labels.len())
        })?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::LabelOutOfRange { label: bad, classes: c });
        }
        let mut probs = Vec::with_capacity(lv.len());
        let mut total = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            let row = lv.row(r);
            let lse = log_sum_exp(row);
            total += (lse - row[label]).to_f64();
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
        }
        let loss = F::from_f64(total / rows as f64);
        let op = Op::SoftmaxXent {
            logits,
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.push(Tensor::scalar(loss), op))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Propagates adjoints from the scalar `loss` and adds parameter gradients
    /// into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<F>) -> Result<Gradients<F>> {
        let lv = self.value(loss);
        check(lv.len() == 1, "backward", || {
            format!("loss must be a scalar, got {:?}", lv.shape())
        })?;
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), F::ONE));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads, store);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<F>, g: &Tensor<F>, grads: &mut [Option<Tensor<F>>], store: &mut ParamStore<F>) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => add_into(store.grad_mut(*id).data_mut(), g.data()),
            Op::Affine { x, w, b } => {
                let xv = &nodes[x.0].value;
                let wv = &nodes[w.0].value;
                let (rows, p) = (xv.rows(), wv.shape()[0]);
                {
                    let dx = slot(grads, nodes, *x);
                    for r in 0..rows {
                        let gr = &g.data()[r * p..(r + 1) * p];
                        let dxr = dx.row_mut(r);
                        for (j, &gj) in gr.iter().enumerate() {
                            axpy(gj, wv.row(j), dxr);
                        }
                    }
                }
                {
                    let dw = slot(grads, nodes, *w);
                    for r in 0..rows {
                        let gr = &g.data()[r * p..(r + 1) * p];
                        let xr = xv.row(r);
                        for (j, &gj) in gr.iter().enumerate() {
                            axpy(gj, xr, dw.row_mut(j));
                        }
                    }
                }
                if let Some(b) = b {
                    let db = slot(grads, nodes, *b);
                    for r in 0..rows {
                        add_into(db.data_mut(), &g.data()[r * p..(r + 1) * p]);
                    }
                }
            }
            Op::MatMul { a, b } => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                let (rows, m) = (av.rows(), bv.shape()[1]);
                {
                    let da = slot(grads, nodes, *a);
                    for r in 0..rows {
                        let gr = &g.data()[r * m..(r + 1) * m];
                        let dar = da.row_mut(r);
                        for (j, d) in dar.iter_mut().enumerate() {
                            *d += dot(gr, bv.row(j));
                        }
                    }
                }
                let db = slot(grads, nodes, *b);
                for r in 0..rows {
                    let gr = &g.data()[r * m..(r + 1) * m];
                    for (j, &aj) in av.row(r).iter().enumerate() {
                        axpy(aj, gr, db.row_mut(j));
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(slot(grads, nodes, *a).data_mut(), g.data());
                add_into(slot(grads, nodes, *b).data_mut(), g.data());
            }
            Op::Sub(a, b) => {
                add_into(slot(grads, nodes, *a).data_mut(), g.data());
                let db = slot(grads, nodes, *b);
                for (d, &gi) in db.data_mut().iter_mut().zip(g.data()) {
                    *d -= gi;
                }
            }
            Op::Mul(a, b) => {
                let av = &nodes[a.0].value;
                let bv = &nodes[b.0].value;
                {
                    let da = slot(grads, nodes, *a);
                    for ((d, &gi), &bi) in da.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *d += gi * bi;
                    }
                }
                let db = slot(grads, nodes, *b);
                for ((d, &gi), &ai) in db.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                    *d += gi * ai;
                }
            }
            Op::Scale(a, factor) => {
                let da = slot(grads, nodes, *a);
                for (d, &gi) in da.data_mut().iter_mut().zip(g.data()) {
                    *d += gi * *factor;
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                let da = slot(grads, nodes, *a);
                for ((d, &gi), &yi) in da.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *d += gi * (F::ONE - yi * yi);
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let da = slot(grads, nodes, *a);
                for ((d, &gi), &yi) in da.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *d += gi * yi * (F::ONE - yi);
                }
            }
            Op::SliceCols { x, start } => {
                let len = node.value.cols();
                let dx = slot(grads, nodes, *x);
                for r in 0..dx.rows() {
                    let gr = &g.data()[r * len..(r + 1) * len];
                    add_into(&mut dx.row_mut(r)[*start..*start + len], gr);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = nodes[a.0].value.cols();
                let total = node.value.cols();
                {
                    let da = slot(grads, nodes, *a);
                    for r in 0..da.rows() {
                        add_into(da.row_mut(r), &g.data()[r * total..r * total + ca]);
                    }
                }
                let db = slot(grads, nodes, *b);
                for r in 0..db.rows() {
                    add_into(db.row_mut(r), &g.data()[r * total + ca..(r + 1) * total]);
                }
            }
            Op::GatherRows { table, rows } => {
                let c = node.value.cols();
                let dt = slot(grads, nodes, *table);
                for (i, &r) in rows.iter().enumerate() {
                    add_into(dt.row_mut(r), &g.data()[i * c..(i + 1) * c]);
                }
            }
            Op::BlendRows { take_new, new, old } => {
                let c = node.value.cols();
                for (r, &t) in take_new.iter().enumerate() {
                    let target = if t { *new } else { *old };
                    add_into(slot(grads, nodes, target).row_mut(r), &g.data()[r * c..(r + 1) * c]);
                }
            }
            Op::GumbelSoftmax { logits, inv_tau } => {
                // dL/da_j = (1/tau) * t_j * (g_j - sum_l g_l t_l)
                let t = &node.value;
                let k = t.cols();
                let da = slot(grads, nodes, *logits);
                for r in 0..t.rows() {
                    let tr = t.row(r);
                    let gr = &g.data()[r * k..(r + 1) * k];
                    let inner = dot(gr, tr);
                    for ((d, &tj), &gj) in da.row_mut(r).iter_mut().zip(tr).zip(gr) {
                        *d += *inv_tau * tj * (gj - inner);
                    }
                }
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let scale = g.data()[0] / F::from_f64(labels.len() as f64);
                let c = nodes[logits.0].value.cols();
                let dl = slot(grads, nodes, *logits);
                for (r, &label) in labels.iter().enumerate() {
                    let row = dl.row_mut(r);
                    for (j, d) in row.iter_mut().enumerate() {
                        let mut p = probs[r * c + j];
                        if j == label {
                            p -= F::ONE;
                        }
                        *d += scale * p;
                    }
                }
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                slot(grads, nodes, *a).data_mut().iter_mut().for_each(|d| *d += s);
            }
        }
    }
}

fn slot<'a, F: Scalar>(grads: &'a mut [Option<Tensor<F>>], nodes: &[Node<F>], v: Var) -> &'a mut Tensor<F> {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(nodes[v.0].value.shape()))
}

pub(crate) fn log_sum_exp<F: Scalar>(row: &[F]) -> F {
    let max = row.iter().copied().fold(row[0], Scalar::max);
    let s: F = row.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

pub(crate) fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().copied().fold(row[0], Scalar::max);
    let mut s = F::ZERO;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        s += *x;
    }
    for x in row.iter_mut() {
        *x = *x / s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn naive_affine(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
        let (rows, n, p) = (x.rows(), x.cols(), w.shape()[0]);
        let mut out = vec![0.0; rows * p];
        for r in 0..rows {
            for j in 0..p {
                let mut s = b.data()[j];
                for i in 0..n {
                    s += w.get(&[j, i]) * x.data()[r * n + i];
                }
                out[r * p + j] = s;
            }
        }
        out
    }

    #[test]
    fn affine_diagonal_map() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2], &[1.0, 0.0]));
        let w = tape.constant(t(&[2, 2], &[2.0, 0.0, 0.0, 3.0]));
        let b = tape.constant(t(&[2], &[0.0, 0.0]));
        let y = tape.affine(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[2.0, 0.0]);
        assert_eq!(tape.value(y).shape(), &[2]);
    }

    #[test]
    fn affine_zero_input_passes_bias() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[2], &[0.0, 0.0]));
        let w = tape.constant(t(&[2, 2], &[7.0, -3.0, 0.5, 11.0]));
        let b = tape.constant(t(&[2], &[5.0, -1.0]));
        let y = tape.affine(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0, -1.0]);
    }

    #[test]
    fn affine_matches_triple_loop() {
        let mut rng = crate::tensor_core::Rng::new(3);
        let mut draw = |n: usize| (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>();
        // batch of 2 inputs of width 4 through a 3x4 map
        let x = t(&[2, 4], &draw(8));
        let w = t(&[3, 4], &draw(12));
        let b = t(&[3], &draw(3));
        let expected = naive_affine(&x, &w, &b);
        let mut tape = Tape::<f64>::new();
        let (xv, wv, bv) = (tape.constant(x), tape.constant(w), tape.constant(b));
        let y = tape.affine(xv, wv, Some(bv)).unwrap();
        for (a, e) in tape.value(y).data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn affine_rejects_bad_shapes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
        let w = tape.constant(t(&[2, 2], &[1.0; 4]));
        assert!(matches!(tape.affine(x, w, None), Err(Error::Shape { .. })));
    }

    #[test]
    fn elementwise_fixed_points() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(t(&[1], &[0.0]));
        let th = tape.tanh(z);
        let sg = tape.sigmoid(z);
        assert_eq!(tape.value(th).data(), &[0.0]);
        assert_eq!(tape.value(sg).data(), &[0.5]);
    }

    #[test]
    fn tanh_gradient_matches_central_difference() {
        let x0 = 0.3f64;
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", Tensor::vector(vec![x0]));
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let y = tape.tanh(x);
        tape.backward(y, &mut store).unwrap();
        let analytic = store.grad(id).data()[0];
        let h = 1e-4;
        let numeric = ((x0 + h).tanh() - (x0 - h).tanh()) / (2.0 * h);
        assert!(((analytic - numeric) / numeric).abs() < 1e-4);
    }

    #[test]
    fn cross_entropy_uniform_and_saturated() {
        let mut tape = Tape::<f64>::new();
        let l = tape.constant(t(&[1, 2], &[0.0, 0.0]));
        let loss = tape.softmax_cross_entropy(l, &[0]).unwrap();
        assert!((tape.value(loss).data()[0] - std::f64::consts::LN_2).abs() < 1e-12);

        let mut tape = Tape::<f32>::new();
        let l = tape.constant(Tensor::matrix(1, 2, vec![1000.0, 0.0]).unwrap());
        let loss = tape.softmax_cross_entropy(l, &[0]).unwrap();
        let v = tape.value(loss).data()[0];
        assert!(v.is_finite() && v.abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut tape = Tape::<f64>::new();
        let l = tape.constant(t(&[1, 2], &[0.0, 0.0]));
        assert!(matches!(
            tape.softmax_cross_entropy(l, &[2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn cross_entropy_matches_high_precision_formula() {
        // five-class case evaluated directly in f64 as the reference
        let logits = [0.37f64, -1.21, 2.05, 0.002, -0.66];
        let label = 3;
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let denom: f64 = logits.iter().map(|x| (x - max).exp()).sum();
        let reference = -((logits[label] - max).exp() / denom).ln();

        let mut tape = Tape::<f32>::new();
        let l = tape.constant(Tensor::matrix(1, 5, logits.iter().map(|&x| x as f32).collect()).unwrap());
        let loss = tape.softmax_cross_entropy(l, &[label]).unwrap();
        assert!((tape.value(loss).data()[0] as f64 - reference).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("l", t(&[1, 3], &[0.5, -0.2, 1.0]));
        let mut tape = Tape::new();
        let l = tape.param(&store, id);
        let loss = tape.softmax_cross_entropy(l, &[1]).unwrap();
        tape.backward(loss, &mut store).unwrap();
        let vals = [0.5f64, -0.2, 1.0];
        let z: f64 = vals.iter().map(|v| v.exp()).sum();
        for (j, &g) in store.grad(id).data().iter().enumerate() {
            let expected = vals[j].exp() / z - if j == 1 { 1.0 } else { 0.0 };
            assert!((g - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn gather_and_blend_route_gradients() {
        let mut store = ParamStore::<f64>::new();
        let table = store.add("t", t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let mut tape = Tape::new();
        let tv = tape.param(&store, table);
        let rows = tape.gather_rows(tv, vec![2, 0, 2]).unwrap();
        assert_eq!(tape.value(rows).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let zeros = tape.constant(Tensor::zeros(&[3, 2]));
        let mixed = tape.blend_rows(vec![true, false, true], rows, zeros).unwrap();
        let s = tape.sum(mixed);
        tape.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(table).data(), &[0.0, 0.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn gather_rejects_out_of_range_row() {
        let mut tape = Tape::<f64>::new();
        let tv = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.gather_rows(tv, vec![2]), Err(Error::IdOutOfRange { .. })));
    }

    #[test]
    fn gumbel_softmax_rejects_nonpositive_temperature() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(t(&[1, 2], &[0.0, 0.0]));
        assert!(tape.gumbel_softmax(a, &[0.0, 0.0], 0.0).is_err());
        assert!(tape.gumbel_softmax(a, &[0.0, 0.0], -1.0).is_err());
    }
}
