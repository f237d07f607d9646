//! Recurrent encoders and the softmax head.
//!
//! Each cell has two implementations: a batched, differentiable one that
//! records onto a [`Tape`], and a plain per-sequence one over slices that the
//! evaluation and deployment paths share so their outputs agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_core::{ParamId, ParamStore, Rng, Scalar, Tape, Tensor, Var};

const INIT_RANGE: f64 = 0.08;
const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    /// Gates `i, f, g, o` stacked in that order in one `4H × (d+H)` matrix.
    Lstm,
    /// `h' = tanh(W·[x; h] + b)`.
    Rnn,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Rnn => 1,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            CellKind::Lstm => 0,
            CellKind::Rnn => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(CellKind::Lstm),
            1 => Some(CellKind::Rnn),
            _ => None,
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "rnn" => Ok(CellKind::Rnn),
            _ => Err(Error::invalid(format!("unknown cell {s:?}"))),
        }
    }
}

/// Single-layer unidirectional recurrent encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub kind: CellKind,
    pub input: usize,
    pub hidden: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Encoder {
    /// Weights Uniform(−0.08, 0.08); biases zero except the LSTM forget gate,
    /// which starts at 1.
    pub fn new<F: Scalar>(
        kind: CellKind,
        input: usize,
        hidden: usize,
        store: &mut ParamStore<F>,
        rng: &mut Rng,
    ) -> Self {
        let rows = kind.gates() * hidden;
        let cols = input + hidden;
        let w = (0..rows * cols)
            .map(|_| F::from_f64(rng.uniform_range(-INIT_RANGE, INIT_RANGE)))
            .collect();
        let mut b = vec![F::ZERO; rows];
        if kind == CellKind::Lstm {
            b[hidden..2 * hidden]
                .iter_mut()
                .for_each(|x| *x = F::from_f64(FORGET_BIAS));
        }
        let weight = store.add("encoder.weight", Tensor::matrix(rows, cols, w).expect("shape"));
        let bias = store.add("encoder.bias", Tensor::vector(b));
        Self {
            kind,
            input,
            hidden,
            weight,
            bias,
        }
    }

    pub fn num_params(&self) -> usize {
        let g = self.kind.gates();
        g * (self.hidden * (self.input + self.hidden) + self.hidden)
    }

    pub fn bind<F: Scalar>(&self, tape: &mut Tape<F>, store: &ParamStore<F>) -> BoundEncoder {
        BoundEncoder {
            kind: self.kind,
            hidden: self.hidden,
            weight: tape.param(store, self.weight),
            bias: tape.param(store, self.bias),
        }
    }
}

/// Recurrent state on a tape (`c` is unused by the simple RNN).
#[derive(Clone, Copy, Debug)]
pub struct State {
    pub h: Var,
    pub c: Var,
}

pub struct BoundEncoder {
    kind: CellKind,
    hidden: usize,
    weight: Var,
    bias: Var,
}

impl BoundEncoder {
    pub fn zero_state<F: Scalar>(&self, tape: &mut Tape<F>, batch: usize) -> State {
        let h = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        State { h, c: h }
    }

    /// One step for a batch. Rows with `live == false` keep their state.
    pub fn step<F: Scalar>(&self, tape: &mut Tape<F>, x: Var, state: State, live: &[bool]) -> Result<State> {
        let h_dim = self.hidden;
        let xh = tape.concat_cols(x, state.h)?;
        let z = tape.affine(xh, self.weight, Some(self.bias))?;
        let next = match self.kind {
            CellKind::Lstm => {
                let zi = tape.slice_cols(z, 0, h_dim)?;
                let zf = tape.slice_cols(z, h_dim, h_dim)?;
                let zg = tape.slice_cols(z, 2 * h_dim, h_dim)?;
                let zo = tape.slice_cols(z, 3 * h_dim, h_dim)?;
                let (i, f, g, o) = (tape.sigmoid(zi), tape.sigmoid(zf), tape.tanh(zg), tape.sigmoid(zo));
                let keep = tape.mul(f, state.c)?;
                let write = tape.mul(i, g)?;
                let c = tape.add(keep, write)?;
                let tc = tape.tanh(c);
                let h = tape.mul(o, tc)?;
                State { h, c }
            }
            CellKind::Rnn => {
                let h = tape.tanh(z);
                State { h, c: h }
            }
        };
        if live.iter().all(|&l| l) {
            return Ok(next);
        }
        let h = tape.blend_rows(live.to_vec(), next.h, state.h)?;
        let c = match self.kind {
            CellKind::Lstm => tape.blend_rows(live.to_vec(), next.c, state.c)?,
            CellKind::Rnn => h,
        };
        Ok(State { h, c })
    }
}

/// Softmax output layer, `C × H` weights plus `C` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub classes: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Head {
    pub fn new<F: Scalar>(hidden: usize, classes: usize, store: &mut ParamStore<F>, rng: &mut Rng) -> Self {
        let w = (0..classes * hidden)
            .map(|_| F::from_f64(rng.uniform_range(-INIT_RANGE, INIT_RANGE)))
            .collect();
        Self {
            classes,
            weight: store.add("head.weight", Tensor::matrix(classes, hidden, w).expect("shape")),
            bias: store.add("head.bias", Tensor::zeros(&[classes])),
        }
    }

    pub fn num_params(&self, hidden: usize) -> usize {
        self.classes * hidden + self.classes
    }

    pub fn logits<F: Scalar>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, h: Var) -> Result<Var> {
        let (w, b) = (tape.param(store, self.weight), tape.param(store, self.bias));
        tape.affine(h, w, Some(b))
    }
}

#[inline]
fn dot_into<F: Scalar>(row: &[F], x: &[F], h: &[F], bias: F) -> F {
    let (wx, wh) = row.split_at(x.len());
    let mut acc = bias;
    for (w, v) in wx.iter().zip(x) {
        acc += *w * *v;
    }
    for (w, v) in wh.iter().zip(h) {
        acc += *w * *v;
    }
    acc
}

/// One LSTM step over slices: returns `(h', c')`.
#[allow(clippy::needless_range_loop)]
pub fn lstm_step<F: Scalar>(
    weight: &Tensor<F>,
    bias: &Tensor<F>,
    x: &[F],
    h: &[F],
    c: &[F],
) -> Result<(Vec<F>, Vec<F>)> {
    let hd = h.len();
    if weight.shape() != [4 * hd, x.len() + hd] || bias.len() != 4 * hd || c.len() != hd {
        return Err(Error::shape(
            "lstm_step",
            format!(
                "weight {:?}, bias {}, x {}, h {hd}, c {}",
                weight.shape(),
                bias.len(),
                x.len(),
                c.len()
            ),
        ));
    }
    let b = bias.data();
    let z = |row: usize| dot_into(weight.row(row), x, h, b[row]);
    let mut h_next = Vec::with_capacity(hd);
    let mut c_next = Vec::with_capacity(hd);
    for j in 0..hd {
        let i = z(j).sigmoid();
        let f = z(hd + j).sigmoid();
        let g = z(2 * hd + j).tanh();
        let o = z(3 * hd + j).sigmoid();
        let cj = f * c[j] + i * g;
        c_next.push(cj);
        h_next.push(o * cj.tanh());
    }
    Ok((h_next, c_next))
}

/// One simple-RNN step over slices.
pub fn rnn_step<F: Scalar>(weight: &Tensor<F>, bias: &Tensor<F>, x: &[F], h: &[F]) -> Result<Vec<F>> {
    let hd = h.len();
    if weight.shape() != [hd, x.len() + hd] || bias.len() != hd {
        return Err(Error::shape(
            "rnn_step",
            format!(
                "weight {:?}, bias {}, x {}, h {hd}",
                weight.shape(),
                bias.len(),
                x.len()
            ),
        ));
    }
    let b = bias.data();
    Ok((0..hd).map(|j| dot_into(weight.row(j), x, h, b[j]).tanh()).collect())
}

/// Runs the encoder over a sequence of input vectors from a zero state and
/// returns the final hidden state.
pub fn encode_plain<F: Scalar, I>(
    kind: CellKind,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
    hidden: usize,
    inputs: I,
) -> Result<Vec<F>>
where
    I: IntoIterator<Item = Result<Vec<F>>>,
{
    let mut h = vec![F::ZERO; hidden];
    let mut c = vec![F::ZERO; hidden];
    let mut steps = 0;
    for x in inputs {
        let x = x?;
        match kind {
            CellKind::Lstm => {
                let (h2, c2) = lstm_step(weight, bias, &x, &h, &c)?;
                h = h2;
                c = c2;
            }
            CellKind::Rnn => h = rnn_step(weight, bias, &x, &h)?,
        }
        steps += 1;
    }
    if steps == 0 {
        return Err(Error::invalid("cannot encode an empty sequence"));
    }
    Ok(h)
}

/// `W·h + b` over slices.
pub fn head_plain<F: Scalar>(weight: &Tensor<F>, bias: &Tensor<F>, h: &[F]) -> Vec<F> {
    (0..weight.rows())
        .map(|j| {
            let mut acc = bias.data()[j];
            for (w, v) in weight.row(j).iter().zip(h) {
                acc += *w * *v;
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Scalar-loop LSTM step written from the cell equations, independent of
    /// both library implementations.
    fn reference_lstm(w: &[Vec<f64>], b: &[f64], x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = h.len();
        let mut input = x.to_vec();
        input.extend_from_slice(h);
        let pre = |r: usize| b[r] + (0..input.len()).map(|k| w[r][k] * input[k]).sum::<f64>();
        let mut hn = vec![0.0; hd];
        let mut cn = vec![0.0; hd];
        for j in 0..hd {
            let i = sig(pre(j));
            let f = sig(pre(hd + j));
            let g = pre(2 * hd + j).tanh();
            let o = sig(pre(3 * hd + j));
            cn[j] = f * c[j] + i * g;
            hn[j] = o * cn[j].tanh();
        }
        (hn, cn)
    }

    fn random(rng: &mut Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect()
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let w = Tensor::<f64>::zeros(&[12, 6]);
        let b = Tensor::zeros(&[12]);
        let (h, _) = lstm_step(&w, &b, &[0.3, -2.0, 1.0], &[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        let w = Tensor::<f64>::zeros(&[2, 5]);
        let b = Tensor::zeros(&[2]);
        assert_eq!(rnn_step(&w, &b, &[1.0, 2.0, 3.0], &[0.5, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn plain_and_tape_lstm_match_reference() {
        let mut rng = Rng::new(21);
        let (d, hd, batch) = (3, 4, 2);
        let w_rows: Vec<Vec<f64>> = (0..4 * hd).map(|_| random(&mut rng, d + hd)).collect();
        let b = random(&mut rng, 4 * hd);
        let weight = Tensor::matrix(4 * hd, d + hd, w_rows.concat()).unwrap();
        let bias = Tensor::vector(b.clone());
        let xs: Vec<Vec<f64>> = (0..batch).map(|_| random(&mut rng, d)).collect();
        let hs: Vec<Vec<f64>> = (0..batch).map(|_| random(&mut rng, hd)).collect();
        let cs: Vec<Vec<f64>> = (0..batch).map(|_| random(&mut rng, hd)).collect();

        let mut store = ParamStore::new();
        let enc = Encoder {
            kind: CellKind::Lstm,
            input: d,
            hidden: hd,
            weight: store.add("w", weight.clone()),
            bias: store.add("b", bias.clone()),
        };
        let mut tape = Tape::new();
        let bound = enc.bind(&mut tape, &store);
        let x = tape.constant(Tensor::matrix(batch, d, xs.concat()).unwrap());
        let h = tape.constant(Tensor::matrix(batch, hd, hs.concat()).unwrap());
        let c = tape.constant(Tensor::matrix(batch, hd, cs.concat()).unwrap());
        let next = bound.step(&mut tape, x, State { h, c }, &[true, true]).unwrap();

        for r in 0..batch {
            let (rh, rc) = reference_lstm(&w_rows, &b, &xs[r], &hs[r], &cs[r]);
            let (ph, pc) = lstm_step(&weight, &bias, &xs[r], &hs[r], &cs[r]).unwrap();
            for j in 0..hd {
                assert!((ph[j] - rh[j]).abs() < 1e-5);
                assert!((pc[j] - rc[j]).abs() < 1e-5);
                assert!((tape.value(next.h).row(r)[j] - rh[j]).abs() < 1e-5);
                assert!((tape.value(next.c).row(r)[j] - rc[j]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn masked_rows_keep_state() {
        let mut rng = Rng::new(4);
        let mut store = ParamStore::<f64>::new();
        let enc = Encoder::new(CellKind::Lstm, 2, 3, &mut store, &mut rng);
        let mut tape = Tape::new();
        let bound = enc.bind(&mut tape, &store);
        let x = tape.constant(Tensor::matrix(2, 2, random(&mut rng, 4)).unwrap());
        let h = tape.constant(Tensor::matrix(2, 3, random(&mut rng, 6)).unwrap());
        let c = tape.constant(Tensor::matrix(2, 3, random(&mut rng, 6)).unwrap());
        let next = bound.step(&mut tape, x, State { h, c }, &[false, true]).unwrap();
        assert_eq!(tape.value(next.h).row(0), tape.value(h).row(0));
        assert_eq!(tape.value(next.c).row(0), tape.value(c).row(0));
        assert_ne!(tape.value(next.h).row(1), tape.value(h).row(1));
    }

    #[test]
    fn rnn_matches_reference_and_stays_bounded() {
        let mut rng = Rng::new(8);
        let (d, hd) = (3, 2);
        let w: Vec<Vec<f64>> = (0..hd).map(|_| random(&mut rng, d + hd)).collect();
        let b = random(&mut rng, hd);
        let weight = Tensor::matrix(hd, d + hd, w.concat()).unwrap();
        let bias = Tensor::vector(b.clone());
        let mut h = vec![0.0; hd];
        for _ in 0..20 {
            let x: Vec<f64> = (0..d).map(|_| rng.uniform_range(-10.0, 10.0)).collect();
            let mut input = x.clone();
            input.extend_from_slice(&h);
            let expected: Vec<f64> = (0..hd)
                .map(|j| (b[j] + (0..d + hd).map(|k| w[j][k] * input[k]).sum::<f64>()).tanh())
                .collect();
            h = rnn_step(&weight, &bias, &x, &h).unwrap();
            for j in 0..hd {
                assert!((h[j] - expected[j]).abs() < 1e-5);
                assert!(h[j].abs() <= 1.0);
            }
        }
    }

    #[test]
    fn shape_errors_and_empty_sequences() {
        let w = Tensor::<f64>::zeros(&[8, 4]);
        let b = Tensor::zeros(&[8]);
        assert!(lstm_step(&w, &b, &[1.0], &[0.0; 2], &[0.0; 2]).is_err());
        assert!(encode_plain(CellKind::Lstm, &w, &b, 2, std::iter::empty()).is_err());
    }

    #[test]
    fn zero_head_gives_uniform_logits() {
        let w = Tensor::<f64>::zeros(&[3, 4]);
        let b = Tensor::zeros(&[3]);
        let logits = head_plain(&w, &b, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(logits, vec![0.0; 3]);
        assert_eq!(crate::embed::argmax(&logits), 0);
        assert_eq!(crate::embed::argmax(&[2.0, -1.0]), 0);
    }
}
