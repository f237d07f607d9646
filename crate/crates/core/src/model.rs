//! The full classifier: embedder → recurrent encoder → softmax head.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{TokenizerKind, Vocab, PAD};
use crate::embed::{argmax, EmbedMode, Embedder};
use crate::error::{Error, Result};
use crate::seq::{encode_plain, head_plain, CellKind, Encoder, Head};
use crate::tensor_core::{NoiseSource, ParamStore, Rng, Scalar, Tape, Var};

/// Gumbel-Softmax temperature used throughout training.
pub const DEFAULT_TAU: f64 = 0.9;
pub const DEFAULT_HIDDEN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: EmbedMode,
    pub cell: CellKind,
    pub hidden: usize,
    pub classes: usize,
    pub tau: f64,
}

impl ModelConfig {
    pub fn lstm(mode: EmbedMode, classes: usize) -> Self {
        Self {
            mode,
            cell: CellKind::Lstm,
            hidden: DEFAULT_HIDDEN,
            classes,
            tau: DEFAULT_TAU,
        }
    }

    /// Parameters outside the embedder (encoder and head).
    pub fn other_params(&self) -> usize {
        let d = self.mode.output_width();
        let h = self.hidden;
        self.cell.gates() * (h * (d + h) + h) + h * self.classes + self.classes
    }
}

/// Parameter layout of a classifier; values live in a separate [`ParamStore`]
/// so the same architecture runs in `f32` and `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub config: ModelConfig,
    pub embedder: Embedder,
    pub encoder: Encoder,
    pub head: Head,
}

impl Architecture {
    pub fn new<F: Scalar>(config: ModelConfig, store: &mut ParamStore<F>, rng: &mut Rng) -> Result<Self> {
        if config.hidden == 0 || config.classes == 0 {
            return Err(Error::invalid("hidden size and class count must be positive"));
        }
        if !(config.tau > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {}",
                config.tau
            )));
        }
        let embedder = Embedder::new(config.mode, store, rng)?;
        let encoder = Encoder::new(config.cell, config.mode.output_width(), config.hidden, store, rng);
        let head = Head::new(config.hidden, config.classes, store, rng);
        Ok(Self {
            config,
            embedder,
            encoder,
            head,
        })
    }

    /// Final hidden states `[B × H]` for a batch, padded on the right to the
    /// longest sequence; PAD positions leave the state untouched.
    pub fn batch_hidden<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        seqs: &[&[u32]],
        mut noise: Option<&mut dyn NoiseSource>,
    ) -> Result<Var> {
        if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::invalid("batch must hold non-empty sequences"));
        }
        let tau = F::from_f64(self.config.tau);
        let steps = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let emb = self.embedder.bind(tape, store);
        let enc = self.encoder.bind(tape, store);
        let mut state = enc.zero_state(tape, seqs.len());
        for t in 0..steps {
            let ids: Vec<u32> = seqs.iter().map(|s| s.get(t).copied().unwrap_or(PAD)).collect();
            let live: Vec<bool> = ids.iter().map(|&id| id != PAD).collect();
            // Reborrow with a fresh trait-object lifetime; `as_deref_mut` would
            // tie every step to the caller's lifetime.
            #[allow(clippy::manual_map)]
            let step_noise = match noise {
                Some(ref mut n) => Some(&mut **n as &mut dyn NoiseSource),
                None => None,
            };
            let x = emb.embed(tape, &ids, step_noise, tau)?;
            state = enc.step(tape, x, state, &live)?;
        }
        Ok(state.h)
    }

    pub fn batch_logits<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        seqs: &[&[u32]],
        noise: Option<&mut dyn NoiseSource>,
    ) -> Result<Var> {
        let h = self.batch_hidden(tape, store, seqs, noise)?;
        self.head.logits(tape, store, h)
    }

    /// Mean cross entropy of a batch.
    pub fn batch_loss<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        store: &ParamStore<F>,
        seqs: &[&[u32]],
        labels: &[usize],
        noise: Option<&mut dyn NoiseSource>,
    ) -> Result<Var> {
        let logits = self.batch_logits(tape, store, seqs, noise)?;
        tape.softmax_cross_entropy(logits, labels)
    }

    /// Evaluation-time final hidden state (hard cluster assignments, no noise).
    pub fn hidden_eval<F: Scalar>(&self, store: &ParamStore<F>, seq: &[u32]) -> Result<Vec<F>> {
        let inputs = seq
            .iter()
            .filter(|&&id| id != PAD)
            .map(|&id| self.embedder.embed_eval(store, id));
        encode_plain(
            self.config.cell,
            store.value(self.encoder.weight),
            store.value(self.encoder.bias),
            self.config.hidden,
            inputs,
        )
    }

    pub fn logits_eval<F: Scalar>(&self, store: &ParamStore<F>, seq: &[u32]) -> Result<Vec<F>> {
        let h = self.hidden_eval(store, seq)?;
        Ok(head_plain(
            store.value(self.head.weight),
            store.value(self.head.bias),
            &h,
        ))
    }

    pub fn predict_eval<F: Scalar>(&self, store: &ParamStore<F>, seq: &[u32]) -> Result<usize> {
        Ok(argmax(&self.logits_eval(store, seq)?))
    }

    /// Prediction with the noise-free relaxation `softmax(a/τ)` kept at test
    /// time instead of the argmax; a diagnostic for the soft/hard gap.
    pub fn predict_soft<F: Scalar>(&self, store: &ParamStore<F>, seq: &[u32]) -> Result<usize> {
        let mut tape = Tape::new();
        let logits = self.batch_logits(&mut tape, store, &[seq], None)?;
        Ok(argmax(tape.value(logits).row(0)))
    }
}

/// A trained classifier with everything needed to reproduce its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub arch: Architecture,
    pub store: ParamStore<f32>,
    pub vocab: Vocab,
    pub tokenizer: TokenizerKind,
    pub max_len: usize,
}

impl Classifier {
    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        self.vocab.encode(&self.tokenizer.tokenize(text, self.max_len))
    }

    pub fn predict(&self, seq: &[u32]) -> Result<usize> {
        self.arch.predict_eval(&self.store, seq)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut c: Classifier = serde_json::from_slice(&fs::read(path)?)?;
        c.store.restore_grads();
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::Tensor;

    fn toy(mode: EmbedMode, seed: u64) -> (Architecture, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let config = ModelConfig {
            hidden: 6,
            ..ModelConfig::lstm(mode, 3)
        };
        let arch = Architecture::new(config, &mut store, &mut Rng::new(seed)).unwrap();
        (arch, store)
    }

    #[test]
    fn other_params_counts_lstm_and_head() {
        let c = ModelConfig::lstm(EmbedMode::Ce { v: 3000, m: 5, k: 50 }, 2);
        assert_eq!(c.other_params(), 4 * (50 * 55 + 50) + 50 * 2 + 2);
        let mut store = ParamStore::<f32>::new();
        let arch = Architecture::new(c, &mut store, &mut Rng::new(0)).unwrap();
        let embed = c.mode.training_params();
        assert_eq!(store.num_scalars(), embed + c.other_params());
        assert_eq!(arch.encoder.num_params() + arch.head.num_params(50), c.other_params());
    }

    #[test]
    fn trailing_pads_do_not_change_predictions() {
        let (arch, store) = toy(EmbedMode::Cae { v: 9, m: 3, k: 3 }, 1);
        let seq = [3u32, 4, 1, 9];
        let padded = [3u32, 4, 1, 9, PAD, PAD, PAD];
        assert_eq!(
            arch.logits_eval(&store, &seq).unwrap(),
            arch.logits_eval(&store, &padded).unwrap()
        );

        let mut tape = Tape::new();
        let a = arch.batch_hidden(&mut tape, &store, &[&seq], None).unwrap();
        let b = arch.batch_hidden(&mut tape, &store, &[&padded], None).unwrap();
        assert_eq!(tape.value(a), tape.value(b));
    }

    #[test]
    fn batch_rows_match_single_sequences() {
        let (arch, store) = toy(EmbedMode::Se { v: 12, m: 4 }, 2);
        let mut rng = Rng::new(3);
        let seqs: Vec<Vec<u32>> = (0..8)
            .map(|_| (0..1 + rng.below(7)).map(|_| 1 + rng.below(12) as u32).collect())
            .collect();
        let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
        let mut tape = Tape::new();
        let batch = arch.batch_hidden(&mut tape, &store, &refs, None).unwrap();
        for (r, s) in refs.iter().enumerate() {
            let mut single_tape = Tape::new();
            let single = arch.batch_hidden(&mut single_tape, &store, &[s], None).unwrap();
            for (a, b) in tape.value(batch).row(r).iter().zip(single_tape.value(single).row(0)) {
                assert!((a - b).abs() < 1e-6);
            }
            // the plain evaluation path agrees with the tape for SE
            let plain = arch.hidden_eval(&store, s).unwrap();
            for (a, b) in plain.iter().zip(single_tape.value(single).row(0)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_token_is_one_cell_application() {
        let (arch, store) = toy(EmbedMode::Se { v: 5, m: 2 }, 4);
        let x = arch.embedder.embed_eval(&store, 3).unwrap();
        let (h, _) = crate::seq::lstm_step(
            store.value(arch.encoder.weight),
            store.value(arch.encoder.bias),
            &x,
            &[0.0; 6],
            &[0.0; 6],
        )
        .unwrap();
        assert_eq!(arch.hidden_eval(&store, &[3]).unwrap(), h);
    }

    #[test]
    fn loss_is_cross_entropy_of_logits() {
        let (arch, store) = toy(EmbedMode::Se { v: 5, m: 2 }, 5);
        let seq: &[u32] = &[1, 2, 3];
        let mut tape = Tape::new();
        let logits = arch.batch_logits(&mut tape, &store, &[seq], None).unwrap();
        let loss = tape.softmax_cross_entropy(logits, &[2]).unwrap();
        let mut tape2 = Tape::new();
        let loss2 = arch.batch_loss(&mut tape2, &store, &[seq], &[2], None).unwrap();
        assert_eq!(tape.value(loss), tape2.value(loss2));
    }

    #[test]
    fn zero_head_predicts_class_zero() {
        let (arch, mut store) = toy(EmbedMode::Se { v: 5, m: 2 }, 6);
        *store.value_mut(arch.head.weight) = Tensor::zeros(&[3, 6]);
        assert_eq!(arch.logits_eval(&store, &[1, 2]).unwrap(), vec![0.0; 3]);
        assert_eq!(arch.predict_eval(&store, &[1, 2]).unwrap(), 0);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let (arch, store) = toy(EmbedMode::Se { v: 5, m: 2 }, 7);
        let mut tape = Tape::new();
        assert!(arch.batch_hidden(&mut tape, &store, &[], None).is_err());
        assert!(arch.batch_hidden(&mut tape, &store, &[&[]], None).is_err());
        assert!(arch.hidden_eval(&store, &[]).is_err());
    }
}
