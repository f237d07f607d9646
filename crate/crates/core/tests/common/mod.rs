#![allow(dead_code)]

use clem_core::data::{TokenizerKind, Vocab};
use clem_core::model::{Architecture, ModelConfig};
use clem_core::seq::CellKind;
use clem_core::tensor_core::{ParamStore, Rng, Scalar};
use clem_core::{EmbedMode, EncodedDataset};

/// Builds a model and spreads its cluster scores so that argmax
/// assignments differ from word to word.
pub fn random_model<F: Scalar>(config: ModelConfig, rng: &mut Rng) -> (Architecture, ParamStore<F>) {
    let mut store = ParamStore::new();
    let arch = Architecture::new(config, &mut store, rng).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with("logits") {
            for x in store.value_mut(id).data_mut() {
                *x = F::from_f64(rng.normal(0.0, 2.0));
            }
        }
    }
    (arch, store)
}

pub fn fake_vocab(words: usize) -> Vocab {
    Vocab::from_ranked((0..words).map(|i| format!("tok{i}")).collect(), vec![0; words], words)
}

pub fn config(mode: EmbedMode, cell: CellKind, hidden: usize, classes: usize) -> ModelConfig {
    ModelConfig {
        cell,
        hidden,
        ..ModelConfig::lstm(mode, classes)
    }
}

pub const TOKENIZER: TokenizerKind = TokenizerKind::Regex;

/// Two classes drawn from disjoint halves of the vocabulary.
pub fn separable(n: usize, v: usize, seed: u64) -> EncodedDataset {
    let mut rng = Rng::new(seed);
    let half = (v - 1) / 2;
    let mut seqs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = i % 2;
        let len = 3 + rng.below(5);
        seqs.push((0..len).map(|_| (2 + label * half + rng.below(half)) as u32).collect());
        labels.push(label);
    }
    EncodedDataset::new(2, seqs, labels).unwrap()
}
