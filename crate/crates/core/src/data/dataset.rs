use serde::{Deserialize, Serialize};

use super::{TokenizerKind, Vocab};
use crate::error::{Error, Result};
use crate::tensor_core::Rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub label: usize,
    pub text: String,
}

/// Labelled raw texts with labels in `[0, num_classes)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDataset {
    pub name: String,
    pub num_classes: usize,
    pub records: Vec<Record>,
}

impl RawDataset {
    pub fn new(name: impl Into<String>, num_classes: usize, records: Vec<Record>) -> Result<Self> {
        let name = name.into();
        if records.is_empty() {
            return Err(Error::EmptyDataset(name));
        }
        if let Some(r) = records.iter().find(|r| r.label >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: r.label,
                classes: num_classes,
            });
        }
        Ok(Self {
            name,
            num_classes,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn tokenize(&self, tokenizer: TokenizerKind, max_len: usize) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| tokenizer.tokenize(&r.text, max_len))
            .collect()
    }

    /// Holds out `n_dev` randomly chosen records. Both parts keep the
    /// original record order.
    pub fn split_dev(&self, n_dev: usize, seed: u64) -> Result<(RawDataset, RawDataset)> {
        if n_dev == 0 || n_dev >= self.len() {
            return Err(Error::invalid(format!(
                "dev size {n_dev} must be in [1, {}) for {}",
                self.len(),
                self.name
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        Rng::new(seed).shuffle(&mut order);
        let mut is_dev = vec![false; self.len()];
        for &i in &order[..n_dev] {
            is_dev[i] = true;
        }
        let (mut train, mut dev) = (Vec::new(), Vec::new());
        for (r, &d) in self.records.iter().zip(&is_dev) {
            if d {
                dev.push(r.clone())
            } else {
                train.push(r.clone())
            }
        }
        Ok((
            RawDataset::new(self.name.clone(), self.num_classes, train)?,
            RawDataset::new(format!("{}-dev", self.name), self.num_classes, dev)?,
        ))
    }

    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<RawDataset> {
        let keep = stratified_indices(&self.labels(), self.num_classes, fraction, seed)?;
        let records = keep.into_iter().map(|i| self.records[i].clone()).collect();
        RawDataset::new(self.name.clone(), self.num_classes, records)
    }

    pub fn encode(&self, vocab: &Vocab, tokenizer: TokenizerKind, max_len: usize) -> EncodedDataset {
        let sequences = self
            .records
            .iter()
            .map(|r| vocab.encode(&tokenizer.tokenize(&r.text, max_len)))
            .collect();
        EncodedDataset {
            num_classes: self.num_classes,
            sequences,
            labels: self.labels(),
        }
    }
}

/// Id sequences ready for batching; every sequence is non-empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedDataset {
    pub num_classes: usize,
    pub sequences: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
}

impl EncodedDataset {
    pub fn new(num_classes: usize, sequences: Vec<Vec<u32>>, labels: Vec<usize>) -> Result<Self> {
        if sequences.len() != labels.len() {
            return Err(Error::invalid("sequence and label counts differ"));
        }
        if sequences.iter().any(Vec::is_empty) {
            return Err(Error::invalid("encoded sequences must be non-empty"));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: l,
                classes: num_classes,
            });
        }
        Ok(Self {
            num_classes,
            sequences,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<EncodedDataset> {
        let keep = stratified_indices(&self.labels, self.num_classes, fraction, seed)?;
        Ok(EncodedDataset {
            num_classes: self.num_classes,
            sequences: keep.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
        })
    }

    pub fn select(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            num_classes: self.num_classes,
            sequences: indices.iter().map(|&i| self.sequences[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Chooses `⌊fraction · n⌋` indices, allocated across classes in proportion
/// to class size (largest remainder, ties to the lower class), then sampled
/// uniformly within each class. Returned in ascending order.
pub fn stratified_indices(labels: &[usize], num_classes: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} must be in (0, 1]")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let target = (fraction * labels.len() as f64 + 1e-9).floor() as usize;
    let exact: Vec<f64> = by_class.iter().map(|c| fraction * c.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - quota[a] as f64;
        let fb = exact[b] - quota[b] as f64;
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut missing = target.saturating_sub(quota.iter().sum());
    for &c in order.iter().cycle().take(num_classes * 2) {
        if missing == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }

    let mut rng = Rng::new(seed);
    let mut keep = Vec::with_capacity(target);
    for (members, &q) in by_class.iter_mut().zip(&quota) {
        rng.shuffle(members);
        keep.extend_from_slice(&members[..q]);
    }
    keep.sort_unstable();
    Ok(keep)
}
