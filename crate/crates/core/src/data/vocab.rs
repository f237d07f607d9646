use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
const RESERVED: u32 = 2;

/// The `v` most frequent training words, ids `2..v+2` in rank order.
///
/// Ties in frequency are broken lexicographically, so the rank (and therefore
/// the id) is a pure function of the training tokens and `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    requested: usize,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    words: Vec<String>,
    counts: Vec<u64>,
    requested: usize,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        Vocab::from_ranked(r.words, r.counts, r.requested)
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            words: v.words,
            counts: v.counts,
            requested: v.requested,
        }
    }
}

impl Vocab {
    /// Builds from tokenized training documents. If fewer than `v` distinct
    /// words exist, all are kept and [`Vocab::size`] reports the actual count.
    pub fn build<'a, I, D>(docs: I, v: usize) -> Result<Self>
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = &'a String>,
    {
        if v == 0 {
            return Err(Error::invalid("vocabulary size must be at least 1"));
        }
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for doc in docs {
            for tok in doc {
                *freq.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(v);
        let (words, counts) = ranked.into_iter().map(|(w, c)| (w.to_owned(), c)).unzip();
        Ok(Self::from_ranked(words, counts, v))
    }

    /// Rebuilds from a word list already in id order (ids from 2).
    pub fn from_ranked(words: Vec<String>, counts: Vec<u64>, requested: usize) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32 + RESERVED))
            .collect();
        Self {
            words,
            counts,
            requested,
            index,
        }
    }

    /// Number of corpus words kept (excludes PAD and UNK).
    pub fn size(&self) -> usize {
        self.words.len()
    }

    /// The size that was asked for when building.
    pub fn requested(&self) -> usize {
        self.requested
    }

    /// Ids are dense in `[0, num_ids())`.
    pub fn num_ids(&self) -> usize {
        self.words.len() + RESERVED as usize
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(UNK)
    }

    pub fn word(&self, id: u32) -> &str {
        match id {
            PAD => "<pad>",
            UNK => "<unk>",
            _ => self
                .words
                .get((id - RESERVED) as usize)
                .map(String::as_str)
                .unwrap_or("<unk>"),
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Training-set frequency of `id` (0 for PAD/UNK).
    pub fn count(&self, id: u32) -> u64 {
        if id < RESERVED {
            return 0;
        }
        self.counts.get((id - RESERVED) as usize).copied().unwrap_or(0)
    }

    /// Maps tokens to ids, OOV to UNK; an empty input becomes `[UNK]`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        if tokens.is_empty() {
            return vec![UNK];
        }
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.word(i)).collect()
    }
}
