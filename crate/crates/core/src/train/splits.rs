use crate::data::{EncodedDataset, RawDataset, TokenizerKind, Vocab};
use crate::error::{Error, Result};

/// Dev-set size: 2,000 for review corpora, 5,000 otherwise, shrunk to a
/// tenth of the data when the corpus is too small for either.
pub fn default_dev_size(tokenizer: TokenizerKind, train_len: usize) -> usize {
    let n = match tokenizer {
        TokenizerKind::Simple => 2000,
        TokenizerKind::Regex => 5000,
    };
    if n < train_len / 2 {
        n
    } else {
        (train_len / 10).max(1)
    }
}

/// Tokenized train/dev/test splits, ready to be numericalized for any
/// vocabulary size.
#[derive(Clone, Debug)]
pub struct Splits {
    pub num_classes: usize,
    pub tokenizer: TokenizerKind,
    pub max_len: usize,
    train: (Vec<Vec<String>>, Vec<usize>),
    dev: (Vec<Vec<String>>, Vec<usize>),
    test: Option<(Vec<Vec<String>>, Vec<usize>)>,
}

/// Numericalized splits and the vocabulary behind them.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub vocab: Vocab,
    pub train: EncodedDataset,
    pub dev: EncodedDataset,
    pub test: Option<EncodedDataset>,
}

impl Prepared {
    /// Embedded rows for this vocabulary: corpus words plus UNK.
    pub fn embedded_rows(&self) -> usize {
        self.vocab.size() + 1
    }
}

impl Splits {
    pub fn new(
        train: &RawDataset,
        dev: &RawDataset,
        test: Option<&RawDataset>,
        tokenizer: TokenizerKind,
        max_len: usize,
    ) -> Result<Self> {
        let tok = |d: &RawDataset| (d.tokenize(tokenizer, max_len), d.labels());
        if dev.num_classes != train.num_classes || test.is_some_and(|t| t.num_classes != train.num_classes) {
            return Err(Error::invalid("splits disagree on the number of classes"));
        }
        Ok(Self {
            num_classes: train.num_classes,
            tokenizer,
            max_len,
            train: tok(train),
            dev: tok(dev),
            test: test.map(tok),
        })
    }

    /// Holds out `n_dev` training examples as the dev set.
    pub fn from_train(
        train: &RawDataset,
        test: Option<&RawDataset>,
        n_dev: usize,
        seed: u64,
        tokenizer: TokenizerKind,
        max_len: usize,
    ) -> Result<Self> {
        let (tr, dev) = train.split_dev(n_dev, seed)?;
        Self::new(&tr, &dev, test, tokenizer, max_len)
    }

    pub fn train_len(&self) -> usize {
        self.train.1.len()
    }

    /// Builds a vocabulary with `rows − 1` training words (the last row is
    /// UNK) and encodes every split with it.
    pub fn prepare(&self, rows: usize) -> Result<Prepared> {
        if rows < 2 {
            return Err(Error::invalid(format!(
                "vocabulary of {rows} rows leaves no room for words"
            )));
        }
        let vocab = Vocab::build(&self.train.0, rows - 1)?;
        let enc = |(docs, labels): &(Vec<Vec<String>>, Vec<usize>)| {
            EncodedDataset::new(
                self.num_classes,
                docs.iter().map(|d| vocab.encode(d)).collect(),
                labels.clone(),
            )
        };
        Ok(Prepared {
            train: enc(&self.train)?,
            dev: enc(&self.dev)?,
            test: self.test.as_ref().map(enc).transpose()?,
            vocab,
        })
    }
}
