use std::fs;
use std::path::{Path, PathBuf};

use super::{RawDataset, Record, TokenizerKind};
use crate::error::{Error, Result};

/// Reads a label-first CSV (`label, title, body` or `label, text`).
///
/// Labels in the file are 1-based and are shifted to 0-based. When
/// `num_classes` is `None` it is taken to be the largest label seen.
pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() < 2 {
            return Err(parse_err(
                line,
                format!("expected at least 2 columns, found {}", row.len()),
            ));
        }
        let label: usize = row[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("label {:?} is not an integer", &row[0])))?;
        if label == 0 || num_classes.is_some_and(|c| label > c) {
            return Err(parse_err(line, format!("unknown label {label}")));
        }
        let text = row.iter().skip(1).collect::<Vec<_>>().join(" ");
        records.push(Record { label: label - 1, text });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    let classes = num_classes.unwrap_or_else(|| records.iter().map(|r| r.label + 1).max().unwrap_or(1));
    RawDataset::new(dataset_name(path), classes, records)
}

/// Reads review trees laid out as `path/neg/*.txt` (label 0) and
/// `path/pos/*.txt` (label 1). Files are visited in name order.
pub fn load_review_dirs(path: &Path) -> Result<RawDataset> {
    let mut records = Vec::new();
    for (label, sub) in ["neg", "pos"].into_iter().enumerate() {
        let dir = path.join(sub);
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        for f in files {
            records.push(Record {
                label,
                text: fs::read_to_string(&f)?,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(path.display().to_string()));
    }
    RawDataset::new(dataset_name(path), 2, records)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// A training split, optional test split, and the tokenizer that suits the
/// layout they were found in.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: RawDataset,
    pub test: Option<RawDataset>,
    pub tokenizer: TokenizerKind,
}

/// Discovers a corpus at `path`:
///
/// - a CSV file: training data only, regex tokenizer;
/// - a directory with `train.csv` (and optionally `test.csv`): regex tokenizer;
/// - a directory with `train/pos`, `train/neg` (and optionally `test/…`):
///   simple tokenizer.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    if path.is_file() {
        return Ok(Corpus {
            train: load_csv(path, None)?,
            test: None,
            tokenizer: TokenizerKind::Regex,
        });
    }
    let train_csv = path.join("train.csv");
    if train_csv.is_file() {
        let train = load_csv(&train_csv, None)?;
        let test_csv = path.join("test.csv");
        let test = if test_csv.is_file() {
            Some(load_csv(&test_csv, Some(train.num_classes))?)
        } else {
            None
        };
        return Ok(Corpus {
            train,
            test,
            tokenizer: TokenizerKind::Regex,
        });
    }
    if path.join("train").join("pos").is_dir() {
        let train = load_review_dirs(&path.join("train"))?;
        let test_dir = path.join("test");
        let test = if test_dir.join("pos").is_dir() {
            Some(load_review_dirs(&test_dir)?)
        } else {
            None
        };
        return Ok(Corpus {
            train,
            test,
            tokenizer: TokenizerKind::Simple,
        });
    }
    Err(Error::invalid(format!(
        "{} is neither a CSV file nor a recognized corpus directory",
        path.display()
    )))
}
