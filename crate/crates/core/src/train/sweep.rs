use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{evaluate, train, Prepared, Splits, TrainConfig};
use crate::deploy::config_size;
use crate::embed::{EmbedMode, ModeKind};
use crate::error::{Error, Result};

/// One row of the results store. The first ten columns are the published
/// results layout; `books` and `error` follow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub mode: ModeKind,
    pub v: usize,
    pub m: usize,
    pub k: usize,
    pub u: usize,
    pub size_bits: u64,
    /// Total size in MB of 2²⁰ bytes, unrounded.
    pub size_mb: f64,
    pub dev_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub seed: u64,
    pub books: usize,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn embed_mode(&self) -> Result<EmbedMode> {
        EmbedMode::from_parts(self.mode, self.v, self.m, self.k, self.u, self.books)
    }

    fn key(&self) -> (ModeKind, usize, usize, usize, usize, usize, u64) {
        (self.mode, self.v, self.m, self.k, self.u, self.books, self.seed)
    }

    fn sort_key(&self) -> (u64, u8, usize, usize, usize, usize, usize, u64) {
        (
            self.size_bits,
            self.mode.code(),
            self.v,
            self.m,
            self.k,
            self.u,
            self.books,
            self.seed,
        )
    }
}

const HEADER: &str = "mode,v,m,k,u,size_bits,size_mb,dev_acc,test_acc,seed,books,error\n";

/// One block of a grid file: the cartesian product of the listed values.
/// Lists a mode does not use may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub mode: ModeKind,
    pub v: Vec<usize>,
    pub m: Vec<usize>,
    #[serde(default = "zero")]
    pub k: Vec<usize>,
    #[serde(default = "zero")]
    pub u: Vec<usize>,
    #[serde(default = "zero")]
    pub books: Vec<usize>,
}

fn zero() -> Vec<usize> {
    vec![0]
}

/// A sweep description as read from TOML:
///
/// ```toml
/// seeds = [0]
/// [train]
/// max_epochs = 10
/// [[grid]]
/// mode = "ce"
/// v = [3000]
/// m = [5, 10]
/// k = [10, 50]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub train: TrainConfig,
    pub grid: Vec<GridSpec>,
}

impl GridSpec {
    pub fn modes(&self) -> Result<Vec<EmbedMode>> {
        let mut out = Vec::new();
        for &v in &self.v {
            for &m in &self.m {
                for &k in &self.k {
                    for &u in &self.u {
                        for &books in &self.books {
                            let mode = EmbedMode::from_parts(self.mode, v, m, k, u, books)?;
                            if !out.contains(&mode) {
                                out.push(mode);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl GridFile {
    /// Every (mode, seed) pair as a training config; `seeds` overrides the
    /// file's seed list when given.
    pub fn configs(&self, seeds: Option<&[u64]>) -> Result<Vec<TrainConfig>> {
        let file_seeds = if self.seeds.is_empty() {
            vec![self.train.seed]
        } else {
            self.seeds.clone()
        };
        let seeds = seeds.unwrap_or(&file_seeds);
        let mut out = Vec::new();
        for spec in &self.grid {
            for mode in spec.modes()? {
                for &seed in seeds {
                    out.push(TrainConfig {
                        mode,
                        seed,
                        ..self.train
                    });
                }
            }
        }
        if out.is_empty() {
            return Err(Error::invalid("grid is empty"));
        }
        Ok(out)
    }
}

pub fn load_grid(path: &Path) -> Result<GridFile> {
    Ok(toml::from_str(&fs::read_to_string(path)?)?)
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn record_line(r: &SweepRecord) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.serialize(r)?;
    w.into_inner().map_err(|e| Error::Malformed(e.to_string()))
}

#[derive(Clone, Debug, Default)]
pub struct SweepOptions {
    /// Append-only CSV results store; finished runs found there are skipped.
    pub store: Option<PathBuf>,
    /// Worker threads (at least one).
    pub threads: usize,
}

fn run_one(config: &TrainConfig, prepared: &Prepared) -> SweepRecord {
    let config = TrainConfig {
        mode: config.mode.with_v(prepared.embedded_rows()),
        ..*config
    };
    let mode = config.mode;
    let size = config_size(&config.model_config(prepared.train.num_classes));
    let mut record = SweepRecord {
        mode: mode.kind(),
        v: mode.v(),
        m: mode.m(),
        k: mode.k(),
        u: mode.u(),
        size_bits: size.total_bits,
        size_mb: size.total_mb(),
        dev_acc: None,
        test_acc: None,
        seed: config.seed,
        books: mode.books(),
        error: None,
    };
    let outcome = train(&config, &prepared.train, &prepared.dev).and_then(|r| {
        let test = prepared
            .test
            .as_ref()
            .map(|t| evaluate(&r.arch, &r.store, t))
            .transpose()?;
        Ok((r.best_dev_acc, test))
    });
    match outcome {
        Ok((dev, test)) => {
            record.dev_acc = Some(dev);
            record.test_acc = test;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Trains every config and returns one record per config, sorted by model
/// size. A failed run yields a record carrying its error.
///
/// With a store, each finished record is appended as one line as soon as it
/// exists, and configs already present in the store are not retrained.
pub fn sweep(configs: &[TrainConfig], splits: &Splits, options: &SweepOptions) -> Result<Vec<SweepRecord>> {
    if configs.is_empty() {
        return Err(Error::invalid("grid is empty"));
    }
    let mut prepared: BTreeMap<usize, Prepared> = BTreeMap::new();
    for c in configs {
        let rows = c.mode.v();
        if let Entry::Vacant(slot) = prepared.entry(rows) {
            slot.insert(splits.prepare(rows)?);
        }
    }

    let mut done: Vec<SweepRecord> = match &options.store {
        Some(p) if p.is_file() && fs::metadata(p)?.len() > 0 => read_records(p)?,
        _ => Vec::new(),
    };
    let finished: HashSet<_> = done.iter().map(SweepRecord::key).collect();
    let mut wanted = HashSet::new();
    let mut todo = Vec::new();
    for c in configs {
        let p = &prepared[&c.mode.v()];
        let mode = c.mode.with_v(p.embedded_rows());
        let key = (
            mode.kind(),
            mode.v(),
            mode.m(),
            mode.k(),
            mode.u(),
            mode.books(),
            c.seed,
        );
        wanted.insert(key);
        if !finished.contains(&key) {
            todo.push(*c);
        }
    }
    done.retain(|r| wanted.contains(&r.key()));

    let sink = match &options.store {
        Some(p) => {
            let fresh = !p.is_file() || fs::metadata(p)?.len() == 0;
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            if fresh {
                f.write_all(HEADER.as_bytes())?;
            }
            Some(f)
        }
        None => None,
    };
    let sink = Mutex::new(sink);
    let results = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let threads = options.threads.clamp(1, todo.len().max(1));

    let worker = || -> Result<()> {
        loop {
            let i = next.fetch_add(1, Ordering::SeqCst);
            let Some(c) = todo.get(i) else { return Ok(()) };
            let record = run_one(c, &prepared[&c.mode.v()]);
            let line = record_line(&record)?;
            if let Some(f) = sink.lock().expect("sink").as_mut() {
                f.write_all(&line)?;
                f.flush()?;
            }
            results.lock().expect("results").push(record);
        }
    };
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads).map(|_| s.spawn(worker)).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect::<Result<Vec<()>>>()
    })?;

    done.extend(results.into_inner().expect("results"));
    done.sort_by_key(SweepRecord::sort_key);
    Ok(done)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionRecord {
    pub fraction: f64,
    pub train_size: usize,
    pub dev_acc: f64,
    pub test_acc: Option<f64>,
}

/// Trains on stratified subsamples of the training split; dev and test stay
/// fixed. The vocabulary is the one in `prepared` for every fraction.
pub fn fraction_experiment(
    config: &TrainConfig,
    prepared: &Prepared,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<FractionRecord>> {
    if fractions.is_empty() {
        return Err(Error::invalid("no fractions given"));
    }
    let mut out = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        let cfg = TrainConfig {
            mode: config.mode.with_v(prepared.embedded_rows()),
            data_fraction: fraction,
            seed,
            ..*config
        };
        let r = train(&cfg, &prepared.train, &prepared.dev)?;
        let test_acc = prepared.test.as_ref().map(|t| r.evaluate(t)).transpose()?;
        out.push(FractionRecord {
            fraction,
            train_size: r.train_size,
            dev_acc: r.best_dev_acc,
            test_acc,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RawDataset, Record, TokenizerKind};

    fn splits() -> Splits {
        let words = ["good", "great", "fine", "bad", "awful", "poor"];
        let mut rng = crate::tensor_core::Rng::new(5);
        let mk = |n: usize, rng: &mut crate::tensor_core::Rng| {
            let records = (0..n)
                .map(|i| {
                    let label = i % 2;
                    let text: Vec<&str> = (0..4).map(|_| words[label * 3 + rng.below(3)]).collect();
                    Record {
                        label,
                        text: text.join(" "),
                    }
                })
                .collect();
            RawDataset::new("toy", 2, records).unwrap()
        };
        let (train, dev, test) = (mk(64, &mut rng), mk(32, &mut rng), mk(32, &mut rng));
        Splits::new(&train, &dev, Some(&test), TokenizerKind::Regex, 50).unwrap()
    }

    fn base() -> TrainConfig {
        TrainConfig {
            hidden: 4,
            max_epochs: 2,
            lr: 0.01,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn grid_expands_and_dedupes() {
        let g: GridFile = toml::from_str(
            r#"
            seeds = [1, 2]
            [train]
            max_epochs = 3
            [[grid]]
            mode = "se"
            v = [10]
            m = [1, 2]
            k = [5, 6]
            [[grid]]
            mode = "me"
            v = [10]
            m = [2]
            k = [3]
            u = [0, 4]
            "#,
        )
        .unwrap();
        let c = g.configs(None).unwrap();
        assert_eq!(c.len(), (2 + 2) * 2);
        assert!(c.iter().all(|c| c.max_epochs == 3 && c.hidden == 50));
        assert_eq!(g.configs(Some(&[7])).unwrap().len(), 4);
        assert!(toml::from_str::<GridFile>("grid = []\nbogus = 1").is_err());
    }

    #[test]
    fn single_config_gives_one_record() {
        let cfg = TrainConfig {
            mode: EmbedMode::Ce { v: 5, m: 2, k: 2 },
            ..base()
        };
        let recs = sweep(&[cfg], &splits(), &SweepOptions::default()).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert!(r.error.is_none());
        assert!(r.size_bits > 0);
        assert!((0.0..=1.0).contains(&r.dev_acc.unwrap()));
        assert!((0.0..=1.0).contains(&r.test_acc.unwrap()));
    }

    #[test]
    fn store_is_resumed_and_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("res.csv");
        let opts = SweepOptions {
            store: Some(store.clone()),
            threads: 2,
        };
        let small = TrainConfig {
            mode: EmbedMode::Se { v: 7, m: 1 },
            ..base()
        };
        let big = TrainConfig {
            mode: EmbedMode::Se { v: 7, m: 3 },
            ..base()
        };
        let first = sweep(&[big], &splits(), &opts).unwrap();
        let text = fs::read_to_string(&store).unwrap();
        assert!(text.starts_with("mode,v,m,k,u,size_bits,size_mb,dev_acc,test_acc,seed"));
        let both = sweep(&[big, small], &splits(), &opts).unwrap();
        assert_eq!(both.len(), 2);
        assert!(both[0].size_bits < both[1].size_bits);
        assert_eq!(both[1], first[0]);
        // the store gained exactly one line
        assert_eq!(fs::read_to_string(&store).unwrap().lines().count(), 3);
        assert_eq!(read_records(&store).unwrap().len(), 2);
    }

    #[test]
    fn failures_are_recorded() {
        let bad = TrainConfig {
            tau: -1.0,
            mode: EmbedMode::Se { v: 7, m: 1 },
            ..base()
        };
        let recs = sweep(&[bad], &splits(), &SweepOptions::default()).unwrap();
        assert!(recs[0].error.is_some() && recs[0].dev_acc.is_none());
    }

    #[test]
    fn full_fraction_equals_plain_training() {
        let s = splits();
        let p = s.prepare(7).unwrap();
        let cfg = TrainConfig {
            mode: EmbedMode::Se { v: 7, m: 2 },
            ..base()
        };
        let recs = fraction_experiment(&cfg, &p, &[1.0, 0.5], 9).unwrap();
        let plain = train(&TrainConfig { seed: 9, ..cfg }, &p.train, &p.dev).unwrap();
        assert_eq!(recs[0].dev_acc, plain.best_dev_acc);
        assert_eq!(recs[0].train_size, 64);
        assert_eq!(recs[1].train_size, 32);
        assert!(fraction_experiment(&cfg, &p, &[0.0], 9).is_err());
    }
}
