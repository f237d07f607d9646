use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use clem_core::analysis::{area_ratio, dump_clusters, emit_curves, export_hidden_states, read_points, write_curves};
use clem_core::data::load_corpus;
use clem_core::deploy::{config_size, round3};
use clem_core::embed::ModeKind;
use clem_core::model::{ModelConfig, DEFAULT_HIDDEN, DEFAULT_TAU};
use clem_core::seq::CellKind;
use clem_core::train::{
    default_dev_size, fraction_experiment, load_grid, read_records, sweep, train, Splits, SweepOptions, TrainConfig,
};
use clem_core::{Classifier, CompactModel, EmbedMode, EncodedDataset};

#[derive(Parser)]
#[command(
    name = "clem",
    version,
    about = "Compact text classifiers with clustered word embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Train every configuration of a TOML grid and append results to a CSV store.
    Sweep(SweepArgs),
    /// Train on stratified fractions of the training set.
    Fractions(FractionArgs),
    /// Turn a checkpoint into a compact model file.
    Finalize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the deployed size of a configuration or a compact model.
    Size(SizeArgs),
    /// Classify text with a compact model.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "file", required_unless_present = "file")]
        text: Option<String>,
        /// One input per line.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// List the words in each cluster of a compact model.
    Clusters {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Export final hidden states of a two-unit checkpoint as x,y,label CSV.
    Hidden {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Occupied-cell ratio of a point CSV on a grid over [-1,1]^2.
    Area {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 100)]
        grid: usize,
    },
    /// Accuracy-vs-size curve data from a sweep store.
    Curves {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ModeArgs {
    #[arg(long, default_value = "se")]
    mode: ModeKind,
    /// Embedded word types, UNK included.
    #[arg(long, default_value_t = 3000)]
    vocab: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    /// Clusters (codes per book for cc).
    #[arg(long, default_value_t = 50)]
    clusters: usize,
    /// Words with their own vectors (me).
    #[arg(long, default_value_t = 0)]
    unique: usize,
    /// Codebooks (cc).
    #[arg(long, default_value_t = 8)]
    books: usize,
}

impl ModeArgs {
    fn mode(&self, v: usize) -> Result<EmbedMode> {
        Ok(EmbedMode::from_parts(
            self.mode,
            v,
            self.dim,
            self.clusters,
            self.unique,
            self.books,
        )?)
    }
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file, directory with train.csv/test.csv, or directory with train/{pos,neg}.
    #[arg(long)]
    dataset: PathBuf,
    /// Held-out dev examples (default 2000 for review directories, 5000 otherwise).
    #[arg(long)]
    dev_size: Option<usize>,
    /// Token cap per document (default 400 for reviews, 256 otherwise).
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args, Clone)]
struct OptimArgs {
    #[arg(long, default_value = "lstm")]
    cell: CellKind,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl OptimArgs {
    fn config(&self, mode: EmbedMode, max_len: usize) -> TrainConfig {
        TrainConfig {
            mode,
            cell: self.cell,
            hidden: self.hidden,
            tau: self.tau,
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            max_len,
            data_fraction: 1.0,
            clip_norm: self.clip,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optim: OptimArgs,
    /// Stratified fraction of the training split to use.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    grid: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seeds, overriding the grid file.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct FractionArgs {
    #[command(flatten)]
    mode: ModeArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    optim: OptimArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1.0")]
    list: Vec<f64>,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SizeArgs {
    /// Report on a compact model instead of a configuration.
    #[arg(long, conflicts_with_all = ["mode", "vocab", "dim", "clusters", "unique", "books"])]
    model: Option<PathBuf>,
    /// Size every configuration of a sweep grid, one CSV row each.
    #[arg(long, conflicts_with_all = ["model", "mode", "vocab", "dim", "clusters", "unique", "books", "cell", "hidden"])]
    config: Option<PathBuf>,
    #[command(flatten)]
    mode: ModeArgs,
    #[arg(long, default_value = "lstm")]
    cell: CellKind,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
}

struct Loaded {
    splits: Splits,
}

fn load(data: &DataArgs, seed: u64) -> Result<Loaded> {
    let corpus = load_corpus(&data.dataset).with_context(|| format!("loading {}", data.dataset.display()))?;
    let tok = corpus.tokenizer;
    let n_dev = data
        .dev_size
        .unwrap_or_else(|| default_dev_size(tok, corpus.train.len()));
    let max_len = data.max_len.unwrap_or_else(|| tok.default_max_len());
    let splits = Splits::from_train(&corpus.train, corpus.test.as_ref(), n_dev, seed, tok, max_len)?;
    eprintln!(
        "{}: {} train, {} dev, {} classes, {:?} tokenizer",
        data.dataset.display(),
        splits.train_len(),
        n_dev,
        splits.num_classes,
        tok
    );
    Ok(Loaded { splits })
}

fn acc(x: Option<f64>) -> String {
    x.map(|a| format!("{a:.4}")).unwrap_or_default()
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let Loaded { splits } = load(&args.data, args.optim.seed)?;
    let prepared = splits.prepare(args.mode.vocab)?;
    let mode = args.mode.mode(prepared.embedded_rows())?;
    let config = TrainConfig {
        data_fraction: args.fraction,
        ..args.optim.config(mode, splits.max_len)
    };
    let result = train(&config, &prepared.train, &prepared.dev)?;
    for h in &result.history {
        eprintln!(
            "epoch {:>2}  loss {:.4}  dev {:.4}",
            h.epoch + 1,
            h.train_loss,
            h.dev_acc
        );
    }
    let test = prepared.test.as_ref().map(|t| result.evaluate(t)).transpose()?;
    let size = config_size(&result.arch.config);
    println!(
        "best epoch {}  dev {:.4}  test {}  size {} bits ({:.3} MB)  {:.1}s",
        result.best_epoch + 1,
        result.best_dev_acc,
        acc(test),
        size.total_bits,
        round3(size.total_mb()),
        result.wall_clock_secs
    );
    let classifier = Classifier {
        arch: result.arch,
        store: result.store,
        vocab: prepared.vocab,
        tokenizer: splits.tokenizer,
        max_len: splits.max_len,
    };
    classifier.save(&args.out)?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let grid = load_grid(&args.grid).with_context(|| format!("reading {}", args.grid.display()))?;
    let configs = grid.configs(args.seeds.as_deref())?;
    let seed = configs[0].seed;
    let Loaded { splits } = load(&args.data, seed)?;
    let configs: Vec<TrainConfig> = configs
        .into_iter()
        .map(|c| TrainConfig {
            max_len: splits.max_len,
            ..c
        })
        .collect();
    eprintln!("{} runs", configs.len());
    let options = SweepOptions {
        store: Some(args.out.clone()),
        threads: args.threads,
    };
    let records = sweep(&configs, &splits, &options)?;
    for r in &records {
        println!(
            "{:<4} v={:<6} m={:<4} k={:<4} u={:<5} {:>8.4} MB  dev {}  test {}{}",
            r.mode,
            r.v,
            r.m,
            r.k,
            r.u,
            r.size_mb,
            acc(r.dev_acc),
            acc(r.test_acc),
            r.error.as_deref().map(|e| format!("  error: {e}")).unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_fractions(args: FractionArgs) -> Result<()> {
    let Loaded { splits } = load(&args.data, args.optim.seed)?;
    let prepared = splits.prepare(args.mode.vocab)?;
    let mode = args.mode.mode(prepared.embedded_rows())?;
    let config = args.optim.config(mode, splits.max_len);
    let records = fraction_experiment(&config, &prepared, &args.list, args.optim.seed)?;
    let mut out = String::from("fraction,train_size,dev_acc,test_acc\n");
    for r in &records {
        out.push_str(&format!(
            "{},{},{:.4},{}\n",
            r.fraction,
            r.train_size,
            r.dev_acc,
            acc(r.test_acc)
        ));
    }
    match &args.out {
        Some(p) => fs::write(p, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_finalize(input: &Path, out: &Path) -> Result<()> {
    let classifier = Classifier::load(input).with_context(|| format!("reading checkpoint {}", input.display()))?;
    let cm = CompactModel::from_classifier(&classifier)?;
    cm.save(out)?;
    println!("{}", cm.size_report());
    let disk = cm.disk_report();
    println!(
        "file bytes       {} ({} parameter, {} header/vocabulary/checksum)",
        disk.file_bytes, disk.parameter_bytes, disk.overhead_bytes
    );
    Ok(())
}

fn cmd_size(args: SizeArgs) -> Result<()> {
    if let Some(path) = &args.config {
        let grid = load_grid(path).with_context(|| format!("reading {}", path.display()))?;
        println!("mode,v,m,k,u,books,hidden,size_bits,size_mb");
        for c in grid.configs(None)? {
            let r = config_size(&c.model_config(args.classes));
            let m = c.mode;
            println!(
                "{},{},{},{},{},{},{},{},{:.5}",
                m.kind().name(),
                m.v(),
                m.m(),
                m.k(),
                m.u(),
                m.books(),
                c.hidden,
                r.total_bits,
                r.total_mb()
            );
        }
        return Ok(());
    }
    let report = match &args.model {
        Some(p) => CompactModel::load(p)?.size_report(),
        None => {
            let config = ModelConfig {
                mode: args.mode.mode(args.mode.vocab)?,
                cell: args.cell,
                hidden: args.hidden,
                classes: args.classes,
                tau: DEFAULT_TAU,
            };
            config_size(&config)
        }
    };
    println!("{report}");
    Ok(())
}

fn print_prediction(cm: &CompactModel, text: &str) -> Result<()> {
    let (label, probs) = cm.infer(text)?;
    let probs: Vec<String> = probs.iter().map(|p| format!("{p:.4}")).collect();
    println!("{label}\t{}", probs.join(","));
    Ok(())
}

fn cmd_infer(model: &Path, text: Option<String>, file: Option<PathBuf>) -> Result<()> {
    let cm = CompactModel::load(model).with_context(|| format!("reading {}", model.display()))?;
    if let Some(t) = text {
        return print_prediction(&cm, &t);
    }
    let path = file.expect("clap enforces text or file");
    for line in BufReader::new(fs::File::open(&path)?).lines() {
        print_prediction(&cm, &line?)?;
    }
    Ok(())
}

fn cmd_hidden(model: &Path, data: &Path, out: &Path) -> Result<()> {
    let c = Classifier::load(model)?;
    let corpus = load_corpus(data)?;
    let raw = corpus.test.unwrap_or(corpus.train);
    let seqs: Vec<Vec<u32>> = raw.records.iter().map(|r| c.encode_text(&r.text)).collect();
    let encoded = EncodedDataset::new(raw.num_classes, seqs, raw.labels())?;
    let plot = export_hidden_states(&c.arch, &c.store, &encoded)?;
    plot.write_csv(out)?;
    let b = plot.bbox;
    println!(
        "{} points, bbox [{:.3}, {:.3}] x [{:.3}, {:.3}]",
        plot.points.len(),
        b[0],
        b[2],
        b[1],
        b[3]
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Fractions(a) => cmd_fractions(a),
        Command::Finalize { input, out } => cmd_finalize(&input, &out),
        Command::Size(a) => cmd_size(a),
        Command::Infer { model, text, file } => cmd_infer(&model, text, file),
        Command::Clusters { model, top } => {
            let cm = CompactModel::load(&model)?;
            print!("{}", dump_clusters(&cm, top)?);
            Ok(())
        }
        Command::Hidden { model, data, out } => cmd_hidden(&model, &data, &out),
        Command::Area { points, grid } => {
            let pts = read_points(&points)?;
            let r = area_ratio(&pts, grid)?;
            println!("grid {}  occupied {}  ratio {:.6}", r.grid, r.occupied, r.ratio);
            Ok(())
        }
        Command::Curves { sweep, out } => {
            let records = read_records(&sweep)?;
            if records.is_empty() {
                bail!("{} holds no records", sweep.display());
            }
            write_curves(&emit_curves(&records)?, &out)?;
            Ok(())
        }
    }
}
