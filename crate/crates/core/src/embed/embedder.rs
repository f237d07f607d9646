use serde::{Deserialize, Serialize};

use super::EmbedMode;
use crate::data::PAD;
use crate::error::{Error, Result};
use crate::tensor_core::{NoiseSource, ParamId, ParamStore, Rng, Scalar, Tape, Tensor, Var};

const LOGIT_INIT_STD: f64 = 0.1;
const EMBED_INIT_RANGE: f64 = 0.08;

/// Where an ME word's vector comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    /// Row of the unique-embedding matrix.
    Unique(usize),
    /// Row of the cluster-score matrix (and index into the pointer table).
    Clustered(usize),
}

/// Flat pointer table produced by [`Embedder::hard_assignments`]. For CC the
/// entries are word-major: word `r`, book `b` sits at `r * books + b`.
pub type Pointers = Vec<u32>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Book {
    logits: ParamId,
    codes: ParamId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Layout {
    Standard {
        table: ParamId,
    },
    Cluster {
        logits: ParamId,
        centroids: ParamId,
        adjust: Option<ParamId>,
    },
    Mixture {
        unique: ParamId,
        logits: ParamId,
        centroids: ParamId,
        unique_rows: Vec<usize>,
        slots: Vec<Slot>,
    },
    Coding {
        books: Vec<Book>,
    },
}

/// An embedding module: its mode plus handles to its parameters in a
/// [`ParamStore`].
///
/// Word id `i ≥ 1` is embedded at row `i − 1`, so UNK is row 0; PAD (id 0)
/// is not embedded and always maps to a zero vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedder {
    mode: EmbedMode,
    layout: Layout,
}

/// First-index argmax; ties go to the lowest index.
pub fn argmax<F: PartialOrd + Copy>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn uniform<F: Scalar>(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<F> {
    let data = (0..rows * cols)
        .map(|_| F::from_f64(rng.uniform_range(-EMBED_INIT_RANGE, EMBED_INIT_RANGE)))
        .collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

fn normal<F: Scalar>(rng: &mut Rng, rows: usize, cols: usize) -> Tensor<F> {
    let data = (0..rows * cols)
        .map(|_| F::from_f64(rng.normal(0.0, LOGIT_INIT_STD)))
        .collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

/// Unique rows for ME: the `u` most frequent embedded types. Rows `1..v` are
/// corpus words in frequency order; UNK (row 0) ranks last.
fn mixture_rows(v: usize, u: usize) -> (Vec<usize>, Vec<Slot>) {
    let ranked = (1..v).chain(std::iter::once(0));
    let unique_rows: Vec<usize> = ranked.take(u).collect();
    let mut slots = vec![Slot::Clustered(0); v];
    for (i, &r) in unique_rows.iter().enumerate() {
        slots[r] = Slot::Unique(i);
    }
    let mut next = 0;
    for s in slots.iter_mut() {
        if let Slot::Clustered(j) = s {
            *j = next;
            next += 1;
        }
    }
    (unique_rows, slots)
}

impl Embedder {
    /// Adds freshly initialized parameters for `mode` to `store`.
    ///
    /// Cluster scores start i.i.d. Normal(0, 0.1²); every embedding matrix
    /// (and the CAE scalars) starts Uniform(−0.08, 0.08).
    pub fn new<F: Scalar>(mode: EmbedMode, store: &mut ParamStore<F>, rng: &mut Rng) -> Result<Self> {
        mode.validate()?;
        let layout = match mode {
            EmbedMode::Se { v, m } => Layout::Standard {
                table: store.add("embed.table", uniform(rng, v, m)),
            },
            EmbedMode::Ce { v, m, k } | EmbedMode::Cae { v, m, k } => {
                let logits = store.add("embed.logits", normal(rng, v, k));
                let centroids = store.add("embed.centroids", uniform(rng, k, m));
                let adjust =
                    matches!(mode, EmbedMode::Cae { .. }).then(|| store.add("embed.adjust", uniform(rng, v, 1)));
                Layout::Cluster {
                    logits,
                    centroids,
                    adjust,
                }
            }
            EmbedMode::Me { v, m, k, u } => {
                let (unique_rows, slots) = mixture_rows(v, u);
                let unique = store.add("embed.unique", uniform(rng, u, m));
                let logits = store.add("embed.logits", normal(rng, v - u, k));
                let centroids = store.add("embed.centroids", uniform(rng, k, m));
                Layout::Mixture {
                    unique,
                    logits,
                    centroids,
                    unique_rows,
                    slots,
                }
            }
            EmbedMode::Cc { v, m, books, codes } => Layout::Coding {
                books: (0..books)
                    .map(|b| Book {
                        logits: store.add(format!("embed.book{b}.logits"), normal(rng, v, codes)),
                        codes: store.add(format!("embed.book{b}.codes"), uniform(rng, codes, m)),
                    })
                    .collect(),
            },
        };
        Ok(Self { mode, layout })
    }

    pub fn mode(&self) -> &EmbedMode {
        &self.mode
    }

    pub fn output_width(&self) -> usize {
        self.mode.output_width()
    }

    /// Number of word ids this embedder accepts (`v + 1`, counting PAD).
    pub fn id_limit(&self) -> usize {
        self.mode.v() + 1
    }

    /// ME only: rows with their own vectors, in frequency order.
    pub fn unique_rows(&self) -> &[usize] {
        match &self.layout {
            Layout::Mixture { unique_rows, .. } => unique_rows,
            _ => &[],
        }
    }

    /// ME only: slot of every row.
    pub fn slots(&self) -> Option<&[Slot]> {
        match &self.layout {
            Layout::Mixture { slots, .. } => Some(slots),
            _ => None,
        }
    }

    /// Handles of the SE table / cluster embeddings / CC codebooks, CAE
    /// scalars and ME unique matrix, for export.
    pub fn table(&self) -> Option<ParamId> {
        match &self.layout {
            Layout::Standard { table } => Some(*table),
            _ => None,
        }
    }

    pub fn centroids(&self) -> Option<ParamId> {
        match &self.layout {
            Layout::Cluster { centroids, .. } | Layout::Mixture { centroids, .. } => Some(*centroids),
            _ => None,
        }
    }

    pub fn adjust(&self) -> Option<ParamId> {
        match &self.layout {
            Layout::Cluster { adjust, .. } => *adjust,
            _ => None,
        }
    }

    pub fn unique(&self) -> Option<ParamId> {
        match &self.layout {
            Layout::Mixture { unique, .. } => Some(*unique),
            _ => None,
        }
    }

    pub fn codebooks(&self) -> Vec<ParamId> {
        match &self.layout {
            Layout::Coding { books } => books.iter().map(|b| b.codes).collect(),
            _ => Vec::new(),
        }
    }

    fn row(&self, id: u32) -> Result<usize> {
        let id = id as usize;
        if id >= self.id_limit() {
            return Err(Error::IdOutOfRange {
                id,
                limit: self.id_limit(),
            });
        }
        Ok(id.saturating_sub(1))
    }

    /// Brings this embedder's parameters onto `tape` for one minibatch.
    pub fn bind<'a, F: Scalar>(&'a self, tape: &mut Tape<F>, store: &ParamStore<F>) -> BoundEmbedder<'a> {
        let vars = match &self.layout {
            Layout::Standard { table } => vec![tape.param(store, *table)],
            Layout::Cluster {
                logits,
                centroids,
                adjust,
            } => {
                let mut v = vec![tape.param(store, *logits), tape.param(store, *centroids)];
                v.extend(adjust.map(|a| tape.param(store, a)));
                v
            }
            Layout::Mixture {
                unique,
                logits,
                centroids,
                ..
            } => vec![
                tape.param(store, *unique),
                tape.param(store, *logits),
                tape.param(store, *centroids),
            ],
            Layout::Coding { books } => books
                .iter()
                .flat_map(|b| [tape.param(store, b.logits), tape.param(store, b.codes)])
                .collect(),
        };
        BoundEmbedder { embedder: self, vars }
    }

    /// Deterministic evaluation embedding: the relaxed sample is replaced by
    /// `one_hot(argmax a)`, i.e. the argmax cluster's row is used directly.
    pub fn embed_eval<F: Scalar>(&self, store: &ParamStore<F>, id: u32) -> Result<Vec<F>> {
        let row = self.row(id)?;
        if id == PAD {
            return Ok(vec![F::ZERO; self.output_width()]);
        }
        Ok(match &self.layout {
            Layout::Standard { table } => store.value(*table).row(row).to_vec(),
            Layout::Cluster {
                logits,
                centroids,
                adjust,
            } => {
                let j = argmax(store.value(*logits).row(row));
                let mut e = store.value(*centroids).row(j).to_vec();
                if let Some(a) = adjust {
                    e.push(store.value(*a).data()[row]);
                }
                e
            }
            Layout::Mixture {
                unique,
                logits,
                centroids,
                slots,
                ..
            } => match slots[row] {
                Slot::Unique(i) => store.value(*unique).row(i).to_vec(),
                Slot::Clustered(j) => {
                    let c = argmax(store.value(*logits).row(j));
                    store.value(*centroids).row(c).to_vec()
                }
            },
            Layout::Coding { books } => {
                let mut acc = vec![F::ZERO; self.mode.m()];
                for b in books {
                    let j = argmax(store.value(b.logits).row(row));
                    for (a, &x) in acc.iter_mut().zip(store.value(b.codes).row(j)) {
                        *a += x;
                    }
                }
                acc
            }
        })
    }

    /// Argmax cluster per clustered word (per word and book for CC).
    pub fn hard_assignments<F: Scalar>(&self, store: &ParamStore<F>) -> Result<Pointers> {
        let per_row = |t: &Tensor<F>| (0..t.rows()).map(|r| argmax(t.row(r)) as u32).collect::<Vec<_>>();
        match &self.layout {
            Layout::Standard { .. } => Err(Error::Unsupported("hard assignment")),
            Layout::Cluster { logits, .. } | Layout::Mixture { logits, .. } => Ok(per_row(store.value(*logits))),
            Layout::Coding { books } => {
                let per_book: Vec<Vec<u32>> = books.iter().map(|b| per_row(store.value(b.logits))).collect();
                let v = self.mode.v();
                Ok((0..v).flat_map(|r| per_book.iter().map(move |p| p[r])).collect())
            }
        }
    }
}

/// An [`Embedder`] whose parameters live on a tape.
pub struct BoundEmbedder<'a> {
    embedder: &'a Embedder,
    vars: Vec<Var>,
}

impl BoundEmbedder<'_> {
    /// Embeds one id per row. With `noise`, clustered words use a fresh
    /// Gumbel-Softmax sample per occurrence; without it, the noise-free
    /// relaxation `softmax(a/τ)`. PAD rows come out as zeros.
    pub fn embed<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        ids: &[u32],
        mut noise: Option<&mut dyn NoiseSource>,
        tau: F,
    ) -> Result<Var> {
        let e = self.embedder;
        let rows: Vec<usize> = ids.iter().map(|&id| e.row(id)).collect::<Result<_>>()?;
        let n = ids.len();

        let mut relax = |tape: &mut Tape<F>, logits: Var, rows: Vec<usize>| -> Result<Var> {
            let k = tape.value(logits).cols();
            let scores = tape.gather_rows(logits, rows)?;
            let g: Vec<F> = match noise.as_deref_mut() {
                Some(src) => src.gumbel(n * k).into_iter().map(F::from_f64).collect(),
                None => vec![F::ZERO; n * k],
            };
            tape.gumbel_softmax(scores, &g, tau)
        };

        let out = match &e.layout {
            Layout::Standard { .. } => tape.gather_rows(self.vars[0], rows)?,
            Layout::Cluster { adjust, .. } => {
                let t = relax(tape, self.vars[0], rows.clone())?;
                let mixed = tape.matmul(t, self.vars[1])?;
                if adjust.is_some() {
                    let s = tape.gather_rows(self.vars[2], rows)?;
                    tape.concat_cols(mixed, s)?
                } else {
                    mixed
                }
            }
            Layout::Mixture { slots, unique_rows, .. } => {
                let (unique, logits, centroids) = (self.vars[0], self.vars[1], self.vars[2]);
                let is_unique: Vec<bool> = rows.iter().map(|&r| matches!(slots[r], Slot::Unique(_))).collect();
                let unique_idx = |r: usize| match slots[r] {
                    Slot::Unique(i) => i,
                    Slot::Clustered(_) => 0,
                };
                let cluster_idx = |r: usize| match slots[r] {
                    Slot::Clustered(j) => j,
                    Slot::Unique(_) => 0,
                };
                let any_unique = !unique_rows.is_empty();
                let any_clustered = unique_rows.len() < slots.len();
                let from_unique = any_unique
                    .then(|| tape.gather_rows(unique, rows.iter().map(|&r| unique_idx(r)).collect()))
                    .transpose()?;
                let from_clusters = if any_clustered {
                    let t = relax(tape, logits, rows.iter().map(|&r| cluster_idx(r)).collect())?;
                    Some(tape.matmul(t, centroids)?)
                } else {
                    None
                };
                match (from_unique, from_clusters) {
                    (Some(a), Some(b)) => tape.blend_rows(is_unique, a, b)?,
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => unreachable!("v >= 1"),
                }
            }
            Layout::Coding { books } => {
                let mut acc = None;
                for b in 0..books.len() {
                    let t = relax(tape, self.vars[2 * b], rows.clone())?;
                    let part = tape.matmul(t, self.vars[2 * b + 1])?;
                    acc = Some(match acc {
                        Some(prev) => tape.add(prev, part)?,
                        None => part,
                    });
                }
                acc.expect("at least one book")
            }
        };

        if ids.contains(&PAD) {
            let live: Vec<bool> = ids.iter().map(|&id| id != PAD).collect();
            let zeros = tape.constant(Tensor::zeros(&[n, e.output_width()]));
            tape.blend_rows(live, out, zeros)
        } else {
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_core::FrozenNoise;

    fn build(mode: EmbedMode, seed: u64) -> (Embedder, ParamStore<f64>) {
        let mut store = ParamStore::new();
        let e = Embedder::new(mode, &mut store, &mut Rng::new(seed)).unwrap();
        (e, store)
    }

    fn set(store: &mut ParamStore<f64>, name: &str, rows: usize, cols: usize, data: &[f64]) {
        let id = store.find(name).unwrap();
        *store.value_mut(id) = Tensor::matrix(rows, cols, data.to_vec()).unwrap();
    }

    #[test]
    fn single_cluster_maps_everything_to_row_zero() {
        let (e, store) = build(EmbedMode::Ce { v: 4, m: 3, k: 1 }, 1);
        let w = store.value(e.centroids().unwrap()).row(0).to_vec();
        let mut tape = Tape::new();
        let bound = e.bind(&mut tape, &store);
        let mut noise = FrozenNoise::new(0);
        let out = bound.embed(&mut tape, &[1, 2, 3, 4], Some(&mut noise), 0.9).unwrap();
        for r in 0..4 {
            assert_eq!(tape.value(out).row(r), &w[..]);
            assert_eq!(e.embed_eval(&store, r as u32 + 1).unwrap(), w);
        }
    }

    #[test]
    fn saturated_sample_selects_a_row() {
        // a huge score gap makes the relaxed sample numerically one-hot
        let (e, mut store) = build(EmbedMode::Ce { v: 1, m: 2, k: 3 }, 2);
        set(&mut store, "embed.logits", 1, 3, &[0.0, 1e4, 0.0]);
        let mut tape = Tape::new();
        let bound = e.bind(&mut tape, &store);
        let out = bound
            .embed(&mut tape, &[1], Some(&mut FrozenNoise::new(3)), 0.9)
            .unwrap();
        let w1 = store.value(e.centroids().unwrap()).row(1).to_vec();
        assert_eq!(tape.value(out).row(0), &w1[..]);
    }

    #[test]
    fn coding_sums_selected_codes() {
        let (e, mut store) = build(
            EmbedMode::Cc {
                v: 1,
                m: 2,
                books: 2,
                codes: 3,
            },
            4,
        );
        set(&mut store, "embed.book0.logits", 1, 3, &[0.0, 0.0, 1e4]);
        set(&mut store, "embed.book1.logits", 1, 3, &[1e4, 0.0, 0.0]);
        set(&mut store, "embed.book0.codes", 3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        set(
            &mut store,
            "embed.book1.codes",
            3,
            2,
            &[10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
        );
        // book 0 picks code 2 = (5, 6), book 1 picks code 0 = (10, 20)
        let expected = vec![15.0, 26.0];
        assert_eq!(e.embed_eval(&store, 1).unwrap(), expected);
        let mut tape = Tape::new();
        let bound = e.bind(&mut tape, &store);
        let out = bound
            .embed(&mut tape, &[1], Some(&mut FrozenNoise::new(0)), 0.9)
            .unwrap();
        assert_eq!(tape.value(out).row(0), &expected[..]);
        assert_eq!(e.hard_assignments(&store).unwrap(), vec![2, 0]);
    }

    #[test]
    fn eval_uses_argmax_with_low_index_ties() {
        let (e, mut store) = build(EmbedMode::Ce { v: 2, m: 2, k: 3 }, 5);
        set(&mut store, "embed.logits", 2, 3, &[0.2, 0.9, 0.1, 0.5, 0.5, 0.0]);
        let w = store.value(e.centroids().unwrap()).clone();
        assert_eq!(e.embed_eval(&store, 1).unwrap(), w.row(1));
        assert_eq!(e.embed_eval(&store, 2).unwrap(), w.row(0));
    }

    #[test]
    fn mixture_unique_words_ignore_scores() {
        let (e, mut store) = build(EmbedMode::Me { v: 5, m: 2, k: 2, u: 2 }, 6);
        assert_eq!(e.unique_rows(), &[1, 2]);
        let unique = store.value(e.unique().unwrap()).clone();
        // id 2 is row 1, the most frequent corpus word
        let before = e.embed_eval(&store, 2).unwrap();
        assert_eq!(before, unique.row(0));
        set(&mut store, "embed.logits", 3, 2, &[9.0, -9.0, -9.0, 9.0, 0.0, 0.0]);
        assert_eq!(e.embed_eval(&store, 2).unwrap(), before);
        let w = store.value(e.centroids().unwrap()).clone();
        // UNK (row 0) is clustered slot 0, row 3 is slot 1, row 4 is slot 2
        assert_eq!(e.embed_eval(&store, 1).unwrap(), w.row(0));
        assert_eq!(e.embed_eval(&store, 4).unwrap(), w.row(1));
        assert_eq!(e.embed_eval(&store, 5).unwrap(), w.row(0));
        assert_eq!(e.hard_assignments(&store).unwrap(), vec![0, 1, 0]);
    }

    #[test]
    fn mixture_extremes() {
        let (e, store) = build(EmbedMode::Me { v: 3, m: 2, k: 2, u: 3 }, 7);
        assert_eq!(e.unique_rows(), &[1, 2, 0]);
        assert!(e.hard_assignments(&store).unwrap().is_empty());
        let mut tape = Tape::new();
        let out = e.bind(&mut tape, &store).embed(&mut tape, &[1, 3], None, 0.9).unwrap();
        assert_eq!(tape.value(out).rows(), 2);

        let (e, store) = build(EmbedMode::Me { v: 3, m: 2, k: 2, u: 0 }, 7);
        assert_eq!(e.hard_assignments(&store).unwrap().len(), 3);
    }

    #[test]
    fn adjustment_scalar_is_appended() {
        let (e, store) = build(EmbedMode::Cae { v: 3, m: 2, k: 2 }, 8);
        let s = store.value(e.adjust().unwrap()).data()[2];
        let out = e.embed_eval(&store, 3).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2], s);
    }

    #[test]
    fn hard_assignments_examples() {
        let (e, mut store) = build(EmbedMode::Ce { v: 3, m: 1, k: 2 }, 9);
        set(&mut store, "embed.logits", 3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 0.0]);
        assert_eq!(e.hard_assignments(&store).unwrap(), vec![0, 1, 0]);
        set(&mut store, "embed.logits", 3, 2, &[0.3; 6]);
        assert_eq!(e.hard_assignments(&store).unwrap(), vec![0, 0, 0]);
        let (se, store) = build(EmbedMode::Se { v: 3, m: 1 }, 9);
        assert!(matches!(se.hard_assignments(&store), Err(Error::Unsupported(_))));
    }

    #[test]
    fn pad_is_zero_and_bad_ids_fail() {
        let (e, store) = build(EmbedMode::Ce { v: 3, m: 2, k: 2 }, 10);
        assert_eq!(e.embed_eval(&store, PAD).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(e.embed_eval(&store, 4), Err(Error::IdOutOfRange { .. })));
        let mut tape = Tape::new();
        let bound = e.bind(&mut tape, &store);
        let out = bound
            .embed(&mut tape, &[2, PAD], Some(&mut FrozenNoise::new(1)), 0.9)
            .unwrap();
        assert_eq!(tape.value(out).row(1), &[0.0, 0.0]);
        assert!(bound.embed(&mut tape, &[9], None, 0.9).is_err());
    }

    #[test]
    fn ce_yields_at_most_k_distinct_vectors() {
        let (e, store) = build(EmbedMode::Ce { v: 40, m: 3, k: 4 }, 11);
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for id in 1..=40 {
            let v = e.embed_eval(&store, id).unwrap();
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        let used: std::collections::BTreeSet<u32> = e.hard_assignments(&store).unwrap().into_iter().collect();
        assert_eq!(seen.len(), used.len());
        assert!(seen.len() <= 4);
    }

    #[test]
    fn eval_is_invariant_to_monotone_row_transforms() {
        let (e, mut store) = build(EmbedMode::Ce { v: 6, m: 2, k: 5 }, 12);
        let before: Vec<Vec<f64>> = (1..=6).map(|i| e.embed_eval(&store, i).unwrap()).collect();
        let id = store.find("embed.logits").unwrap();
        for (i, x) in store.value_mut(id).data_mut().iter_mut().enumerate() {
            let shift = (i / 5) as f64 * 3.0 - 7.0;
            *x = (2.0 * *x).exp() + shift;
        }
        let after: Vec<Vec<f64>> = (1..=6).map(|i| e.embed_eval(&store, i).unwrap()).collect();
        assert_eq!(before, after);
    }
}
