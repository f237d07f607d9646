//! The deployed model and its binary format.
//!
//! ```text
//! "CLEM"  u16 version  u8 mode
//! u32 × 10   v m k u hidden classes books cell tokenizer max_len
//! pointers   ⌈entries·b/8⌉ bytes, b = ⌈log₂ k⌉, LSB first
//! matrix     f32: SE v×m table, CE/CAE/ME k×m clusters, CC books·k×m codes
//! extras     CAE: v f32 scalars; ME: u × u32 word ids then u×m f32
//! encoder    f32 weight (gates·H × (d+H)) then bias
//! head       f32 weight (C × H) then bias
//! vocab      u32 count, then (u32 len, UTF-8) per word from id 2
//! u32        CRC-32 of all preceding bytes
//! ```
//!
//! Pointer entries are per embedded row for CE/CAE, per clustered row (in
//! ascending row order) for ME, and word-major per (row, book) for CC.

use std::fs;
use std::path::Path;

use super::bytes::{pack_bits, unpack_bits, ByteReader};
use super::size::{model_size_bits, SizeReport};
use crate::data::{TokenizerKind, Vocab, PAD};
use crate::embed::{argmax, EmbedMode, ModeKind, Slot};
use crate::error::{Error, Result};
use crate::model::{Architecture, Classifier};
use crate::seq::{encode_plain, head_plain, CellKind};
use crate::tensor_core::{ParamStore, Tensor};

pub const FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"CLEM";

#[derive(Clone, Debug, PartialEq)]
pub struct CompactModel {
    pub mode: EmbedMode,
    pub cell: CellKind,
    pub hidden: usize,
    pub classes: usize,
    pub tokenizer: TokenizerKind,
    pub max_len: usize,
    /// Unpacked pointer table; see the module docs for its indexing.
    pub pointers: Vec<u32>,
    pub matrix: Tensor<f32>,
    /// CAE only.
    pub adjust: Vec<f32>,
    /// ME only: word ids with their own vectors, in frequency order.
    pub unique_ids: Vec<u32>,
    pub unique: Tensor<f32>,
    pub encoder_weight: Tensor<f32>,
    pub encoder_bias: Tensor<f32>,
    pub head_weight: Tensor<f32>,
    pub head_bias: Tensor<f32>,
    pub vocab: Vocab,
    /// ME row → slot, derived from `unique_ids`.
    slots: Vec<Slot>,
}

/// On-disk bytes split into the parameter payload and everything else.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiskReport {
    pub file_bytes: usize,
    /// Packed pointers plus float arrays.
    pub parameter_bytes: usize,
    /// Magic, header, vocabulary, ME id list and checksum.
    pub overhead_bytes: usize,
}

fn slots_for(v: usize, unique_ids: &[u32]) -> Result<Vec<Slot>> {
    let mut slots: Vec<Option<Slot>> = vec![None; v];
    for (i, &id) in unique_ids.iter().enumerate() {
        let row = (id as usize).wrapping_sub(1);
        if id == PAD || row >= v || slots[row].is_some() {
            return Err(Error::Malformed(format!("bad unique word id {id}")));
        }
        slots[row] = Some(Slot::Unique(i));
    }
    let mut next = 0;
    Ok(slots
        .into_iter()
        .map(|s| {
            s.unwrap_or_else(|| {
                next += 1;
                Slot::Clustered(next - 1)
            })
        })
        .collect())
}

fn expect_shape(what: &str, t: &Tensor<f32>, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Malformed(format!(
            "{what} has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn matrix_rows(mode: &EmbedMode) -> usize {
    match *mode {
        EmbedMode::Se { v, .. } => v,
        EmbedMode::Cc { books, codes, .. } => books * codes,
        _ => mode.k(),
    }
}

impl CompactModel {
    /// Collapses cluster scores to pointers and copies everything the
    /// evaluation path reads. Cluster scores are dropped.
    pub fn finalize(
        arch: &Architecture,
        store: &ParamStore<f32>,
        vocab: &Vocab,
        tokenizer: TokenizerKind,
        max_len: usize,
    ) -> Result<Self> {
        let config = arch.config;
        let mode = config.mode;
        let emb = &arch.embedder;
        let empty = || Tensor::zeros(&[0, mode.m()]);
        let pointers = match mode.kind() {
            ModeKind::Se => Vec::new(),
            _ => emb.hard_assignments(store)?,
        };
        let matrix = match mode.kind() {
            ModeKind::Se => store.value(emb.table().expect("SE table")).clone(),
            ModeKind::Cc => {
                let mut data = Vec::new();
                for id in emb.codebooks() {
                    data.extend_from_slice(store.value(id).data());
                }
                Tensor::matrix(matrix_rows(&mode), mode.m(), data)?
            }
            _ => store.value(emb.centroids().expect("cluster matrix")).clone(),
        };
        let adjust = emb.adjust().map(|a| store.value(a).data().to_vec()).unwrap_or_default();
        let unique_ids: Vec<u32> = emb.unique_rows().iter().map(|&r| r as u32 + 1).collect();
        let unique = emb.unique().map(|u| store.value(u).clone()).unwrap_or_else(empty);
        // Words are kept in id order; training counts are not part of the format.
        let vocab = Vocab::from_ranked(vocab.words().to_vec(), vec![0; vocab.size()], vocab.size());
        let cm = Self {
            mode,
            cell: config.cell,
            hidden: config.hidden,
            classes: config.classes,
            tokenizer,
            max_len,
            pointers,
            matrix,
            adjust,
            slots: slots_for(mode.v(), &unique_ids)?,
            unique_ids,
            unique,
            encoder_weight: store.value(arch.encoder.weight).clone(),
            encoder_bias: store.value(arch.encoder.bias).clone(),
            head_weight: store.value(arch.head.weight).clone(),
            head_bias: store.value(arch.head.bias).clone(),
            vocab,
        };
        cm.check()?;
        Ok(cm)
    }

    pub fn from_classifier(c: &Classifier) -> Result<Self> {
        Self::finalize(&c.arch, &c.store, &c.vocab, c.tokenizer, c.max_len)
    }

    /// Header sizes against array lengths, pointer range, vocabulary fit.
    fn check(&self) -> Result<()> {
        let mode = &self.mode;
        mode.validate().map_err(|e| Error::Malformed(e.to_string()))?;
        let (m, h, c) = (mode.m(), self.hidden, self.classes);
        if h == 0 || c == 0 {
            return Err(Error::Malformed("hidden size and class count must be positive".into()));
        }
        let pc = mode.param_counts();
        if self.pointers.len() != pc.pointer_entries {
            return Err(Error::Malformed(format!(
                "{} pointer entries, expected {}",
                self.pointers.len(),
                pc.pointer_entries
            )));
        }
        if let Some(&p) = self.pointers.iter().find(|&&p| p as usize >= mode.k()) {
            return Err(Error::Malformed(format!(
                "pointer {p} out of range for k = {}",
                mode.k()
            )));
        }
        expect_shape("embedding matrix", &self.matrix, &[matrix_rows(mode), m])?;
        let want_adjust = if mode.kind() == ModeKind::Cae { mode.v() } else { 0 };
        if self.adjust.len() != want_adjust {
            return Err(Error::Malformed(format!(
                "{} adjustment scalars, expected {want_adjust}",
                self.adjust.len()
            )));
        }
        if self.unique_ids.len() != mode.u() {
            return Err(Error::Malformed(format!(
                "{} unique ids, expected {}",
                self.unique_ids.len(),
                mode.u()
            )));
        }
        expect_shape("unique matrix", &self.unique, &[mode.u(), m])?;
        let d = mode.output_width();
        let g = self.cell.gates();
        expect_shape("encoder weight", &self.encoder_weight, &[g * h, d + h])?;
        expect_shape("encoder bias", &self.encoder_bias, &[g * h])?;
        expect_shape("head weight", &self.head_weight, &[c, h])?;
        expect_shape("head bias", &self.head_bias, &[c])?;
        if self.vocab.num_ids() > mode.v() + 1 {
            return Err(Error::Malformed(format!(
                "vocabulary of {} words does not fit v = {}",
                self.vocab.size(),
                mode.v()
            )));
        }
        Ok(())
    }

    /// Embedding of word `id` by pointer lookup; PAD is the zero vector.
    pub fn embed(&self, id: u32) -> Result<Vec<f32>> {
        let v = self.mode.v();
        if id as usize > v {
            return Err(Error::IdOutOfRange {
                id: id as usize,
                limit: v + 1,
            });
        }
        if id == PAD {
            return Ok(vec![0.0; self.mode.output_width()]);
        }
        let row = id as usize - 1;
        Ok(match self.mode {
            EmbedMode::Se { .. } => self.matrix.row(row).to_vec(),
            EmbedMode::Ce { .. } => self.matrix.row(self.pointers[row] as usize).to_vec(),
            EmbedMode::Cae { .. } => {
                let mut e = self.matrix.row(self.pointers[row] as usize).to_vec();
                e.push(self.adjust[row]);
                e
            }
            EmbedMode::Me { .. } => match self.slots[row] {
                Slot::Unique(i) => self.unique.row(i).to_vec(),
                Slot::Clustered(j) => self.matrix.row(self.pointers[j] as usize).to_vec(),
            },
            EmbedMode::Cc { m, books, codes, .. } => {
                let mut acc = vec![0.0f32; m];
                for b in 0..books {
                    let code = self.pointers[row * books + b] as usize;
                    for (a, &x) in acc.iter_mut().zip(self.matrix.row(b * codes + code)) {
                        *a += x;
                    }
                }
                acc
            }
        })
    }

    pub fn logits(&self, seq: &[u32]) -> Result<Vec<f32>> {
        let inputs = seq.iter().filter(|&&id| id != PAD).map(|&id| self.embed(id));
        let h = encode_plain(self.cell, &self.encoder_weight, &self.encoder_bias, self.hidden, inputs)?;
        Ok(head_plain(&self.head_weight, &self.head_bias, &h))
    }

    pub fn predict(&self, seq: &[u32]) -> Result<usize> {
        Ok(argmax(&self.logits(seq)?))
    }

    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        self.vocab.encode(&self.tokenizer.tokenize(text, self.max_len))
    }

    /// Label and class probabilities for raw text.
    pub fn infer(&self, text: &str) -> Result<(usize, Vec<f32>)> {
        let logits = self.logits(&self.encode_text(text))?;
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f32 = exps.iter().sum();
        Ok((argmax(&logits), exps.into_iter().map(|e| e / total).collect()))
    }

    pub fn other_params(&self) -> usize {
        self.encoder_weight.len() + self.encoder_bias.len() + self.head_weight.len() + self.head_bias.len()
    }

    pub fn size_report(&self) -> SizeReport {
        model_size_bits(&self.mode, self.other_params())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(self.mode.kind().code());
        let mode = &self.mode;
        let header = [
            mode.v() as u32,
            mode.m() as u32,
            mode.k() as u32,
            mode.u() as u32,
            self.hidden as u32,
            self.classes as u32,
            mode.books() as u32,
            self.cell.code(),
            self.tokenizer.code(),
            self.max_len as u32,
        ];
        for x in header {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        buf.extend_from_slice(&pack_bits(&self.pointers, mode.param_counts().bits_per_pointer));
        let floats = |buf: &mut Vec<u8>, xs: &[f32]| {
            for x in xs {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        };
        floats(&mut buf, self.matrix.data());
        floats(&mut buf, &self.adjust);
        for id in &self.unique_ids {
            buf.extend_from_slice(&id.to_le_bytes());
        }
        floats(&mut buf, self.unique.data());
        floats(&mut buf, self.encoder_weight.data());
        floats(&mut buf, self.encoder_bias.data());
        floats(&mut buf, self.head_weight.data());
        floats(&mut buf, self.head_bias.data());
        buf.extend_from_slice(&(self.vocab.size() as u32).to_le_bytes());
        for w in self.vocab.words() {
            buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
            buf.extend_from_slice(w.as_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.array::<4>("magic")?;
        if &magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let code = r.u8("mode")?;
        let kind = ModeKind::from_code(code).ok_or_else(|| Error::Malformed(format!("unknown mode code {code}")))?;
        let mut header = [0usize; 10];
        for x in header.iter_mut() {
            *x = r.u32("header")? as usize;
        }
        let [v, m, k, u, hidden, classes, books, cell, tokenizer, max_len] = header;
        let mode = EmbedMode::from_parts(kind, v, m, k, u, books).map_err(|e| Error::Malformed(e.to_string()))?;
        let cell =
            CellKind::from_code(cell as u32).ok_or_else(|| Error::Malformed(format!("unknown cell code {cell}")))?;
        let tokenizer = TokenizerKind::from_code(tokenizer as u32)
            .ok_or_else(|| Error::Malformed(format!("unknown tokenizer code {tokenizer}")))?;

        let pc = mode.param_counts();
        let packed_len = (pc.pointer_entries * pc.bits_per_pointer as usize).div_ceil(8);
        let pointers = unpack_bits(
            r.bytes(packed_len, "pointers")?,
            pc.pointer_entries,
            pc.bits_per_pointer,
        )?;
        let rows = matrix_rows(&mode);
        let matrix = Tensor::matrix(rows, m, r.f32s(rows * m, "embedding matrix")?)?;
        let adjust = if kind == ModeKind::Cae {
            r.f32s(v, "adjustments")?
        } else {
            Vec::new()
        };
        let mut unique_ids = Vec::with_capacity(u);
        for _ in 0..u {
            unique_ids.push(r.u32("unique ids")?);
        }
        let unique = Tensor::matrix(u, m, r.f32s(u * m, "unique matrix")?)?;
        let (d, g) = (mode.output_width(), cell.gates());
        let encoder_weight = Tensor::matrix(g * hidden, d + hidden, r.f32s(g * hidden * (d + hidden), "encoder")?)?;
        let encoder_bias = Tensor::vector(r.f32s(g * hidden, "encoder")?);
        let head_weight = Tensor::matrix(classes, hidden, r.f32s(classes * hidden, "head")?)?;
        let head_bias = Tensor::vector(r.f32s(classes, "head")?);
        let nwords = r.u32("vocabulary")? as usize;
        let mut words = Vec::with_capacity(nwords.min(bytes.len()));
        for _ in 0..nwords {
            words.push(r.string("vocabulary")?);
        }
        r.verify_crc()?;
        let vocab = Vocab::from_ranked(words, vec![0; nwords], nwords);
        let cm = Self {
            mode,
            cell,
            hidden,
            classes,
            tokenizer,
            max_len,
            pointers,
            matrix,
            adjust,
            slots: slots_for(v, &unique_ids)?,
            unique_ids,
            unique,
            encoder_weight,
            encoder_bias,
            head_weight,
            head_bias,
            vocab,
        };
        cm.check()?;
        Ok(cm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn disk_report(&self) -> DiskReport {
        let file_bytes = self.to_bytes().len();
        let pc = self.mode.param_counts();
        let pointer_bytes = (pc.pointer_entries * pc.bits_per_pointer as usize).div_ceil(8);
        let parameter_bytes = pointer_bytes + 4 * (pc.floats + self.other_params());
        DiskReport {
            file_bytes,
            parameter_bytes,
            overhead_bytes: file_bytes - parameter_bytes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tensor_core::Rng;

    fn vocab(n: usize) -> Vocab {
        let words = (0..n).map(|i| format!("w{i}")).collect();
        Vocab::from_ranked(words, vec![0; n], n)
    }

    fn build(mode: EmbedMode, cell: CellKind, seed: u64) -> (Architecture, ParamStore<f32>, CompactModel) {
        let mut store = ParamStore::new();
        let config = ModelConfig {
            cell,
            hidden: 5,
            ..ModelConfig::lstm(mode, 3)
        };
        let mut rng = Rng::new(seed);
        let arch = Architecture::new(config, &mut store, &mut rng).unwrap();
        // spread the scores so every cluster is used
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).ends_with("logits") {
                for x in store.value_mut(id).data_mut() {
                    *x = rng.normal(0.0, 3.0) as f32;
                }
            }
        }
        let cm = CompactModel::finalize(&arch, &store, &vocab(mode.v() - 1), TokenizerKind::Regex, 64).unwrap();
        (arch, store, cm)
    }

    fn modes() -> Vec<EmbedMode> {
        vec![
            EmbedMode::Se { v: 7, m: 3 },
            EmbedMode::Ce { v: 7, m: 3, k: 3 },
            EmbedMode::Cae { v: 7, m: 3, k: 2 },
            EmbedMode::Me { v: 7, m: 3, k: 3, u: 2 },
            EmbedMode::Cc {
                v: 7,
                m: 3,
                books: 3,
                codes: 4,
            },
        ]
    }

    #[test]
    fn ce_toy_layout() {
        let (_, store, cm) = build(EmbedMode::Ce { v: 3, m: 2, k: 2 }, CellKind::Lstm, 1);
        assert_eq!(cm.pointers.len(), 3);
        assert_eq!(cm.matrix.shape(), &[2, 2]);
        // cluster scores are not carried over
        assert!(store.find("embed.logits").is_ok());
        assert!(cm.adjust.is_empty() && cm.unique_ids.is_empty());
    }

    #[test]
    fn me_keeps_u_rows_and_v_minus_u_pointers() {
        let (_, _, cm) = build(EmbedMode::Me { v: 7, m: 3, k: 3, u: 2 }, CellKind::Lstm, 2);
        assert_eq!(cm.unique.shape(), &[2, 3]);
        assert_eq!(cm.unique_ids, vec![2, 3]);
        assert_eq!(cm.pointers.len(), 5);
    }

    #[test]
    fn lookups_equal_embed_eval_for_every_word() {
        for mode in modes() {
            for cell in [CellKind::Lstm, CellKind::Rnn] {
                let (arch, store, cm) = build(mode, cell, 3);
                for id in 0..=mode.v() as u32 {
                    assert_eq!(
                        cm.embed(id).unwrap(),
                        arch.embedder.embed_eval(&store, id).unwrap(),
                        "{mode:?} id {id}"
                    );
                }
                let seq = [2, 0, 5, 7, 1, 1, 3];
                assert_eq!(cm.logits(&seq).unwrap(), arch.logits_eval(&store, &seq).unwrap());
            }
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        for mode in modes() {
            let (_, _, cm) = build(mode, CellKind::Lstm, 4);
            let bytes = cm.to_bytes();
            let back = CompactModel::from_bytes(&bytes).unwrap();
            assert_eq!(back, cm);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn single_cluster_emits_no_pointer_bytes() {
        let (_, _, cm1) = build(EmbedMode::Ce { v: 7, m: 3, k: 1 }, CellKind::Lstm, 5);
        let (_, _, cm2) = build(EmbedMode::Ce { v: 7, m: 3, k: 2 }, CellKind::Lstm, 5);
        // k=2 adds ⌈7/8⌉ = 1 pointer byte; the matrices differ by one row
        assert_eq!(cm2.to_bytes().len() - cm1.to_bytes().len(), 1 + 3 * 4);
    }

    #[test]
    fn corruption_is_detected() {
        let (_, _, cm) = build(EmbedMode::Cae { v: 7, m: 3, k: 3 }, CellKind::Lstm, 6);
        let bytes = cm.to_bytes();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(CompactModel::from_bytes(&bytes[..cut]), Err(Error::Truncated(_))),
                "cut {cut}"
            );
        }
        let mut flipped = bytes.clone();
        // a byte inside the cluster matrix
        let i = 60;
        flipped[i] ^= 1;
        assert!(matches!(
            CompactModel::from_bytes(&flipped),
            Err(Error::Checksum { .. })
        ));
        let mut versioned = bytes.clone();
        versioned[4] = 9;
        assert!(matches!(
            CompactModel::from_bytes(&versioned),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(CompactModel::from_bytes(&magic), Err(Error::BadMagic(_))));
    }

    #[test]
    fn empty_text_still_predicts() {
        let (arch, store, cm) = build(EmbedMode::Ce { v: 7, m: 3, k: 3 }, CellKind::Lstm, 7);
        let (label, probs) = cm.infer("").unwrap();
        assert_eq!(label, arch.predict_eval(&store, &[1]).unwrap());
        assert!((probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        let (l2, _) = cm.infer("w0 w3 unseen w5").unwrap();
        assert_eq!(l2, arch.predict_eval(&store, &[2, 5, 1, 7]).unwrap());
    }

    #[test]
    fn disk_report_separates_overhead() {
        let (_, _, cm) = build(EmbedMode::Ce { v: 7, m: 3, k: 3 }, CellKind::Lstm, 8);
        let d = cm.disk_report();
        assert_eq!(d.parameter_bytes as u64, cm.size_report().total_bits.div_ceil(8));
        assert_eq!(d.file_bytes, d.parameter_bytes + d.overhead_bytes);
    }
}
