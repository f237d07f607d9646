//! Encoded-dataset cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CLED"                      magic
//! u16                         version (1)
//! u32                         number of classes
//! u32                         requested vocabulary size
//! u32                         vocabulary word count W
//! W × (u32 len, UTF-8 bytes, u64 count)   words in id order, from id 2
//! u32                         record count N
//! N × (u32 label, u32 len, len × u32 ids)
//! u32                         CRC-32 of everything above
//! ```

use std::fs;
use std::path::Path;

use super::{EncodedDataset, Vocab};
use crate::deploy::ByteReader;
use crate::error::{Error, Result};

pub const CACHE_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"CLED";

pub fn write_cache(path: &Path, vocab: &Vocab, data: &EncodedDataset) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    for n in [data.num_classes, vocab.requested(), vocab.size()] {
        buf.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for (i, w) in vocab.words().iter().enumerate() {
        buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
        buf.extend_from_slice(w.as_bytes());
        buf.extend_from_slice(&vocab.count(i as u32 + 2).to_le_bytes());
    }
    buf.extend_from_slice(&(data.len() as u32).to_le_bytes());
    for (seq, &label) in data.sequences.iter().zip(&data.labels) {
        buf.extend_from_slice(&(label as u32).to_le_bytes());
        buf.extend_from_slice(&(seq.len() as u32).to_le_bytes());
        for &id in seq {
            buf.extend_from_slice(&id.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<(Vocab, EncodedDataset)> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes);
    let magic = r.array::<4>("magic")?;
    if &magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u16("version")?;
    if version != CACHE_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CACHE_VERSION,
        });
    }
    let classes = r.u32("header")? as usize;
    let requested = r.u32("header")? as usize;
    let nwords = r.u32("header")? as usize;
    let mut words = Vec::with_capacity(nwords);
    let mut counts = Vec::with_capacity(nwords);
    for _ in 0..nwords {
        words.push(r.string("vocabulary")?);
        counts.push(r.u64("vocabulary")?);
    }
    let vocab = Vocab::from_ranked(words, counts, requested);
    let n = r.u32("records")? as usize;
    let mut sequences = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(r.u32("records")? as usize);
        let len = r.u32("records")? as usize;
        let mut seq = Vec::with_capacity(len);
        for _ in 0..len {
            let id = r.u32("records")?;
            if id as usize >= vocab.num_ids() {
                return Err(Error::IdOutOfRange {
                    id: id as usize,
                    limit: vocab.num_ids(),
                });
            }
            seq.push(id);
        }
        sequences.push(seq);
    }
    r.verify_crc()?;
    Ok((vocab, EncodedDataset::new(classes, sequences, labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{RawDataset, Record, TokenizerKind};

    #[test]
    fn cache_round_trips_and_detects_corruption() {
        let raw = RawDataset::new(
            "t",
            2,
            vec![
                Record {
                    label: 0,
                    text: "a b c a".into(),
                },
                Record {
                    label: 1,
                    text: "".into(),
                },
            ],
        )
        .unwrap();
        let toks = raw.tokenize(TokenizerKind::Regex, 256);
        let vocab = Vocab::build(&toks, 2).unwrap();
        let enc = raw.encode(&vocab, TokenizerKind::Regex, 256);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        write_cache(&p, &vocab, &enc).unwrap();
        let (v2, e2) = read_cache(&p).unwrap();
        assert_eq!(v2, vocab);
        assert_eq!(e2, enc);

        let mut bytes = fs::read(&p).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&p, &bytes).unwrap();
        assert!(read_cache(&p).is_err());
    }
}
