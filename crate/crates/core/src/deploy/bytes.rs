//! Little-endian byte reading and LSB-first bit packing.

use crate::error::{Error, Result};

/// Packs each value into `bits` bits, entry `i` at bit offset `i·bits`,
/// least-significant bit first within little-endian bytes. Output is
/// zero-padded to a byte boundary.
pub fn pack_bits(values: &[u32], bits: u32) -> Vec<u8> {
    let total = values.len() * bits as usize;
    let mut out = vec![0u8; total.div_ceil(8)];
    let mut pos = 0usize;
    for &v in values {
        for b in 0..bits {
            if (v >> b) & 1 == 1 {
                out[pos / 8] |= 1 << (pos % 8);
            }
            pos += 1;
        }
    }
    out
}

/// Inverse of [`pack_bits`]. Fails if `bytes` is not exactly
/// `⌈count·bits/8⌉` long.
pub fn unpack_bits(bytes: &[u8], count: usize, bits: u32) -> Result<Vec<u32>> {
    let need = (count * bits as usize).div_ceil(8);
    if bytes.len() != need {
        return Err(Error::Malformed(format!(
            "pointer section holds {} bytes, expected {need}",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for b in 0..bits {
            if (bytes[pos / 8] >> (pos % 8)) & 1 == 1 {
                v |= 1 << b;
            }
            pos += 1;
        }
        out.push(v);
    }
    Ok(out)
}

/// Bounds-checked cursor over a byte buffer.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn bytes(&mut self, n: usize, ctx: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(ctx))?;
        if end > self.buf.len() {
            return Err(Error::Truncated(ctx));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn array<const N: usize>(&mut self, ctx: &'static str) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.bytes(N, ctx)?);
        Ok(a)
    }

    pub fn u8(&mut self, ctx: &'static str) -> Result<u8> {
        Ok(self.array::<1>(ctx)?[0])
    }

    pub fn u16(&mut self, ctx: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(ctx)?))
    }

    pub fn u32(&mut self, ctx: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(ctx)?))
    }

    pub fn u64(&mut self, ctx: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(ctx)?))
    }

    pub fn f32s(&mut self, n: usize, ctx: &'static str) -> Result<Vec<f32>> {
        let raw = self.bytes(n.checked_mul(4).ok_or(Error::Truncated(ctx))?, ctx)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub fn string(&mut self, ctx: &'static str) -> Result<String> {
        let len = self.u32(ctx)? as usize;
        let raw = self.bytes(len, ctx)?;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::Malformed(format!("{ctx}: {e}")))
    }

    /// Checks that exactly four bytes remain and that they hold the CRC-32 of
    /// everything before them.
    pub fn verify_crc(&mut self) -> Result<()> {
        let body = &self.buf[..self.pos];
        let stored = self.u32("checksum")?;
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after checksum",
                self.buf.len() - self.pos
            )));
        }
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        Ok(())
    }
}
