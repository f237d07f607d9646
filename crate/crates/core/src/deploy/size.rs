//! Deployed model size: one ⌈log₂ k⌉-bit pointer per clustered entry plus
//! 32 bits for every other stored parameter.

use serde::{Deserialize, Serialize};

use crate::embed::EmbedMode;
use crate::model::ModelConfig;

pub const BITS_PER_FLOAT: u64 = 32;
pub const BINARY_MB: f64 = 1_048_576.0;
pub const DECIMAL_MB: f64 = 1_000_000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeReport {
    pub pointer_bits: u64,
    /// Pointers plus embedding floats.
    pub embedding_bits: u64,
    /// Encoder and head parameters.
    pub other_bits: u64,
    pub total_bits: u64,
}

fn mb(bits: u64, unit: f64) -> f64 {
    bits as f64 / 8.0 / unit
}

/// Rounds to three decimals, as reported.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

impl SizeReport {
    pub fn total_bytes(&self) -> f64 {
        self.total_bits as f64 / 8.0
    }

    /// Total in MB of 2²⁰ bytes, unrounded.
    pub fn total_mb(&self) -> f64 {
        mb(self.total_bits, BINARY_MB)
    }

    /// Total in MB of 10⁶ bytes, unrounded.
    pub fn total_mb_decimal(&self) -> f64 {
        mb(self.total_bits, DECIMAL_MB)
    }

    pub fn embedding_mb(&self) -> f64 {
        mb(self.embedding_bits, BINARY_MB)
    }

    pub fn embedding_mb_decimal(&self) -> f64 {
        mb(self.embedding_bits, DECIMAL_MB)
    }
}

impl std::fmt::Display for SizeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "pointer bits     {}", self.pointer_bits)?;
        writeln!(f, "embedding bits   {}", self.embedding_bits)?;
        writeln!(f, "other bits       {}", self.other_bits)?;
        writeln!(f, "total bits       {}", self.total_bits)?;
        writeln!(
            f,
            "embedding MB     {:.3} (2^20)  {:.3} (10^6)",
            round3(self.embedding_mb()),
            round3(self.embedding_mb_decimal())
        )?;
        write!(
            f,
            "total MB         {:.3} (2^20)  {:.3} (10^6)",
            round3(self.total_mb()),
            round3(self.total_mb_decimal())
        )
    }
}

/// Size of a deployed model whose embedder is `mode` and whose remaining
/// parameters number `other`.
pub fn model_size_bits(mode: &EmbedMode, other: usize) -> SizeReport {
    let pc = mode.param_counts();
    let pointer_bits = pc.pointer_entries as u64 * pc.bits_per_pointer as u64;
    let embedding_bits = pointer_bits + pc.floats as u64 * BITS_PER_FLOAT;
    let other_bits = other as u64 * BITS_PER_FLOAT;
    SizeReport {
        pointer_bits,
        embedding_bits,
        other_bits,
        total_bits: embedding_bits + other_bits,
    }
}

pub fn config_size(config: &ModelConfig) -> SizeReport {
    model_size_bits(&config.mode, config.other_params())
}
