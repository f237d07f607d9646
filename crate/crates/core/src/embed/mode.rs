use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Embedding parameterization and its size hyperparameters.
///
/// `v` counts embedded word types. A model trained on a vocabulary of `n`
/// corpus words embeds `n + 1` types (the extra one is UNK); PAD is never
/// embedded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EmbedMode {
    Se {
        v: usize,
        m: usize,
    },
    Ce {
        v: usize,
        m: usize,
        k: usize,
    },
    Cae {
        v: usize,
        m: usize,
        k: usize,
    },
    Me {
        v: usize,
        m: usize,
        k: usize,
        u: usize,
    },
    Cc {
        v: usize,
        m: usize,
        books: usize,
        codes: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Se,
    Ce,
    Cae,
    Me,
    Cc,
}

impl ModeKind {
    pub const ALL: [ModeKind; 5] = [ModeKind::Se, ModeKind::Ce, ModeKind::Cae, ModeKind::Me, ModeKind::Cc];

    pub fn name(self) -> &'static str {
        match self {
            ModeKind::Se => "se",
            ModeKind::Ce => "ce",
            ModeKind::Cae => "cae",
            ModeKind::Me => "me",
            ModeKind::Cc => "cc",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ModeKind::Se => 0,
            ModeKind::Ce => 1,
            ModeKind::Cae => 2,
            ModeKind::Me => 3,
            ModeKind::Cc => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.code() == code)
    }
}

impl std::str::FromStr for ModeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown embedding mode {s:?}")))
    }
}

impl std::fmt::Display for ModeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Deploy-time parameter inventory of an embedder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCounts {
    /// Parameters stored as 32-bit floats.
    pub floats: usize,
    pub pointer_entries: usize,
    pub bits_per_pointer: u32,
}

/// `⌈log₂ k⌉`, with 0 bits for a single cluster.
pub fn pointer_bits(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

impl EmbedMode {
    /// Builds a mode from loose hyperparameters, ignoring those the mode does
    /// not use.
    pub fn from_parts(kind: ModeKind, v: usize, m: usize, k: usize, u: usize, books: usize) -> Result<Self> {
        let mode = match kind {
            ModeKind::Se => EmbedMode::Se { v, m },
            ModeKind::Ce => EmbedMode::Ce { v, m, k },
            ModeKind::Cae => EmbedMode::Cae { v, m, k },
            ModeKind::Me => EmbedMode::Me { v, m, k, u },
            ModeKind::Cc => EmbedMode::Cc { v, m, books, codes: k },
        };
        mode.validate()?;
        Ok(mode)
    }

    pub fn kind(&self) -> ModeKind {
        match self {
            EmbedMode::Se { .. } => ModeKind::Se,
            EmbedMode::Ce { .. } => ModeKind::Ce,
            EmbedMode::Cae { .. } => ModeKind::Cae,
            EmbedMode::Me { .. } => ModeKind::Me,
            EmbedMode::Cc { .. } => ModeKind::Cc,
        }
    }

    pub fn v(&self) -> usize {
        match *self {
            EmbedMode::Se { v, .. }
            | EmbedMode::Ce { v, .. }
            | EmbedMode::Cae { v, .. }
            | EmbedMode::Me { v, .. }
            | EmbedMode::Cc { v, .. } => v,
        }
    }

    pub fn m(&self) -> usize {
        match *self {
            EmbedMode::Se { m, .. }
            | EmbedMode::Ce { m, .. }
            | EmbedMode::Cae { m, .. }
            | EmbedMode::Me { m, .. }
            | EmbedMode::Cc { m, .. } => m,
        }
    }

    /// Number of clusters (codes per book for CC); 0 for SE.
    pub fn k(&self) -> usize {
        match *self {
            EmbedMode::Se { .. } => 0,
            EmbedMode::Ce { k, .. } | EmbedMode::Cae { k, .. } | EmbedMode::Me { k, .. } => k,
            EmbedMode::Cc { codes, .. } => codes,
        }
    }

    pub fn u(&self) -> usize {
        match *self {
            EmbedMode::Me { u, .. } => u,
            _ => 0,
        }
    }

    pub fn books(&self) -> usize {
        match *self {
            EmbedMode::Cc { books, .. } => books,
            _ => 0,
        }
    }

    pub fn with_v(self, v: usize) -> Self {
        match self {
            EmbedMode::Se { m, .. } => EmbedMode::Se { v, m },
            EmbedMode::Ce { m, k, .. } => EmbedMode::Ce { v, m, k },
            EmbedMode::Cae { m, k, .. } => EmbedMode::Cae { v, m, k },
            EmbedMode::Me { m, k, u, .. } => EmbedMode::Me { v, m, k, u },
            EmbedMode::Cc { m, books, codes, .. } => EmbedMode::Cc { v, m, books, codes },
        }
    }

    /// Width of the vectors handed to the sequence model.
    pub fn output_width(&self) -> usize {
        match self {
            EmbedMode::Cae { m, .. } => m + 1,
            _ => self.m(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::invalid(msg));
        if self.v() == 0 {
            return fail("v must be at least 1".into());
        }
        if self.m() == 0 {
            return fail("embedding dimension m must be at least 1".into());
        }
        match *self {
            EmbedMode::Se { .. } => Ok(()),
            EmbedMode::Ce { k, .. } | EmbedMode::Cae { k, .. } if k == 0 => fail("k must be at least 1".into()),
            EmbedMode::Me { k, u, v, .. } => {
                if k == 0 {
                    fail("k must be at least 1".into())
                } else if u > v {
                    fail(format!("u = {u} exceeds v = {v}"))
                } else {
                    Ok(())
                }
            }
            EmbedMode::Cc { books, codes, .. } if books == 0 || codes == 0 => {
                fail("compositional coding needs at least one book and one code".into())
            }
            _ => Ok(()),
        }
    }

    /// Deploy-time inventory: floats kept, pointer entries, bits per pointer.
    pub fn param_counts(&self) -> ParamCounts {
        let (floats, entries, bits) = match *self {
            EmbedMode::Se { v, m } => (v * m, 0, 0),
            EmbedMode::Ce { v, m, k } => (k * m, v, pointer_bits(k)),
            EmbedMode::Cae { v, m, k } => (k * m + v, v, pointer_bits(k)),
            EmbedMode::Me { v, m, k, u } => (u * m + k * m, v - u, pointer_bits(k)),
            EmbedMode::Cc { v, m, books, codes } => (books * codes * m, v * books, pointer_bits(codes)),
        };
        ParamCounts {
            floats,
            pointer_entries: entries,
            bits_per_pointer: bits,
        }
    }

    /// Number of scalars trained (cluster scores included).
    pub fn training_params(&self) -> usize {
        match *self {
            EmbedMode::Se { v, m } => v * m,
            EmbedMode::Ce { v, m, k } => v * k + k * m,
            EmbedMode::Cae { v, m, k } => v * k + k * m + v,
            EmbedMode::Me { v, m, k, u } => u * m + (v - u) * k + k * m,
            EmbedMode::Cc { v, m, books, codes } => books * (v * codes + codes * m),
        }
    }
}
