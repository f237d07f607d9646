//! Two tokenizers: a regular-expression cleaner for the news/ontology/review
//! CSV corpora and a whitespace tokenizer with punctuation detachment for
//! movie reviews.
//!
//! The regex tokenizer applies this ordered substitution list to the
//! lowercased text, then splits on whitespace:
//!
//! 1. `[’‘]` → `'`
//! 2. `[^a-z0-9(),!?'`.:;-]` → space
//! 3. `([.,!?():;])` → ` $1 `
//! 4. `(^|[^a-z0-9])'` → `$1 ' ` (an apostrophe not preceded by a letter or
//!    digit is a quote mark)
//! 5. `([a-z0-9])'` → `$1 '` (clitics such as `'t`, `'s`, `'ll` split off)

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Review length cap used for the movie-review corpus.
pub const IMDB_MAX_LEN: usize = 400;

/// Cap for the other corpora. Keeps training time on a desktop sane.
pub const DEFAULT_MAX_LEN: usize = 256;

static SUBSTITUTIONS: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    [
        (r"[’‘]", "'"),
        (r"[^a-z0-9(),!?'`.:;\-]", " "),
        (r"([.,!?():;])", " $1 "),
        (r"(^|[^a-z0-9])'", "$1 ' "),
        (r"([a-z0-9])'", "$1 '"),
    ]
    .into_iter()
    .map(|(pattern, rep)| (Regex::new(pattern).expect("valid pattern"), rep))
    .collect()
});

static LINE_BREAK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<br\s*/?>").expect("valid pattern"));

const CLITICS: [&str; 7] = ["n't", "'s", "'re", "'ve", "'ll", "'d", "'m"];

pub fn tokenize_regex(text: &str) -> Vec<String> {
    let mut s = text.to_lowercase();
    for (re, rep) in SUBSTITUTIONS.iter() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.split_whitespace().map(str::to_owned).collect()
}

/// Lowercase, split on whitespace, detach leading/trailing punctuation and
/// common clitics, keep at most `max_len` tokens.
pub fn tokenize_simple(text: &str, max_len: usize) -> Vec<String> {
    let lowered = text.to_lowercase();
    let cleaned = LINE_BREAK.replace_all(&lowered, " ");
    let mut out = Vec::new();
    for chunk in cleaned.split_whitespace() {
        if out.len() >= max_len {
            break;
        }
        split_chunk(chunk, &mut out);
    }
    out.truncate(max_len);
    out
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let is_word = |c: char| c.is_alphanumeric();
    let start = chunk.find(is_word);
    let Some(start) = start else {
        out.extend(chunk.chars().map(String::from));
        return;
    };
    let end = chunk
        .rfind(is_word)
        .map(|i| i + chunk[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(chunk.len());
    out.extend(chunk[..start].chars().map(String::from));

    let core = &chunk[start..end];
    match CLITICS.iter().find(|c| core.len() > c.len() && core.ends_with(*c)) {
        Some(clitic) => {
            out.push(core[..core.len() - clitic.len()].to_owned());
            out.push((*clitic).to_owned());
        }
        None => out.push(core.to_owned()),
    }
    out.extend(chunk[end..].chars().map(String::from));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Regex,
    Simple,
}

impl TokenizerKind {
    pub fn tokenize(self, text: &str, max_len: usize) -> Vec<String> {
        match self {
            TokenizerKind::Regex => {
                let mut t = tokenize_regex(text);
                t.truncate(max_len);
                t
            }
            TokenizerKind::Simple => tokenize_simple(text, max_len),
        }
    }

    /// Truncation length used when none is given: reviews are cut at
    /// [`IMDB_MAX_LEN`], everything else at [`DEFAULT_MAX_LEN`].
    pub fn default_max_len(self) -> usize {
        match self {
            TokenizerKind::Regex => DEFAULT_MAX_LEN,
            TokenizerKind::Simple => IMDB_MAX_LEN,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            TokenizerKind::Regex => 0,
            TokenizerKind::Simple => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(TokenizerKind::Regex),
            1 => Some(TokenizerKind::Simple),
            _ => None,
        }
    }
}
