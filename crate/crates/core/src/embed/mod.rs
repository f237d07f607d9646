//! Word-embedding parameterizations.
//!
//! | mode | trained parameters | deployed form |
//! |------|--------------------|---------------|
//! | SE   | `v×m` table | same table |
//! | CE   | `v×k` cluster scores, `k×m` cluster embeddings | pointer per word + `k×m` |
//! | CAE  | CE + one scalar per word, appended to the cluster vector | pointers + `k×m` + `v` scalars |
//! | ME   | `u×m` unique vectors for the most frequent words, CE for the rest | `u×m` + pointers for `v−u` words + `k×m` |
//! | CC   | `M` independent clusterings, embeddings summed | `M` pointers per word + `M` codebooks |
//!
//! During training every clustered word occurrence draws fresh Gumbel noise
//! and uses the relaxed sample `softmax((a + g)/τ)` to mix cluster vectors.
//! At evaluation the sample is replaced by `one_hot(argmax a)`, which is what
//! lets the score table be dropped in favour of pointers.

mod embedder;
mod gumbel;
mod mode;

pub use embedder::{argmax, BoundEmbedder, Embedder, Pointers, Slot};
pub use gumbel::gumbel_softmax;
pub use mode::{pointer_bits, EmbedMode, ModeKind, ParamCounts};
