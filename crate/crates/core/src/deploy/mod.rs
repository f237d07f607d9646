//! Deployment: size accounting, the compact model and its binary format.

mod bytes;
mod compact;
mod size;

pub(crate) use bytes::ByteReader;
pub use bytes::{pack_bits, unpack_bits};
pub use compact::{CompactModel, DiskReport, FORMAT_VERSION};
pub use size::{config_size, model_size_bits, round3, SizeReport, BINARY_MB, DECIMAL_MB};
