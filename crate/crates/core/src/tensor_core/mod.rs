//! Dense numerics for the classifier stack.
//!
//! Everything here is deliberately small: a row-major [`Tensor`], a
//! define-by-run [`Tape`] for reverse-mode gradients, a [`ParamStore`] that
//! owns trainable values and their accumulated gradients, the [`Adam`]
//! optimizer, a seeded [`Rng`] with Gumbel draws, and a finite-difference
//! [`gradient_check`].
//!
//! The numeric type is abstracted behind [`Scalar`] so that the same model code
//! runs in `f32` for training and deployment and in `f64` for gradient checks.

mod adam;
mod gradcheck;
mod params;
mod rng;
mod scalar;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use params::{ParamId, ParamStore};
pub use rng::{gumbel_from_uniform, sample_gumbel, FrozenNoise, NoiseSource, Rng};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
