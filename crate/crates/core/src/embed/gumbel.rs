use crate::error::{Error, Result};
use crate::tensor_core::Scalar;

/// `t_j = exp((a_j + g_j)/τ) / Σ_l exp((a_l + g_l)/τ)`, max-shifted.
pub fn gumbel_softmax<F: Scalar>(scores: &[F], noise: &[F], tau: F) -> Result<Vec<F>> {
    if !(tau > F::ZERO) {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    if scores.len() != noise.len() || scores.is_empty() {
        return Err(Error::shape(
            "gumbel_softmax",
            format!("{} scores vs {} noise values", scores.len(), noise.len()),
        ));
    }
    let z: Vec<F> = scores.iter().zip(noise).map(|(&a, &g)| (a + g) / tau).collect();
    let max = z.iter().copied().fold(z[0], Scalar::max);
    let e: Vec<F> = z.iter().map(|&x| (x - max).exp()).collect();
    let s: F = e.iter().copied().sum();
    Ok(e.into_iter().map(|x| x / s).collect())
}
