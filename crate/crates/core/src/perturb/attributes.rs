use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::PerturbError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    /// Noise `N(m·1, I)`.
    Location,
    /// Noise `N(0, s²I)`.
    Scale,
}

fn add_noise<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, mean: f64, sd: f64, rng: &mut R) -> Result<Tensor<T>, PerturbError> {
    if !x.is_finite() {
        return Err(PerturbError::NonFinite);
    }
    let noise = Normal::new(mean, sd).map_err(|_| PerturbError::NonPositiveScale(sd))?;
    let data = x.data().iter().map(|&v| v + T::of(noise.sample(rng))).collect();
    Ok(Tensor::from_vec(x.rows(), x.cols(), data).expect("same shape"))
}

/// `X + ε` with rows of `ε` drawn from `N(m·1, I)`.
pub fn perturb_location<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, m: f64, rng: &mut R) -> Result<Tensor<T>, PerturbError> {
    add_noise(x, m, 1.0, rng)
}

/// `X + ε` with rows of `ε` drawn from `N(0, s²I)`.
pub fn perturb_scale<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, s: f64, rng: &mut R) -> Result<Tensor<T>, PerturbError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(PerturbError::NonPositiveScale(s));
    }
    add_noise(x, 0.0, s, rng)
}

pub fn perturb_attributes<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    kind: AttributeKind,
    level: f64,
    rng: &mut R,
) -> Result<Tensor<T>, PerturbError> {
    match kind {
        AttributeKind::Location => perturb_location(x, level, rng),
        AttributeKind::Scale => perturb_scale(x, level, rng),
    }
}
