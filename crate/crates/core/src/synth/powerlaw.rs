use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::SynthError;

/// Discrete power-law weights `x^exponent` over `lo..=hi`.
pub(crate) fn powerlaw_weights(exponent: f64, lo: usize, hi: usize) -> Vec<f64> {
    (lo..=hi).map(|x| (x as f64).powf(exponent)).collect()
}

/// Mean of the discrete power law on `lo..=hi`.
pub(crate) fn powerlaw_mean(exponent: f64, lo: usize, hi: usize) -> f64 {
    let w = powerlaw_weights(exponent, lo, hi);
    let total: f64 = w.iter().sum();
    w.iter().zip(lo..=hi).map(|(p, x)| p * x as f64).sum::<f64>() / total
}

/// `count` integers in `[lo, hi]` with `P(x) ∝ x^exponent`.
pub fn sample_powerlaw<R: Rng + ?Sized>(
    exponent: f64,
    lo: usize,
    hi: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SynthError> {
    if lo == 0 || lo > hi {
        return Err(SynthError::InvalidParams(format!(
            "power-law support [{lo}, {hi}] needs 1 <= lo <= hi"
        )));
    }
    let dist = WeightedIndex::new(powerlaw_weights(exponent, lo, hi))
        .map_err(|e| SynthError::InvalidParams(e.to_string()))?;
    Ok((0..count).map(|_| lo + dist.sample(rng)).collect())
}
