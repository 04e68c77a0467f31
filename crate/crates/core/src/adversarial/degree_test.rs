use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::AdversarialError;

/// Degrees below this are ignored by the power-law fit.
pub const D_MIN: usize = 2;

fn tail(degrees: &[usize]) -> (f64, f64) {
    // (count, Σ ln(d / (d_min − ½))) over the tail
    let x_min = D_MIN as f64 - 0.5;
    degrees
        .iter()
        .filter(|&&d| d >= D_MIN)
        .fold((0.0, 0.0), |(n, s), &d| (n + 1.0, s + (d as f64 / x_min).ln()))
}

/// Maximum-likelihood exponent of a discrete power law in its continuous
/// approximation, `1 + n / Σ ln(d / (d_min − ½))`.
pub fn powerlaw_alpha(degrees: &[usize]) -> Result<f64, AdversarialError> {
    let (n, s) = tail(degrees);
    if n == 0.0 {
        return Err(AdversarialError::NoTail(D_MIN));
    }
    Ok(1.0 + n / s)
}

/// Log-likelihood of the tail under exponent `alpha`.
pub fn powerlaw_log_likelihood(degrees: &[usize], alpha: f64) -> f64 {
    let (n, s) = tail(degrees);
    let x_min = D_MIN as f64 - 0.5;
    n * (alpha - 1.0).ln() - n * x_min.ln() - alpha * s
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeTest {
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Likelihood-ratio test of "both sequences share one exponent" against
/// separate exponents. Passes when the statistic stays below the χ²(1)
/// quantile at `1 − significance`.
pub fn degree_likelihood_test(orig: &[usize], new: &[usize], significance: f64) -> Result<DegreeTest, AdversarialError> {
    if !(significance > 0.0 && significance < 1.0) {
        return Err(AdversarialError::Config(format!("significance {significance} outside (0, 1)")));
    }
    let a_orig = powerlaw_alpha(orig)?;
    let a_new = powerlaw_alpha(new)?;
    let pooled: Vec<usize> = orig.iter().chain(new).copied().collect();
    let a_pool = powerlaw_alpha(&pooled)?;
    let separate = powerlaw_log_likelihood(orig, a_orig) + powerlaw_log_likelihood(new, a_new);
    let shared = powerlaw_log_likelihood(orig, a_pool) + powerlaw_log_likelihood(new, a_pool);
    let statistic = (2.0 * (separate - shared)).max(0.0);
    let threshold = ChiSquared::new(1.0).expect("one degree of freedom").inverse_cdf(1.0 - significance);
    Ok(DegreeTest { statistic, threshold, pass: statistic < threshold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::degrees;
    use crate::synth::{lfr_generate, sample_powerlaw, LfrParams};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_sequences_pass_with_zero_statistic() {
        let d = sample_powerlaw(-2.5, 2, 50, 500, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let t = degree_likelihood_test(&d, &d, 0.05).unwrap();
        assert!(t.statistic.abs() < 1e-9);
        assert!(t.pass);
        assert!((t.threshold - 3.841458820694124).abs() < 1e-9);
    }

    #[test]
    fn power_law_versus_uniform_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let orig = sample_powerlaw(-2.5, 2, 100, 1000, &mut rng).unwrap();
        let uniform: Vec<usize> = (0..orig.len()).map(|_| rand::Rng::random_range(&mut rng, 2..=50)).collect();
        let t = degree_likelihood_test(&orig, &uniform, 0.05).unwrap();
        assert!(t.statistic > 10.0 * t.threshold, "{t:?}");
        assert!(!t.pass);
    }

    #[test]
    fn one_flip_on_lfr_passes() {
        let (g, _) = lfr_generate(&LfrParams::with_mu(1000, 0.1), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let orig = degrees(&g);
        let mut new = orig.clone();
        new[0] += 1;
        new[1] += 1;
        assert!(degree_likelihood_test(&orig, &new, 0.05).unwrap().pass);
    }

    #[test]
    fn no_tail_is_an_error() {
        assert!(matches!(degree_likelihood_test(&[1, 1], &[1, 2], 0.05), Err(AdversarialError::NoTail(2))));
    }

    #[test]
    fn alpha_recovers_the_exponent() {
        // the half-integer shift is an approximation; a few percent bias is expected at d_min = 2
        let d = sample_powerlaw(-2.5, 2, 10_000, 50_000, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let a = powerlaw_alpha(&d).unwrap();
        assert!((a - 2.5).abs() < 0.15, "{a}");
    }

    proptest! {
        #[test]
        fn statistic_is_non_negative_and_symmetric(
            a in proptest::collection::vec(2usize..40, 5..60),
            b in proptest::collection::vec(2usize..40, 5..60),
        ) {
            let ab = degree_likelihood_test(&a, &b, 0.05).unwrap();
            let ba = degree_likelihood_test(&b, &a, 0.05).unwrap();
            prop_assert!(ab.statistic >= 0.0);
            prop_assert!((ab.statistic - ba.statistic).abs() < 1e-9);
        }
    }
}
