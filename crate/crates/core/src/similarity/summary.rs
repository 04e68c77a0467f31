use serde::{Deserialize, Serialize};

use super::{curve_drop, RobustnessCurve, SimilarityError};

/// Identifies one robustness curve: a model at one community strength under
/// one perturbation type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveKey {
    pub model: String,
    pub strength: f64,
    pub perturbation: String,
}

impl CurveKey {
    pub fn new(model: impl Into<String>, strength: f64, perturbation: impl Into<String>) -> Self {
        Self { model: model.into(), strength, perturbation: perturbation.into() }
    }
}

fn mean_drop<'a>(
    curves: impl Iterator<Item = &'a RobustnessCurve>,
    what: impl FnOnce() -> String,
) -> Result<f64, SimilarityError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for c in curves {
        total += curve_drop(c)?;
        count += 1;
    }
    if count == 0 {
        return Err(SimilarityError::EmptyCell(what()));
    }
    Ok(total / count as f64)
}

/// Mean drop of `model` at `strength`, averaged over perturbation types.
pub fn avg_drop_by_strength(
    curves: &[(CurveKey, RobustnessCurve)],
    model: &str,
    strength: f64,
) -> Result<f64, SimilarityError> {
    mean_drop(
        curves.iter().filter(|(k, _)| k.model == model && k.strength == strength).map(|(_, c)| c),
        || format!("{model} at strength {strength}"),
    )
}

/// Mean drop of `model` under `perturbation`, averaged over strengths.
pub fn avg_drop_by_perturbation(
    curves: &[(CurveKey, RobustnessCurve)],
    model: &str,
    perturbation: &str,
) -> Result<f64, SimilarityError> {
    mean_drop(
        curves.iter().filter(|(k, _)| k.model == model && k.perturbation == perturbation).map(|(_, c)| c),
        || format!("{model} under {perturbation}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(model: &str, strength: f64, kind: &str, scores: &[f64]) -> (CurveKey, RobustnessCurve) {
        let points = scores.iter().enumerate().map(|(i, &s)| (i as f64, s)).collect();
        (CurveKey::new(model, strength, kind), RobustnessCurve::new(None, points).unwrap())
    }

    fn fixture() -> Vec<(CurveKey, RobustnessCurve)> {
        vec![
            entry("gcn", 0.1, "location", &[0.8, 0.6, 0.4]),
            entry("gcn", 0.1, "scale", &[0.8, 0.7]),
            entry("gcn", 0.3, "location", &[0.5, 0.45]),
            entry("gcn", 0.3, "scale", &[0.5, 0.5]),
            entry("dmon", 0.1, "location", &[0.9, 0.3]),
        ]
    }

    #[test]
    fn hand_averaged_fixture() {
        let c = fixture();
        // drops: 50, 12.5, 10, 0, 66.67
        assert!((avg_drop_by_strength(&c, "gcn", 0.1).unwrap() - 31.25).abs() < 1e-9);
        assert!((avg_drop_by_strength(&c, "gcn", 0.3).unwrap() - 5.0).abs() < 1e-9);
        assert!((avg_drop_by_perturbation(&c, "gcn", "location").unwrap() - 30.0).abs() < 1e-9);
        assert!((avg_drop_by_perturbation(&c, "gcn", "scale").unwrap() - 6.25).abs() < 1e-9);
        assert!((avg_drop_by_perturbation(&c, "dmon", "location").unwrap() - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn flat_curves_and_single_curve() {
        let flat = vec![entry("sage", 0.2, "random", &[0.7, 0.7, 0.7]), entry("sage", 0.2, "scale", &[0.4, 0.4])];
        assert_eq!(avg_drop_by_strength(&flat, "sage", 0.2).unwrap(), 0.0);
        let single = vec![entry("gat", 0.5, "targeted", &[0.6, 0.3])];
        assert_eq!(
            avg_drop_by_perturbation(&single, "gat", "targeted").unwrap(),
            curve_drop(&single[0].1).unwrap()
        );
    }

    #[test]
    fn empty_cell_is_an_error() {
        let c = fixture();
        assert!(matches!(avg_drop_by_strength(&c, "gcn", 0.5), Err(SimilarityError::EmptyCell(_))));
        assert!(matches!(avg_drop_by_perturbation(&c, "mincut", "scale"), Err(SimilarityError::EmptyCell(_))));
    }

    proptest! {
        #[test]
        fn bounded_by_extremes(curves in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 2..6), 1..6),
                               first in 0.05f64..=1.0) {
            let set: Vec<_> = curves
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    // drops cannot exceed 100% when no score rises above the initial one
                    let mut v: Vec<f64> = c.iter().map(|s| s * first).collect();
                    v[0] = first;
                    entry("m", 0.1, &format!("p{i}"), &v)
                })
                .collect();
            let avg = avg_drop_by_strength(&set, "m", 0.1).unwrap();
            let drops: Vec<f64> = set.iter().map(|(_, c)| curve_drop(c).unwrap()).collect();
            let max = drops.iter().cloned().fold(f64::MIN, f64::max);
            let min = drops.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(avg <= max + 1e-9 && avg >= min - 1e-9);
            prop_assert!((0.0..=100.0 + 1e-9).contains(&avg));
        }
    }
}
