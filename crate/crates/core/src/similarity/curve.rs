use serde::{Deserialize, Serialize};

use super::SimilarityError;

/// Mean ECS against perturbation level for one cell, plus the clean-graph
/// score when it was measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub baseline: Option<f64>,
    pub points: Vec<(f64, f64)>,
}

impl RobustnessCurve {
    pub fn new(baseline: Option<f64>, points: Vec<(f64, f64)>) -> Result<Self, SimilarityError> {
        if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(SimilarityError::UnorderedLevels);
        }
        for &s in baseline.iter().chain(points.iter().map(|p| &p.1)) {
            if !(0.0..=1.0).contains(&s) {
                return Err(SimilarityError::ScoreOutOfRange(s));
            }
        }
        Ok(Self { baseline, points })
    }

    /// Baseline when present, else the first point.
    pub fn initial(&self) -> Option<f64> {
        self.baseline.or_else(|| self.points.first().map(|p| p.1))
    }

    pub fn last(&self) -> Option<f64> {
        self.points.last().map(|p| p.1)
    }
}

/// `100·|initial − final| / initial`.
pub fn curve_drop(curve: &RobustnessCurve) -> Result<f64, SimilarityError> {
    let have = curve.points.len() + usize::from(curve.baseline.is_some());
    if have < 2 {
        return Err(SimilarityError::TooFewPoints(have));
    }
    let first = curve.initial().expect("non-empty");
    let last = curve.last().expect("non-empty");
    if first == 0.0 {
        return Err(SimilarityError::ZeroInitial);
    }
    Ok(100.0 * (first - last).abs() / first)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(v: &[f64]) -> RobustnessCurve {
        RobustnessCurve::new(None, v.iter().enumerate().map(|(i, &s)| (i as f64, s)).collect()).unwrap()
    }

    #[test]
    fn drops() {
        assert_eq!(curve_drop(&curve(&[0.8, 0.8])).unwrap(), 0.0);
        assert!((curve_drop(&curve(&[0.88, 0.5, 0.18])).unwrap() - 79.545_454_545).abs() < 1e-6);
        assert_eq!(curve_drop(&curve(&[1.0, 0.5])).unwrap(), 50.0);
    }

    #[test]
    fn baseline_is_the_initial_point() {
        let c = RobustnessCurve::new(Some(1.0), vec![(0.0, 0.9), (1.0, 0.5)]).unwrap();
        assert_eq!(curve_drop(&c).unwrap(), 50.0);
        let single = RobustnessCurve::new(Some(0.8), vec![(1.0, 0.4)]).unwrap();
        assert_eq!(curve_drop(&single).unwrap(), 50.0);
    }

    #[test]
    fn errors() {
        assert_eq!(curve_drop(&curve(&[0.5])), Err(SimilarityError::TooFewPoints(1)));
        assert_eq!(curve_drop(&curve(&[0.0, 0.5])), Err(SimilarityError::ZeroInitial));
        assert_eq!(
            RobustnessCurve::new(None, vec![(1.0, 0.5), (1.0, 0.4)]),
            Err(SimilarityError::UnorderedLevels)
        );
        assert!(RobustnessCurve::new(None, vec![(1.0, 1.5)]).is_err());
    }
}
