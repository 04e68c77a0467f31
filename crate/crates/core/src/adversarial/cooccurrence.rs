use std::collections::BTreeMap;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Whether every entry is exactly 0 or 1.
pub fn is_binary<T: Scalar>(x: &Tensor<T>) -> bool {
    x.data().iter().all(|&v| v == T::zero() || v == T::one())
}

/// Weighted feature co-occurrence graph `C = XᵀX` with the diagonal removed.
#[derive(Clone, Debug)]
pub struct CooccurrenceIndex {
    /// Sparse rows of `C`.
    rows: Vec<BTreeMap<usize, f64>>,
    degree: Vec<f64>,
    /// Uniform-chance level over features with nonzero co-occurrence degree.
    pub threshold: f64,
}

impl CooccurrenceIndex {
    pub fn new<T: Scalar>(x: &Tensor<T>) -> Self {
        let d = x.cols();
        let mut rows = vec![BTreeMap::new(); d];
        for r in 0..x.rows() {
            let present: Vec<usize> = (0..d).filter(|&c| x.get(r, c) != T::zero()).collect();
            for &i in &present {
                for &j in &present {
                    if i != j {
                        *rows[i].entry(j).or_insert(0.0) += 1.0;
                    }
                }
            }
        }
        let degree: Vec<f64> = rows.iter().map(|r| r.values().sum()).collect();
        let active = degree.iter().filter(|&&v| v > 0.0).count();
        let threshold = if active == 0 { f64::INFINITY } else { 1.0 / active as f64 };
        Self { rows, degree, threshold }
    }

    /// Probability that one walk step from a uniformly chosen present
    /// feature lands on `feature`.
    pub fn reach_probability(&self, present: &[usize], feature: usize) -> f64 {
        if present.is_empty() {
            return 0.0;
        }
        let total: f64 = present
            .iter()
            .filter(|&&i| self.degree[i] > 0.0)
            .map(|&i| self.rows[i].get(&feature).copied().unwrap_or(0.0) / self.degree[i])
            .sum();
        total / present.len() as f64
    }

    pub fn admissible(&self, present: &[usize], feature: usize) -> bool {
        self.reach_probability(present, feature) > self.threshold
    }
}

/// Convenience form of [`CooccurrenceIndex::admissible`] for one query.
pub fn cooccurrence_admissible<T: Scalar>(x: &Tensor<T>, node: usize, feature: usize) -> bool {
    let present: Vec<usize> = (0..x.cols()).filter(|&c| x.get(node, c) != T::zero()).collect();
    CooccurrenceIndex::new(x).admissible(&present, feature)
}
