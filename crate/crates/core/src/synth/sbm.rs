use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{largest_component, Graph, Partition};
use crate::tensor::Tensor;

use super::attributes::{gen_attributes, AttributeParams};
use super::powerlaw::sample_powerlaw;
use super::SynthError;

/// Attributed degree-corrected SBM parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcSbmParams {
    pub n: usize,
    pub k: usize,
    /// Expected inter-community edges per node.
    pub rho: f64,
    pub avg_degree: f64,
    /// Power-law exponent of the degree propensities (negative).
    pub degree_exponent: f64,
    /// Propensities are drawn from `1..=max_propensity` before normalization.
    pub max_propensity: usize,
}

impl Default for AdcSbmParams {
    fn default() -> Self {
        Self {
            n: 1000,
            k: 10,
            rho: 1.0,
            avg_degree: 20.0,
            degree_exponent: -2.5,
            max_propensity: 10,
        }
    }
}

impl AdcSbmParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.k < 2 || self.n < self.k {
            return Err(SynthError::InvalidParams(format!(
                "need 2 <= k ({}) <= n ({})",
                self.k, self.n
            )));
        }
        if !(self.rho >= 0.0) || !(self.avg_degree > 0.0) || self.max_propensity == 0 {
            return Err(SynthError::InvalidParams(format!(
                "rho = {}, avg_degree = {}, max_propensity = {}",
                self.rho, self.avg_degree, self.max_propensity
            )));
        }
        if self.degree_exponent >= 0.0 {
            return Err(SynthError::InvalidParams(format!(
                "degree exponent {} must be negative",
                self.degree_exponent
            )));
        }
        Ok(())
    }
}

/// Samples `(graph, planted partition, attributes)`. The graph is reduced to
/// its largest component; partition and attributes follow the reduction.
pub fn adcsbm_generate<R: Rng + ?Sized>(
    p: &AdcSbmParams,
    a: &AttributeParams,
    rng: &mut R,
) -> Result<(Graph, Partition, Tensor<f64>), SynthError> {
    p.validate()?;
    a.validate()?;
    let n = p.n;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..p.k)).collect();
    let part = Partition::new(labels, p.k)?;
    let sizes = part.sizes();
    let intra = p.avg_degree - p.rho;
    if intra < 0.0 {
        return Err(SynthError::Infeasible(format!(
            "rho = {} exceeds the average degree {}",
            p.rho, p.avg_degree
        )));
    }
    for (c, &s) in sizes.iter().enumerate() {
        if s > 0 && intra > (s - 1) as f64 {
            return Err(SynthError::Infeasible(format!(
                "community {c} has {s} members, cannot host {intra} internal edges per node"
            )));
        }
        if p.rho > (n - s) as f64 {
            return Err(SynthError::Infeasible(format!(
                "rho = {} exceeds the {} nodes outside community {c}",
                p.rho,
                n - s
            )));
        }
    }
    // propensities normalized to mean 1 within each community
    let raw = sample_powerlaw(p.degree_exponent, 1, p.max_propensity, n, rng)?;
    let mut mass = vec![0.0; p.k];
    for i in 0..n {
        mass[part.label(i)] += raw[i] as f64;
    }
    let theta: Vec<f64> = (0..n)
        .map(|i| {
            let c = part.label(i);
            raw[i] as f64 * sizes[c] as f64 / mass[c]
        })
        .collect();
    let omega_out = p.rho / (n as f64 * (1.0 - 1.0 / p.k as f64));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let (cu, cv) = (part.label(u), part.label(v));
            let omega = if cu == cv { intra / sizes[cu] as f64 } else { omega_out };
            let prob = (theta[u] * theta[v] * omega).min(1.0);
            if prob > 0.0 && rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }
    let x = gen_attributes(&part, a, rng)?;
    let g = Graph::from_edges(n, &edges)?.with_attrs(x)?.with_labels(part)?;
    let (g, _) = largest_component(&g);
    let part = g.labels().cloned().expect("labels kept");
    let x = g.attrs().cloned().expect("attrs kept");
    Ok((g, part, x))
}
