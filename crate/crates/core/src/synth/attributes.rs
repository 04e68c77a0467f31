use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::Partition;
use crate::tensor::Tensor;

use super::SynthError;

/// Gaussian community attributes: centers `N(0, σ_c² I)`, members
/// `N(center, σ² I)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeParams {
    pub d: usize,
    pub sigma_c: f64,
    pub sigma: f64,
}

impl Default for AttributeParams {
    fn default() -> Self {
        Self {
            d: 32,
            sigma_c: 10.0,
            sigma: 2.0,
        }
    }
}

impl AttributeParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.d == 0 || !(self.sigma_c > 0.0) || !(self.sigma > 0.0) {
            return Err(SynthError::InvalidParams(format!(
                "attributes need d >= 1 and positive spreads, got {self:?}"
            )));
        }
        Ok(())
    }
}

pub fn gen_attributes<R: Rng + ?Sized>(
    p: &Partition,
    a: &AttributeParams,
    rng: &mut R,
) -> Result<Tensor<f64>, SynthError> {
    a.validate()?;
    if p.is_empty() {
        return Err(SynthError::InvalidParams("empty partition".into()));
    }
    let mut draw = |scale: f64| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    };
    let centers: Vec<Vec<f64>> = (0..p.k())
        .map(|_| (0..a.d).map(|_| draw(a.sigma_c)).collect())
        .collect();
    let mut x = Tensor::zeros(p.len(), a.d);
    for i in 0..p.len() {
        let c = &centers[p.label(i)];
        for (j, v) in x.row_mut(i).iter_mut().enumerate() {
            *v = c[j] + draw(a.sigma);
        }
    }
    Ok(x)
}
