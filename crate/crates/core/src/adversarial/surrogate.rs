use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Partition};
use crate::models::{init_params, normalize_adjacency, rms_scale, Architecture, ModelConfig};
use crate::scalar::Scalar;
use crate::tensor::{adam_step, AdamState, Csr, Tape, Tensor};

use super::AdversarialError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { hidden: 16, epochs: 200, lr: 0.01 }
    }
}

/// Linearized two-layer GCN: `logits = Â²(sX)W` with `W = W₁W₂`.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate<T> {
    pub w: Tensor<T>,
    /// Feature scale `s` fixed at training time.
    pub input_scale: T,
    /// `Â²(sX)` on the training graph.
    pub propagated: Tensor<T>,
}

pub(crate) fn propagate<T: Scalar>(a_norm: &Csr<T>, x: &Tensor<T>) -> Result<Tensor<T>, AdversarialError> {
    Ok(a_norm.matmul(&a_norm.matmul(x)?)?)
}

impl<T: Scalar> Surrogate<T> {
    pub fn logits(&self) -> Result<Tensor<T>, AdversarialError> {
        Ok(self.propagated.matmul(&self.w)?)
    }

    /// `sX·W`, the per-node contribution before propagation.
    pub fn project(&self, x: &Tensor<T>) -> Result<Tensor<T>, AdversarialError> {
        Ok(x.map(|v| v * self.input_scale).matmul(&self.w)?)
    }
}

fn check_labels(labels: &Partition, n: usize) -> Result<(), AdversarialError> {
    if labels.len() != n {
        return Err(AdversarialError::Config(format!("{} labels for {n} nodes", labels.len())));
    }
    if labels.effective_k() < 2 {
        return Err(AdversarialError::SingleClass);
    }
    Ok(())
}

/// Fits `W₁`, `W₂` by cross-entropy on `split`, then stores their product.
pub fn train_surrogate<T: Scalar, R: Rng + ?Sized>(
    g: &Graph,
    x: &Tensor<T>,
    labels: &Partition,
    split: &[usize],
    cfg: &SurrogateConfig,
    rng: &mut R,
) -> Result<Surrogate<T>, AdversarialError> {
    check_labels(labels, g.n())?;
    if split.is_empty() || cfg.hidden == 0 || !(cfg.lr > 0.0) {
        return Err(AdversarialError::Config("surrogate needs a split, hidden > 0 and lr > 0".into()));
    }
    let input_scale = rms_scale(x);
    let a_norm = normalize_adjacency::<T>(g, true)?;
    let propagated = propagate(&a_norm, &x.map(|v| v * input_scale))?;
    let mut shape = ModelConfig::new(Architecture::Gcn);
    shape.hidden = vec![cfg.hidden];
    let mut params = init_params::<T, R>(&shape, x.cols(), labels.k(), rng);
    let rows = Arc::new(split.to_vec());
    let targets = Arc::new(split.iter().map(|&i| labels.label(i)).collect::<Vec<_>>());
    let mut state = AdamState::new(&params);
    for _ in 0..cfg.epochs {
        let mut t = Tape::new();
        let p = t.constant(propagated.clone());
        let w1 = t.param(params[0].clone());
        let w2 = t.param(params[1].clone());
        let h = t.matmul(p, w1)?;
        let z = t.matmul(h, w2)?;
        let loss = t.cross_entropy(z, &rows, &targets)?;
        let grads = t.backward(loss)?;
        let g = vec![grads.get_or_zeros(w1, &params[0]), grads.get_or_zeros(w2, &params[1])];
        adam_step(&mut params, &g, &mut state, T::of(cfg.lr))?;
    }
    Ok(Surrogate {
        w: params[0].matmul(&params[1])?,
        input_scale,
        propagated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{extract_partition, fit, stratified_split};
    use crate::synth::{gen_attributes, lfr_generate, AttributeParams, LfrParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_cliques() -> (Graph, Partition, Tensor<f64>) {
        let mut e = Vec::new();
        for base in [0, 5] {
            for i in base..base + 5 {
                for j in i + 1..base + 5 {
                    e.push((i, j));
                }
            }
        }
        e.push((4, 5));
        let labels = Partition::new((0..10).map(|i| usize::from(i >= 5)).collect(), 2).unwrap();
        let x = Tensor::from_vec(10, 2, (0..10).flat_map(|i| if i < 5 { [1.0, 0.0] } else { [0.0, 1.0] }).collect()).unwrap();
        (Graph::from_edges(10, &e).unwrap(), labels, x)
    }

    fn accuracy(pred: &Partition, truth: &Partition, rows: &[usize]) -> f64 {
        rows.iter().filter(|&&i| pred.label(i) == truth.label(i)).count() as f64 / rows.len() as f64
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let (g, labels, x) = two_cliques();
        let split: Vec<usize> = (0..10).collect();
        let s = train_surrogate(&g, &x, &labels, &split, &SurrogateConfig::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let pred = extract_partition(&s.logits().unwrap());
        assert_eq!(accuracy(&pred, &labels, &split), 1.0);
        // the cached propagation matches a fresh product
        let direct = s.project(&x).unwrap();
        let a = normalize_adjacency::<f64>(&g, true).unwrap();
        let again = a.matmul(&a.matmul(&direct).unwrap()).unwrap();
        assert!(again.max_abs_diff(&s.logits().unwrap()) < 1e-12);
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let (g, labels, x) = two_cliques();
        let cfg = SurrogateConfig { epochs: 0, ..Default::default() };
        let s = train_surrogate(&g, &x, &labels, &[0, 9], &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(s.w.shape(), [2, 2]);
        assert!(s.logits().unwrap().is_finite());
        let a = train_surrogate(&g, &x, &labels, &[0, 9], &SurrogateConfig::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = train_surrogate(&g, &x, &labels, &[0, 9], &SurrogateConfig::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_rejected() {
        let (g, _, x) = two_cliques();
        let one = Partition::new(vec![0; 10], 2).unwrap();
        let err = train_surrogate(&g, &x, &one, &[0], &SurrogateConfig::default(), &mut ChaCha8Rng::seed_from_u64(4));
        assert!(matches!(err, Err(AdversarialError::SingleClass)));
    }

    #[test]
    fn training_accuracy_tracks_a_relu_gcn() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (g, truth) = lfr_generate(&LfrParams::desk(0.1), &mut rng).unwrap();
        let x = gen_attributes(&truth, &AttributeParams { d: 32, sigma_c: 20.0, sigma: 2.0 }, &mut rng).unwrap();
        let split = stratified_split(&truth, 0.1, &mut rng);
        let s = train_surrogate(&g, &x, &truth, &split, &SurrogateConfig::default(), &mut rng).unwrap();
        let surrogate_acc = accuracy(&extract_partition(&s.logits().unwrap()), &truth, &split);
        let gcn = fit(&g, &x, Some(&truth), &ModelConfig::new(Architecture::Gcn), &split, &mut rng).unwrap();
        let gcn_acc = accuracy(&gcn.predict(&g, &x).unwrap(), &truth, &split);
        assert!((surrogate_acc - gcn_acc).abs() <= 0.05, "{surrogate_acc} vs {gcn_acc}");
    }
}
