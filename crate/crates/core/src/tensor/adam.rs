use crate::scalar::Scalar;

use super::{Tensor, TensorError};

/// Moment estimates for a list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros = |p: &Tensor<T>| Tensor::zeros(p.rows(), p.cols());
        Self {
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: T,
) -> Result<(), TensorError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(TensorError::Invalid(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(TensorError::shape("adam", p.shape(), g.shape()));
        }
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(state.step);
    let c2 = T::one() - b2.powi(state.step);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (x, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            *x -= lr * mh / (vh.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = vec![Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap()];
        let before = p.clone();
        let mut st = AdamState::new(&p);
        for _ in 0..5 {
            adam_step(&mut p, &[Tensor::zeros(1, 3)], &mut st, 0.1).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![Tensor::scalar(1.0f64)];
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &[Tensor::scalar(3.7)], &mut st, 0.01).unwrap();
        assert!((p[0].item() - 0.99).abs() < 1e-8);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let target = [3.0, -1.5];
        let mut p = vec![Tensor::from_vec(1, 2, vec![0.0f64, 0.0]).unwrap()];
        let mut st = AdamState::new(&p);
        let mut done = false;
        for _ in 0..2000 {
            let g: Vec<f64> = p[0].data().iter().zip(target).map(|(x, t)| 2.0 * (x - t)).collect();
            adam_step(&mut p, &[Tensor::from_vec(1, 2, g).unwrap()], &mut st, 0.05).unwrap();
            if p[0].data().iter().zip(target).all(|(x, t)| (x - t).abs() < 1e-3) {
                done = true;
                break;
            }
        }
        assert!(done, "{:?}", p[0]);
    }

    #[test]
    fn mismatched_shapes_error() {
        let mut p = vec![Tensor::<f64>::zeros(2, 2)];
        let mut st = AdamState::new(&p);
        assert!(adam_step(&mut p, &[Tensor::zeros(1, 2)], &mut st, 0.1).is_err());
    }
}
