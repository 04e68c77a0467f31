use crate::scalar::Scalar;

use super::{Tape, Tensor, TensorError, Var};

/// Largest relative error between tape gradients and central differences.
///
/// `f` rebuilds the computation on a fresh tape from the given parameter
/// leaves and returns a scalar. At most 64 evenly strided coordinates per
/// parameter are probed.
pub fn finite_diff_check<T, F>(f: F, params: &[Tensor<T>], eps: T) -> Result<T, TensorError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |ps: &[Tensor<T>]| -> Result<T, TensorError> {
        let mut t = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| t.param(p.clone())).collect();
        let out = f(&mut t, &vars)?;
        Ok(t.value(out).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let two = T::of(2.0);
    let mut worst = T::zero();
    let mut work: Vec<Tensor<T>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[pi], p);
        let stride = p.len().div_ceil(64).max(1);
        for j in (0..p.len()).step_by(stride) {
            let orig = p.data()[j];
            work[pi].data_mut()[j] = orig + eps;
            let up = eval(&work)?;
            work[pi].data_mut()[j] = orig - eps;
            let down = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            let fd = (up - down) / (two * eps);
            let a = analytic.data()[j];
            let denom = a.abs().max(fd.abs()).max(T::of(1e-8));
            let err = (a - fd).abs() / denom;
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}
