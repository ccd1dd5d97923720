//! Central-difference gradient checker.

use super::tape::{Tape, Var};
use crate::error::TensorError;
use crate::tensor::{Element, Tensor};

/// Worst entry found by [`grad_check_detailed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport<T> {
    pub max_rel_error: T,
    pub input: usize,
    pub index: usize,
    pub analytic: T,
    pub numeric: T,
}

/// Maximum relative error between the tape gradient of a scalar function
/// and central finite differences, over every entry of every input.
///
/// Relative error per entry is
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
/// `f` is re-evaluated on a fresh tape for every perturbation.
pub fn grad_check<T, F>(f: F, inputs: &[Tensor<T>], eps: T) -> Result<T, TensorError>
where
    T: Element,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>, TensorError>,
{
    grad_check_detailed(f, inputs, eps).map(|r| r.max_rel_error)
}

/// [`grad_check`] that also reports where the worst entry sits.
pub fn grad_check_detailed<T, F>(f: F, inputs: &[Tensor<T>], eps: T) -> Result<GradCheckReport<T>, TensorError>
where
    T: Element,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Result<Var<'t, T>, TensorError>,
{
    if eps <= T::zero() {
        return Err(TensorError::Invalid("grad_check: eps must be positive".into()));
    }
    let analytic: Vec<Tensor<T>> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_, T>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&tape, &vars)?;
        out.backward()?;
        vars.iter().map(|v| v.grad().expect("leaf grad")).collect()
    };

    let eval = |which: usize, idx: usize, delta: T| -> Result<T, TensorError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_, T>> = inputs
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let mut t = t.clone();
                if k == which {
                    t.data_mut()[idx] = t.data()[idx] + delta;
                }
                tape.constant(t)
            })
            .collect();
        let out = f(&tape, &vars)?;
        let value = out.value();
        if !value.is_scalar() {
            return Err(TensorError::NonScalar { shape: value.shape().to_vec() });
        }
        Ok(value.item())
    };

    let floor = T::from_f64_lossy(1e-8);
    let two = T::from_f64_lossy(2.0);
    let mut worst = GradCheckReport { max_rel_error: T::zero(), input: 0, index: 0, analytic: T::zero(), numeric: T::zero() };
    for (which, input) in inputs.iter().enumerate() {
        for idx in 0..input.len() {
            let numeric = (eval(which, idx, eps)? - eval(which, idx, -eps)?) / (two * eps);
            let a = analytic[which].data()[idx];
            let denom = a.abs().max(numeric.abs()).max(floor);
            let rel = (a - numeric).abs() / denom;
            if rel > worst.max_rel_error {
                worst = GradCheckReport { max_rel_error: rel, input: which, index: idx, analytic: a, numeric };
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Function;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_tanh_is_tight() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Tensor::<f64>::randn(vec![3, 4], 1.0, &mut rng);
            let err = grad_check(|_, v| v[0].tanh()?.mean(), &[x], 1e-5).unwrap();
            assert!(err < 1e-6, "{err}");
        }
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::<f64>::ones(vec![3]);
        let err = grad_check(
            |tape, v| {
                let c = tape.constant(Tensor::scalar(4.0));
                v[0].scale(0.0)?.sum()?.add(c)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    /// Square with a deliberately wrong derivative (x instead of 2x).
    struct BrokenSquare;

    impl Function<f64> for BrokenSquare {
        fn name(&self) -> &'static str {
            "broken_square"
        }

        fn backward(&self, inputs: &[&Tensor<f64>], _output: &Tensor<f64>, grad: &Tensor<f64>) -> Vec<Option<Tensor<f64>>> {
            vec![Some(grad.zip_map(inputs[0], |g, x| g * x))]
        }
    }

    #[test]
    fn detects_a_wrong_backward_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::rand_uniform(vec![4], 0.5, 1.5, &mut rng);
        let err = grad_check(
            |tape, v| {
                let out = v[0].value().map(|a| a * a);
                tape.record(BrokenSquare, &[v[0]], out)?.sum()
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err > 1e-2, "{err}");
    }

    #[test]
    fn rejects_non_scalar_output() {
        let x = Tensor::<f64>::ones(vec![3]);
        assert!(grad_check(|_, v| v[0].tanh(), &[x], 1e-5).is_err());
    }
}
