//! Full reductions to a scalar.

use super::tape::{Function, Var};
use crate::error::TensorError;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
    /// `mean(|x|)`, the L1 distance when applied to a difference.
    MeanAbs,
}

struct Reduce(ReduceKind);

impl<T: Element> Function<T> for Reduce {
    fn name(&self) -> &'static str {
        match self.0 {
            ReduceKind::Sum => "sum",
            ReduceKind::Mean => "mean",
            ReduceKind::MeanAbs => "mean_abs",
        }
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0];
        let g = grad.item();
        let n = T::from_usize(x.len()).unwrap();
        let out = match self.0 {
            ReduceKind::Sum => Tensor::full(x.shape().to_vec(), g),
            ReduceKind::Mean => Tensor::full(x.shape().to_vec(), g / n),
            ReduceKind::MeanAbs => {
                let scale = g / n;
                x.map(|v| {
                    if v > T::zero() {
                        scale
                    } else if v < T::zero() {
                        -scale
                    } else {
                        T::zero()
                    }
                })
            }
        };
        vec![Some(out)]
    }
}

impl<'t, T: Element> Var<'t, T> {
    pub fn reduce(self, kind: ReduceKind) -> Result<Var<'t, T>, TensorError> {
        let out = {
            let x = self.value();
            if x.is_empty() {
                return Err(TensorError::Invalid("reduce of an empty tensor".into()));
            }
            let n = T::from_usize(x.len()).unwrap();
            let v = match kind {
                ReduceKind::Sum => x.sum(),
                ReduceKind::Mean => x.sum() / n,
                ReduceKind::MeanAbs => x.data().iter().fold(T::zero(), |a, &v| a + v.abs()) / n,
            };
            Tensor::scalar(v)
        };
        self.tape().record(Reduce(kind), &[self], out)
    }

    pub fn sum(self) -> Result<Var<'t, T>, TensorError> {
        self.reduce(ReduceKind::Sum)
    }

    pub fn mean(self) -> Result<Var<'t, T>, TensorError> {
        self.reduce(ReduceKind::Mean)
    }

    pub fn mean_abs(self) -> Result<Var<'t, T>, TensorError> {
        self.reduce(ReduceKind::MeanAbs)
    }
}
