//! Fully connected layer and softmax cross-entropy, used by the scene
//! classifier head.

use super::tape::{Function, Var};
use crate::error::TensorError;
use crate::tensor::{matmul_into, Element, Tensor, Transpose};

struct Linear {
    batch: usize,
    in_features: usize,
    out_features: usize,
}

impl<T: Element> Function<T> for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (b, i, o) = (self.batch, self.in_features, self.out_features);
        let mut gx = Tensor::zeros(x.shape().to_vec());
        // gx[b,i] = g[b,o] · w[o,i]
        matmul_into(b, o, i, T::one(), grad.data(), Transpose::No, w.data(), Transpose::No, T::zero(), gx.data_mut());
        let mut gw = Tensor::zeros(w.shape().to_vec());
        // gw[o,i] = gᵀ[o,b] · x[b,i]
        matmul_into(o, b, i, T::one(), grad.data(), Transpose::Yes, x.data(), Transpose::No, T::zero(), gw.data_mut());
        let mut gb = vec![T::zero(); o];
        for row in grad.data().chunks(o) {
            for (acc, &v) in gb.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        vec![Some(gx), Some(gw), Some(Tensor::new(vec![o], gb).unwrap())]
    }
}

/// Row-wise softmax of a `[B, K]` buffer.
pub fn softmax_rows<T: Element>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(k) {
        let m = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let e: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
        let s = e.iter().fold(T::zero(), |a, &v| a + v);
        out.extend(e.into_iter().map(|v| v / s));
    }
    out
}

struct SoftmaxCrossEntropy {
    labels: Vec<usize>,
    classes: usize,
}

impl<T: Element> Function<T> for SoftmaxCrossEntropy {
    fn name(&self) -> &'static str {
        "softmax_cross_entropy"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let k = self.classes;
        let scale = grad.item() / T::from_usize(self.labels.len()).unwrap();
        let mut p = softmax_rows(inputs[0].data(), k);
        for (b, &label) in self.labels.iter().enumerate() {
            p[b * k + label] = p[b * k + label] - T::one();
        }
        p.iter_mut().for_each(|v| *v = *v * scale);
        vec![Some(Tensor::new(inputs[0].shape().to_vec(), p).unwrap())]
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// `x[B, in] · wᵀ + b` with `w[out, in]`, `b[out]`.
    pub fn linear(self, weight: Var<'t, T>, bias: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let (out, func) = {
            let x = self.value();
            let w = weight.value();
            let bv = bias.value();
            let ([b, i], [o, wi]) = (x.shape(), w.shape()) else {
                return Err(TensorError::ShapeMismatch { op: "linear", left: x.shape().to_vec(), right: w.shape().to_vec() });
            };
            if i != wi || bv.shape() != [*o] {
                return Err(TensorError::ShapeMismatch { op: "linear", left: x.shape().to_vec(), right: w.shape().to_vec() });
            }
            let (b, i, o) = (*b, *i, *o);
            let mut data = vec![T::zero(); b * o];
            matmul_into(b, i, o, T::one(), x.data(), Transpose::No, w.data(), Transpose::Yes, T::zero(), &mut data);
            for row in data.chunks_mut(o) {
                for (v, &bb) in row.iter_mut().zip(bv.data()) {
                    *v = *v + bb;
                }
            }
            (Tensor::new(vec![b, o], data)?, Linear { batch: b, in_features: i, out_features: o })
        };
        self.tape().record(func, &[self, weight, bias], out)
    }

    /// Mean negative log-likelihood of `labels` under `softmax(self)` for
    /// `[B, K]` logits.
    pub fn softmax_cross_entropy(self, labels: &[usize]) -> Result<Var<'t, T>, TensorError> {
        let (out, func) = {
            let x = self.value();
            let &[b, k] = x.shape() else {
                return Err(TensorError::Rank { op: "softmax_cross_entropy", expected: 2, shape: x.shape().to_vec() });
            };
            if labels.len() != b || labels.iter().any(|&l| l >= k) {
                return Err(TensorError::Invalid(format!("softmax_cross_entropy: {} labels for batch {b} with {k} classes", labels.len())));
            }
            let mut loss = T::zero();
            for (row, &label) in x.data().chunks(k).zip(labels) {
                let m = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
                let lse = row.iter().fold(T::zero(), |a, &v| a + (v - m).exp()).ln() + m;
                loss = loss + lse - row[label];
            }
            (Tensor::scalar(loss / T::from_usize(b).unwrap()), SoftmaxCrossEntropy { labels: labels.to_vec(), classes: k })
        };
        self.tape().record(func, &[self], out)
    }
}
