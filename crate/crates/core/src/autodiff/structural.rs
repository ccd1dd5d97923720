//! Shape-manipulating ops: channel concat/slice and reshape.

use super::tape::{Function, Var};
use crate::error::TensorError;
use crate::tensor::{Element, Tensor};

struct ConcatChannels {
    batch: usize,
    /// Per-item block lengths (channels × plane) of each operand.
    blocks: [usize; 2],
}

impl<T: Element> Function<T> for ConcatChannels {
    fn name(&self) -> &'static str {
        "concat_channels"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let [la, lb] = self.blocks;
        let mut ga = Vec::with_capacity(la * self.batch);
        let mut gb = Vec::with_capacity(lb * self.batch);
        for item in grad.data().chunks(la + lb) {
            ga.extend_from_slice(&item[..la]);
            gb.extend_from_slice(&item[la..]);
        }
        vec![Some(Tensor::new(inputs[0].shape().to_vec(), ga).unwrap()), Some(Tensor::new(inputs[1].shape().to_vec(), gb).unwrap())]
    }
}

struct SliceChannels {
    start: usize,
    len: usize,
    channels: usize,
    plane: usize,
}

impl<T: Element> Function<T> for SliceChannels {
    fn name(&self) -> &'static str {
        "slice_channels"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let mut g = Tensor::zeros(inputs[0].shape().to_vec());
        let item = self.channels * self.plane;
        let block = self.len * self.plane;
        for (b, src) in grad.data().chunks(block).enumerate() {
            let off = b * item + self.start * self.plane;
            g.data_mut()[off..off + block].copy_from_slice(src);
        }
        vec![Some(g)]
    }
}

struct Reshape;

impl<T: Element> Function<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(grad.clone().reshape(inputs[0].shape().to_vec()).unwrap())]
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// `[B, Ca, H, W] ++ [B, Cb, H, W] → [B, Ca + Cb, H, W]`.
    pub fn concat_channels(self, other: Var<'t, T>) -> Result<Var<'t, T>, TensorError> {
        let (out, func) = {
            let a = self.value();
            let b = other.value();
            let (na, ca, ha, wa) = a.dims4()?;
            let (nb, cb, hb, wb) = b.dims4()?;
            if (na, ha, wa) != (nb, hb, wb) {
                return Err(TensorError::ShapeMismatch { op: "concat_channels", left: a.shape().to_vec(), right: b.shape().to_vec() });
            }
            let plane = ha * wa;
            let (la, lb) = (ca * plane, cb * plane);
            let mut data = Vec::with_capacity(a.len() + b.len());
            for n in 0..na {
                data.extend_from_slice(&a.data()[n * la..(n + 1) * la]);
                data.extend_from_slice(&b.data()[n * lb..(n + 1) * lb]);
            }
            (Tensor::new(vec![na, ca + cb, ha, wa], data)?, ConcatChannels { batch: na, blocks: [la, lb] })
        };
        self.tape().record(func, &[self, other], out)
    }

    /// Channels `start..start + len` of a rank-4 tensor.
    pub fn slice_channels(self, start: usize, len: usize) -> Result<Var<'t, T>, TensorError> {
        let (out, func) = {
            let x = self.value();
            let (n, c, h, w) = x.dims4()?;
            if len == 0 || start + len > c {
                return Err(TensorError::Invalid(format!("slice_channels: {start}..{} out of {c} channels", start + len)));
            }
            let plane = h * w;
            let mut data = Vec::with_capacity(n * len * plane);
            for b in 0..n {
                let off = (b * c + start) * plane;
                data.extend_from_slice(&x.data()[off..off + len * plane]);
            }
            (Tensor::new(vec![n, len, h, w], data)?, SliceChannels { start, len, channels: c, plane })
        };
        self.tape().record(func, &[self], out)
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, T>, TensorError> {
        let out = self.to_tensor().reshape(shape)?;
        self.tape().record(Reshape, &[self], out)
    }
}
