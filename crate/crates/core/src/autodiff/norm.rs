//! Instance normalization and average pooling.

use super::tape::{Function, Var};
use crate::error::TensorError;
use crate::tensor::{Element, Tensor};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;

struct InstanceNorm {
    plane: usize,
    /// 1 / sqrt(var + eps) per (batch, channel) plane.
    inv_std: Vec<f64>,
}

impl<T: Element> Function<T> for InstanceNorm {
    fn name(&self) -> &'static str {
        "instance_norm"
    }

    fn backward(&self, _inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let n = self.plane as f64;
        let mut gx = Tensor::zeros(output.shape().to_vec());
        for (p, ((gx, y), g)) in
            gx.data_mut().chunks_mut(self.plane).zip(output.data().chunks(self.plane)).zip(grad.data().chunks(self.plane)).enumerate()
        {
            let mean_g = g.iter().map(|v| v.as_f64()).sum::<f64>() / n;
            let mean_gy = g.iter().zip(y).map(|(a, b)| a.as_f64() * b.as_f64()).sum::<f64>() / n;
            let s = self.inv_std[p];
            for ((out, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                *out = T::from_f64_lossy(s * (gi.as_f64() - mean_g - yi.as_f64() * mean_gy));
            }
        }
        vec![Some(gx)]
    }
}

struct AvgPool {
    k: usize,
    h: usize,
    w: usize,
}

impl<T: Element> Function<T> for AvgPool {
    fn name(&self) -> &'static str {
        "avg_pool2d"
    }

    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (oh, ow) = (self.h / self.k, self.w / self.k);
        let scale = T::one() / T::from_usize(self.k * self.k).unwrap();
        let mut gx = Tensor::zeros(inputs[0].shape().to_vec());
        let planes = output.len() / (oh * ow);
        for p in 0..planes {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad.data()[(p * oh + oy) * ow + ox] * scale;
                    for i in 0..self.k {
                        let row = (p * self.h + oy * self.k + i) * self.w + ox * self.k;
                        for v in &mut gx.data_mut()[row..row + self.k] {
                            *v = *v + g;
                        }
                    }
                }
            }
        }
        vec![Some(gx)]
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// Per-(item, channel) normalization to zero mean and unit variance
    /// (biased variance, no affine parameters).
    pub fn instance_norm(self) -> Result<Var<'t, T>, TensorError> {
        let (out, func) = {
            let x = self.value();
            let (_, _, h, w) = x.dims4()?;
            let plane = h * w;
            let mut out = Tensor::zeros(x.shape().to_vec());
            let mut inv_std = Vec::with_capacity(x.len() / plane);
            for (src, dst) in x.data().chunks(plane).zip(out.data_mut().chunks_mut(plane)) {
                let mean = src.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64;
                let var = src.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / plane as f64;
                let s = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();
                for (d, v) in dst.iter_mut().zip(src) {
                    *d = T::from_f64_lossy((v.as_f64() - mean) * s);
                }
                inv_std.push(s);
            }
            (out, InstanceNorm { plane, inv_std })
        };
        self.tape().record(func, &[self], out)
    }

    /// Non-overlapping `k × k` average pooling; H and W must be divisible by k.
    pub fn avg_pool2d(self, k: usize) -> Result<Var<'t, T>, TensorError> {
        let (out, func) = {
            let x = self.value();
            let (b, c, h, w) = x.dims4()?;
            if k == 0 || h % k != 0 || w % k != 0 {
                return Err(TensorError::Invalid(format!("avg_pool2d: {h}x{w} not divisible by {k}")));
            }
            let (oh, ow) = (h / k, w / k);
            let scale = T::one() / T::from_usize(k * k).unwrap();
            let mut out = Tensor::zeros(vec![b, c, oh, ow]);
            for p in 0..b * c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = T::zero();
                        for i in 0..k {
                            let row = (p * h + oy * k + i) * w + ox * k;
                            for &v in &x.data()[row..row + k] {
                                acc = acc + v;
                            }
                        }
                        out.data_mut()[(p * oh + oy) * ow + ox] = acc * scale;
                    }
                }
            }
            (out, AvgPool { k, h, w })
        };
        self.tape().record(func, &[self], out)
    }
}
