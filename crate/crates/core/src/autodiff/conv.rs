//! 2-D convolution (cross-correlation) and its adjoint, the transposed
//! convolution. Both lower to im2col + gemm per batch item.

use super::tape::{Function, Var};
use crate::error::TensorError;
use crate::tensor::{matmul_into, Element, Tensor, Transpose};

/// Geometry of a convolution from an `in_h × in_w` grid to `out_h × out_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    #[allow(clippy::too_many_arguments)]
    fn new(
        op: &'static str,
        channels: usize,
        in_h: usize,
        in_w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        if stride == 0 {
            return Err(TensorError::Invalid(format!("{op}: stride must be >= 1")));
        }
        if kh > in_h + 2 * padding || kw > in_w + 2 * padding {
            return Err(TensorError::ShapeMismatch { op, left: vec![in_h + 2 * padding, in_w + 2 * padding], right: vec![kh, kw] });
        }
        Ok(ConvGeom {
            channels,
            in_h,
            in_w,
            kh,
            kw,
            stride,
            padding,
            out_h: (in_h + 2 * padding - kh) / stride + 1,
            out_w: (in_w + 2 * padding - kw) / stride + 1,
        })
    }

    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Visits every (column-matrix index, image index) pair that lands
    /// inside the unpadded image.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let p = self.cols();
        for c in 0..self.channels {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let img_row = (c * self.in_h + iy as usize) * self.in_w;
                        let col_row = row * p + oy * self.out_w;
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            f(col_row + ox, img_row + ix as usize);
                        }
                    }
                }
            }
        }
    }

    pub fn im2col<T: Element>(&self, image: &[T], cols: &mut [T]) {
        cols.iter_mut().for_each(|v| *v = T::zero());
        self.for_each_tap(|ci, ii| cols[ci] = image[ii]);
    }

    /// Scatter-add of a column matrix back onto an image (adjoint of im2col).
    pub fn col2im<T: Element>(&self, cols: &[T], image: &mut [T]) {
        image.iter_mut().for_each(|v| *v = T::zero());
        self.for_each_tap(|ci, ii| image[ii] = image[ii] + cols[ci]);
    }
}

fn check_bias<T: Element>(op: &'static str, bias: &Tensor<T>, channels: usize) -> Result<(), TensorError> {
    if bias.shape() != [channels] {
        return Err(TensorError::ShapeMismatch { op, left: vec![channels], right: bias.shape().to_vec() });
    }
    Ok(())
}

fn add_bias<T: Element>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn bias_grad<T: Element>(grad: &Tensor<T>, channels: usize, plane: usize) -> Tensor<T> {
    let mut gb = vec![T::zero(); channels];
    for (i, chunk) in grad.data().chunks(plane).enumerate() {
        let c = i % channels;
        gb[c] = gb[c] + chunk.iter().fold(T::zero(), |a, &v| a + v);
    }
    Tensor::new(vec![channels], gb).unwrap()
}

struct Conv2d {
    geom: ConvGeom,
    batch: usize,
    out_channels: usize,
}

/// Forward convolution on raw buffers. `kernel` is `[c_out, geom.rows()]`.
fn conv2d_forward<T: Element>(geom: &ConvGeom, batch: usize, input: &[T], kernel: &[T], c_out: usize, out: &mut [T]) {
    let (k, p) = (geom.rows(), geom.cols());
    let in_stride = geom.channels * geom.in_h * geom.in_w;
    let mut cols = vec![T::zero(); k * p];
    for b in 0..batch {
        geom.im2col(&input[b * in_stride..(b + 1) * in_stride], &mut cols);
        matmul_into(
            c_out,
            k,
            p,
            T::one(),
            kernel,
            Transpose::No,
            &cols,
            Transpose::No,
            T::zero(),
            &mut out[b * c_out * p..(b + 1) * c_out * p],
        );
    }
}

/// Input gradient of a convolution: kernelᵀ · grad, scattered back.
fn conv2d_input_grad<T: Element>(geom: &ConvGeom, batch: usize, grad_out: &[T], kernel: &[T], c_out: usize, grad_in: &mut [T]) {
    let (k, p) = (geom.rows(), geom.cols());
    let in_stride = geom.channels * geom.in_h * geom.in_w;
    let mut cols = vec![T::zero(); k * p];
    for b in 0..batch {
        matmul_into(
            k,
            c_out,
            p,
            T::one(),
            kernel,
            Transpose::Yes,
            &grad_out[b * c_out * p..(b + 1) * c_out * p],
            Transpose::No,
            T::zero(),
            &mut cols,
        );
        geom.col2im(&cols, &mut grad_in[b * in_stride..(b + 1) * in_stride]);
    }
}

/// Kernel gradient of a convolution: Σ_b grad_b · colsᵀ.
fn conv2d_kernel_grad<T: Element>(geom: &ConvGeom, batch: usize, input: &[T], grad_out: &[T], c_out: usize, grad_kernel: &mut [T]) {
    let (k, p) = (geom.rows(), geom.cols());
    let in_stride = geom.channels * geom.in_h * geom.in_w;
    let mut cols = vec![T::zero(); k * p];
    grad_kernel.iter_mut().for_each(|v| *v = T::zero());
    for b in 0..batch {
        geom.im2col(&input[b * in_stride..(b + 1) * in_stride], &mut cols);
        matmul_into(
            c_out,
            p,
            k,
            T::one(),
            &grad_out[b * c_out * p..(b + 1) * c_out * p],
            Transpose::No,
            &cols,
            Transpose::Yes,
            T::one(),
            grad_kernel,
        );
    }
}

impl<T: Element> Function<T> for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (input, kernel) = (inputs[0], inputs[1]);
        let mut gx = Tensor::zeros(input.shape().to_vec());
        conv2d_input_grad(&self.geom, self.batch, grad.data(), kernel.data(), self.out_channels, gx.data_mut());
        let mut gk = Tensor::zeros(kernel.shape().to_vec());
        conv2d_kernel_grad(&self.geom, self.batch, input.data(), grad.data(), self.out_channels, gk.data_mut());
        let gb = bias_grad(grad, self.out_channels, self.geom.cols());
        vec![Some(gx), Some(gk), Some(gb)]
    }
}

struct ConvTranspose2d {
    /// Geometry of the adjoint convolution (output grid → input grid).
    geom: ConvGeom,
    batch: usize,
    in_channels: usize,
}

impl<T: Element> Function<T> for ConvTranspose2d {
    fn name(&self) -> &'static str {
        "conv_transpose2d"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (input, kernel) = (inputs[0], inputs[1]);
        // The adjoint conv maps grad (the transposed output) onto the input grid.
        let mut gx = Tensor::zeros(input.shape().to_vec());
        conv2d_forward(&self.geom, self.batch, grad.data(), kernel.data(), self.in_channels, gx.data_mut());
        let mut gk = Tensor::zeros(kernel.shape().to_vec());
        conv2d_kernel_grad(&self.geom, self.batch, grad.data(), input.data(), self.in_channels, gk.data_mut());
        let plane = self.geom.in_h * self.geom.in_w;
        let gb = bias_grad(grad, self.geom.channels, plane);
        vec![Some(gx), Some(gk), Some(gb)]
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// Cross-correlation of `[B, Cin, H, W]` with a `[Cout, Cin, kh, kw]`
    /// kernel plus a per-channel bias.
    pub fn conv2d(self, kernel: Var<'t, T>, bias: Var<'t, T>, stride: usize, padding: usize) -> Result<Var<'t, T>, TensorError> {
        let (out, func) = {
            let x = self.value();
            let k = kernel.value();
            let (b, cin, h, w) = x.dims4()?;
            let [cout, kcin, kh, kw] = k.shape()[..] else {
                return Err(TensorError::Rank { op: "conv2d", expected: 4, shape: k.shape().to_vec() });
            };
            if kcin != cin {
                return Err(TensorError::ShapeMismatch { op: "conv2d", left: x.shape().to_vec(), right: k.shape().to_vec() });
            }
            let bv = bias.value();
            check_bias("conv2d", &bv, cout)?;
            let geom = ConvGeom::new("conv2d", cin, h, w, kh, kw, stride, padding)?;
            let mut out = Tensor::zeros(vec![b, cout, geom.out_h, geom.out_w]);
            conv2d_forward(&geom, b, x.data(), k.data(), cout, out.data_mut());
            add_bias(out.data_mut(), bv.data(), geom.cols());
            (out, Conv2d { geom, batch: b, out_channels: cout })
        };
        self.tape().record(func, &[self, kernel, bias], out)
    }

    /// Transposed convolution of `[B, Cin, H, W]` with a `[Cin, Cout, kh, kw]`
    /// kernel: output side `(H − 1)·stride − 2·padding + kh`. Its forward pass
    /// is exactly the input gradient of the matching `conv2d`.
    pub fn conv_transpose2d(self, kernel: Var<'t, T>, bias: Var<'t, T>, stride: usize, padding: usize) -> Result<Var<'t, T>, TensorError> {
        let (out, func) = {
            let x = self.value();
            let k = kernel.value();
            let (b, cin, h, w) = x.dims4()?;
            let [kcin, cout, kh, kw] = k.shape()[..] else {
                return Err(TensorError::Rank { op: "conv_transpose2d", expected: 4, shape: k.shape().to_vec() });
            };
            if kcin != cin {
                return Err(TensorError::ShapeMismatch { op: "conv_transpose2d", left: x.shape().to_vec(), right: k.shape().to_vec() });
            }
            if stride == 0 {
                return Err(TensorError::Invalid("conv_transpose2d: stride must be >= 1".into()));
            }
            let bv = bias.value();
            check_bias("conv_transpose2d", &bv, cout)?;
            let out_h = ((h - 1) * stride + kh).checked_sub(2 * padding).filter(|&v| v > 0);
            let out_w = ((w - 1) * stride + kw).checked_sub(2 * padding).filter(|&v| v > 0);
            let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
                return Err(TensorError::ShapeMismatch { op: "conv_transpose2d", left: x.shape().to_vec(), right: k.shape().to_vec() });
            };
            let geom = ConvGeom::new("conv_transpose2d", cout, out_h, out_w, kh, kw, stride, padding)?;
            debug_assert_eq!((geom.out_h, geom.out_w), (h, w));
            let mut out = Tensor::zeros(vec![b, cout, out_h, out_w]);
            conv2d_input_grad(&geom, b, x.data(), k.data(), cin, out.data_mut());
            add_bias(out.data_mut(), bv.data(), out_h * out_w);
            (out, ConvTranspose2d { geom, batch: b, in_channels: cin })
        };
        self.tape().record(func, &[self, kernel, bias], out)
    }
}
