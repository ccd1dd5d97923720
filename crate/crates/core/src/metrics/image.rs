//! Full-reference image metrics on `[C, H, W]` tensors with values in `[0, 1]`.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Returned by PSNR and SD when the images are indistinguishable.
pub const DB_CAP: f64 = 100.0;

fn dims<T: Element>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<(usize, usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::Config(format!("{op}: shape mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    match *a.shape() {
        [c, h, w] => Ok((c, h, w)),
        [h, w] => Ok((1, h, w)),
        _ => Err(Error::Config(format!("{op}: expected [C, H, W] or [H, W], got {:?}", a.shape()))),
    }
}

/// Maps a `[-1, 1]` tensor onto `[0, 1]`, clamping.
pub fn to_unit_range<T: Element>(t: &Tensor<T>) -> Tensor<f64> {
    let data = t.data().iter().map(|v| ((v.as_f64() + 1.0) / 2.0).clamp(0.0, 1.0)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

/// Summed-area table with a leading zero row and column.
fn integral(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut s = vec![0.0; (h + 1) * (w + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += plane[y * w + x];
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

fn window_sum(s: &[f64], w: usize, y: usize, x: usize, k: usize) -> f64 {
    let at = |yy: usize, xx: usize| s[yy * (w + 1) + xx];
    at(y + k, x + k) - at(y, x + k) - at(y + k, x) + at(y, x)
}

/// Mean SSIM over every 8×8 window (stride 1) and channel, using population
/// statistics inside each window.
pub fn ssim<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let (c, h, w) = dims(a, b, "ssim")?;
    let k = SSIM_WINDOW;
    if h < k || w < k {
        return Err(Error::Config(format!("ssim: image {h}x{w} is smaller than the {k}x{k} window")));
    }
    let n = (k * k) as f64;
    let mut total = 0.0;
    for ch in 0..c {
        let pa: Vec<f64> = a.data()[ch * h * w..(ch + 1) * h * w].iter().map(|v| v.as_f64()).collect();
        let pb: Vec<f64> = b.data()[ch * h * w..(ch + 1) * h * w].iter().map(|v| v.as_f64()).collect();
        let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
        let (sa, sb) = (integral(&pa, h, w), integral(&pb, h, w));
        let (saa, sbb, sab) = (integral(&prod(&pa, &pa), h, w), integral(&prod(&pb, &pb), h, w), integral(&prod(&pa, &pb), h, w));
        let mut acc = 0.0;
        for y in 0..=h - k {
            for x in 0..=w - k {
                let ma = window_sum(&sa, w, y, x, k) / n;
                let mb = window_sum(&sb, w, y, x, k) / n;
                let va = window_sum(&saa, w, y, x, k) / n - ma * ma;
                let vb = window_sum(&sbb, w, y, x, k) / n - mb * mb;
                let cov = window_sum(&sab, w, y, x, k) / n - ma * mb;
                acc += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
            }
        }
        total += acc / ((h - k + 1) * (w - k + 1)) as f64;
    }
    Ok(total / c as f64)
}

pub fn mse<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    dims(a, b, "mse")?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>() / a.len() as f64)
}

/// `10·log₁₀(1/MSE)`, capped at [`DB_CAP`].
pub fn psnr<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    Ok(capped_db(mse(a, b)?))
}

fn capped_db(denominator: f64) -> f64 {
    if denominator <= 0.0 {
        DB_CAP
    } else {
        (10.0 * (1.0 / denominator).log10()).min(DB_CAP)
    }
}

/// `|∇ₓI| + |∇ᵧI|` with forward differences, zero on the last column/row.
pub fn gradient_magnitude(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut g = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let v = plane[y * w + x];
            let gx = if x + 1 < w { plane[y * w + x + 1] - v } else { 0.0 };
            let gy = if y + 1 < h { plane[(y + 1) * w + x] - v } else { 0.0 };
            g[y * w + x] = gx.abs() + gy.abs();
        }
    }
    g
}

/// `10·log₁₀(1 / mean|G(a) − G(b)|)`, capped at [`DB_CAP`].
pub fn sharpness_difference<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let (c, h, w) = dims(a, b, "sharpness_difference")?;
    let mut sum = 0.0;
    for ch in 0..c {
        let plane = |t: &Tensor<T>| t.data()[ch * h * w..(ch + 1) * h * w].iter().map(|v| v.as_f64()).collect::<Vec<_>>();
        let ga = gradient_magnitude(&plane(a), h, w);
        let gb = gradient_magnitude(&plane(b), h, w);
        sum += ga.iter().zip(&gb).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    Ok(capped_db(sum / (c * h * w) as f64))
}
