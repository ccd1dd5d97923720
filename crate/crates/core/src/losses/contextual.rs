//! Contextual similarity between two sets of feature vectors.
//!
//! Each spatial position of a feature map is one vector. For real vectors
//! `x_i` and generated vectors `y_j`:
//!
//! * `d_ij = 1 − ⟨x_i, y_j⟩ / (‖x_i‖‖y_j‖ + 1e-8)`
//! * `d̃_ij = d_ij / (min_k d_ik + ζ)`
//! * `S_ij = exp((1 − d̃_ij) / h)`, row-normalized to `S̄`
//! * `CX = (1 / max(N, M)) Σ_j max_i S̄_ij`, loss `−ln CX`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Function, Var};
use crate::error::TensorError;
use crate::tensor::{Element, Tensor};

pub const COSINE_EPS: f64 = 1e-8;
/// Upper bound on `N·M` pairs per stage before positions are subsampled.
pub const MAX_PAIRS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ContextualFormula {
    /// `S = exp((1 − d/(min d + ζ)) / h)`.
    #[default]
    Standard,
    /// `S = exp(1 − (1 − d)/(min d + ζ)) / h`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextualParams {
    pub zeta: f64,
    pub bandwidth: f64,
    pub formula: ContextualFormula,
}

impl Default for ContextualParams {
    fn default() -> Self {
        ContextualParams { zeta: 1e-5, bandwidth: 0.5, formula: ContextualFormula::Standard }
    }
}

/// `d_ij` for every real vector `i` and generated vector `j`.
pub fn cosine_distance_matrix(real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, TensorError> {
    let dim = real.first().or(fake.first()).map_or(0, Vec::len);
    if let Some(bad) = real.iter().chain(fake).find(|v| v.len() != dim) {
        return Err(TensorError::ShapeMismatch { op: "cosine_distance_matrix", left: vec![dim], right: vec![bad.len()] });
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(real
        .iter()
        .map(|x| {
            let nx = norm(x);
            fake.iter()
                .map(|y| {
                    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                    1.0 - dot / (nx * norm(y) + COSINE_EPS)
                })
                .collect()
        })
        .collect())
}

/// Exponent `a_ij` whose row softmax is `S̄`, given `d` and the row minima.
fn exponent(d: f64, row_min: f64, p: &ContextualParams) -> f64 {
    match p.formula {
        ContextualFormula::Standard => (1.0 - d / (row_min + p.zeta)) / p.bandwidth,
        ContextualFormula::Literal => 1.0 - (1.0 - d) / (row_min + p.zeta),
    }
}

/// Row-stochastic `S̄` from a distance matrix. Normalization runs in log
/// space, so rows whose raw similarities all underflow stay well defined.
pub fn contextual_similarity(d: &[Vec<f64>], params: &ContextualParams) -> Vec<Vec<f64>> {
    d.iter()
        .map(|row| {
            let m = row.iter().copied().fold(f64::INFINITY, f64::min);
            let a: Vec<f64> = row.iter().map(|&v| exponent(v, m, params)).collect();
            softmax(&a)
        })
        .collect()
}

fn softmax(a: &[f64]) -> Vec<f64> {
    let mx = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `CX = (1/max(N,M)) Σ_j max_i S̄_ij`.
pub fn contextual_score(s_bar: &[Vec<f64>]) -> f64 {
    let n = s_bar.len();
    let m = s_bar.first().map_or(0, Vec::len);
    let total: f64 = (0..m).map(|j| s_bar.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max)).sum();
    total / n.max(m) as f64
}

/// Position stride so that the subsampled pair count fits in [`MAX_PAIRS`].
pub fn subsample_stride(n: usize, m: usize) -> usize {
    let mut s = 1;
    while n.div_ceil(s) * m.div_ceil(s) > MAX_PAIRS {
        s += 1;
    }
    s
}

/// Per-position channel vectors of one `[C, H, W]` item, every `stride`-th
/// position in raster order.
fn gather<T: Element>(item: &[T], channels: usize, stride: usize) -> Vec<Vec<f64>> {
    let plane = item.len() / channels;
    (0..plane).step_by(stride).map(|p| (0..channels).map(|c| item[c * plane + p].as_f64()).collect()).collect()
}

/// Everything the backward pass needs for one item.
struct Forward {
    real: Vec<Vec<f64>>,
    fake: Vec<Vec<f64>>,
    real_norm: Vec<f64>,
    fake_norm: Vec<f64>,
    d: Vec<Vec<f64>>,
    row_min: Vec<(usize, f64)>,
    s_bar: Vec<Vec<f64>>,
    col_argmax: Vec<usize>,
    cx: f64,
}

fn forward(real: Vec<Vec<f64>>, fake: Vec<Vec<f64>>, p: &ContextualParams) -> Forward {
    let norm = |v: &Vec<f64>| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let real_norm: Vec<f64> = real.iter().map(norm).collect();
    let fake_norm: Vec<f64> = fake.iter().map(norm).collect();
    let d: Vec<Vec<f64>> = real
        .iter()
        .zip(&real_norm)
        .map(|(x, &nx)| {
            fake.iter()
                .zip(&fake_norm)
                .map(|(y, &ny)| {
                    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                    1.0 - dot / (nx * ny + COSINE_EPS)
                })
                .collect()
        })
        .collect();
    let row_min: Vec<(usize, f64)> = d
        .iter()
        .map(|row| row.iter().enumerate().fold((0, f64::INFINITY), |best, (k, &v)| if v < best.1 { (k, v) } else { best }))
        .collect();
    let s_bar: Vec<Vec<f64>> =
        d.iter().zip(&row_min).map(|(row, &(_, m))| softmax(&row.iter().map(|&v| exponent(v, m, p)).collect::<Vec<_>>())).collect();
    let (n, m) = (real.len(), fake.len());
    let col_argmax: Vec<usize> = (0..m).map(|j| (0..n).fold(0, |best, i| if s_bar[i][j] > s_bar[best][j] { i } else { best })).collect();
    let cx = col_argmax.iter().enumerate().map(|(j, &i)| s_bar[i][j]).sum::<f64>() / n.max(m) as f64;
    Forward { real, fake, real_norm, fake_norm, d, row_min, s_bar, col_argmax, cx }
}

/// Gradients of `CX` scaled by `g_cx`, w.r.t. the real and fake vectors.
fn backward(f: &Forward, g_cx: f64, p: &ContextualParams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (n, m) = (f.real.len(), f.fake.len());
    let g_top = g_cx / n.max(m) as f64;
    let mut g_s = vec![vec![0.0; m]; n];
    for (j, &i) in f.col_argmax.iter().enumerate() {
        g_s[i][j] = g_top;
    }
    let mut g_d = vec![vec![0.0; m]; n];
    for i in 0..n {
        let dot: f64 = g_s[i].iter().zip(&f.s_bar[i]).map(|(a, b)| a * b).sum();
        let (amin, mn) = f.row_min[i];
        let denom = mn + p.zeta;
        let mut g_min = 0.0;
        for j in 0..m {
            let g_a = f.s_bar[i][j] * (g_s[i][j] - dot);
            let dij = f.d[i][j];
            match p.formula {
                ContextualFormula::Standard => {
                    let g_dt = -g_a / p.bandwidth;
                    g_d[i][j] += g_dt / denom;
                    g_min -= g_dt * dij / (denom * denom);
                }
                ContextualFormula::Literal => {
                    g_d[i][j] += g_a / denom;
                    g_min += g_a * (1.0 - dij) / (denom * denom);
                }
            }
        }
        g_d[i][amin] += g_min;
    }
    let channels = f.real.first().or(f.fake.first()).map_or(0, Vec::len);
    let mut g_real = vec![vec![0.0; channels]; n];
    let mut g_fake = vec![vec![0.0; channels]; m];
    for i in 0..n {
        let (x, nx) = (&f.real[i], f.real_norm[i]);
        for j in 0..m {
            let g_c = -g_d[i][j];
            if g_c == 0.0 {
                continue;
            }
            let (y, ny) = (&f.fake[j], f.fake_norm[j]);
            let q = nx * ny + COSINE_EPS;
            let dot = (1.0 - f.d[i][j]) * q;
            // c = dot / q with q = ‖x‖‖y‖ + ε
            let kx = if nx > 0.0 { dot * ny / (q * q * nx) } else { 0.0 };
            let ky = if ny > 0.0 { dot * nx / (q * q * ny) } else { 0.0 };
            for c in 0..channels {
                g_real[i][c] += g_c * (y[c] / q - kx * x[c]);
                g_fake[j][c] += g_c * (x[c] / q - ky * y[c]);
            }
        }
    }
    (g_real, g_fake)
}

struct ContextualOp {
    params: ContextualParams,
    stride: usize,
}

impl ContextualOp {
    fn items<T: Element>(&self, real: &Tensor<T>, fake: &Tensor<T>) -> Vec<Forward> {
        let c = real.shape()[1];
        let (rp, fp) = (real.len() / real.shape()[0], fake.len() / fake.shape()[0]);
        real.data()
            .chunks(rp)
            .zip(fake.data().chunks(fp))
            .map(|(r, f)| forward(gather(r, c, self.stride), gather(f, c, self.stride), &self.params))
            .collect()
    }
}

impl<T: Element> Function<T> for ContextualOp {
    fn name(&self) -> &'static str {
        "contextual_loss"
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let (real, fake) = (inputs[0], inputs[1]);
        let batch = real.shape()[0];
        let c = real.shape()[1];
        let g = grad.item().as_f64() / batch as f64;
        let scatter = |shape: &[usize], per_item: Vec<Vec<Vec<f64>>>| {
            let mut out = Tensor::<T>::zeros(shape.to_vec());
            let item_len = out.len() / batch;
            let plane = item_len / c;
            for (b, vecs) in per_item.into_iter().enumerate() {
                let dst = &mut out.data_mut()[b * item_len..(b + 1) * item_len];
                for (k, v) in vecs.into_iter().enumerate() {
                    let pos = k * self.stride;
                    for (ch, val) in v.into_iter().enumerate() {
                        dst[ch * plane + pos] = T::from_f64_lossy(val);
                    }
                }
            }
            out
        };
        let mut g_real = Vec::with_capacity(batch);
        let mut g_fake = Vec::with_capacity(batch);
        for f in self.items(real, fake) {
            let (gr, gf) = backward(&f, -g / f.cx, &self.params);
            g_real.push(gr);
            g_fake.push(gf);
        }
        vec![Some(scatter(real.shape(), g_real)), Some(scatter(fake.shape(), g_fake))]
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// Batch mean of `−ln CX` between `self` (real features) and `fake`,
    /// both `[B, C, H, W]`.
    pub fn contextual_loss(self, fake: Var<'t, T>, params: &ContextualParams) -> Result<Var<'t, T>, TensorError> {
        let (out, op) = {
            let r = self.value();
            let f = fake.value();
            let (rb, rc, rh, rw) = r.dims4()?;
            let (fb, fc, fh, fw) = f.dims4()?;
            if rb != fb || rc != fc {
                return Err(TensorError::ShapeMismatch { op: "contextual_loss", left: r.shape().to_vec(), right: f.shape().to_vec() });
            }
            let op = ContextualOp { params: *params, stride: subsample_stride(rh * rw, fh * fw) };
            let loss = op.items(&r, &f).iter().map(|it| -it.cx.ln()).sum::<f64>() / rb as f64;
            (Tensor::scalar(T::from_f64_lossy(loss)), op)
        };
        self.tape().record(op, &[self, fake], out)
    }
}

/// Mean over stages of the per-stage contextual loss.
pub fn contextual_loss<'t, T: Element>(
    real: &[Var<'t, T>],
    fake: &[Var<'t, T>],
    params: &ContextualParams,
) -> Result<Var<'t, T>, TensorError> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(TensorError::Invalid(format!(
            "contextual_loss: need equal, non-empty feature lists (got {} and {})",
            real.len(),
            fake.len()
        )));
    }
    let mut total: Option<Var<'t, T>> = None;
    for (r, f) in real.iter().zip(fake) {
        let l = r.contextual_loss(*f, params)?;
        total = Some(match total {
            Some(t) => t.add(l)?,
            None => l,
        });
    }
    total.expect("non-empty").scale(1.0 / real.len() as f64)
}
