//! Layer primitives with explicit forward and backward passes.
//!
//! Feature maps are `C x T x H x W`, stored channel-major then row-major.
//! Convolution weights are `[out][in][kt][kh][kw]`; dense weights are
//! `[out][in]`.

use rand::Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    /// `[C, T, H, W]`
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self { shape, data: vec![0.0; shape.iter().product()] }
    }

    /// Flat vector of `n` values.
    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: [data.len(), 1, 1, 1], data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Zero padding before the first sample for a same-size output.
#[inline]
fn pad_before(k: usize) -> usize {
    (k - 1) / 2
}

/// Output indices `o` for which `o + offset - pad` stays inside `0..n`.
#[inline]
fn valid_range(n: usize, offset: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(offset);
    let hi = (n + pad).saturating_sub(offset).min(n);
    (lo, hi.max(lo))
}

fn check_conv(input: &Tensor, weights: &[f64], biases: &[f64], kernel: [usize; 3]) -> Result<usize> {
    let in_ch = input.shape[0];
    let k: usize = kernel.iter().product();
    if k == 0 || biases.is_empty() || weights.len() != biases.len() * in_ch * k {
        return Err(Error::ShapeMismatch(format!(
            "conv weights {} / biases {} for {in_ch} input channels and kernel {kernel:?}",
            weights.len(),
            biases.len()
        )));
    }
    Ok(biases.len())
}

/// Stride-1, zero same-padded 3D cross-correlation.
pub fn conv3d_forward(input: &Tensor, weights: &[f64], biases: &[f64], kernel: [usize; 3]) -> Result<Tensor> {
    let out_ch = check_conv(input, weights, biases, kernel)?;
    let [in_ch, nt, nh, nw] = input.shape;
    let [kt, kh, kw] = kernel;
    let (pt, ph, pw) = (pad_before(kt), pad_before(kh), pad_before(kw));
    let vol = nt * nh * nw;
    let mut out = Tensor::zeros([out_ch, nt, nh, nw]);
    for co in 0..out_ch {
        out.data[co * vol..(co + 1) * vol].fill(biases[co]);
    }
    for co in 0..out_ch {
        let out_c = &mut out.data[co * vol..(co + 1) * vol];
        for ci in 0..in_ch {
            let in_c = &input.data[ci * vol..(ci + 1) * vol];
            for a in 0..kt {
                let (t_lo, t_hi) = valid_range(nt, a, pt);
                for b in 0..kh {
                    let (h_lo, h_hi) = valid_range(nh, b, ph);
                    for d in 0..kw {
                        let (w_lo, w_hi) = valid_range(nw, d, pw);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let wv = weights[(((co * in_ch + ci) * kt + a) * kh + b) * kw + d];
                        for t in t_lo..t_hi {
                            let ti = t + a - pt;
                            for h in h_lo..h_hi {
                                let hi = h + b - ph;
                                let o = &mut out_c[(t * nh + h) * nw + w_lo..(t * nh + h) * nw + w_hi];
                                let s0 = (ti * nh + hi) * nw + w_lo + d - pw;
                                let i = &in_c[s0..s0 + (w_hi - w_lo)];
                                for (ov, iv) in o.iter_mut().zip(i) {
                                    *ov += wv * iv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    pub input: Tensor,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub fn conv3d_backward(grad_out: &Tensor, input: &Tensor, weights: &[f64], kernel: [usize; 3]) -> Result<ConvGrads> {
    let [in_ch, nt, nh, nw] = input.shape;
    let out_ch = grad_out.shape[0];
    let k: usize = kernel.iter().product();
    if grad_out.shape != [out_ch, nt, nh, nw] || weights.len() != out_ch * in_ch * k {
        return Err(Error::ShapeMismatch(format!(
            "conv backward: grad {:?}, input {:?}, {} weights",
            grad_out.shape,
            input.shape,
            weights.len()
        )));
    }
    let [kt, kh, kw] = kernel;
    let (pt, ph, pw) = (pad_before(kt), pad_before(kh), pad_before(kw));
    let vol = nt * nh * nw;
    let mut g_in = Tensor::zeros(input.shape);
    let mut g_w = vec![0.0; weights.len()];
    let g_b: Vec<f64> = grad_out.data.chunks_exact(vol).map(|c| c.iter().sum()).collect();
    for co in 0..out_ch {
        let go = &grad_out.data[co * vol..(co + 1) * vol];
        for ci in 0..in_ch {
            let in_c = &input.data[ci * vol..(ci + 1) * vol];
            let gi_c = &mut g_in.data[ci * vol..(ci + 1) * vol];
            for a in 0..kt {
                let (t_lo, t_hi) = valid_range(nt, a, pt);
                for b in 0..kh {
                    let (h_lo, h_hi) = valid_range(nh, b, ph);
                    for d in 0..kw {
                        let (w_lo, w_hi) = valid_range(nw, d, pw);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let widx = (((co * in_ch + ci) * kt + a) * kh + b) * kw + d;
                        let wv = weights[widx];
                        let mut acc = 0.0;
                        for t in t_lo..t_hi {
                            let ti = t + a - pt;
                            for h in h_lo..h_hi {
                                let hi = h + b - ph;
                                let o0 = (t * nh + h) * nw + w_lo;
                                let s0 = (ti * nh + hi) * nw + w_lo + d - pw;
                                let n = w_hi - w_lo;
                                let g = &go[o0..o0 + n];
                                for (x, gv) in in_c[s0..s0 + n].iter().zip(g) {
                                    acc += x * gv;
                                }
                                for (gi, gv) in gi_c[s0..s0 + n].iter_mut().zip(g) {
                                    *gi += wv * gv;
                                }
                            }
                        }
                        g_w[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads { input: g_in, weights: g_w, biases: g_b })
}

pub fn pooled_shape(shape: [usize; 4], window: [usize; 3]) -> [usize; 4] {
    [
        shape[0],
        shape[1].div_ceil(window[0]),
        shape[2].div_ceil(window[1]),
        shape[3].div_ceil(window[2]),
    ]
}

/// Max pooling with stride equal to the window. Partial windows at the far
/// edges behave as if padded with `-inf`. Returns the flat input index of
/// every selected maximum (first occurrence on ties).
pub fn maxpool3d(input: &Tensor, window: [usize; 3]) -> Result<(Tensor, Vec<usize>)> {
    if window.contains(&0) {
        return Err(Error::ShapeMismatch(format!("pool window {window:?}")));
    }
    let [ch, nt, nh, nw] = input.shape;
    let out_shape = pooled_shape(input.shape, window);
    let [_, ot, oh, ow] = out_shape;
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out.len()];
    let mut o = 0;
    for c in 0..ch {
        for t in 0..ot {
            for h in 0..oh {
                for w in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for ti in t * window[0]..((t + 1) * window[0]).min(nt) {
                        for hi in h * window[1]..((h + 1) * window[1]).min(nh) {
                            for wi in w * window[2]..((w + 1) * window[2]).min(nw) {
                                let idx = ((c * nt + ti) * nh + hi) * nw + wi;
                                if input.data[idx] > best || best_i == usize::MAX {
                                    best = input.data[idx];
                                    best_i = idx;
                                }
                            }
                        }
                    }
                    out.data[o] = best;
                    argmax[o] = best_i;
                    o += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool3d_backward(grad_out: &Tensor, argmax: &[usize], in_shape: [usize; 4]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::ShapeMismatch("pool gradient and argmax lengths differ".into()));
    }
    let mut g = Tensor::zeros(in_shape);
    for (&i, &v) in argmax.iter().zip(&grad_out.data) {
        g.data[i] += v;
    }
    Ok(g)
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor { shape: input.shape, data: input.data.iter().map(|&v| v.max(0.0)).collect() }
}

pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Tensor {
    let data = grad_out.data.iter().zip(&input.data).map(|(&g, &x)| if x > 0.0 { g } else { 0.0 }).collect();
    Tensor { shape: input.shape, data }
}

/// Inverted dropout. Returns the output and, in training mode, the
/// multiplicative mask (`0` or `1 / (1 - p)`).
pub fn dropout<R: Rng + ?Sized>(input: &Tensor, p: f64, rng: &mut R, training: bool) -> (Tensor, Option<Vec<f64>>) {
    if !training || p <= 0.0 {
        return (input.clone(), None);
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..input.len()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
    let data = input.data.iter().zip(&mask).map(|(x, m)| x * m).collect();
    (Tensor { shape: input.shape, data }, Some(mask))
}

pub fn dropout_backward(grad_out: &Tensor, mask: Option<&[f64]>) -> Tensor {
    match mask {
        None => grad_out.clone(),
        Some(m) => Tensor { shape: grad_out.shape, data: grad_out.data.iter().zip(m).map(|(g, m)| g * m).collect() },
    }
}

pub fn dense(input: &[f64], weights: &[f64], biases: &[f64]) -> Result<Vec<f64>> {
    let n_in = input.len();
    if weights.len() != biases.len() * n_in {
        return Err(Error::ShapeMismatch(format!(
            "dense weights {} for {} -> {}",
            weights.len(),
            n_in,
            biases.len()
        )));
    }
    Ok(biases
        .iter()
        .zip(weights.chunks_exact(n_in.max(1)))
        .map(|(b, row)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect())
}

pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

pub fn dense_backward(grad_out: &[f64], input: &[f64], weights: &[f64]) -> Result<DenseGrads> {
    let n_in = input.len();
    if weights.len() != grad_out.len() * n_in {
        return Err(Error::ShapeMismatch("dense backward shapes".into()));
    }
    let mut g_in = vec![0.0; n_in];
    let mut g_w = vec![0.0; weights.len()];
    for (o, &g) in grad_out.iter().enumerate() {
        let row = &weights[o * n_in..(o + 1) * n_in];
        for (gi, w) in g_in.iter_mut().zip(row) {
            *gi += w * g;
        }
        for (gw, x) in g_w[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
            *gw = g * x;
        }
    }
    Ok(DenseGrads { input: g_in, weights: g_w, biases: grad_out.to_vec() })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Cross entropy of softmax probabilities against `label`, with the
/// gradient taken with respect to the logits (`p - onehot`).
pub fn bce_loss(probs: &[f64], label: usize) -> (f64, Vec<f64>) {
    let loss = -probs[label].max(1e-12).ln();
    let grad = probs.iter().enumerate().map(|(i, &p)| if i == label { p - 1.0 } else { p }).collect();
    (loss, grad)
}
