//! Neural-network kernels: 3×3 same-padding convolution, ReLU, 2×2 max
//! pooling, nearest-neighbor upsampling, sigmoid, MSE loss, and Adam.
//!
//! Every operation is a pure function with an explicit analytic gradient.
//! Convolution runs as im2col + a small GEMM; the accumulation order per
//! output element (bias first, then kernel taps in `(c_in, ky, kx)` order)
//! is fixed so results are bit-identical to the direct triple-loop sum and
//! independent of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// Kernel spatial size; the only size these layers support.
pub const KERNEL: usize = 3;

/// Weights and bias of one 3×3 convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams<S> {
    /// Shape `(c_out, c_in, 3, 3)`.
    pub weights: Tensor4<S>,
    /// One bias per output channel.
    pub bias: Vec<S>,
}

impl<S: Scalar> ConvParams<S> {
    pub fn new(weights: Tensor4<S>, bias: Vec<S>) -> Result<Self> {
        if weights.h() != KERNEL || weights.w() != KERNEL {
            return Err(Error::Shape(format!(
                "conv kernel must be {KERNEL}x{KERNEL}, got {}x{}",
                weights.h(),
                weights.w()
            )));
        }
        if bias.len() != weights.n() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} output channels",
                bias.len(),
                weights.n()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(c_out: usize, c_in: usize) -> Self {
        Self {
            weights: Tensor4::zeros([c_out, c_in, KERNEL, KERNEL]),
            bias: vec![S::zero(); c_out],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(c_out: usize, c_in: usize, rng: &mut impl rand::Rng) -> Self {
        let fan_in = (c_in * KERNEL * KERNEL) as f64;
        let fan_out = (c_out * KERNEL * KERNEL) as f64;
        let limit = (6.0 / (fan_in + fan_out)).sqrt();
        let mut weights = Tensor4::zeros([c_out, c_in, KERNEL, KERNEL]);
        for w in weights.as_mut_slice() {
            *w = S::from_f64(rng.random_range(-limit..limit));
        }
        Self {
            weights,
            bias: vec![S::zero(); c_out],
        }
    }

    #[inline]
    pub fn c_out(&self) -> usize {
        self.weights.n()
    }

    #[inline]
    pub fn c_in(&self) -> usize {
        self.weights.c()
    }

    /// Trainable scalar count (weights + bias).
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn cast<T: Scalar>(&self) -> ConvParams<T> {
        ConvParams {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|&b| T::from_f64(b.to_f64())).collect(),
        }
    }
}

/// Gradients of a conv layer, same shapes as its parameters.
#[derive(Clone, Debug)]
pub struct ConvGrads<S> {
    pub weights: Tensor4<S>,
    pub bias: Vec<S>,
}

/// Unrolls the 3×3 neighborhoods of one sample into a `(c_in*9) x (h*w)`
/// column matrix; out-of-bounds taps become zero.
fn im2col<S: Scalar>(x: &[S], c_in: usize, h: usize, w: usize, col: &mut [S]) {
    let p = h * w;
    debug_assert_eq!(col.len(), c_in * KERNEL * KERNEL * p);
    let mut k = 0;
    for ic in 0..c_in {
        let plane = &x[ic * p..(ic + 1) * p];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                let row = &mut col[k * p..(k + 1) * p];
                for y in 0..h {
                    let sy = y as isize + dy;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(S::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x_out, d) in dst.iter_mut().enumerate() {
                        let sx = x_out as isize + dx;
                        *d = if sx < 0 || sx >= w as isize {
                            S::zero()
                        } else {
                            src[sx as usize]
                        };
                    }
                }
                k += 1;
            }
        }
    }
}

fn check_conv_input<S: Scalar>(input: &Tensor4<S>, params: &ConvParams<S>) -> Result<()> {
    if input.c() != params.c_in() {
        return Err(Error::Shape(format!(
            "conv2d_same: input shape {:?} has {} channels but weights {:?} expect {}",
            input.shape(),
            input.c(),
            params.weights.shape(),
            params.c_in()
        )));
    }
    Ok(())
}

/// Zero-padded "same" convolution (cross-correlation convention, no kernel
/// flip). Output shape `(n, c_out, h, w)`.
pub fn conv2d_same<S: Scalar>(input: &Tensor4<S>, params: &ConvParams<S>) -> Result<Tensor4<S>> {
    check_conv_input(input, params)?;
    let [n, c_in, h, w] = input.shape();
    let c_out = params.c_out();
    let p = h * w;
    let k_len = c_in * KERNEL * KERNEL;

    let mut out = Tensor4::zeros([n, c_out, h, w]);
    let wmat = params.weights.as_slice();
    let bias = &params.bias;

    out.as_mut_slice()
        .par_chunks_mut(c_out * p)
        .zip(input.as_slice().par_chunks(c_in * p))
        .for_each(|(o, x)| {
            let mut col = vec![S::zero(); k_len * p];
            im2col(x, c_in, h, w, &mut col);
            for m in 0..c_out {
                let row = &mut o[m * p..(m + 1) * p];
                row.fill(bias[m]);
                for k in 0..k_len {
                    let wv = wmat[m * k_len + k];
                    let crow = &col[k * p..(k + 1) * p];
                    for (r, &c) in row.iter_mut().zip(crow) {
                        *r = *r + wv * c;
                    }
                }
            }
        });
    Ok(out)
}

/// Analytic gradients of `sum(upstream ⊙ conv2d_same(input, params))` with
/// respect to the input, weights, and bias.
pub fn conv2d_grad<S: Scalar>(
    input: &Tensor4<S>,
    params: &ConvParams<S>,
    upstream: &Tensor4<S>,
) -> Result<(Tensor4<S>, ConvGrads<S>)> {
    check_conv_input(input, params)?;
    let [n, c_in, h, w] = input.shape();
    let c_out = params.c_out();
    if upstream.shape() != [n, c_out, h, w] {
        return Err(Error::Shape(format!(
            "conv2d_grad: upstream shape {:?} does not match output shape {:?}",
            upstream.shape(),
            [n, c_out, h, w]
        )));
    }
    let p = h * w;
    let k_len = c_in * KERNEL * KERNEL;
    let wmat = params.weights.as_slice();

    let mut d_input = Tensor4::zeros(input.shape());

    // Per-sample weight/bias partials, reduced afterwards in sample order so
    // the sum is independent of the rayon schedule.
    let partials: Vec<(Vec<S>, Vec<S>)> = d_input
        .as_mut_slice()
        .par_chunks_mut(c_in * p)
        .zip(input.as_slice().par_chunks(c_in * p))
        .zip(upstream.as_slice().par_chunks(c_out * p))
        .map(|((dx, x), up)| {
            let mut col = vec![S::zero(); k_len * p];
            im2col(x, c_in, h, w, &mut col);

            // dW[m][k] = <upstream row m, col row k>
            let mut dw = vec![S::zero(); c_out * k_len];
            let mut db = vec![S::zero(); c_out];
            for m in 0..c_out {
                let urow = &up[m * p..(m + 1) * p];
                let mut bsum = S::zero();
                for &u in urow {
                    bsum = bsum + u;
                }
                db[m] = bsum;
                for k in 0..k_len {
                    let crow = &col[k * p..(k + 1) * p];
                    let mut s = S::zero();
                    for (&u, &c) in urow.iter().zip(crow) {
                        s = s + u * c;
                    }
                    dw[m * k_len + k] = s;
                }
            }

            // dcol[k][p] = sum_m w[m][k] * upstream[m][p], then scatter back.
            let mut dcol = vec![S::zero(); k_len * p];
            for k in 0..k_len {
                let drow = &mut dcol[k * p..(k + 1) * p];
                for m in 0..c_out {
                    let wv = wmat[m * k_len + k];
                    let urow = &up[m * p..(m + 1) * p];
                    for (d, &u) in drow.iter_mut().zip(urow) {
                        *d = *d + wv * u;
                    }
                }
            }
            col2im_accumulate(&dcol, c_in, h, w, dx);
            (dw, db)
        })
        .collect();

    let mut grads = ConvGrads {
        weights: Tensor4::zeros(params.weights.shape()),
        bias: vec![S::zero(); c_out],
    };
    let gw = grads.weights.as_mut_slice();
    for (dw, db) in &partials {
        for (g, &d) in gw.iter_mut().zip(dw) {
            *g = *g + d;
        }
        for (g, &d) in grads.bias.iter_mut().zip(db) {
            *g = *g + d;
        }
    }
    Ok((d_input, grads))
}

/// Scatters a column-matrix gradient back onto the input plane.
fn col2im_accumulate<S: Scalar>(dcol: &[S], c_in: usize, h: usize, w: usize, dx: &mut [S]) {
    let p = h * w;
    let mut k = 0;
    for ic in 0..c_in {
        let plane = &mut dx[ic * p..(ic + 1) * p];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let dy = ky as isize - 1;
                let dx_off = kx as isize - 1;
                let row = &dcol[k * p..(k + 1) * p];
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for (x_out, &g) in src.iter().enumerate() {
                        let sx = x_out as isize + dx_off;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] = dst[sx as usize] + g;
                        }
                    }
                }
                k += 1;
            }
        }
    }
}

/// Elementwise `max(0, x)`.
pub fn relu<S: Scalar>(input: &Tensor4<S>) -> Tensor4<S> {
    input.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Routes `upstream` through the ReLU mask of `input` (zero where `x <= 0`).
pub fn relu_backward<S: Scalar>(input: &Tensor4<S>, upstream: &Tensor4<S>) -> Result<Tensor4<S>> {
    input.check_same_shape(upstream, "relu_backward: input vs upstream")?;
    let mut out = upstream.clone();
    for (o, &x) in out.as_mut_slice().iter_mut().zip(input.as_slice()) {
        if x <= S::zero() {
            *o = S::zero();
        }
    }
    Ok(out)
}

/// Winner positions recorded by `maxpool2`, used to route gradients.
#[derive(Clone, Debug)]
pub struct PoolIndices {
    input_shape: [usize; 4],
    /// Flat index into the input for each output element.
    argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2. Ties go to the first element of the block
/// in row-major scan order.
pub fn maxpool2<S: Scalar>(input: &Tensor4<S>) -> Result<(Tensor4<S>, PoolIndices)> {
    let [n, c, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Parameter(format!(
            "maxpool2 requires even spatial dims, got {h}x{w}; pad the input first \
             (denoise_image pads odd images by edge replication)"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    let mut argmax = vec![0usize; out.len()];
    let x = input.as_slice();
    let o = out.as_mut_slice();
    let mut oi = 0;
    for bn in 0..n {
        for ch in 0..c {
            let base = (bn * c + ch) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let i00 = base + (2 * oy) * w + 2 * ox;
                    let mut best_i = i00;
                    let mut best = x[i00];
                    for &cand in &[i00 + 1, i00 + w, i00 + w + 1] {
                        if x[cand] > best {
                            best = x[cand];
                            best_i = cand;
                        }
                    }
                    o[oi] = best;
                    argmax[oi] = best_i;
                    oi += 1;
                }
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: input.shape(),
            argmax,
        },
    ))
}

/// Scatters `upstream` back to the recorded winner positions.
pub fn maxpool2_backward<S: Scalar>(
    indices: &PoolIndices,
    upstream: &Tensor4<S>,
) -> Result<Tensor4<S>> {
    if upstream.len() != indices.argmax.len() {
        return Err(Error::Shape(format!(
            "maxpool2_backward: upstream has {} elements, pooling recorded {}",
            upstream.len(),
            indices.argmax.len()
        )));
    }
    let mut out = Tensor4::zeros(indices.input_shape);
    let o = out.as_mut_slice();
    for (&i, &g) in indices.argmax.iter().zip(upstream.as_slice()) {
        o[i] = o[i] + g;
    }
    Ok(out)
}

/// Replicates each pixel into a 2×2 block; output is `(n, c, 2h, 2w)`.
pub fn upsample2_nearest<S: Scalar>(input: &Tensor4<S>) -> Tensor4<S> {
    let [n, c, h, w] = input.shape();
    let mut out = Tensor4::zeros([n, c, 2 * h, 2 * w]);
    let x = input.as_slice();
    let o = out.as_mut_slice();
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        let dst = &mut o[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for y in 0..h {
            for xcol in 0..w {
                let v = src[y * w + xcol];
                let d0 = (2 * y) * (2 * w) + 2 * xcol;
                let d1 = (2 * y + 1) * (2 * w) + 2 * xcol;
                dst[d0] = v;
                dst[d0 + 1] = v;
                dst[d1] = v;
                dst[d1 + 1] = v;
            }
        }
    }
    out
}

/// Gradient of nearest upsampling: each source pixel collects the sum of its
/// four replicas.
pub fn upsample2_backward<S: Scalar>(upstream: &Tensor4<S>) -> Result<Tensor4<S>> {
    let [n, c, h2, w2] = upstream.shape();
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::Shape(format!(
            "upsample2_backward: upstream dims {h2}x{w2} are not even"
        )));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor4::zeros([n, c, h, w]);
    let u = upstream.as_slice();
    let o = out.as_mut_slice();
    for plane in 0..n * c {
        let src = &u[plane * h2 * w2..(plane + 1) * h2 * w2];
        let dst = &mut o[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            for xcol in 0..w {
                let d0 = (2 * y) * w2 + 2 * xcol;
                let d1 = (2 * y + 1) * w2 + 2 * xcol;
                dst[y * w + xcol] = src[d0] + src[d0 + 1] + src[d1] + src[d1 + 1];
            }
        }
    }
    Ok(out)
}

/// Numerically stable elementwise logistic sigmoid.
pub fn sigmoid<S: Scalar>(input: &Tensor4<S>) -> Tensor4<S> {
    input.map(|x| {
        if x >= S::zero() {
            S::one() / (S::one() + (-x).exp())
        } else {
            let e = x.exp();
            e / (S::one() + e)
        }
    })
}

/// Gradient through sigmoid given its forward `output`: `up * y * (1 - y)`.
pub fn sigmoid_backward<S: Scalar>(
    output: &Tensor4<S>,
    upstream: &Tensor4<S>,
) -> Result<Tensor4<S>> {
    output.check_same_shape(upstream, "sigmoid_backward: output vs upstream")?;
    let mut out = upstream.clone();
    for (o, &y) in out.as_mut_slice().iter_mut().zip(output.as_slice()) {
        *o = *o * y * (S::one() - y);
    }
    Ok(out)
}

/// How the squared-error sum is normalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNorm {
    /// Divide by the total element count `n*c*h*w` (standard MSE).
    #[default]
    Element,
    /// Divide by the batch size only; a pure rescaling of the gradient.
    Batch,
}

/// Mean squared error over all elements, with its gradient w.r.t. `pred`.
pub fn mse_loss<S: Scalar>(pred: &Tensor4<S>, target: &Tensor4<S>) -> Result<(S, Tensor4<S>)> {
    mse_loss_with(pred, target, LossNorm::Element)
}

/// MSE with an explicit normalization mode.
pub fn mse_loss_with<S: Scalar>(
    pred: &Tensor4<S>,
    target: &Tensor4<S>,
    norm: LossNorm,
) -> Result<(S, Tensor4<S>)> {
    pred.check_same_shape(target, "mse_loss: pred vs target")?;
    let divisor = match norm {
        LossNorm::Element => pred.len() as f64,
        LossNorm::Batch => pred.n() as f64,
    };
    let inv = S::from_f64(1.0 / divisor);
    let two = S::from_f64(2.0);
    let mut sum = 0.0f64;
    let mut grad = Tensor4::zeros(pred.shape());
    for ((g, &p), &t) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let d = t - p;
        sum += (d * d).to_f64();
        *g = two * (p - t) * inv;
    }
    Ok((S::from_f64(sum / divisor), grad))
}

/// First/second moment estimates plus the step counter for one parameter
/// tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            t: 0,
        }
    }

    pub fn cast<T: Scalar>(&self) -> AdamState<T> {
        AdamState {
            m: self.m.iter().map(|&x| T::from_f64(x.to_f64())).collect(),
            v: self.v.iter().map(|&x| T::from_f64(x.to_f64())).collect(),
            t: self.t,
        }
    }
}

/// Adam β/ε constants. The canonical defaults apply unless overridden.
#[derive(Clone, Copy, Debug)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place. `name` identifies the parameter
/// tensor in error messages.
pub fn adam_step<S: Scalar>(
    name: &str,
    param: &mut [S],
    grad: &[S],
    state: &mut AdamState<S>,
    lr: f64,
    hyper: AdamHyper,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam_step '{name}': param {} / grad {} / state {} lengths differ",
            param.len(),
            grad.len(),
            state.m.len()
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of parameter '{name}'")));
    }
    state.t += 1;
    let b1 = S::from_f64(hyper.beta1);
    let b2 = S::from_f64(hyper.beta2);
    let eps = S::from_f64(hyper.eps);
    let lr = S::from_f64(lr);
    let one = S::one();
    let corr1 = one - b1.powi(state.t as i32);
    let corr2 = one - b2.powi(state.t as i32);
    for ((p, &g), (m, v)) in param
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / corr1;
        let v_hat = *v / corr2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
