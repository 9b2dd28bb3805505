//! Layer kernels.
//!
//! Image tensors are `[N, C, H, W]`; a rank-3 `[C, H, W]` input is accepted
//! as a batch of one and the result keeps rank 3. Dense tensors are
//! `[N, features]` (rank 1 means a single sample).
//!
//! Convolution is valid (no padding) stride-1 cross-correlation, lowered to
//! a matrix product over an im2col buffer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::NnError;
use crate::tensor::Tensor;

const IM2COL_BUDGET: usize = 1 << 17;

/// `C = A·B + beta·C` with explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len());
        assert!(last(k, n, rsb, csb) < b.len());
    }
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: the asserts above bound every index the kernel touches, and
    // `c` is a unique borrow disjoint from `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn mismatch(op: &'static str, detail: alloc::string::String) -> NnError {
    NnError::ShapeMismatch { op, detail }
}

/// Splits an image tensor into `(n, c, h, w, batched)`.
fn image_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize, usize, bool), NnError> {
    match *t.shape() {
        [c, h, w] => Ok((1, c, h, w, false)),
        [n, c, h, w] => Ok((n, c, h, w, true)),
        ref s => Err(mismatch(op, format!("expected [N,C,H,W] or [C,H,W], got {s:?}"))),
    }
}

fn image_shape(n: usize, c: usize, h: usize, w: usize, batched: bool) -> Vec<usize> {
    if batched {
        vec![n, c, h, w]
    } else {
        vec![c, h, w]
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    n: usize,
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    k: usize,
    ho: usize,
    wo: usize,
    batched: bool,
}

impl ConvGeom {
    fn new(op: &'static str, input: &Tensor, weights: &Tensor) -> Result<Self, NnError> {
        let (n, c_in, h, w, batched) = image_dims(op, input)?;
        let &[c_out, wc, k, k2] = weights.shape() else {
            return Err(mismatch(op, format!("weights must be [C_out,C_in,k,k], got {:?}", weights.shape())));
        };
        if wc != c_in || k != k2 {
            return Err(mismatch(
                op,
                format!("weights {:?} incompatible with input {:?}", weights.shape(), input.shape()),
            ));
        }
        if k == 0 || k > h || k > w {
            return Err(mismatch(op, format!("kernel {k} does not fit a {h}x{w} input")));
        }
        Ok(Self {
            n,
            c_in,
            h,
            w,
            c_out,
            k,
            ho: h - k + 1,
            wo: w - k + 1,
            batched,
        })
    }

    fn rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.n * self.ho * self.wo
    }

    fn with_n(&self, n: usize) -> Self {
        Self { n, ..*self }
    }

    /// Columns of the largest chunk.
    fn chunk_cols(&self) -> usize {
        self.chunk_len() * self.ho * self.wo
    }

    fn chunk_len(&self) -> usize {
        (IM2COL_BUDGET / (self.rows() * self.ho * self.wo).max(1)).clamp(1, self.n.max(1))
    }

    /// Sample ranges whose im2col buffers hold about [`IM2COL_BUDGET`] values.
    fn chunks(&self) -> impl Iterator<Item = (usize, usize)> {
        let step = self.chunk_len();
        let n = self.n;
        (0..n).step_by(step).map(move |s| (s, (s + step).min(n)))
    }
}

/// Lays out every receptive field as a column: `[C_in·k·k, N·Ho·Wo]`,
/// overwriting the first `rows·cols` values of `cols`.
fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let p = g.ho * g.wo;
    let ncols = g.cols();
    for c in 0..g.c_in {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let r = (c * g.k + ki) * g.k + kj;
                let row = &mut cols[r * ncols..(r + 1) * ncols];
                for s in 0..g.n {
                    let plane = &x[(s * g.c_in + c) * g.h * g.w..];
                    for oy in 0..g.ho {
                        let src = &plane[(oy + ki) * g.w + kj..(oy + ki) * g.w + kj + g.wo];
                        let dst = s * p + oy * g.wo;
                        row[dst..dst + g.wo].copy_from_slice(src);
                    }
                }
            }
        }
    }
}

/// Adds every column back onto its receptive field in `x`.
fn col2im(g: &ConvGeom, cols: &[f64], x: &mut [f64]) {
    let p = g.ho * g.wo;
    let ncols = g.cols();
    for c in 0..g.c_in {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let r = (c * g.k + ki) * g.k + kj;
                let row = &cols[r * ncols..(r + 1) * ncols];
                for s in 0..g.n {
                    let plane = &mut x[(s * g.c_in + c) * g.h * g.w..(s * g.c_in + c + 1) * g.h * g.w];
                    for oy in 0..g.ho {
                        let dst = &mut plane[(oy + ki) * g.w + kj..(oy + ki) * g.w + kj + g.wo];
                        let src = &row[s * p + oy * g.wo..s * p + oy * g.wo + g.wo];
                        for (d, v) in dst.iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let g = ConvGeom::new("conv2d_forward", input, weights)?;
    if bias.len() != g.c_out {
        return Err(mismatch("conv2d_forward", format!("bias has {} values for {} kernels", bias.len(), g.c_out)));
    }
    let p = g.ho * g.wo;
    let in_len = g.c_in * g.h * g.w;
    let mut out = vec![0.0; g.n * g.c_out * p];
    let mut cols = vec![0.0; g.chunk_cols() * g.rows()];
    let mut flat = vec![0.0; g.chunk_cols() * g.c_out];
    // Samples are lowered a few at a time so the im2col buffer stays in cache.
    for (s0, s1) in g.chunks() {
        let cg = g.with_n(s1 - s0);
        let ncols = cg.cols();
        im2col(&cg, &input.data()[s0 * in_len..s1 * in_len], &mut cols);
        gemm(g.c_out, g.rows(), ncols, weights.data(), (g.rows(), 1), &cols, (ncols, 1), 0.0, &mut flat, (ncols, 1));
        for (co, &b) in bias.data().iter().enumerate() {
            for s in 0..cg.n {
                let src = &flat[co * ncols + s * p..co * ncols + (s + 1) * p];
                let o = ((s0 + s) * g.c_out + co) * p;
                for (d, v) in out[o..o + p].iter_mut().zip(src) {
                    *d = v + b;
                }
            }
        }
    }
    Ok(Tensor::new(image_shape(g.n, g.c_out, g.ho, g.wo, g.batched), out).expect("conv output shape"))
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(grad_out: &Tensor, cached_input: &Tensor, weights: &Tensor) -> Result<ConvGrads, NnError> {
    conv2d_backward_impl(grad_out, cached_input, weights, true)
}

pub(crate) fn conv2d_backward_impl(
    grad_out: &Tensor,
    cached_input: &Tensor,
    weights: &Tensor,
    need_input: bool,
) -> Result<ConvGrads, NnError> {
    let g = ConvGeom::new("conv2d_backward", cached_input, weights)?;
    let p = g.ho * g.wo;
    if grad_out.len() != g.n * g.c_out * p {
        return Err(mismatch(
            "conv2d_backward",
            format!("grad_out {:?} does not match forward output", grad_out.shape()),
        ));
    }
    let in_len = g.c_in * g.h * g.w;
    let mut gw = vec![0.0; g.c_out * g.rows()];
    let mut gb = vec![0.0; g.c_out];
    let mut gx = if need_input { vec![0.0; g.n * in_len] } else { Vec::new() };
    let mut cols = vec![0.0; g.chunk_cols() * g.rows()];
    let mut gflat = vec![0.0; g.chunk_cols() * g.c_out];
    let mut dcols = if need_input { vec![0.0; g.chunk_cols() * g.rows()] } else { Vec::new() };
    for (s0, s1) in g.chunks() {
        let cg = g.with_n(s1 - s0);
        let ncols = cg.cols();
        im2col(&cg, &cached_input.data()[s0 * in_len..s1 * in_len], &mut cols);
        // Gather the output gradient into [C_out, n·P].
        let go = &grad_out.data()[s0 * g.c_out * p..s1 * g.c_out * p];
        for (s, sample) in go.chunks_exact(g.c_out * p).enumerate() {
            for (co, src) in sample.chunks_exact(p).enumerate() {
                gflat[co * ncols + s * p..co * ncols + (s + 1) * p].copy_from_slice(src);
            }
        }
        // dW += G · colsᵀ
        gemm(g.c_out, ncols, g.rows(), &gflat, (ncols, 1), &cols, (1, ncols), 1.0, &mut gw, (g.rows(), 1));
        for (b, row) in gb.iter_mut().zip(gflat[..g.c_out * ncols].chunks_exact(ncols)) {
            *b += row.iter().sum::<f64>();
        }
        if need_input {
            // dcols = Wᵀ · G
            gemm(g.rows(), g.c_out, ncols, weights.data(), (1, g.rows()), &gflat, (ncols, 1), 0.0, &mut dcols, (ncols, 1));
            col2im(&cg, &dcols, &mut gx[s0 * in_len..s1 * in_len]);
        }
    }
    let input = need_input.then(|| Tensor::new(cached_input.shape().to_vec(), gx).expect("conv grad shape"));
    Ok(ConvGrads {
        input,
        weights: Tensor::new(weights.shape().to_vec(), gw).expect("weight grad shape"),
        bias: Tensor::new(vec![g.c_out], gb).expect("bias grad shape"),
    })
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Returns the pooled tensor and, per output element, the flat input index
/// of the selected maximum (first in scan order on ties).
pub fn maxpool2x2_forward(input: &Tensor) -> Result<(Tensor, Vec<usize>), NnError> {
    let (n, c, h, w, batched) = image_dims("maxpool2x2_forward", input)?;
    let (ho, wo) = (h / 2, w / 2);
    if ho == 0 || wo == 0 {
        return Err(mismatch("maxpool2x2_forward", format!("{h}x{w} input is too small to pool")));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            let r0 = base + 2 * oy * w;
            let (top, bottom) = (&x[r0..r0 + 2 * wo], &x[r0 + w..r0 + w + 2 * wo]);
            for ox in 0..wo {
                let j = 2 * ox;
                let (mut bv, mut bi) = (top[j], r0 + j);
                if top[j + 1] > bv {
                    (bv, bi) = (top[j + 1], r0 + j + 1);
                }
                if bottom[j] > bv {
                    (bv, bi) = (bottom[j], r0 + w + j);
                }
                if bottom[j + 1] > bv {
                    (bv, bi) = (bottom[j + 1], r0 + w + j + 1);
                }
                out.push(bv);
                arg.push(bi);
            }
        }
    }
    Ok((Tensor::new(image_shape(n, c, ho, wo, batched), out).expect("pool shape"), arg))
}

pub fn maxpool2x2_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor, NnError> {
    if grad_out.len() != argmax.len() {
        return Err(mismatch("maxpool2x2_backward", format!("{} gradients for {} pooled cells", grad_out.len(), argmax.len())));
    }
    let mut gx = vec![0.0; input_shape.iter().product()];
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        gx[i] += g;
    }
    Ok(Tensor::new(input_shape.to_vec(), gx).expect("pool grad shape"))
}

fn dense_dims(op: &'static str, input: &Tensor, weights: &Tensor) -> Result<(usize, usize, usize, bool), NnError> {
    let (n, fin, batched) = match *input.shape() {
        [f] => (1, f, false),
        [n, f] => (n, f, true),
        ref s => return Err(mismatch(op, format!("dense input must be [N,F], got {s:?}"))),
    };
    let &[out, win] = weights.shape() else {
        return Err(mismatch(op, format!("dense weights must be [out,in], got {:?}", weights.shape())));
    };
    if win != fin {
        return Err(mismatch(op, format!("weights {:?} incompatible with input {:?}", weights.shape(), input.shape())));
    }
    Ok((n, fin, out, batched))
}

/// `y = x·Wᵀ + b` with `W` stored `[out, in]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (n, fin, fout, batched) = dense_dims("dense_forward", input, weights)?;
    if bias.len() != fout {
        return Err(mismatch("dense_forward", format!("bias has {} values for {} units", bias.len(), fout)));
    }
    let mut y = Vec::with_capacity(n * fout);
    for _ in 0..n {
        y.extend_from_slice(bias.data());
    }
    gemm(n, fin, fout, input.data(), (fin, 1), weights.data(), (1, fin), 1.0, &mut y, (fout, 1));
    let shape = if batched { vec![n, fout] } else { vec![fout] };
    Ok(Tensor::new(shape, y).expect("dense output shape"))
}

pub struct DenseGrads {
    pub input: Option<Tensor>,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(grad_out: &Tensor, cached_input: &Tensor, weights: &Tensor) -> Result<DenseGrads, NnError> {
    dense_backward_impl(grad_out, cached_input, weights, true)
}

pub(crate) fn dense_backward_impl(
    grad_out: &Tensor,
    cached_input: &Tensor,
    weights: &Tensor,
    need_input: bool,
) -> Result<DenseGrads, NnError> {
    let (n, fin, fout, _) = dense_dims("dense_backward", cached_input, weights)?;
    if grad_out.len() != n * fout {
        return Err(mismatch("dense_backward", format!("grad_out {:?} for {n}x{fout} output", grad_out.shape())));
    }
    let go = grad_out.data();
    let mut gw = vec![0.0; fout * fin];
    gemm(fout, n, fin, go, (1, fout), cached_input.data(), (fin, 1), 0.0, &mut gw, (fin, 1));
    let mut gb = vec![0.0; fout];
    for row in go.chunks_exact(fout) {
        for (b, g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    let input = if need_input {
        let mut gx = vec![0.0; n * fin];
        gemm(n, fout, fin, go, (fout, 1), weights.data(), (fin, 1), 0.0, &mut gx, (fin, 1));
        Some(Tensor::new(cached_input.shape().to_vec(), gx).expect("dense grad shape"))
    } else {
        None
    };
    Ok(DenseGrads {
        input,
        weights: Tensor::new(vec![fout, fin], gw).expect("weight grad shape"),
        bias: Tensor::new(vec![fout], gb).expect("bias grad shape"),
    })
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    relu_in_place(input.clone())
}

pub(crate) fn relu_in_place(mut x: Tensor) -> Tensor {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    x
}

/// Subgradient 0 at the kink.
pub fn relu_backward(grad_out: &Tensor, cached_input: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(cached_input.data()) {
        if x <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

pub fn tanh_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = libm::tanh(*v);
    }
    out
}

/// Takes the forward *output*: d tanh = 1 − y².
pub fn tanh_backward(grad_out: &Tensor, cached_output: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(cached_output.data()) {
        *gv *= 1.0 - y * y;
    }
    g
}

/// `[N, C, H, W] → [N, C·H·W]`; rank-3 input flattens to rank 1.
pub fn flatten(input: &Tensor) -> Tensor {
    let shape = match *input.shape() {
        [n, c, h, w] => vec![n, c * h * w],
        ref s => vec![s.iter().product()],
    };
    input.clone().reshape(&shape).expect("flatten preserves length")
}

/// Loss `−log softmax(logits)[label]` and its gradient `softmax − onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), NnError> {
    let k = logits.len();
    if label >= k {
        return Err(NnError::LabelOutOfRange { label, classes: k });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = probs.iter().sum();
    let loss = libm::log(sum) - (logits[label] - max);
    for p in &mut probs {
        *p /= sum;
    }
    probs[label] -= 1.0;
    Ok((loss.max(0.0), probs))
}

/// Mean loss over a `[N, K]` batch; the gradient is already divided by `N`.
pub fn softmax_cross_entropy_batch(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor), NnError> {
    let n = labels.len();
    let k = logits.len().checked_div(n).unwrap_or(0);
    if n == 0 || k * n != logits.len() {
        return Err(mismatch("softmax_cross_entropy", format!("{} logits for {n} labels", logits.len())));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    let scale = 1.0 / n as f64;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let (loss, g) = softmax_cross_entropy(row, label)?;
        total += loss;
        grad.extend(g.into_iter().map(|v| v * scale));
    }
    Ok((total * scale, Tensor::new(logits.shape().to_vec(), grad).expect("loss grad shape")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    fn rand_tensor(shape: &[usize], rng: &mut SeedRng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.uniform_range(-1.0, 1.0))
    }

    /// Quadruple-loop valid cross-correlation.
    fn conv_reference(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (co, k) = (w.shape()[0], w.shape()[2]);
        let (ho, wo) = (h - k + 1, wd - k + 1);
        let mut out = vec![0.0; co * ho * wo];
        for o in 0..co {
            for y in 0..ho {
                for xx in 0..wo {
                    let mut acc = b.data()[o];
                    for c in 0..ci {
                        for i in 0..k {
                            for j in 0..k {
                                acc += x.data()[(c * h + y + i) * wd + xx + j] * w.data()[((o * ci + c) * k + i) * k + j];
                            }
                        }
                    }
                    out[(o * ho + y) * wo + xx] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::new(vec![1, 3, 3], vec![1.0; 9]).unwrap();
        let w = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::vector(vec![0.0]);
        let y = conv2d_forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[1, 3, 3]);
        assert_eq!(y.data(), &[1.0; 9]);
    }

    #[test]
    fn conv_sum_kernel() {
        let x = Tensor::new(vec![1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let w = Tensor::new(vec![1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv2d_forward(&x, &w, &Tensor::vector(vec![0.0])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[45.0]);
    }

    #[test]
    fn conv_matches_loop_reference() {
        let mut rng = SeedRng::new(1);
        let x = rand_tensor(&[2, 8, 8], &mut rng);
        let w = rand_tensor(&[4, 2, 3, 3], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        let y = conv2d_forward(&x, &w, &b).unwrap();
        let r = conv_reference(&x, &w, &b);
        assert_eq!(y.shape(), &[4, 6, 6]);
        for (a, e) in y.data().iter().zip(&r) {
            assert!((a - e).abs() <= 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn conv_batch_equals_per_sample() {
        let mut rng = SeedRng::new(2);
        let xs: Vec<Tensor> = (0..3).map(|_| rand_tensor(&[2, 6, 5], &mut rng)).collect();
        let w = rand_tensor(&[3, 2, 3, 3], &mut rng);
        let b = rand_tensor(&[3], &mut rng);
        let batch = conv2d_forward(&Tensor::stack(&xs).unwrap(), &w, &b).unwrap();
        assert_eq!(batch.shape(), &[3, 3, 4, 3]);
        for (s, x) in xs.iter().enumerate() {
            let single = conv2d_forward(x, &w, &b).unwrap();
            assert_eq!(&batch.data()[s * 36..(s + 1) * 36], single.data());
        }
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let x = Tensor::zeros(&[1, 2, 2]);
        let w = Tensor::zeros(&[1, 1, 3, 3]);
        assert!(matches!(
            conv2d_forward(&x, &w, &Tensor::zeros(&[1])),
            Err(NnError::ShapeMismatch { .. })
        ));
        let w = Tensor::zeros(&[1, 2, 1, 1]);
        assert!(conv2d_forward(&x, &w, &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn conv_backward_zero_grad() {
        let mut rng = SeedRng::new(3);
        let x = rand_tensor(&[2, 5, 5], &mut rng);
        let w = rand_tensor(&[3, 2, 3, 3], &mut rng);
        let g = conv2d_backward(&Tensor::zeros(&[3, 3, 3]), &x, &w).unwrap();
        assert!(g.weights.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
        assert!(g.input.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_backward_one_by_one_kernel() {
        // loss = sum(out) ⇒ dW = sum of input over positions.
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        let w = Tensor::new(vec![1, 1, 1, 1], vec![0.7]).unwrap();
        let g = conv2d_backward(&Tensor::new(vec![1, 2, 2], vec![1.0; 4]).unwrap(), &x, &w).unwrap();
        assert_eq!(g.weights.data(), &[10.5]);
        assert_eq!(g.bias.data(), &[4.0]);
        assert_eq!(g.input.unwrap().data(), &[0.7; 4]);
    }

    #[test]
    fn relu_definition() {
        let y = relu_forward(&Tensor::vector(vec![-1.0, 0.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn maxpool_routes_to_max() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, arg) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        let g = maxpool2x2_backward(&Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(), &arg, x.shape()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_odd_extent_drops_edge() {
        let x = Tensor::from_fn(&[1, 5, 5], |i| i as f64);
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[6.0, 8.0, 16.0, 18.0]);
        assert!(maxpool2x2_forward(&Tensor::zeros(&[1, 1, 4])).is_err());
    }

    #[test]
    fn dense_identity() {
        let x = Tensor::vector(vec![1.5, -2.0, 3.0]);
        let w = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        let y = dense_forward(&x, &w, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn xent_uniform_logits() {
        let (loss, grad) = softmax_cross_entropy(&[0.3; 10], 4).unwrap();
        assert!((loss - core::f64::consts::LN_10).abs() < 1e-12);
        assert!((grad[4] + 0.9).abs() < 1e-12);
        assert!((grad[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn xent_is_stable() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite() && loss < 1e-12);
        assert!(grad.iter().all(|g| g.is_finite()));
        let (loss, _) = softmax_cross_entropy(&[1000.0, 0.0], 1).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn xent_label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0, 1.0], 2),
            Err(NnError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }
}
