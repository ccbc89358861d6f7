use rand_distr::{Distribution, Uniform};

use super::tensor::Tensor;
use crate::error::{invalid, mismatch, Result};
use crate::numerics::SimRng;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// 3x3 same-padded convolution (cross-correlation) with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][ky][kx]`.
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: vec![0.0; out_channels * in_channels * TAPS],
            bias: vec![0.0; out_channels],
        }
    }

    /// Kernels drawn from `U(-b, b)` with `b = sqrt(6 / fan_in)`, zero bias.
    /// Values are rounded to `f32` so the layer survives a save/load cycle
    /// unchanged.
    pub fn uniform(in_channels: usize, out_channels: usize, rng: &mut SimRng) -> Self {
        let bound = (6.0 / (in_channels * TAPS) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let mut layer = Self::zeros(in_channels, out_channels);
        for w in &mut layer.kernel {
            *w = dist.sample(rng) as f32 as f64;
        }
        layer
    }

    pub fn identity(channels: usize) -> Self {
        let mut layer = Self::zeros(channels, channels);
        for c in 0..channels {
            layer.kernel[(c * channels + c) * TAPS + TAPS / 2] = 1.0;
        }
        layer
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.kernel.len() != self.out_channels * self.in_channels * TAPS
            || self.bias.len() != self.out_channels
        {
            return Err(mismatch(
                format!("{}x{}x3x3 kernel", self.out_channels, self.in_channels),
                format!(
                    "{} kernel / {} bias values",
                    self.kernel.len(),
                    self.bias.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Gradients of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    /// `None` when the caller did not ask for it (first layer).
    pub input: Option<Tensor>,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

/// `C = beta C + A B` on strided row-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(m == 0 || k == 0 || (m - 1) * a_strides.0 + (k - 1) * a_strides.1 < a.len());
    assert!(k == 0 || n == 0 || (k - 1) * b_strides.0 + (n - 1) * b_strides.1 < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds 3x3 neighbourhoods into `[c*9 + ky*3 + kx][b][y][x]`, zero outside.
fn im2col(input: &Tensor) -> Vec<f64> {
    let (ch, batch, h, w) = input.shape();
    let n = batch * h * w;
    let mut cols = vec![0.0; ch * TAPS * n];
    for c in 0..ch {
        let src = input.channel(c);
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[(c * TAPS + ky * KERNEL + kx) * n..][..n];
                let (x0, x1) = (kx.saturating_sub(1), (w + kx).saturating_sub(1).min(w));
                for b in 0..batch {
                    for y in 0..h {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let src_row = &src[(b * h + sy - 1) * w..][..w];
                        let dst = &mut row[(b * h + y) * w..][..w];
                        // dst[x] = src_row[x + kx - 1]
                        let dx0 = 1usize.saturating_sub(kx);
                        let len = x1 - x0;
                        dst[dx0..dx0 + len].copy_from_slice(&src_row[x0..x1]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], out: &mut Tensor) {
    let (ch, batch, h, w) = out.shape();
    let n = batch * h * w;
    for c in 0..ch {
        let dst = out.channel_mut(c);
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[(c * TAPS + ky * KERNEL + kx) * n..][..n];
                let (x0, x1) = (kx.saturating_sub(1), (w + kx).saturating_sub(1).min(w));
                let dx0 = 1usize.saturating_sub(kx);
                let len = x1 - x0;
                for b in 0..batch {
                    for y in 0..h {
                        let sy = y + ky;
                        if sy < 1 || sy > h {
                            continue;
                        }
                        let src = &row[(b * h + y) * w + dx0..][..len];
                        let d = &mut dst[(b * h + sy - 1) * w + x0..][..len];
                        for (a, s) in d.iter_mut().zip(src) {
                            *a += s;
                        }
                    }
                }
            }
        }
    }
}

/// Same-padded 3x3 cross-correlation plus bias.
pub fn conv2d_forward(input: &Tensor, layer: &ConvLayer) -> Result<Tensor> {
    layer.check()?;
    if input.channels() != layer.in_channels {
        return Err(mismatch(
            format!("{} input channels", layer.in_channels),
            input.channels(),
        ));
    }
    Ok(conv2d_forward_cols(input, layer).0)
}

/// Forward pass that also returns the unfolded input for reuse in backward.
pub(crate) fn conv2d_forward_cols(input: &Tensor, layer: &ConvLayer) -> (Tensor, Vec<f64>) {
    let (_, batch, h, w) = input.shape();
    let n = batch * h * w;
    let k = layer.in_channels * TAPS;
    let cols = im2col(input);
    let mut out = Tensor::zeros(layer.out_channels, batch, h, w);
    for (o, &b) in layer.bias.iter().enumerate() {
        out.channel_mut(o).fill(b);
    }
    gemm(
        layer.out_channels,
        k,
        n,
        &layer.kernel,
        (k, 1),
        &cols,
        (n, 1),
        1.0,
        out.as_mut_slice(),
    );
    (out, cols)
}

pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, layer: &ConvLayer) -> Result<ConvGrads> {
    layer.check()?;
    if input.channels() != layer.in_channels {
        return Err(mismatch(
            format!("{} input channels", layer.in_channels),
            input.channels(),
        ));
    }
    conv2d_backward_with(grad_out, input.shape(), &im2col(input), layer, true)
}

/// Backward pass from the unfolded input `cols` of an input of `shape`.
pub(crate) fn conv2d_backward_with(
    grad_out: &Tensor,
    shape: (usize, usize, usize, usize),
    cols: &[f64],
    layer: &ConvLayer,
    want_input: bool,
) -> Result<ConvGrads> {
    let (ci, batch, h, w) = shape;
    if ci != layer.in_channels {
        return Err(mismatch(
            format!("{} input channels", layer.in_channels),
            ci,
        ));
    }
    if grad_out.shape() != (layer.out_channels, batch, h, w) {
        return Err(mismatch(
            format!("{:?}", (layer.out_channels, batch, h, w)),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let n = batch * h * w;
    let k = ci * TAPS;
    let m = layer.out_channels;
    let g = grad_out.as_slice();

    let mut kernel = vec![0.0; m * k];
    gemm(m, n, k, g, (n, 1), cols, (1, n), 0.0, &mut kernel);
    let bias = (0..m).map(|o| grad_out.channel(o).iter().sum()).collect();

    let input_grad = if want_input {
        let mut dcols = vec![0.0; k * n];
        gemm(k, m, n, &layer.kernel, (1, k), g, (n, 1), 0.0, &mut dcols);
        let mut dx = Tensor::zeros(ci, batch, h, w);
        col2im(&dcols, &mut dx);
        Some(dx)
    } else {
        None
    };
    Ok(ConvGrads {
        input: input_grad,
        kernel,
        bias,
    })
}

/// Per-channel batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        let c = self.channels();
        if [
            self.beta.len(),
            self.running_mean.len(),
            self.running_var.len(),
        ] != [c; 3]
        {
            return Err(invalid("batch norm parameter vectors differ in length"));
        }
        if !(self.eps > 0.0) {
            return Err(invalid(format!(
                "batch norm eps must be positive, got {}",
                self.eps
            )));
        }
        if x.channels() != c {
            return Err(mismatch(format!("{c} channels"), x.channels()));
        }
        Ok(())
    }
}

/// What the backward pass needs from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Training mode: normalizes with batch statistics and folds them into the
/// running estimates (unbiased variance).
pub fn batchnorm_forward_train(x: &Tensor, bn: &mut BatchNorm) -> Result<(Tensor, BnCache)> {
    bn.check(x)?;
    let count = x.channel_len();
    if count < 2 {
        return Err(invalid(format!(
            "batch norm training needs at least 2 values per channel, got {count}"
        )));
    }
    let (ch, batch, h, w) = x.shape();
    let mut x_hat = Tensor::zeros(ch, batch, h, w);
    let mut out = Tensor::zeros(ch, batch, h, w);
    let mut inv_std = Vec::with_capacity(ch);
    let mut batch_mean = Vec::with_capacity(ch);
    let mut batch_var = Vec::with_capacity(ch);
    let nf = count as f64;
    for c in 0..ch {
        let xs = x.channel(c);
        let mean = xs.iter().sum::<f64>() / nf;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        let is = 1.0 / (var + bn.eps).sqrt();
        let (g, b) = (bn.gamma[c], bn.beta[c]);
        for ((xh, o), &v) in x_hat
            .channel_mut(c)
            .iter_mut()
            .zip(out.channel_mut(c))
            .zip(xs)
        {
            *xh = (v - mean) * is;
            *o = g * *xh + b;
        }
        let mom = bn.momentum;
        bn.running_mean[c] = (1.0 - mom) * bn.running_mean[c] + mom * mean;
        bn.running_var[c] = (1.0 - mom) * bn.running_var[c] + mom * var * nf / (nf - 1.0);
        inv_std.push(is);
        batch_mean.push(mean);
        batch_var.push(var);
    }
    Ok((
        out,
        BnCache {
            x_hat,
            inv_std,
            batch_mean,
            batch_var,
        },
    ))
}

/// Inference mode: normalizes with the running statistics.
pub fn batchnorm_forward_infer(x: &Tensor, bn: &BatchNorm) -> Result<Tensor> {
    bn.check(x)?;
    let mut out = x.clone();
    for c in 0..bn.channels() {
        let is = 1.0 / (bn.running_var[c] + bn.eps).sqrt();
        let (m, g, b) = (bn.running_mean[c], bn.gamma[c], bn.beta[c]);
        for v in out.channel_mut(c) {
            *v = g * (*v - m) * is + b;
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_backward(
    grad_out: &Tensor,
    cache: &BnCache,
    bn: &BatchNorm,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    grad_out.same_shape(&cache.x_hat)?;
    let ch = grad_out.channels();
    let nf = grad_out.channel_len() as f64;
    let mut dx = grad_out.clone();
    let mut dgamma = Vec::with_capacity(ch);
    let mut dbeta = Vec::with_capacity(ch);
    for c in 0..ch {
        let dy = grad_out.channel(c);
        let xh = cache.x_hat.channel(c);
        let sum_dy: f64 = dy.iter().sum();
        let sum_dy_xh: f64 = dy.iter().zip(xh).map(|(a, b)| a * b).sum();
        let scale = bn.gamma[c] * cache.inv_std[c] / nf;
        for ((d, &g), &x) in dx.channel_mut(c).iter_mut().zip(dy).zip(xh) {
            *d = scale * (nf * g - sum_dy - x * sum_dy_xh);
        }
        dgamma.push(sum_dy_xh);
        dbeta.push(sum_dy);
    }
    Ok((dx, dgamma, dbeta))
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    relu_inplace(&mut out);
    out
}

pub(crate) fn relu_inplace(x: &mut Tensor) {
    for v in x.as_mut_slice() {
        *v = v.max(0.0);
    }
}

/// Passes the gradient where the forward input was positive.
pub fn relu_backward(grad_out: &Tensor, input: &Tensor) -> Result<Tensor> {
    grad_out.same_shape(input)?;
    let mut dx = grad_out.clone();
    relu_mask_inplace(&mut dx, input);
    Ok(dx)
}

pub(crate) fn relu_mask_inplace(grad: &mut Tensor, activation: &Tensor) {
    for (g, &a) in grad.as_mut_slice().iter_mut().zip(activation.as_slice()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tensor(rng: &mut SimRng, shape: (usize, usize, usize, usize)) -> Tensor {
        let n = shape.0 * shape.1 * shape.2 * shape.3;
        let data = (0..n).map(|_| rng.standard_normal()).collect();
        Tensor::from_vec(shape.0, shape.1, shape.2, shape.3, data).unwrap()
    }

    fn random_conv(rng: &mut SimRng, ci: usize, co: usize) -> ConvLayer {
        let mut l = ConvLayer::uniform(ci, co, rng);
        for b in &mut l.bias {
            *b = rng.standard_normal();
        }
        l
    }

    /// Direct nested-sum cross-correlation.
    fn conv_oracle(x: &Tensor, l: &ConvLayer) -> Tensor {
        let (ci, batch, h, w) = x.shape();
        let mut out = Tensor::zeros(l.out_channels, batch, h, w);
        for o in 0..l.out_channels {
            for b in 0..batch {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = l.bias[o];
                        for c in 0..ci {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + ky as isize - 1;
                                    let sx = xx as isize + kx as isize - 1;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    acc += l.kernel[((o * ci + c) * 3 + ky) * 3 + kx]
                                        * x.plane(c, b)[sy as usize * w + sx as usize];
                                }
                            }
                        }
                        let idx = o * batch * h * w + (b * h + y) * w + xx;
                        out.as_mut_slice()[idx] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_input() {
        let mut rng = SimRng::new(1);
        let x = random_tensor(&mut rng, (3, 2, 5, 4));
        let y = conv2d_forward(&x, &ConvLayer::identity(3)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_on_constant() {
        let x = Tensor::from_vec(1, 1, 5, 5, vec![0.7; 25]).unwrap();
        let mut l = ConvLayer::zeros(1, 1);
        l.kernel.fill(1.0);
        let y = conv2d_forward(&x, &l).unwrap();
        for r in 1..4 {
            for c in 1..4 {
                assert!((y.as_slice()[r * 5 + c] - 6.3).abs() < 1e-12);
            }
        }
        assert!((y.as_slice()[0] - 4.0 * 0.7).abs() < 1e-12);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = SimRng::new(2);
        for shape in [(1, 1, 5, 5), (3, 2, 4, 7), (2, 3, 1, 1), (4, 1, 6, 2)] {
            let x = random_tensor(&mut rng, shape);
            let l = random_conv(&mut rng, shape.0, 5);
            let got = conv2d_forward(&x, &l).unwrap();
            let want = conv_oracle(&x, &l);
            for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
                assert!((a - b).abs() < 1e-12, "{shape:?}");
            }
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor::zeros(2, 1, 3, 3);
        assert!(conv2d_forward(&x, &ConvLayer::zeros(3, 1)).is_err());
        let l = ConvLayer::zeros(2, 4);
        assert!(conv2d_backward(&Tensor::zeros(3, 1, 3, 3), &x, &l).is_err());
    }

    #[test]
    fn zero_grad_gives_zero_grads() {
        let mut rng = SimRng::new(3);
        let x = random_tensor(&mut rng, (2, 2, 4, 4));
        let l = random_conv(&mut rng, 2, 3);
        let g = conv2d_backward(&Tensor::zeros(3, 2, 4, 4), &x, &l).unwrap();
        assert!(g.kernel.iter().chain(&g.bias).all(|&v| v == 0.0));
        assert!(g.input.unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_is_linear_in_grad() {
        let mut rng = SimRng::new(4);
        let x = random_tensor(&mut rng, (2, 1, 4, 4));
        let l = random_conv(&mut rng, 2, 3);
        let g = random_tensor(&mut rng, (3, 1, 4, 4));
        let mut g2 = g.clone();
        g2.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
        let a = conv2d_backward(&g, &x, &l).unwrap();
        let b = conv2d_backward(&g2, &x, &l).unwrap();
        for (u, v) in a.kernel.iter().zip(&b.kernel) {
            assert!((2.0 * u - v).abs() < 1e-12);
        }
        for (u, v) in a
            .input
            .unwrap()
            .as_slice()
            .iter()
            .zip(b.input.unwrap().as_slice())
        {
            assert!((2.0 * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = SimRng::new(5);
        let x = random_tensor(&mut rng, (2, 2, 3, 5));
        let cols = im2col(&x);
        let z: Vec<f64> = (0..cols.len()).map(|_| rng.standard_normal()).collect();
        let lhs: f64 = cols.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut back = Tensor::zeros(2, 2, 3, 5);
        col2im(&z, &mut back);
        let rhs: f64 = x
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn bn_on_standardized_batch_is_identity() {
        let mut rng = SimRng::new(6);
        let mut x = random_tensor(&mut rng, (3, 4, 8, 8));
        for c in 0..3 {
            let ch = x.channel_mut(c);
            let n = ch.len() as f64;
            let m = ch.iter().sum::<f64>() / n;
            let s = (ch.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            ch.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
        let mut bn = BatchNorm::new(3);
        let (y, _) = batchnorm_forward_train(&x, &mut bn).unwrap();
        for (a, b) in y.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn bn_rejects_single_value_channels() {
        let mut bn = BatchNorm::new(2);
        assert!(batchnorm_forward_train(&Tensor::zeros(2, 1, 1, 1), &mut bn).is_err());
        assert!(batchnorm_forward_train(&Tensor::zeros(3, 2, 1, 1), &mut bn).is_err());
        bn.eps = 0.0;
        assert!(batchnorm_forward_infer(&Tensor::zeros(2, 1, 1, 1), &bn).is_err());
    }

    #[test]
    fn bn_running_stats_follow_momentum() {
        let x = Tensor::from_vec(1, 2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bn = BatchNorm::new(1);
        let (_, cache) = batchnorm_forward_train(&x, &mut bn).unwrap();
        assert!((cache.batch_mean[0] - 2.5).abs() < 1e-15);
        assert!((cache.batch_var[0] - 1.25).abs() < 1e-15);
        assert!((bn.running_mean[0] - 0.25).abs() < 1e-15);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn relu_definition() {
        let x = Tensor::from_vec(1, 1, 1, 4, vec![-2.0, -0.0, 0.5, 3.0]).unwrap();
        let y = relu_forward(&x);
        assert_eq!(y.as_slice(), &[0.0, 0.0, 0.5, 3.0]);
        let g = Tensor::from_vec(1, 1, 1, 4, vec![1.0; 4]).unwrap();
        assert_eq!(
            relu_backward(&g, &x).unwrap().as_slice(),
            &[0.0, 0.0, 1.0, 1.0]
        );
    }
}
