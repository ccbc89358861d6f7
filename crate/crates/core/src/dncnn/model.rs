use super::layers::{
    batchnorm_backward, batchnorm_forward_infer, batchnorm_forward_train, conv2d_backward_with,
    conv2d_forward, conv2d_forward_cols, relu_inplace, relu_mask_inplace, BatchNorm, BnCache,
    ConvLayer,
};
use super::tensor::Tensor;
use crate::error::{invalid, mismatch, Result};
use crate::numerics::SimRng;
use crate::ofdm::QamConstellation;

/// Fixed affine map from `[lo, hi]` onto `[0, 1]`. Values outside the range
/// saturate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputScaling {
    pub lo: f64,
    pub hi: f64,
}

impl InputScaling {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(invalid(format!(
                "scaling range [{lo}, {hi}] is empty or non-finite"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// `[-A, A]` with `A` twice the largest constellation component, so the
    /// clean `Y` entries land in the middle half of `[0, 1]`.
    pub fn for_constellation(c: &QamConstellation) -> Self {
        let a = 2.0 * c.max_component();
        Self { lo: -a, hi: a }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn scale(&self, x: f64) -> f64 {
        (self.clamp(x) - self.lo) / self.span()
    }

    pub fn unscale(&self, s: f64) -> f64 {
        self.lo + s * self.span()
    }
}

/// DnCNN: `[Conv+ReLU] + (depth-2) x [Conv+BN+ReLU] + [Conv]`, predicting the
/// noise map of a single-channel input.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    depth: usize,
    width: usize,
    input_size: usize,
    pub scaling: InputScaling,
    pub convs: Vec<ConvLayer>,
    pub bns: Vec<BatchNorm>,
}

/// Activations kept by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every convolution.
    acts: Vec<Tensor>,
    /// The same inputs unfolded into 3x3 neighbourhoods.
    cols: Vec<Vec<f64>>,
    bn: Vec<BnCache>,
}

/// Parameter gradients in the order of [`DenoiserModel::param_groups_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub groups: Vec<Vec<f64>>,
}

impl DenoiserModel {
    /// Randomly initialized model for `input_size x input_size` planes. The
    /// final convolution starts at zero, so the untrained network predicts no
    /// noise.
    pub fn new(
        depth: usize,
        width: usize,
        input_size: usize,
        scaling: InputScaling,
        rng: &mut SimRng,
    ) -> Result<Self> {
        if depth < 2 {
            return Err(invalid(format!("depth must be at least 2, got {depth}")));
        }
        if width == 0 || input_size == 0 {
            return Err(invalid("width and input size must be positive"));
        }
        let mut convs = Vec::with_capacity(depth);
        convs.push(ConvLayer::uniform(1, width, rng));
        for _ in 1..depth - 1 {
            convs.push(ConvLayer::uniform(width, width, rng));
        }
        convs.push(ConvLayer::zeros(width, 1));
        let bns = (0..depth - 2).map(|_| BatchNorm::new(width)).collect();
        Ok(Self {
            depth,
            width,
            input_size,
            scaling,
            convs,
            bns,
        })
    }

    /// Assembles a model from explicit layers, checking the stack shape.
    pub fn from_layers(
        input_size: usize,
        scaling: InputScaling,
        convs: Vec<ConvLayer>,
        bns: Vec<BatchNorm>,
    ) -> Result<Self> {
        let depth = convs.len();
        if depth < 2 || bns.len() != depth - 2 {
            return Err(mismatch(
                format!(
                    "{} batch norms for {depth} convolutions",
                    depth.saturating_sub(2)
                ),
                bns.len(),
            ));
        }
        let width = convs[0].out_channels;
        for (i, l) in convs.iter().enumerate() {
            let want_in = if i == 0 { 1 } else { width };
            let want_out = if i == depth - 1 { 1 } else { width };
            if l.in_channels != want_in || l.out_channels != want_out {
                return Err(mismatch(
                    format!("layer {i} {want_in}->{want_out}"),
                    format!("{}->{}", l.in_channels, l.out_channels),
                ));
            }
        }
        if bns.iter().any(|b| b.channels() != width) {
            return Err(mismatch(
                format!("{width}-channel batch norms"),
                "other width",
            ));
        }
        Ok(Self {
            depth,
            width,
            input_size,
            scaling,
            convs,
            bns,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn n_params(&self) -> usize {
        self.convs
            .iter()
            .map(|c| c.kernel.len() + c.bias.len())
            .sum::<usize>()
            + self.bns.iter().map(|b| 2 * b.channels()).sum::<usize>()
    }

    /// Learnable parameters: kernel and bias of every convolution, then
    /// gamma and beta of every batch norm.
    pub fn param_groups_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> =
            Vec::with_capacity(2 * self.convs.len() + 2 * self.bns.len());
        for c in &mut self.convs {
            out.push(&mut c.kernel);
            out.push(&mut c.bias);
        }
        for b in &mut self.bns {
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out
    }

    /// Rounds every parameter and running statistic to `f32` precision, the
    /// precision of the weight file.
    pub fn round_to_f32(&mut self) {
        for g in self.param_groups_mut() {
            g.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        for b in &mut self.bns {
            for v in b.running_mean.iter_mut().chain(b.running_var.iter_mut()) {
                *v = *v as f32 as f64;
            }
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != 1 {
            return Err(mismatch("1 input channel", x.channels()));
        }
        Ok(())
    }

    /// Inference-mode pass (running batch-norm statistics).
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut a = conv2d_forward(x, &self.convs[0])?;
        relu_inplace(&mut a);
        for (conv, bn) in self.convs[1..self.depth - 1].iter().zip(&self.bns) {
            a = batchnorm_forward_infer(&conv2d_forward(&a, conv)?, bn)?;
            relu_inplace(&mut a);
        }
        conv2d_forward(&a, &self.convs[self.depth - 1])
    }

    /// Training-mode pass: batch statistics, running statistics updated.
    pub fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        for c in &self.convs {
            c.check()?;
        }
        let mut acts = Vec::with_capacity(self.depth);
        let mut cols = Vec::with_capacity(self.depth);
        let mut bn_caches = Vec::with_capacity(self.bns.len());
        let (mut a, c0) = conv2d_forward_cols(x, &self.convs[0]);
        relu_inplace(&mut a);
        acts.push(x.clone());
        cols.push(c0);
        for i in 1..self.depth - 1 {
            let (z, ci) = conv2d_forward_cols(&a, &self.convs[i]);
            acts.push(a);
            cols.push(ci);
            let (mut y, cache) = batchnorm_forward_train(&z, &mut self.bns[i - 1])?;
            relu_inplace(&mut y);
            bn_caches.push(cache);
            a = y;
        }
        let (out, cl) = conv2d_forward_cols(&a, &self.convs[self.depth - 1]);
        acts.push(a);
        cols.push(cl);
        Ok((
            out,
            ForwardCache {
                acts,
                cols,
                bn: bn_caches,
            },
        ))
    }

    /// Gradients of a loss with `d loss / d output = grad_out` after
    /// [`forward_train`](Self::forward_train).
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Gradients> {
        let d = self.depth;
        let mut conv_grads = vec![(Vec::new(), Vec::new()); d];
        let mut bn_grads = vec![(Vec::new(), Vec::new()); self.bns.len()];
        let mut g = grad_out.clone();
        for i in (0..d).rev() {
            let cg = conv2d_backward_with(
                &g,
                cache.acts[i].shape(),
                &cache.cols[i],
                &self.convs[i],
                i > 0,
            )?;
            conv_grads[i] = (cg.kernel, cg.bias);
            if i == 0 {
                break;
            }
            g = cg.input.expect("requested");
            relu_mask_inplace(&mut g, &cache.acts[i]);
            if i >= 2 {
                let (dx, dgamma, dbeta) =
                    batchnorm_backward(&g, &cache.bn[i - 2], &self.bns[i - 2])?;
                bn_grads[i - 2] = (dgamma, dbeta);
                g = dx;
            }
        }
        let mut groups = Vec::with_capacity(2 * d + 2 * self.bns.len());
        for (k, b) in conv_grads {
            groups.push(k);
            groups.push(b);
        }
        for (gm, bt) in bn_grads {
            groups.push(gm);
            groups.push(bt);
        }
        Ok(Gradients { groups })
    }
}

/// Predicted noise map for scaled `input_size x input_size` planes in
/// `[0, 1]`, in inference mode.
pub fn model_forward(model: &DenoiserModel, noisy: &Tensor) -> Result<Tensor> {
    let n = model.input_size;
    if noisy.height() != n || noisy.width() != n {
        return Err(mismatch(
            format!("{n}x{n} planes"),
            format!("{}x{}", noisy.height(), noisy.width()),
        ));
    }
    if let Some(v) = noisy.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(invalid(format!(
            "input value {v} outside the scaled range [0, 1]"
        )));
    }
    model.infer(noisy)
}
