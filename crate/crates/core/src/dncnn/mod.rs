//! DnCNN residual denoiser for the `Y` matrices of the blind estimator,
//! written from scratch: 3x3 convolutions, batch norm, ReLU, backpropagation,
//! Adam, weight files and the real/imaginary split around a complex `Y`.

mod data;
mod io;
mod layers;
mod model;
mod tensor;
mod train;

pub use data::{
    draw_y_sample, generate_training_set, regenerate_y_sample, scaled_plane, Dataset, PlaneSet,
    TrainingSetConfig, YSample, YSource,
};
pub use io::{load_weights, load_weights_checked, save_weights, ModelShape, FORMAT_VERSION, MAGIC};
pub use layers::{
    batchnorm_backward, batchnorm_forward_infer, batchnorm_forward_train, conv2d_backward,
    conv2d_forward, relu_backward, relu_forward, BatchNorm, BnCache, ConvGrads, ConvLayer, KERNEL,
};
pub use model::{model_forward, DenoiserModel, ForwardCache, Gradients, InputScaling};
pub use tensor::Tensor;
pub use train::{
    evaluate_loss, input_residual_mse, train, Adam, AdamConfig, TrainConfig, TrainingReport,
};

use num_complex::Complex64;

use crate::error::{mismatch, Result};
use crate::estimator::YDenoiser;
use crate::numerics::ComplexMatrix;

/// Denoised `Y`: both parts are clamped to the model's input range, scaled,
/// passed through the network, and the predicted noise (mapped back to `Y`
/// units) is subtracted.
pub fn denoise_y(model: &DenoiserModel, y: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = model.input_size();
    if y.shape() != (n, n) {
        return Err(mismatch(
            format!("{n}x{n} Y matrix"),
            format!("{:?}", y.shape()),
        ));
    }
    if y.as_slice()
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(crate::error::invalid("Y contains non-finite entries"));
    }
    let s = model.scaling;
    let re = scaled_plane(y, 0, &s);
    let im = scaled_plane(y, 1, &s);
    let residual = model_forward(model, &Tensor::from_planes(&[&re, &im], n, n)?)?;
    let span = s.span();
    let out = y
        .as_slice()
        .iter()
        .zip(residual.plane(0, 0).iter().zip(residual.plane(0, 1)))
        .map(|(z, (&vr, &vi))| Complex64::new(s.clamp(z.re) - span * vr, s.clamp(z.im) - span * vi))
        .collect();
    ComplexMatrix::from_vec(n, n, out)
}

/// `Y - denoise_y(Y)`: everything the denoiser removed, including clipping.
pub fn predicted_noise(model: &DenoiserModel, y: &ComplexMatrix) -> Result<ComplexMatrix> {
    y.sub(&denoise_y(model, y)?)
}

impl YDenoiser for DenoiserModel {
    fn denoise(&self, y: &ComplexMatrix) -> Result<ComplexMatrix> {
        denoise_y(self, y)
    }
}
