//! Weight file layout, all little-endian:
//!
//! | field            | type      |
//! |------------------|-----------|
//! | magic `BMDNCNN\0`| 8 bytes   |
//! | version          | u32       |
//! | depth            | u32       |
//! | width            | u32       |
//! | input size N     | u32       |
//! | scaling lo, hi   | 2 x f64   |
//! | BN momentum, eps | 2 x f64   |
//!
//! followed by the layers in order, each as f32 tensors: convolution kernel
//! (`out x in x 3 x 3`) and bias, then for the middle layers batch-norm gamma,
//! beta, running mean and running variance. Nothing may follow the last layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use super::layers::{BatchNorm, ConvLayer, KERNEL};
use super::model::{DenoiserModel, InputScaling};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"BMDNCNN\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_f32s(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for &v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn save_weights(model: &DenoiserModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    for v in [
        FORMAT_VERSION,
        model.depth() as u32,
        model.width() as u32,
        model.input_size() as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    let (momentum, eps) = model
        .bns
        .first()
        .map_or((BatchNorm::DEFAULT_MOMENTUM, BatchNorm::DEFAULT_EPS), |b| {
            (b.momentum, b.eps)
        });
    for v in [model.scaling.lo, model.scaling.hi, momentum, eps] {
        w.write_all(&v.to_le_bytes())?;
    }
    for (i, conv) in model.convs.iter().enumerate() {
        put_f32s(&mut w, &conv.kernel)?;
        put_f32s(&mut w, &conv.bias)?;
        if i >= 1 && i < model.depth() - 1 {
            let bn = &model.bns[i - 1];
            for t in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                put_f32s(&mut w, t)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self, what: &str) -> Result<[u8; K]> {
        let mut buf = [0u8; K];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                ErrorKind::UnexpectedEof => {
                    Error::CorruptWeights(format!("file truncated while reading {what}"))
                }
                _ => Error::Io(e),
            })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let v = f64::from_le_bytes(self.bytes(what)?);
        if !v.is_finite() {
            return Err(Error::CorruptWeights(format!("{what} is not finite")));
        }
        Ok(v)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n)
            .map(|_| {
                let v = f32::from_le_bytes(self.bytes(what)?);
                if v.is_finite() {
                    Ok(v as f64)
                } else {
                    Err(Error::CorruptWeights(format!("non-finite value in {what}")))
                }
            })
            .collect()
    }
}

/// Expected architecture when loading weights for a known configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub depth: usize,
    pub width: usize,
    pub input_size: usize,
}

pub fn load_weights(path: &Path) -> Result<DenoiserModel> {
    load(path, None)
}

/// Like [`load_weights`] but rejects files whose declared architecture
/// differs from `expected`.
pub fn load_weights_checked(path: &Path, expected: ModelShape) -> Result<DenoiserModel> {
    load(path, Some(expected))
}

fn load(path: &Path, expected: Option<ModelShape>) -> Result<DenoiserModel> {
    let file = File::open(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut r = Reader {
        inner: BufReader::new(file),
    };
    if r.bytes::<8>("magic")? != MAGIC {
        return Err(Error::CorruptWeights(
            "bad magic bytes, not a denoiser weight file".into(),
        ));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::WeightMismatch {
            field: "version",
            expected: FORMAT_VERSION.to_string(),
            found: version.to_string(),
        });
    }
    let depth = r.u32("depth")? as usize;
    let width = r.u32("width")? as usize;
    let input_size = r.u32("input size")? as usize;
    if let Some(e) = expected {
        for (field, want, got) in [
            ("depth", e.depth, depth),
            ("width", e.width, width),
            ("input size", e.input_size, input_size),
        ] {
            if want != got {
                return Err(Error::WeightMismatch {
                    field,
                    expected: want.to_string(),
                    found: got.to_string(),
                });
            }
        }
    }
    if depth < 2 || width == 0 || input_size == 0 || depth > 4096 || width > 4096 {
        return Err(Error::CorruptWeights(format!(
            "implausible architecture depth {depth}, width {width}, input size {input_size}"
        )));
    }
    let scaling = InputScaling::new(r.f64("scaling lo")?, r.f64("scaling hi")?)
        .map_err(|e| Error::CorruptWeights(e.to_string()))?;
    let momentum = r.f64("batch-norm momentum")?;
    let eps = r.f64("batch-norm eps")?;
    if !(eps > 0.0) {
        return Err(Error::CorruptWeights(format!(
            "batch-norm eps {eps} is not positive"
        )));
    }
    let taps = KERNEL * KERNEL;
    let mut convs = Vec::with_capacity(depth);
    let mut bns = Vec::with_capacity(depth - 2);
    for i in 0..depth {
        let ci = if i == 0 { 1 } else { width };
        let co = if i == depth - 1 { 1 } else { width };
        let what = format!("layer {i}");
        convs.push(ConvLayer {
            in_channels: ci,
            out_channels: co,
            kernel: r.f32s(co * ci * taps, &what)?,
            bias: r.f32s(co, &what)?,
        });
        if i >= 1 && i < depth - 1 {
            let gamma = r.f32s(width, &what)?;
            let beta = r.f32s(width, &what)?;
            let running_mean = r.f32s(width, &what)?;
            let running_var = r.f32s(width, &what)?;
            bns.push(BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                momentum,
                eps,
            });
        }
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(Error::CorruptWeights(format!(
            "trailing data after the {depth} declared layers"
        )));
    }
    DenoiserModel::from_layers(input_size, scaling, convs, bns)
}
