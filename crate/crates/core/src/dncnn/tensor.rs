use crate::error::{invalid, mismatch, Result};

/// Dense real activations laid out as `[channel][batch][row][col]`.
///
/// Channel-major storage makes every channel one contiguous run, which is what
/// the im2col convolution and per-channel batch norm want.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    batch: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, batch: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            batch,
            height,
            width,
            data: vec![0.0; channels * batch * height * width],
        }
    }

    pub fn from_vec(
        channels: usize,
        batch: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if channels == 0 || batch == 0 || height == 0 || width == 0 {
            return Err(invalid("tensor dimensions must be non-zero"));
        }
        let want = channels * batch * height * width;
        if data.len() != want {
            return Err(mismatch(format!("{want} elements"), data.len()));
        }
        Ok(Self {
            channels,
            batch,
            height,
            width,
            data,
        })
    }

    /// Single-channel batch from equally sized planes.
    pub fn from_planes(planes: &[&[f64]], height: usize, width: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for p in planes {
            if p.len() != height * width {
                return Err(mismatch(format!("{height}x{width} plane"), p.len()));
            }
            data.extend_from_slice(p);
        }
        Self::from_vec(1, planes.len(), height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, batch, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.channels, self.batch, self.height, self.width)
    }

    /// Elements per channel, `batch * height * width`.
    pub fn channel_len(&self) -> usize {
        self.batch * self.height * self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.channel_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.channel_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Plane of sample `b` in channel `c`.
    pub fn plane(&self, c: usize, b: usize) -> &[f64] {
        let hw = self.height * self.width;
        let start = c * self.channel_len() + b * hw;
        &self.data[start..start + hw]
    }

    pub(crate) fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(mismatch(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }
}
