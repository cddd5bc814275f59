use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{axis_stride, ChannelStack, Dims, LabelField3D, ScalarField3D};

/// Which per-voxel features the linear models see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractorConfig {
    /// Gaussian smoothing scales of the image, voxels.
    pub smoothing_sigmas: Vec<f64>,
    pub include_raw: bool,
    /// Normalised x, y, z coordinates in `[-1, 1]`.
    pub include_coords: bool,
    /// Binary tumour mask as an extra channel (cascade stage 2).
    pub include_mask: bool,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        Self {
            smoothing_sigmas: vec![1.0, 2.0],
            include_raw: true,
            include_coords: true,
            include_mask: false,
        }
    }
}

impl FeatureExtractorConfig {
    pub fn with_mask(mut self, include: bool) -> Self {
        self.include_mask = include;
        self
    }

    pub fn num_features(&self) -> usize {
        usize::from(self.include_raw)
            + self.smoothing_sigmas.len()
            + if self.include_coords { 3 } else { 0 }
            + usize::from(self.include_mask)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_features() == 0 {
            return Err(Error::InvalidConfig("at least one feature must be enabled".into()));
        }
        if self.smoothing_sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "smoothing sigmas must be positive, got {:?}",
                self.smoothing_sigmas
            )));
        }
        Ok(())
    }
}

/// Normalised 1D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Half-sample symmetric reflection of `i` into `0..n` (`... b a | a b ... | y z | z y ...`).
pub fn reflect_index(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian smoothing with reflect padding.
pub fn gaussian_smooth(values: &[f64], dims: Dims, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as i64;
    let mut cur = values.to_vec();
    let mut next = vec![0.0; values.len()];
    let mut line = Vec::new();
    for axis in 0..3 {
        let n = dims[axis];
        let s = axis_stride(dims, axis);
        let outer = values.len() / (n * s);
        for o in 0..outer {
            for j in 0..s {
                let base = o * n * s + j;
                line.clear();
                line.extend((0..n).map(|t| cur[base + t * s]));
                for t in 0..n {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        acc += w * line[reflect_index(t as i64 + k as i64 - r, n)];
                    }
                    next[base + t * s] = acc;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Shifts to zero mean and unit variance; a constant channel becomes zeros.
fn standardize(channel: &mut [f64]) {
    let n = channel.len() as f64;
    let mean = channel.iter().sum::<f64>() / n;
    let var = channel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        channel.fill(0.0);
    } else {
        channel.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

/// Builds the standardised feature stack of one volume. The channel order
/// is raw, smoothed (in sigma order), x, y, z, mask.
pub fn extract_features(
    image: &ScalarField3D,
    mask: Option<&LabelField3D>,
    cfg: &FeatureExtractorConfig,
) -> Result<ChannelStack> {
    cfg.validate()?;
    let dims = image.dims();
    let mut channels = Vec::with_capacity(cfg.num_features());
    if cfg.include_raw {
        channels.push(image.data().to_vec());
    }
    for &sigma in &cfg.smoothing_sigmas {
        channels.push(gaussian_smooth(image.data(), dims, sigma));
    }
    if cfg.include_coords {
        for axis in 0..3 {
            let n = dims[axis];
            let ch = ScalarField3D::from_fn(dims, image.spacing(), |x, y, z| {
                let c = [x, y, z][axis];
                if n > 1 {
                    2.0 * c as f64 / (n - 1) as f64 - 1.0
                } else {
                    0.0
                }
            })?;
            channels.push(ch.into_data());
        }
    }
    if cfg.include_mask {
        let mask = mask.ok_or(Error::MissingMask)?;
        image.ensure_same_shape(mask, "feature mask")?;
        channels.push(mask.data().iter().map(|&m| f64::from(u8::from(m != 0))).collect());
    }
    for ch in &mut channels {
        standardize(ch);
    }
    ChannelStack::new(dims, image.spacing(), channels)
}
