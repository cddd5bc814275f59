use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{argmax_labels, softmax_unchecked, ChannelStack, LabelField3D, LogitField, ProbabilityField};
use crate::rng::Stream;

use super::features::FeatureExtractorConfig;

/// Per-voxel linear classifier: `logit_c(u) = bias_c + sum_f W[c][f] x_f(u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub num_classes: usize,
    pub num_features: usize,
    /// Row-major `num_classes x num_features`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub features: FeatureExtractorConfig,
}

/// Standard deviation of the initial weights.
const INIT_SCALE: f64 = 0.01;

impl LinearModel {
    pub fn new(num_classes: usize, features: FeatureExtractorConfig, seed: u64) -> Result<Self> {
        features.validate()?;
        if num_classes < 2 {
            return Err(Error::InvalidConfig("a model needs at least two classes".into()));
        }
        let num_features = features.num_features();
        let mut rng = Stream::new(seed);
        let weights = (0..num_classes * num_features).map(|_| INIT_SCALE * rng.normal()).collect();
        Ok(Self {
            num_classes,
            num_features,
            weights,
            bias: vec![0.0; num_classes],
            features,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if self.num_features != self.features.num_features()
            || self.weights.len() != self.num_classes * self.num_features
            || self.bias.len() != self.num_classes
        {
            return Err(Error::InvalidConfig("model parameter shapes are inconsistent".into()));
        }
        if !self.weights.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("model parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Weights followed by biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn logits(&self, features: &ChannelStack) -> LogitField {
        let mut z = Vec::new();
        self.logits_into(features, &mut z);
        LogitField(ChannelStack::new(features.dims(), features.spacing(), z).expect("same geometry"))
    }

    /// Channel-major logits into a reusable buffer.
    pub(crate) fn logits_into(&self, features: &ChannelStack, z: &mut Vec<Vec<f64>>) {
        let n = features.num_voxels();
        let nf = self.num_features;
        z.resize_with(self.num_classes, Vec::new);
        for (c, zc) in z.iter_mut().enumerate() {
            zc.clear();
            zc.resize(n, self.bias[c]);
            for f in 0..nf {
                let w = self.weights[c * nf + f];
                for (zi, xi) in zc.iter_mut().zip(features.channel(f)) {
                    *zi += w * xi;
                }
            }
        }
    }

    /// Adds `dL/dparams` (weights then biases) given `dL/dlogits`.
    pub fn accumulate_gradient(&self, features: &ChannelStack, dlogits: &LogitField, grad: &mut [f64]) {
        self.accumulate_gradient_raw(features, dlogits.channels(), grad);
    }

    pub(crate) fn accumulate_gradient_raw(&self, features: &ChannelStack, dz: &[Vec<f64>], grad: &mut [f64]) {
        let nf = self.num_features;
        let nw = self.weights.len();
        for (c, d) in dz.iter().enumerate() {
            for f in 0..nf {
                grad[c * nf + f] += d.iter().zip(features.channel(f)).map(|(a, b)| a * b).sum::<f64>();
            }
            grad[nw + c] += d.iter().sum::<f64>();
        }
    }

    pub fn probabilities(&self, features: &ChannelStack) -> ProbabilityField {
        softmax_unchecked(&self.logits(features))
    }

    pub fn predict(&self, features: &ChannelStack) -> LabelField3D {
        argmax_labels(&self.logits(features))
    }

    /// Split labels restricted to `mask`: inside, the larger of the two
    /// tumour logits (ties to class 1); outside, background.
    pub fn predict_split_within(&self, features: &ChannelStack, mask: &LabelField3D) -> Result<LabelField3D> {
        if self.num_classes != 3 {
            return Err(Error::InvalidConfig("split prediction needs a 3-class model".into()));
        }
        if mask.dims() != features.dims() {
            return Err(Error::ShapeMismatch("mask vs features".into()));
        }
        let z = self.logits(features);
        let data = mask
            .data()
            .iter()
            .enumerate()
            .map(|(i, &m)| match m {
                0 => 0,
                _ if z.channel(2)[i] > z.channel(1)[i] => 2,
                _ => 1,
            })
            .collect();
        LabelField3D::from_vec(mask.dims(), mask.spacing(), data)
    }
}
