//! Flat JSON experiment configuration.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Dims, Spacing};
use crate::phantom::{Intensities, PhantomDistribution};
use crate::pipeline::{FeatureExtractorConfig, Stage, TrainConfig};

/// Unit used for ASSD summaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssdUnit {
    Mm,
    Voxels,
}

/// Every tunable of an experiment as one flat document. Missing keys take
/// the defaults below; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // dataset
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub dims: Dims,
    pub spacing: Spacing,
    pub canal_radius_min: f64,
    pub canal_radius_max: f64,
    pub canal_length_min: f64,
    pub canal_length_max: f64,
    pub bulb_semi_axis_min: f64,
    pub bulb_semi_axis_max: f64,
    pub max_tilt_deg: f64,
    pub center_jitter: f64,
    pub noise_sigma: f64,
    pub intensity_background: f64,
    pub intensity_tumour: f64,
    pub intensity_canal_wall: f64,
    // training
    pub gamma: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub model_seed: u64,
    pub class_weights: Option<Vec<f64>>,
    /// Also train and evaluate the direct three-class baseline.
    pub baseline: bool,
    // features
    pub smoothing_sigmas: Vec<f64>,
    pub include_raw: bool,
    pub include_coords: bool,
    // metrics
    pub assd_unit: AssdUnit,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dist = PhantomDistribution::default();
        let train = TrainConfig::default();
        Self {
            seed: 1234,
            n_train: 30,
            n_val: 10,
            n_test: 20,
            dims: dist.dims,
            spacing: dist.spacing,
            canal_radius_min: dist.canal_radius.0,
            canal_radius_max: dist.canal_radius.1,
            canal_length_min: dist.canal_length.0,
            canal_length_max: dist.canal_length.1,
            bulb_semi_axis_min: dist.bulb_semi_axis.0,
            bulb_semi_axis_max: dist.bulb_semi_axis.1,
            max_tilt_deg: dist.max_tilt_deg,
            center_jitter: dist.center_jitter,
            noise_sigma: dist.noise_sigma,
            intensity_background: dist.intensities.background,
            intensity_tumour: dist.intensities.tumour,
            intensity_canal_wall: dist.intensities.canal_wall,
            gamma: train.gamma,
            tau: train.tau,
            epsilon: train.epsilon,
            learning_rate: train.learning_rate,
            iterations: train.iterations,
            model_seed: train.seed,
            class_weights: None,
            baseline: true,
            smoothing_sigmas: train.features.smoothing_sigmas,
            include_raw: train.features.include_raw,
            include_coords: train.features.include_coords,
            assd_unit: AssdUnit::Mm,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn distribution(&self) -> PhantomDistribution {
        PhantomDistribution {
            dims: self.dims,
            spacing: self.spacing,
            canal_radius: (self.canal_radius_min, self.canal_radius_max),
            canal_length: (self.canal_length_min, self.canal_length_max),
            bulb_semi_axis: (self.bulb_semi_axis_min, self.bulb_semi_axis_max),
            max_tilt_deg: self.max_tilt_deg,
            center_jitter: self.center_jitter,
            noise_sigma: self.noise_sigma,
            intensities: Intensities {
                background: self.intensity_background,
                tumour: self.intensity_tumour,
                canal_wall: self.intensity_canal_wall,
            },
        }
    }

    pub fn train_config(&self, stage: Stage) -> TrainConfig {
        TrainConfig {
            stage,
            gamma: self.gamma,
            tau: self.tau,
            epsilon: self.epsilon,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            seed: self.model_seed,
            class_weights: self.class_weights.clone(),
            features: FeatureExtractorConfig {
                smoothing_sigmas: self.smoothing_sigmas.clone(),
                include_raw: self.include_raw,
                include_coords: self.include_coords,
                include_mask: false,
            },
            boundary_term: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_val == 0 || self.n_test == 0 {
            return Err(Error::InvalidConfig("split sizes must be at least 1".into()));
        }
        let ranges = [
            ("canal_radius", self.canal_radius_min, self.canal_radius_max),
            ("canal_length", self.canal_length_min, self.canal_length_max),
            ("bulb_semi_axis", self.bulb_semi_axis_min, self.bulb_semi_axis_max),
        ];
        for (name, lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
                return Err(Error::InvalidConfig(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        for stage in [Stage::Stage1, Stage::Stage2, Stage::Direct] {
            let mut t = self.train_config(stage);
            // weights are given for the three-class models only
            if stage == Stage::Stage1 {
                t.class_weights = None;
            }
            t.validate()?;
        }
        Ok(())
    }

    /// Stage-1 weights: background as given, tumour as the mean of the
    /// two tumour classes.
    pub fn stage1_class_weights(&self) -> Option<Vec<f64>> {
        self.class_weights
            .as_ref()
            .map(|w| vec![w[0], 0.5 * (w[1] + w[2])])
    }

    pub fn stage_config(&self, stage: Stage) -> TrainConfig {
        let mut t = self.train_config(stage);
        if stage == Stage::Stage1 {
            t.class_weights = self.stage1_class_weights();
        }
        t
    }
}
