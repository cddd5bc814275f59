use serde::{Deserialize, Serialize};

use crate::boundary::gt_split_boundary;
use crate::edt::{edt_exact, DistanceUnit};
use crate::error::{Error, Result};
use crate::fields::{ChannelStack, LabelField3D};
use crate::losses::{objective_into, proximity_weights, uniform_weights, BoundaryLossConfig, Objective, Scratch};
use crate::phantom::PhantomCase;

use super::features::{extract_features, FeatureExtractorConfig};
use super::model::LinearModel;

/// Which model of the experiment is being trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Three classes straight from the image (the baseline).
    Direct,
    /// Whole tumour versus background.
    Stage1,
    /// Three classes with the whole-tumour mask as an extra input.
    Stage2,
}

impl Stage {
    pub fn num_classes(self) -> usize {
        match self {
            Stage::Stage1 => 2,
            Stage::Direct | Stage::Stage2 => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub gamma: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Cross-entropy class weights; uniform when absent.
    pub class_weights: Option<Vec<f64>>,
    pub features: FeatureExtractorConfig,
    /// Whether stage 2 evaluates the boundary term at all. With `false` the
    /// objective is exactly CE + Dice.
    pub boundary_term: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Stage2,
            gamma: 0.5,
            tau: 4.0,
            epsilon: 1e-8,
            learning_rate: 0.5,
            iterations: 300,
            seed: 0,
            class_weights: None,
            features: FeatureExtractorConfig::default(),
            boundary_term: true,
        }
    }
}

impl TrainConfig {
    pub fn for_stage(&self, stage: Stage) -> Self {
        Self { stage, ..self.clone() }
    }

    pub fn boundary(&self) -> BoundaryLossConfig {
        BoundaryLossConfig {
            tau: self.tau,
            epsilon: self.epsilon,
            gamma: self.gamma,
        }
    }

    fn uses_boundary(&self) -> bool {
        self.stage == Stage::Stage2 && self.boundary_term
    }

    pub fn feature_config(&self) -> FeatureExtractorConfig {
        self.features.clone().with_mask(self.stage == Stage::Stage2)
    }

    pub fn class_weights(&self) -> Vec<f64> {
        self.class_weights
            .clone()
            .unwrap_or_else(|| uniform_weights(self.stage.num_classes()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be positive".into()));
        }
        if self.uses_boundary() {
            self.boundary().validate()?;
        }
        let w = self.class_weights();
        if w.len() != self.stage.num_classes() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidWeights(format!("{w:?} for {:?}", self.stage)));
        }
        self.features.validate()
    }
}

/// A training case with everything that stays fixed during optimisation.
#[derive(Clone, Debug)]
pub struct PreparedCase {
    pub features: ChannelStack,
    pub target: LabelField3D,
    /// `exp(-phi / tau)` of the ground-truth split boundary (stage 2 only).
    pub proximity: Option<Vec<f64>>,
}

pub fn prepare_case(case: &PhantomCase, cfg: &TrainConfig) -> Result<PreparedCase> {
    let mask = (cfg.stage == Stage::Stage2).then_some(&case.whole_tumour);
    let features = extract_features(&case.image, mask, &cfg.feature_config())?;
    let target = match cfg.stage {
        Stage::Stage1 => case.whole_tumour.clone(),
        Stage::Direct | Stage::Stage2 => case.labels.clone(),
    };
    let proximity = if cfg.uses_boundary() {
        let phi = edt_exact(&gt_split_boundary(&case.labels), DistanceUnit::Voxels)?;
        Some(proximity_weights(&phi, cfg.tau))
    } else {
        None
    };
    Ok(PreparedCase {
        features,
        target,
        proximity,
    })
}

/// Mean loss terms over cases, one entry per iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub total: Vec<f64>,
    pub cross_entropy: Vec<f64>,
    pub dice: Vec<f64>,
    /// Empty unless the boundary term is evaluated.
    pub boundary: Vec<f64>,
}

impl LossCurve {
    /// Trailing moving average of the total loss.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        (0..self.total.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(w);
                let s = &self.total[lo..=i];
                s.iter().sum::<f64>() / s.len() as f64
            })
            .collect()
    }
}

struct Evaluation {
    total: f64,
    cross_entropy: f64,
    dice: f64,
    boundary: Option<f64>,
    grad: Vec<f64>,
}

/// Buffers reused across iterations.
#[derive(Default)]
struct Workspace {
    logits: Vec<Vec<f64>>,
    scratch: Scratch,
}

fn evaluate(model: &LinearModel, cases: &[PreparedCase], cfg: &TrainConfig, weights: &[f64], ws: &mut Workspace) -> Evaluation {
    let k = cases.len() as f64;
    let mut grad = vec![0.0; model.num_parameters()];
    let (mut total, mut ce, mut dice, mut bd) = (0.0, 0.0, 0.0, 0.0);
    let mut has_boundary = false;
    // fixed case order keeps the reduction deterministic
    for case in cases {
        model.logits_into(&case.features, &mut ws.logits);
        let obj = match &case.proximity {
            Some(p) => Objective::Combined {
                weights: p,
                epsilon: cfg.epsilon,
                gamma: cfg.gamma,
            },
            None => Objective::CeDice,
        };
        let out = objective_into(&ws.logits, case.features.dims(), case.target.data(), weights, obj, &mut ws.scratch);
        total += out.total;
        ce += out.cross_entropy;
        dice += out.dice;
        if let Some(b) = out.boundary {
            bd += b;
            has_boundary = true;
        }
        model.accumulate_gradient_raw(&case.features, &ws.scratch.grad, &mut grad);
    }
    grad.iter_mut().for_each(|g| *g /= k);
    Evaluation {
        total: total / k,
        cross_entropy: ce / k,
        dice: dice / k,
        boundary: has_boundary.then_some(bd / k),
        grad,
    }
}

/// Mean objective over `cases` and its gradient with respect to the model
/// parameters (weights then biases).
pub fn loss_and_gradient(model: &LinearModel, cases: &[PreparedCase], cfg: &TrainConfig) -> (f64, Vec<f64>) {
    let e = evaluate(model, cases, cfg, &cfg.class_weights(), &mut Workspace::default());
    (e.total, e.grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: LinearModel,
    pub curve: LossCurve,
}

/// Full-batch gradient descent from a seeded initialisation.
pub fn train_prepared(cases: &[PreparedCase], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cases.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let weights = cfg.class_weights();
    let mut model = LinearModel::new(cfg.stage.num_classes(), cfg.feature_config(), cfg.seed)?;
    let mut params = model.parameters();
    let mut curve = LossCurve::default();
    let mut ws = Workspace::default();
    for iteration in 0..cfg.iterations {
        let e = evaluate(&model, cases, cfg, &weights, &mut ws);
        if !e.total.is_finite() || e.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged {
                iteration,
                loss: e.total,
            });
        }
        curve.total.push(e.total);
        curve.cross_entropy.push(e.cross_entropy);
        curve.dice.push(e.dice);
        if let Some(b) = e.boundary {
            curve.boundary.push(b);
        }
        for (p, g) in params.iter_mut().zip(&e.grad) {
            *p -= cfg.learning_rate * g;
        }
        model.set_parameters(&params);
    }
    Ok(TrainOutcome { model, curve })
}

pub fn train(cases: &[PhantomCase], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let prepared = cases
        .iter()
        .map(|c| prepare_case(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    train_prepared(&prepared, cfg)
}
