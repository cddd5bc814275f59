use serde::{Deserialize, Serialize};

use crate::boundary::gt_split_boundary;
use crate::error::{Error, Result};
use crate::fields::{LabelField3D, UNIT_SPACING};
use crate::metrics::{assd, dice_scores, Method, MetricsReport};
use crate::phantom::PhantomCase;

use super::features::extract_features;
use super::model::LinearModel;
use super::train::{prepare_case, train_prepared, LossCurve, PreparedCase, Stage, TrainConfig};

/// A trained cascade.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageModel {
    pub gamma: f64,
    pub stage1: LinearModel,
    pub stage2: LinearModel,
}

/// Anything `evaluate` can load back from disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelBundle {
    TwoStage(TwoStageModel),
    Baseline { model: LinearModel },
}

impl ModelBundle {
    pub fn evaluate(&self, test: &[PhantomCase]) -> Result<Vec<MetricsReport>> {
        match self {
            ModelBundle::TwoStage(m) => evaluate_two_stage(m, test),
            ModelBundle::Baseline { model } => evaluate_baseline(model, test),
        }
    }
}

fn prepare_all(cases: &[PhantomCase], cfg: &TrainConfig) -> Result<Vec<PreparedCase>> {
    if cases.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    cases.iter().map(|c| prepare_case(c, cfg)).collect()
}

pub fn train_stage1(train: &[PhantomCase], cfg: &TrainConfig) -> Result<(LinearModel, LossCurve)> {
    let cfg = cfg.for_stage(Stage::Stage1);
    let out = train_prepared(&prepare_all(train, &cfg)?, &cfg)?;
    Ok((out.model, out.curve))
}

pub fn train_stage2(train: &[PhantomCase], cfg: &TrainConfig) -> Result<(LinearModel, LossCurve)> {
    let cfg = cfg.for_stage(Stage::Stage2);
    let out = train_prepared(&prepare_all(train, &cfg)?, &cfg)?;
    Ok((out.model, out.curve))
}

pub fn train_baseline(train: &[PhantomCase], cfg: &TrainConfig) -> Result<(LinearModel, LossCurve)> {
    let cfg = cfg.for_stage(Stage::Direct);
    let out = train_prepared(&prepare_all(train, &cfg)?, &cfg)?;
    Ok((out.model, out.curve))
}

/// Report for a three-class prediction, with split-boundary ASSD in
/// millimetres and in voxels.
pub fn split_report(
    case_id: &str,
    method: Method,
    gamma: Option<f64>,
    pred: &LabelField3D,
    gt: &LabelField3D,
) -> Result<MetricsReport> {
    let pb = gt_split_boundary(pred);
    let gb = gt_split_boundary(gt);
    Ok(MetricsReport {
        case_id: case_id.to_string(),
        method,
        gamma,
        dice: dice_scores(pred, gt, true)?,
        assd_mm: Some(assd(&pb, &gb, gt.spacing())?),
        assd_voxels: Some(assd(&pb, &gb, UNIT_SPACING)?),
    })
}

/// Whole-tumour mask predicted by stage 1.
pub fn predict_stage1(model: &LinearModel, case: &PhantomCase) -> Result<LabelField3D> {
    let feats = extract_features(&case.image, None, &model.features)?;
    Ok(model.predict(&feats))
}

/// Stage-2 split of `case` inside `mask`.
pub fn predict_stage2(model: &LinearModel, case: &PhantomCase, mask: &LabelField3D) -> Result<LabelField3D> {
    let feats = extract_features(&case.image, Some(mask), &model.features)?;
    model.predict_split_within(&feats, mask)
}

fn evaluate_with_masks(model: &TwoStageModel, test: &[PhantomCase], masks: &[LabelField3D]) -> Result<Vec<MetricsReport>> {
    let g = Some(model.gamma);
    let mut out = Vec::with_capacity(3 * test.len());
    for (case, mask) in test.iter().zip(masks) {
        let pred = predict_stage2(&model.stage2, case, mask)?;
        out.push(split_report(&case.id, Method::TwoStage, g, &pred, &case.labels)?);
        let pred_gt = predict_stage2(&model.stage2, case, &case.whole_tumour)?;
        out.push(split_report(&case.id, Method::TwoStageGtMask, g, &pred_gt, &case.labels)?);
        out.push(MetricsReport {
            case_id: case.id.clone(),
            method: Method::Stage1,
            gamma: None,
            dice: dice_scores(mask, &case.whole_tumour, false)?,
            assd_mm: None,
            assd_voxels: None,
        });
    }
    Ok(out)
}

/// Per case: the cascade with stage-1 masks, the cascade with ground-truth
/// masks, and stage 1 alone.
pub fn evaluate_two_stage(model: &TwoStageModel, test: &[PhantomCase]) -> Result<Vec<MetricsReport>> {
    let masks = test
        .iter()
        .map(|c| predict_stage1(&model.stage1, c))
        .collect::<Result<Vec<_>>>()?;
    evaluate_with_masks(model, test, &masks)
}

pub fn evaluate_baseline(model: &LinearModel, test: &[PhantomCase]) -> Result<Vec<MetricsReport>> {
    test.iter()
        .map(|case| {
            let feats = extract_features(&case.image, None, &model.features)?;
            split_report(&case.id, Method::Baseline, None, &model.predict(&feats), &case.labels)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoStageRun {
    pub model: TwoStageModel,
    pub stage1_curve: LossCurve,
    pub stage2_curve: LossCurve,
    pub reports: Vec<MetricsReport>,
}

pub fn run_two_stage(train: &[PhantomCase], test: &[PhantomCase], cfg: &TrainConfig) -> Result<TwoStageRun> {
    let mut runs = gamma_sweep(train, test, cfg, &[cfg.gamma])?;
    Ok(runs.remove(0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRun {
    pub model: LinearModel,
    pub curve: LossCurve,
    pub reports: Vec<MetricsReport>,
}

pub fn run_baseline(train: &[PhantomCase], test: &[PhantomCase], cfg: &TrainConfig) -> Result<BaselineRun> {
    let (model, curve) = train_baseline(train, cfg)?;
    let reports = evaluate_baseline(&model, test)?;
    Ok(BaselineRun { model, curve, reports })
}

/// One cascade per `gamma`, all sharing a single stage-1 model.
pub fn gamma_sweep(
    train: &[PhantomCase],
    test: &[PhantomCase],
    cfg: &TrainConfig,
    gammas: &[f64],
) -> Result<Vec<TwoStageRun>> {
    if gammas.is_empty() {
        return Err(Error::InvalidConfig("no gamma values given".into()));
    }
    if let Some(g) = gammas.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InvalidConfig(format!("gamma must be non-negative, got {g}")));
    }
    let (stage1, stage1_curve) = train_stage1(train, cfg)?;
    let masks = test
        .iter()
        .map(|c| predict_stage1(&stage1, c))
        .collect::<Result<Vec<_>>>()?;
    let base = cfg.for_stage(Stage::Stage2);
    let prepared = prepare_all(train, &base)?;
    let mut runs = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let c = TrainConfig { gamma, ..base.clone() };
        let out = train_prepared(&prepared, &c)?;
        let model = TwoStageModel {
            gamma,
            stage1: stage1.clone(),
            stage2: out.model,
        };
        let reports = evaluate_with_masks(&model, test, &masks)?;
        runs.push(TwoStageRun {
            model,
            stage1_curve: stage1_curve.clone(),
            stage2_curve: out.curve,
            reports,
        });
    }
    Ok(runs)
}
