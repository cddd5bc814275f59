//! Segmentation losses with analytic gradients with respect to logits.
//!
//! Every loss returns its value together with `dL/dlogits`. Reductions use
//! compensated summation in a fixed order, so values are bit-reproducible
//! and accurate enough for finite-difference checks.

use crate::boundary::{axis_gradient_adjoint, channel_gradient_into, check_stencil_dims};
use crate::edt::DistanceMap;
use crate::error::{Error, Result};
use crate::fields::{softmax_into, softmax_unchecked, ChannelStack, Dims, LabelField3D, LogitField, ProbabilityField};
use crate::rng::Stream;

/// Probability floor inside the cross-entropy logarithm.
pub const CE_PROB_FLOOR: f64 = 1e-12;
/// Additive smoothing of the soft Dice ratio.
pub const DICE_SMOOTH: f64 = 1e-5;

/// Running Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(self) -> f64 {
        self.sum + self.c
    }
}

/// Neumaier-compensated sum in iteration order.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    for v in values {
        acc.add(v);
    }
    acc.total()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: LogitField,
}

/// Hyperparameters of the boundary distance term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryLossConfig {
    /// Decay length of `exp(-phi / tau)`, in the distance map's unit.
    pub tau: f64,
    /// Added to numerator and denominator of the weighted mean.
    pub epsilon: f64,
    /// Weight of the boundary term in the combined loss.
    pub gamma: f64,
}

impl Default for BoundaryLossConfig {
    fn default() -> Self {
        Self {
            tau: 4.0,
            epsilon: 1e-8,
            gamma: 0.5,
        }
    }
}

impl BoundaryLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

fn check_target(logits: &LogitField, target: &LabelField3D) -> Result<()> {
    if logits.dims() != target.dims() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs target {:?}",
            logits.dims(),
            target.dims()
        )));
    }
    target.validate_labels(logits.num_classes())
}

/// Chains `dL/dP` through the softmax: `dz_c = P_c (dP_c - sum_k P_k dP_k)`.
fn softmax_backward(prob: &ProbabilityField, dprob: &[Vec<f64>]) -> LogitField {
    let c = prob.num_classes();
    let n = prob.num_voxels();
    let mut out = vec![vec![0.0; n]; c];
    for i in 0..n {
        let mut dot = 0.0;
        for k in 0..c {
            dot += prob.channel(k)[i] * dprob[k][i];
        }
        for k in 0..c {
            out[k][i] = prob.channel(k)[i] * (dprob[k][i] - dot);
        }
    }
    LogitField(ChannelStack::new(prob.dims(), prob.spacing(), out).expect("same geometry"))
}

/// Uniform weights for `num_classes` classes.
pub fn uniform_weights(num_classes: usize) -> Vec<f64> {
    vec![1.0; num_classes]
}

fn check_weights(class_weights: &[f64], c: usize) -> Result<()> {
    if class_weights.len() != c {
        return Err(Error::InvalidWeights(format!(
            "expected {c} weights, got {}",
            class_weights.len()
        )));
    }
    if class_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || class_weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidWeights(format!("{class_weights:?}")));
    }
    Ok(())
}

/// Cross-entropy value and its gradient directly in logit space.
fn ce_terms(prob: &ProbabilityField, target: &[u8], class_weights: &[f64]) -> (f64, Vec<Vec<f64>>) {
    let c = prob.num_classes();
    let n = prob.num_voxels();
    let inv_n = 1.0 / n as f64;
    let value = compensated_sum((0..n).map(|i| {
        let k = target[i] as usize;
        -class_weights[k] * prob.channel(k)[i].max(CE_PROB_FLOOR).ln()
    })) * inv_n;
    let mut grad = vec![vec![0.0; n]; c];
    for (j, g) in grad.iter_mut().enumerate() {
        let p = prob.channel(j);
        for i in 0..n {
            let k = target[i] as usize;
            let onehot = if j == k { 1.0 } else { 0.0 };
            g[i] = class_weights[k] * inv_n * (p[i] - onehot);
        }
    }
    (value, grad)
}

/// Soft Dice value and `dL/dP`.
fn dice_terms(prob: &ProbabilityField, target: &[u8]) -> (f64, Vec<Vec<f64>>) {
    let c = prob.num_classes();
    let n = prob.num_voxels();
    let scale = 1.0 / (c - 1) as f64;
    let mut dprob = vec![vec![0.0; n]; c];
    let mut ratios = Vec::with_capacity(c - 1);
    for k in 1..c {
        let p = prob.channel(k);
        let kk = k as u8;
        let inter = compensated_sum((0..n).filter(|&i| target[i] == kk).map(|i| p[i]));
        let sum_p = compensated_sum(p.iter().copied());
        let sum_g = target.iter().filter(|&&l| l == kk).count() as f64;
        let num = 2.0 * inter + DICE_SMOOTH;
        let den = sum_p + sum_g + DICE_SMOOTH;
        ratios.push(num / den);
        let den2 = den * den;
        for (i, d) in dprob[k].iter_mut().enumerate() {
            let g = if target[i] == kk { 1.0 } else { 0.0 };
            *d = -scale * (2.0 * g * den - num) / den2;
        }
    }
    (1.0 - compensated_sum(ratios) * scale, dprob)
}

/// Voxel-mean weighted cross-entropy.
pub fn cross_entropy(logits: &LogitField, target: &LabelField3D, class_weights: &[f64]) -> Result<LossOutput> {
    check_target(logits, target)?;
    check_weights(class_weights, logits.num_classes())?;
    let prob = softmax_unchecked(logits);
    let (value, grad) = ce_terms(&prob, target.data(), class_weights);
    Ok(LossOutput {
        value,
        grad: LogitField(ChannelStack::new(logits.dims(), logits.spacing(), grad)?),
    })
}

/// `1 - mean_{c >= 1} (2 sum P_c G_c + s) / (sum P_c + sum G_c + s)`.
pub fn soft_dice_loss(logits: &LogitField, target: &LabelField3D) -> Result<LossOutput> {
    check_target(logits, target)?;
    if logits.num_classes() < 2 {
        return Err(Error::InvalidConfig("soft Dice needs at least two classes".into()));
    }
    let prob = softmax_unchecked(logits);
    let (value, dprob) = dice_terms(&prob, target.data());
    Ok(LossOutput {
        value,
        grad: softmax_backward(&prob, &dprob),
    })
}

/// Intermediate quantities of the boundary distance term, exposed for
/// inspection and for the demo.
#[derive(Clone, Debug)]
pub struct BoundaryLossParts {
    /// Detector response `|grad P1| * |grad P2|` per voxel.
    pub response: Vec<f64>,
    /// `sum B`
    pub detected_mass: f64,
    /// `sum B exp(-phi / tau)`
    pub weighted_mass: f64,
    /// `(weighted + eps) / (detected + eps)`, in `(0, 1]`.
    pub mean_proximity: f64,
}

/// Per-voxel `exp(-phi / tau)`.
pub fn proximity_weights(phi: &DistanceMap, tau: f64) -> Vec<f64> {
    phi.values().iter().map(|&d| (-d / tau).exp()).collect()
}

/// Reusable buffers of the boundary term.
#[derive(Debug, Default)]
pub(crate) struct BoundaryScratch {
    components: [[Vec<f64>; 3]; 2],
    magnitudes: [Vec<f64>; 2],
    /// `dL/dP1` and `dL/dP2`.
    dprob: [Vec<f64>; 2],
    dcomp: Vec<f64>,
}

/// Boundary term of the probability channels `p1`, `p2`; returns the value,
/// `sum B` and `sum B w`, with `dL/dP1`, `dL/dP2` left in `s.dprob`.
fn boundary_core(
    p1: &[f64],
    p2: &[f64],
    dims: Dims,
    weight: &[f64],
    epsilon: f64,
    s: &mut BoundaryScratch,
) -> (f64, f64, f64) {
    let n = p1.len();
    let [c1, c2] = &mut s.components;
    let [m1, m2] = &mut s.magnitudes;
    channel_gradient_into(p1, dims, c1, m1);
    channel_gradient_into(p2, dims, c2, m2);

    let mut detected = Neumaier::default();
    let mut weighted = Neumaier::default();
    for i in 0..n {
        let b = m1[i] * m2[i];
        detected.add(b);
        weighted.add(b * weight[i]);
    }
    let (detected, weighted) = (detected.total(), weighted.total());
    let den = detected + epsilon;
    let num = weighted + epsilon;
    let value = den.ln() - num.ln();

    // dL/dB(u) = 1/den - w(u)/num
    let (inv_den, inv_num) = (1.0 / den, 1.0 / num);
    s.dcomp.resize(n, 0.0);
    for (ch, d) in s.dprob.iter_mut().enumerate() {
        d.clear();
        d.resize(n, 0.0);
        let (own_c, own_m, other_m) = if ch == 0 { (&*c1, &*m1, &*m2) } else { (&*c2, &*m2, &*m1) };
        for (axis, comp) in own_c.iter().enumerate() {
            for i in 0..n {
                let m = own_m[i];
                s.dcomp[i] = if m > 0.0 {
                    (inv_den - weight[i] * inv_num) * other_m[i] * comp[i] / m
                } else {
                    0.0
                };
            }
            axis_gradient_adjoint(&s.dcomp, dims, axis, d);
        }
    }
    (value, detected, weighted)
}

/// Boundary term value and `dL/dP` given precomputed proximity weights.
fn boundary_terms(prob: &ProbabilityField, weight: &[f64], epsilon: f64) -> (f64, Vec<Vec<f64>>, BoundaryLossParts) {
    let mut s = BoundaryScratch::default();
    let (value, detected, weighted) = boundary_core(prob.channel(1), prob.channel(2), prob.dims(), weight, epsilon, &mut s);
    let [m1, m2] = &s.magnitudes;
    let response = m1.iter().zip(m2).map(|(a, b)| a * b).collect();
    let [d1, d2] = s.dprob;
    let parts = BoundaryLossParts {
        response,
        detected_mass: detected,
        weighted_mass: weighted,
        mean_proximity: (weighted + epsilon) / (detected + epsilon),
    };
    (value, vec![vec![0.0; d1.len()], d1, d2], parts)
}

fn check_boundary_inputs(logits: &LogitField, phi_dims: crate::fields::Dims, cfg: &BoundaryLossConfig) -> Result<()> {
    cfg.validate()?;
    if logits.num_classes() != 3 {
        return Err(Error::InvalidConfig(format!(
            "boundary distance loss needs 3 classes, got {}",
            logits.num_classes()
        )));
    }
    if logits.dims() != phi_dims {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs distance map {:?}",
            logits.dims(),
            phi_dims
        )));
    }
    check_stencil_dims(logits.dims())
}

/// Negative log of the detector-weighted mean of `exp(-phi / tau)`.
///
/// `phi` is the distance map of the ground-truth split boundary and is
/// treated as a constant. Only channels 1 and 2 of the logits enter the
/// detector; channel 0 still receives gradient through the softmax.
pub fn boundary_distance_loss(logits: &LogitField, phi: &DistanceMap, cfg: &BoundaryLossConfig) -> Result<LossOutput> {
    boundary_distance_loss_with_parts(logits, phi, cfg).map(|(out, _)| out)
}

pub fn boundary_distance_loss_with_parts(
    logits: &LogitField,
    phi: &DistanceMap,
    cfg: &BoundaryLossConfig,
) -> Result<(LossOutput, BoundaryLossParts)> {
    check_boundary_inputs(logits, phi.dims(), cfg)?;
    let prob = softmax_unchecked(logits);
    let (value, dprob, parts) = boundary_terms(&prob, &proximity_weights(phi, cfg.tau), cfg.epsilon);
    Ok((
        LossOutput {
            value,
            grad: softmax_backward(&prob, &dprob),
        },
        parts,
    ))
}

/// Value and gradient of `CE + Dice + gamma * boundary`, with the separate
/// component values kept for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedLossOutput {
    pub total: LossOutput,
    pub cross_entropy: f64,
    pub dice: f64,
    /// Boundary term value; `None` when the term was not evaluated.
    pub boundary: Option<f64>,
}

/// Which terms a training objective contains.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Objective<'a> {
    CeDice,
    /// `weights` are the proximity weights `exp(-phi / tau)` of the target.
    Combined { weights: &'a [f64], epsilon: f64, gamma: f64 },
}

/// Reusable buffers of [`objective_into`].
#[derive(Debug, Default)]
pub(crate) struct Scratch {
    prob: Vec<Vec<f64>>,
    /// `dL/dlogits` after a call.
    pub grad: Vec<Vec<f64>>,
    boundary: BoundaryScratch,
}

fn ensure_shape(buf: &mut Vec<Vec<f64>>, c: usize, n: usize) {
    if buf.len() != c || buf.iter().any(|b| b.len() != n) {
        *buf = vec![vec![0.0; n]; c];
    }
}

/// Values of the training objective's terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ObjectiveValue {
    pub total: f64,
    pub cross_entropy: f64,
    pub dice: f64,
    pub boundary: Option<f64>,
}

/// One softmax, then the requested terms, with the gradient written to
/// `s.grad`. With `gamma == 0` the boundary term is evaluated for reporting
/// but nothing of it is added, so value and gradient are bit-identical to
/// the CE + Dice objective.
pub(crate) fn objective_into(
    z: &[Vec<f64>],
    dims: Dims,
    t: &[u8],
    class_weights: &[f64],
    obj: Objective<'_>,
    s: &mut Scratch,
) -> ObjectiveValue {
    let c = z.len();
    let n = z[0].len();
    ensure_shape(&mut s.prob, c, n);
    ensure_shape(&mut s.grad, c, n);
    softmax_into(z, &mut s.prob);
    let p = &s.prob;
    let inv_n = 1.0 / n as f64;

    let mut ce = Neumaier::default();
    let mut inter = vec![Neumaier::default(); c];
    let mut sum_p = vec![Neumaier::default(); c];
    let mut count = vec![0usize; c];
    for i in 0..n {
        let k = t[i] as usize;
        ce.add(-class_weights[k] * p[k][i].max(CE_PROB_FLOOR).ln());
        inter[k].add(p[k][i]);
        count[k] += 1;
        for j in 1..c {
            sum_p[j].add(p[j][i]);
        }
    }
    let ce = ce.total() * inv_n;

    // dDice/dP_k is one constant on target-k voxels and another elsewhere
    let scale = 1.0 / (c - 1) as f64;
    let mut on = vec![0.0; c];
    let mut off = vec![0.0; c];
    let mut ratios = Neumaier::default();
    for k in 1..c {
        let num = 2.0 * inter[k].total() + DICE_SMOOTH;
        let den = sum_p[k].total() + count[k] as f64 + DICE_SMOOTH;
        ratios.add(num / den);
        let den2 = den * den;
        on[k] = -scale * (2.0 * den - num) / den2;
        off[k] = -scale * (-num) / den2;
    }
    let dice = 1.0 - ratios.total() * scale;

    let mut total = ce + dice;
    let mut boundary = None;
    let mut gamma_b = None;
    if let Objective::Combined { weights, epsilon, gamma } = obj {
        let (bv, _, _) = boundary_core(&p[1], &p[2], dims, weights, epsilon, &mut s.boundary);
        boundary = Some(bv);
        if gamma != 0.0 {
            total += gamma * bv;
            gamma_b = Some(gamma);
        }
    }

    let mut dp = vec![0.0; c];
    for i in 0..n {
        let k = t[i] as usize;
        let wk = class_weights[k] * inv_n;
        let mut dot = 0.0;
        for j in 0..c {
            dp[j] = if j == k { on[j] } else { off[j] };
            if let (Some(gamma), 1..=2) = (gamma_b, j) {
                dp[j] += gamma * s.boundary.dprob[j - 1][i];
            }
            dot += p[j][i] * dp[j];
        }
        for j in 0..c {
            let onehot = if j == k { 1.0 } else { 0.0 };
            s.grad[j][i] = wk * (p[j][i] - onehot) + p[j][i] * (dp[j] - dot);
        }
    }
    ObjectiveValue {
        total,
        cross_entropy: ce,
        dice,
        boundary,
    }
}

pub(crate) fn objective(
    logits: &LogitField,
    target: &LabelField3D,
    class_weights: &[f64],
    obj: Objective<'_>,
) -> CombinedLossOutput {
    let mut s = Scratch::default();
    let v = objective_into(logits.channels(), logits.dims(), target.data(), class_weights, obj, &mut s);
    CombinedLossOutput {
        total: LossOutput {
            value: v.total,
            grad: LogitField(ChannelStack::new(logits.dims(), logits.spacing(), s.grad).expect("same geometry")),
        },
        cross_entropy: v.cross_entropy,
        dice: v.dice,
        boundary: v.boundary,
    }
}

/// `CE + Dice`.
pub fn ce_dice_loss(logits: &LogitField, target: &LabelField3D, class_weights: &[f64]) -> Result<CombinedLossOutput> {
    check_target(logits, target)?;
    check_weights(class_weights, logits.num_classes())?;
    if logits.num_classes() < 2 {
        return Err(Error::InvalidConfig("soft Dice needs at least two classes".into()));
    }
    Ok(objective(logits, target, class_weights, Objective::CeDice))
}

/// `CE + Dice + gamma * boundary`.
pub fn combined_loss(
    logits: &LogitField,
    target: &LabelField3D,
    phi: &DistanceMap,
    cfg: &BoundaryLossConfig,
    class_weights: &[f64],
) -> Result<CombinedLossOutput> {
    check_target(logits, target)?;
    check_weights(class_weights, logits.num_classes())?;
    check_boundary_inputs(logits, phi.dims(), cfg)?;
    let weights = proximity_weights(phi, cfg.tau);
    Ok(objective(
        logits,
        target,
        class_weights,
        Objective::Combined {
            weights: &weights,
            epsilon: cfg.epsilon,
            gamma: cfg.gamma,
        },
    ))
}

/// Result of a finite-difference gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
}

/// Minimum number of coordinates sampled by [`gradcheck`].
pub const GRADCHECK_MIN_SAMPLES: usize = 200;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks an analytic gradient of a scalar function of a flat vector by
/// central differences on a deterministic random subsample of coordinates.
pub fn gradcheck_flat(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    seed: u64,
) -> Result<GradcheckReport> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::InvalidConfig(format!("gradcheck step must be in [1e-6, 1e-3], got {h}")));
    }
    if x.len() != analytic.len() {
        return Err(Error::ShapeMismatch("gradient length".into()));
    }
    let coords: Vec<usize> = if x.len() <= GRADCHECK_MIN_SAMPLES {
        (0..x.len()).collect()
    } else {
        // partial Fisher-Yates
        let mut idx: Vec<usize> = (0..x.len()).collect();
        let mut rng = Stream::new(seed);
        for i in 0..GRADCHECK_MIN_SAMPLES {
            let j = i + rng.below(idx.len() - i);
            idx.swap(i, j);
        }
        idx.truncate(GRADCHECK_MIN_SAMPLES);
        idx
    };
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for &i in &coords {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    Ok(GradcheckReport {
        max_relative_error: worst,
        coordinates_checked: coords.len(),
    })
}

/// Gradient check of a logit loss. `loss` captures any auxiliary inputs.
pub fn gradcheck(
    loss: impl Fn(&LogitField) -> Result<LossOutput>,
    logits: &LogitField,
    h: f64,
    seed: u64,
) -> Result<GradcheckReport> {
    let base = loss(logits)?;
    let flatten = |l: &LogitField| -> Vec<f64> { l.channels().iter().flatten().copied().collect() };
    let x = flatten(logits);
    let analytic = flatten(&base.grad);
    let (dims, spacing, c, n) = (logits.dims(), logits.spacing(), logits.num_classes(), logits.num_voxels());
    let eval = |flat: &[f64]| -> f64 {
        let chans = flat.chunks(n).map(|s| s.to_vec()).collect::<Vec<_>>();
        debug_assert_eq!(chans.len(), c);
        let l = LogitField(ChannelStack::new(dims, spacing, chans).expect("same geometry"));
        loss(&l).map(|o| o.value).unwrap_or(f64::NAN)
    };
    gradcheck_flat(eval, &x, &analytic, h, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::gt_split_boundary;
    use crate::edt::{edt_exact, DistanceUnit};
    use crate::fields::{Dims, ScalarField3D, UNIT_SPACING};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_logits(dims: Dims, c: usize, rng: &mut ChaCha8Rng) -> LogitField {
        let n = dims.iter().product();
        let chans = (0..c).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        LogitField::new(dims, UNIT_SPACING, chans).unwrap()
    }

    /// Two tumour classes split by a random-ish plane plus background.
    fn random_split_labels(dims: Dims, rng: &mut ChaCha8Rng) -> LabelField3D {
        let k = rng.random_range(2..dims[0] - 2);
        let flip: bool = rng.random();
        LabelField3D::from_fn(dims, UNIT_SPACING, |x, y, _| {
            if y == 0 {
                0
            } else if (x < k) ^ flip {
                1
            } else {
                2
            }
        })
        .unwrap()
    }

    fn margin_logits(labels: &LabelField3D, c: usize, margin: f64) -> LogitField {
        let chans = (0..c)
            .map(|k| labels.data().iter().map(|&l| if l as usize == k { margin } else { 0.0 }).collect())
            .collect();
        LogitField::new(labels.dims(), labels.spacing(), chans).unwrap()
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let labels = LabelField3D::from_fn([4, 4, 4], UNIT_SPACING, |x, y, _| ((x + y) % 3) as u8).unwrap();
        let w = uniform_weights(3);
        let sat = cross_entropy(&margin_logits(&labels, 3, 50.0), &labels, &w).unwrap();
        assert!(sat.value <= 1e-15);
        let zero = cross_entropy(&LogitField::zeros([4, 4, 4], UNIT_SPACING, 3).unwrap(), &labels, &w).unwrap();
        assert!((zero.value - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_rejects_bad_inputs() {
        let labels = LabelField3D::filled([2, 2, 2], UNIT_SPACING, 0).unwrap();
        let l = LogitField::zeros([2, 2, 2], UNIT_SPACING, 3).unwrap();
        assert!(matches!(cross_entropy(&l, &labels, &[0.0, 0.0, 0.0]), Err(Error::InvalidWeights(_))));
        assert!(matches!(cross_entropy(&l, &labels, &[1.0, -1.0, 1.0]), Err(Error::InvalidWeights(_))));
        assert!(matches!(cross_entropy(&l, &labels, &[1.0, 1.0]), Err(Error::InvalidWeights(_))));
        let other = LabelField3D::filled([2, 2, 3], UNIT_SPACING, 0).unwrap();
        assert!(matches!(cross_entropy(&l, &other, &[1.0; 3]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn dice_perfect_overlap_and_direct_formula() {
        let labels = LabelField3D::from_fn([8, 8, 8], UNIT_SPACING, |x, _, _| u8::from(x >= 4)).unwrap();
        let perfect = soft_dice_loss(&margin_logits(&labels, 2, 50.0), &labels).unwrap();
        assert!(perfect.value <= 1e-6);

        // Uniform prediction over 3 classes, target has class 1 in half of
        // an 8^3 grid and class 0 elsewhere.
        let uniform = LogitField::zeros([8, 8, 8], UNIT_SPACING, 3).unwrap();
        let out = soft_dice_loss(&uniform, &labels).unwrap();
        let s = DICE_SMOOTH;
        let p = 1.0 / 3.0;
        let d1 = (2.0 * 256.0 * p + s) / (512.0 * p + 256.0 + s);
        let d2 = s / (512.0 * p + s);
        let expect = 1.0 - (d1 + d2) / 2.0;
        assert!((out.value - expect).abs() < 1e-12, "{} vs {}", out.value, expect);
    }

    #[test]
    fn gradients_of_ce_and_dice_pass_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dims = [6, 6, 6];
        let labels = LabelField3D::from_fn(dims, UNIT_SPACING, |_, _, _| 0).unwrap();
        let labels = labels.map(|_| rng.random_range(0..3u8));
        let logits = random_logits(dims, 3, &mut rng);
        let w = [0.5, 1.0, 2.0];
        let ce = gradcheck(|l| cross_entropy(l, &labels, &w), &logits, 1e-4, 3).unwrap();
        assert!(ce.max_relative_error < 1e-5, "{ce:?}");
        assert!(ce.coordinates_checked >= GRADCHECK_MIN_SAMPLES);
        let dc = gradcheck(|l| soft_dice_loss(l, &labels), &logits, 1e-4, 4).unwrap();
        assert!(dc.max_relative_error < 1e-5, "{dc:?}");
    }

    #[test]
    fn boundary_loss_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dims = [6, 6, 6];
        let labels = random_split_labels(dims, &mut rng);
        let phi = edt_exact(&gt_split_boundary(&labels), DistanceUnit::Voxels).unwrap();
        let logits = random_logits(dims, 3, &mut rng);
        let cfg = BoundaryLossConfig::default();
        let r = gradcheck(|l| boundary_distance_loss(l, &phi, &cfg), &logits, 1e-4, 5).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn combined_is_weighted_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = [6, 6, 6];
        let labels = random_split_labels(dims, &mut rng);
        let phi = edt_exact(&gt_split_boundary(&labels), DistanceUnit::Voxels).unwrap();
        let logits = random_logits(dims, 3, &mut rng);
        let w = uniform_weights(3);
        let ce = cross_entropy(&logits, &labels, &w).unwrap();
        let dc = soft_dice_loss(&logits, &labels).unwrap();
        let cfg0 = BoundaryLossConfig { gamma: 0.0, ..Default::default() };
        let zero = combined_loss(&logits, &labels, &phi, &cfg0, &w).unwrap();
        assert_eq!(zero.total.value, ce.value + dc.value);
        assert!(zero.boundary.unwrap() > 0.0);
        assert_eq!(zero.total, ce_dice_loss(&logits, &labels, &w).unwrap().total);

        let cfg = BoundaryLossConfig { gamma: 0.5, ..Default::default() };
        let bd = boundary_distance_loss(&logits, &phi, &cfg).unwrap();
        let half = combined_loss(&logits, &labels, &phi, &cfg, &w).unwrap();
        assert!((half.total.value - (ce.value + dc.value + 0.5 * bd.value)).abs() < 1e-12);
        for k in 0..3 {
            for i in 0..logits.num_voxels() {
                let expect = ce.grad.channel(k)[i] + dc.grad.channel(k)[i] + 0.5 * bd.grad.channel(k)[i];
                assert!((half.total.grad.channel(k)[i] - expect).abs() < 1e-12);
            }
        }
        let r = gradcheck(
            |l| combined_loss(l, &labels, &phi, &cfg, &w).map(|o| o.total),
            &logits,
            1e-4,
            6,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn boundary_loss_closed_forms() {
        let dims = [8, 6, 6];
        let labels = LabelField3D::from_fn(dims, UNIT_SPACING, |x, _, _| if x < 4 { 1 } else { 2 }).unwrap();
        let phi = edt_exact(&gt_split_boundary(&labels), DistanceUnit::Voxels).unwrap();
        let cfg = BoundaryLossConfig::default();

        // Hard prediction with the same step: detector support is x in {3, 4},
        // exactly the GT boundary planes.
        let coincident = margin_logits(&labels, 3, 60.0);
        let out = boundary_distance_loss(&coincident, &phi, &cfg).unwrap();
        assert!(out.value.abs() < 1e-9, "{}", out.value);

        let constant = LogitField::zeros(dims, UNIT_SPACING, 3).unwrap();
        let out = boundary_distance_loss(&constant, &phi, &cfg).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad.all_finite());
    }

    #[test]
    fn uniform_offset_gives_d_over_tau() {
        // phi constant d on the whole grid is the limit of a detector far
        // from a single boundary voxel; use an explicit map.
        let dims = [8, 6, 6];
        let labels = LabelField3D::from_fn(dims, UNIT_SPACING, |x, _, _| if x < 4 { 1 } else { 2 }).unwrap();
        let logits = margin_logits(&labels, 3, 60.0);
        for d in [1.0, 2.0, 4.0] {
            let field = ScalarField3D::filled(dims, UNIT_SPACING, d).unwrap();
            let phi = DistanceMap { field, unit: DistanceUnit::Voxels };
            let out = boundary_distance_loss(&logits, &phi, &BoundaryLossConfig::default()).unwrap();
            assert!((out.value - d / 4.0).abs() / (d / 4.0) < 0.01);
        }
    }

    #[test]
    fn boundary_loss_rejects_bad_config() {
        let dims = [4, 4, 4];
        let logits = LogitField::zeros(dims, UNIT_SPACING, 3).unwrap();
        let phi = DistanceMap { field: ScalarField3D::filled(dims, UNIT_SPACING, 0.0).unwrap(), unit: DistanceUnit::Voxels };
        let bad = BoundaryLossConfig { tau: 0.0, ..Default::default() };
        assert!(matches!(boundary_distance_loss(&logits, &phi, &bad), Err(Error::InvalidConfig(_))));
        let two = LogitField::zeros(dims, UNIT_SPACING, 2).unwrap();
        assert!(boundary_distance_loss(&two, &phi, &BoundaryLossConfig::default()).is_err());
    }

    #[test]
    fn gradcheck_on_quadratic() {
        let x = [0.3, -1.2, 2.0, 0.7];
        let a = [1.0, 2.0, 3.0, 4.0];
        let f = |v: &[f64]| v.iter().zip(&a).map(|(vi, ai)| 0.5 * ai * vi * vi).sum::<f64>();
        let analytic: Vec<f64> = x.iter().zip(&a).map(|(xi, ai)| ai * xi).collect();
        let r = gradcheck_flat(f, &x, &analytic, 1e-4, 0).unwrap();
        assert!(r.max_relative_error < 1e-9);
        assert!(gradcheck_flat(f, &x, &analytic, 1e-2, 0).is_err());
    }

    #[test]
    fn boundary_loss_is_non_negative_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let dims = [5, 5, 5];
            let labels = random_split_labels(dims, &mut rng);
            let phi = edt_exact(&gt_split_boundary(&labels), DistanceUnit::Voxels).unwrap();
            let logits = random_logits(dims, 3, &mut rng);
            let (out, parts) = boundary_distance_loss_with_parts(&logits, &phi, &BoundaryLossConfig::default()).unwrap();
            assert!(out.value >= 0.0);
            assert!(parts.mean_proximity > 0.0 && parts.mean_proximity <= 1.0);
        }
    }
}
