//! Overlap and surface-distance metrics, percentile summaries and the paired
//! signed-rank test.

mod wilcoxon;

pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult, EXACT_MAX_N, MIN_NONZERO_PAIRS};

use serde::{Deserialize, Serialize};

use crate::edt::{edt_exact, DistanceUnit};
use crate::error::{Error, Result};
use crate::fields::{LabelField3D, Spacing};

/// Dice overlap of `class_id` between two label maps. Both empty gives 1.
pub fn dice_score(pred: &LabelField3D, gt: &LabelField3D, class_id: u8) -> Result<f64> {
    pred.ensure_same_shape(gt, "dice inputs")?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        let (ip, ig) = (p == class_id, g == class_id);
        a += ip as usize;
        b += ig as usize;
        both += (ip && ig) as usize;
    }
    Ok(if a + b == 0 {
        1.0
    } else {
        2.0 * both as f64 / (a + b) as f64
    })
}

/// A surface distance that is infinite when exactly one surface is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurfaceDistance {
    Finite(f64),
    Infinite,
}

impl SurfaceDistance {
    pub fn as_f64(self) -> f64 {
        match self {
            SurfaceDistance::Finite(v) => v,
            SurfaceDistance::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, SurfaceDistance::Finite(_))
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            SurfaceDistance::Finite(v)
        } else {
            SurfaceDistance::Infinite
        }
    }
}

impl std::fmt::Display for SurfaceDistance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SurfaceDistance::Finite(v) => write!(f, "{v}"),
            SurfaceDistance::Infinite => f.write_str("inf"),
        }
    }
}

/// Average symmetric surface distance between two binary voxel sets.
///
/// Point-to-set distances are taken between voxel centres using `spacing`
/// (pass the geometry's own spacing for millimetres, or unit spacing for
/// voxels).
pub fn assd(pred_boundary: &LabelField3D, gt_boundary: &LabelField3D, spacing: Spacing) -> Result<SurfaceDistance> {
    pred_boundary.ensure_same_shape(gt_boundary, "assd inputs")?;
    let na = pred_boundary.data().iter().filter(|&&v| v != 0).count();
    let nb = gt_boundary.data().iter().filter(|&&v| v != 0).count();
    match (na, nb) {
        (0, 0) => return Ok(SurfaceDistance::Finite(0.0)),
        (0, _) | (_, 0) => return Ok(SurfaceDistance::Infinite),
        _ => {}
    }
    let a = pred_boundary.clone().with_spacing(spacing)?;
    let b = gt_boundary.clone().with_spacing(spacing)?;
    let to_b = edt_exact(&b, DistanceUnit::Millimetres)?;
    let to_a = edt_exact(&a, DistanceUnit::Millimetres)?;
    let sum_ab: f64 = a
        .data()
        .iter()
        .zip(to_b.values())
        .filter(|(&m, _)| m != 0)
        .map(|(_, d)| d)
        .sum();
    let sum_ba: f64 = b
        .data()
        .iter()
        .zip(to_a.values())
        .filter(|(&m, _)| m != 0)
        .map(|(_, d)| d)
        .sum();
    Ok(SurfaceDistance::Finite((sum_ab + sum_ba) / (na + nb) as f64))
}

/// Median and quartiles of the finite entries of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    /// Entries used.
    pub n: usize,
    /// Non-finite entries excluded.
    pub n_infinite: usize,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Median, 25th and 75th percentiles with non-finite values excluded and
/// counted.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::EmptySample);
    }
    finite.sort_by(f64::total_cmp);
    Ok(Summary {
        median: percentile_sorted(&finite, 0.5),
        p25: percentile_sorted(&finite, 0.25),
        p75: percentile_sorted(&finite, 0.75),
        n: finite.len(),
        n_infinite: values.len() - finite.len(),
    })
}

pub fn mean_and_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, sd))
}

/// Which pipeline produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Direct three-class model.
    Baseline,
    /// Whole-tumour model alone.
    Stage1,
    /// Cascade evaluated with stage-1 predicted masks.
    TwoStage,
    /// Cascade evaluated with ground-truth masks in place of stage-1 output.
    TwoStageGtMask,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Stage1 => "stage1",
            Method::TwoStage => "two-stage",
            Method::TwoStageGtMask => "two-stage-gt-mask",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Baseline, Method::Stage1, Method::TwoStage, Method::TwoStageGtMask]
            .into_iter()
            .find(|m| m.as_str() == s)
    }
}

/// Dice per class. Split classes are absent for whole-tumour-only reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiceScores {
    pub bg: f64,
    /// Extrameatal (class 2).
    pub em: Option<f64>,
    /// Intrameatal (class 1).
    pub im: Option<f64>,
    /// Whole tumour (union of classes 1 and 2).
    pub wt: f64,
}

/// Metrics of one test case under one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub case_id: String,
    pub method: Method,
    pub gamma: Option<f64>,
    pub dice: DiceScores,
    /// Split-boundary ASSD in millimetres (absent for stage 1).
    pub assd_mm: Option<SurfaceDistance>,
    /// The same distance in voxel units.
    pub assd_voxels: Option<SurfaceDistance>,
}

/// Dice scores of a three-class prediction (or a binary one when
/// `split` is false).
pub fn dice_scores(pred: &LabelField3D, gt: &LabelField3D, split: bool) -> Result<DiceScores> {
    let wt = dice_score(&pred.foreground(), &gt.foreground(), 1)?;
    let bg = dice_score(pred, gt, 0)?;
    Ok(if split {
        DiceScores {
            bg,
            em: Some(dice_score(pred, gt, crate::boundary::EXTRAMEATAL)?),
            im: Some(dice_score(pred, gt, crate::boundary::INTRAMEATAL)?),
            wt,
        }
    } else {
        DiceScores { bg, em: None, im: None, wt }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{coords, UNIT_SPACING};
    use proptest::prelude::*;

    fn mask(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> LabelField3D {
        LabelField3D::from_fn(dims, UNIT_SPACING, |x, y, z| u8::from(f(x, y, z))).unwrap()
    }

    fn assd_oracle(a: &LabelField3D, b: &LabelField3D, spacing: Spacing) -> f64 {
        let pts = |m: &LabelField3D| -> Vec<[f64; 3]> {
            m.data()
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(|(i, _)| {
                    let c = coords(m.dims(), i);
                    [c[0] as f64 * spacing[0], c[1] as f64 * spacing[1], c[2] as f64 * spacing[2]]
                })
                .collect()
        };
        let (pa, pb) = (pts(a), pts(b));
        let d = |p: &[f64; 3], set: &[[f64; 3]]| {
            set.iter()
                .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        };
        let s: f64 = pa.iter().map(|p| d(p, &pb)).sum::<f64>() + pb.iter().map(|p| d(p, &pa)).sum::<f64>();
        s / (pa.len() + pb.len()) as f64
    }

    #[test]
    fn dice_examples() {
        let a = mask([4, 4, 4], |x, _, _| x < 2);
        assert_eq!(dice_score(&a, &a, 1).unwrap(), 1.0);
        let b = mask([4, 4, 4], |x, _, _| x >= 2);
        assert_eq!(dice_score(&a, &b, 1).unwrap(), 0.0);
        let p = mask([8, 1, 1], |x, _, _| x < 4);
        let g = mask([8, 1, 1], |x, _, _| (2..6).contains(&x));
        assert_eq!(dice_score(&p, &g, 1).unwrap(), 0.5);
        let empty = mask([8, 1, 1], |_, _, _| false);
        assert_eq!(dice_score(&empty, &empty, 1).unwrap(), 1.0);
        assert_eq!(dice_score(&empty, &g, 1).unwrap(), 0.0);
        assert!(dice_score(&a, &p, 1).is_err());
    }

    #[test]
    fn assd_examples() {
        let a = mask([6, 6, 8], |_, _, z| z == 2);
        assert_eq!(assd(&a, &a, UNIT_SPACING).unwrap(), SurfaceDistance::Finite(0.0));
        let b = mask([6, 6, 8], |_, _, z| z == 5);
        assert_eq!(assd(&a, &b, UNIT_SPACING).unwrap(), SurfaceDistance::Finite(3.0));
        assert_eq!(assd(&a, &b, [2.0, 2.0, 2.0]).unwrap(), SurfaceDistance::Finite(6.0));
        let empty = mask([6, 6, 8], |_, _, _| false);
        assert_eq!(assd(&empty, &b, UNIT_SPACING).unwrap(), SurfaceDistance::Infinite);
        assert_eq!(assd(&a, &empty, UNIT_SPACING).unwrap(), SurfaceDistance::Infinite);
        assert_eq!(assd(&empty, &empty, UNIT_SPACING).unwrap(), SurfaceDistance::Finite(0.0));
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.median, s.p25, s.p75), (3.0, 2.0, 4.0));
        let s = summarize(&[7.0]).unwrap();
        assert_eq!((s.median, s.p25, s.p75), (7.0, 7.0, 7.0));
        let s = summarize(&[4.0, 1.0, f64::INFINITY, 3.0, 2.0]).unwrap();
        assert_eq!((s.median, s.n, s.n_infinite), (2.5, 4, 1));
        assert!(matches!(summarize(&[f64::INFINITY]), Err(Error::EmptySample)));
        assert!(matches!(summarize(&[]), Err(Error::EmptySample)));
    }

    proptest! {
        #[test]
        fn summarize_matches_sort_and_interpolate(values in proptest::collection::vec(-100f64..100.0, 1..40)) {
            let s = summarize(&values).unwrap();
            let mut v = values.clone();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q = |p: f64| {
                let h = (v.len() as f64 - 1.0) * p;
                let i = h as usize;
                if i + 1 < v.len() { v[i] + (h - i as f64) * (v[i + 1] - v[i]) } else { v[i] }
            };
            prop_assert!((s.median - q(0.5)).abs() < 1e-12);
            prop_assert!((s.p25 - q(0.25)).abs() < 1e-12);
            prop_assert!((s.p75 - q(0.75)).abs() < 1e-12);
        }

        #[test]
        fn assd_matches_all_pairs(
            a in proptest::collection::btree_set(0usize..512, 1..20),
            b in proptest::collection::btree_set(0usize..512, 1..20),
            sz in 1.0f64..3.0,
        ) {
            let sp = [1.0, 1.5, sz];
            let ma = LabelField3D::from_fn([8; 3], UNIT_SPACING, |x, y, z| u8::from(a.contains(&(x + 8 * (y + 8 * z))))).unwrap();
            let mb = LabelField3D::from_fn([8; 3], UNIT_SPACING, |x, y, z| u8::from(b.contains(&(x + 8 * (y + 8 * z))))).unwrap();
            let got = assd(&ma, &mb, sp).unwrap().as_f64();
            let expect = assd_oracle(&ma, &mb, sp);
            prop_assert!((got - expect).abs() <= 1e-9 * expect.max(1.0));
            let rev = assd(&mb, &ma, sp).unwrap().as_f64();
            prop_assert!((got - rev).abs() < 1e-12);
            prop_assert_eq!(assd(&ma, &ma, sp).unwrap(), SurfaceDistance::Finite(0.0));
            prop_assert_eq!(dice_score(&ma, &mb, 1).unwrap(), dice_score(&mb, &ma, 1).unwrap());
        }
    }
}
