//! Exact Euclidean distance transform.
//!
//! Three separable passes of the lower-envelope-of-parabolas transform over
//! squared distances (one per axis), then a square root. Distances are
//! measured between voxel centres.

use crate::error::{Error, Result};
use crate::fields::{axis_stride, coords, Dims, LabelField3D, ScalarField3D, Spacing};

/// Largest extent per axis accepted by [`edt_brute_force`].
pub const BRUTE_FORCE_MAX_AXIS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DistanceUnit {
    /// Unit steps along every axis; spacing is ignored.
    #[default]
    Voxels,
    /// Offsets are scaled by the field spacing.
    Millimetres,
}

impl DistanceUnit {
    fn axis_scale(self, spacing: Spacing) -> [f64; 3] {
        match self {
            DistanceUnit::Voxels => [1.0; 3],
            DistanceUnit::Millimetres => spacing,
        }
    }
}

/// Distance from every voxel to the nearest source voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    pub field: ScalarField3D,
    pub unit: DistanceUnit,
}

impl DistanceMap {
    pub fn values(&self) -> &[f64] {
        self.field.data()
    }

    pub fn dims(&self) -> Dims {
        self.field.dims()
    }
}

/// 1D squared-distance transform of `f` with per-step weight `w` (the squared
/// axis scale), writing into `out`. Scratch buffers are reused across lines.
fn lower_envelope_1d(f: &[f64], w: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    v.clear();
    z.clear();
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + w * (q * q) as f64;
        loop {
            let Some(&last) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let fl = f[last] + w * (last * last) as f64;
            let s = (fq - fl) / (2.0 * w * (q - last) as f64);
            if s <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(s);
                break;
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < p as f64 {
            k += 1;
        }
        let d = p as f64 - v[k] as f64;
        *o = w * d * d + f[v[k]];
    }
}

/// Exact distance transform of the non-zero voxels of `source`.
pub fn edt_exact(source: &LabelField3D, unit: DistanceUnit) -> Result<DistanceMap> {
    if source.data().iter().all(|&v| v == 0) {
        return Err(Error::EmptySource);
    }
    let dims = source.dims();
    let scale = unit.axis_scale(source.spacing());
    let mut sq: Vec<f64> = source
        .data()
        .iter()
        .map(|&v| if v != 0 { 0.0 } else { f64::INFINITY })
        .collect();

    let max_len = dims.iter().copied().max().unwrap();
    let mut line = vec![0.0; max_len];
    let mut out = vec![0.0; max_len];
    let (mut v, mut z) = (Vec::with_capacity(max_len), Vec::with_capacity(max_len + 1));

    for axis in 0..3 {
        let n = dims[axis];
        let stride = axis_stride(dims, axis);
        let w = scale[axis] * scale[axis];
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..dims[b] {
            for i in 0..dims[a] {
                let mut start = [0usize; 3];
                start[a] = i;
                start[b] = j;
                let base = start[0] + dims[0] * (start[1] + dims[1] * start[2]);
                for (t, l) in line[..n].iter_mut().enumerate() {
                    *l = sq[base + t * stride];
                }
                lower_envelope_1d(&line[..n], w, &mut out[..n], &mut v, &mut z);
                for (t, o) in out[..n].iter().enumerate() {
                    sq[base + t * stride] = *o;
                }
            }
        }
    }

    let field = ScalarField3D::from_vec(dims, source.spacing(), sq.into_iter().map(f64::sqrt).collect())?;
    Ok(DistanceMap { field, unit })
}

/// Exhaustive minimisation over all source voxels. Test oracle; quadratic cost.
pub fn edt_brute_force(source: &LabelField3D, unit: DistanceUnit) -> Result<DistanceMap> {
    let dims = source.dims();
    if dims.iter().any(|&d| d > BRUTE_FORCE_MAX_AXIS) {
        return Err(Error::GridTooLarge {
            dims,
            limit: BRUTE_FORCE_MAX_AXIS,
        });
    }
    let scale = unit.axis_scale(source.spacing());
    let points: Vec<[usize; 3]> = source
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| coords(dims, i))
        .collect();
    if points.is_empty() {
        return Err(Error::EmptySource);
    }
    let data = (0..source.len())
        .map(|i| {
            let u = coords(dims, i);
            points
                .iter()
                .map(|p| {
                    (0..3)
                        .map(|a| {
                            let d = (u[a] as f64 - p[a] as f64) * scale[a];
                            d * d
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect();
    Ok(DistanceMap {
        field: ScalarField3D::from_vec(dims, source.spacing(), data)?,
        unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::UNIT_SPACING;
    use proptest::prelude::*;

    fn point_source(dims: Dims, spacing: Spacing, p: [usize; 3]) -> LabelField3D {
        LabelField3D::from_fn(dims, spacing, |x, y, z| u8::from([x, y, z] == p)).unwrap()
    }

    #[test]
    fn single_voxel_corner_distance() {
        let src = point_source([5, 5, 5], UNIT_SPACING, [2, 2, 2]);
        for map in [
            edt_exact(&src, DistanceUnit::Voxels).unwrap(),
            edt_brute_force(&src, DistanceUnit::Voxels).unwrap(),
        ] {
            assert!((map.field.get(0, 0, 0) - 12f64.sqrt()).abs() < 1e-12);
            assert_eq!(*map.field.get(2, 2, 2), 0.0);
        }
    }

    #[test]
    fn full_source_is_zero_everywhere() {
        let src = LabelField3D::filled([4, 3, 2], UNIT_SPACING, 1).unwrap();
        let map = edt_exact(&src, DistanceUnit::Voxels).unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn anisotropic_spacing_scales_offsets() {
        let src = point_source([3, 3, 3], [1.0, 1.0, 3.0], [0, 0, 0]);
        for map in [
            edt_exact(&src, DistanceUnit::Millimetres).unwrap(),
            edt_brute_force(&src, DistanceUnit::Millimetres).unwrap(),
        ] {
            assert!((map.field.get(0, 0, 1) - 3.0).abs() < 1e-12);
        }
        let vox = edt_exact(&src, DistanceUnit::Voxels).unwrap();
        assert!((vox.field.get(0, 0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_source_and_size_guard() {
        let empty = LabelField3D::filled([4, 4, 4], UNIT_SPACING, 0).unwrap();
        assert!(matches!(edt_exact(&empty, DistanceUnit::Voxels), Err(Error::EmptySource)));
        assert!(matches!(edt_brute_force(&empty, DistanceUnit::Voxels), Err(Error::EmptySource)));
        let big = LabelField3D::filled([33, 2, 2], UNIT_SPACING, 1).unwrap();
        assert!(matches!(
            edt_brute_force(&big, DistanceUnit::Voxels),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn point_source_symmetric_under_cube_symmetries() {
        let n = 7;
        let src = point_source([n; 3], UNIT_SPACING, [3, 3, 3]);
        let map = edt_exact(&src, DistanceUnit::Voxels).unwrap();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for perm in perms {
            for flips in 0..8u8 {
                for i in 0..map.field.len() {
                    let u = coords([n; 3], i);
                    let mut t = [0; 3];
                    for a in 0..3 {
                        let c = u[perm[a]];
                        t[a] = if flips >> a & 1 == 1 { n - 1 - c } else { c };
                    }
                    assert_eq!(map.values()[i], *map.field.get(t[0], t[1], t[2]));
                }
            }
        }
    }

    fn mask_strategy(n: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(proptest::bool::weighted(0.15), n * n * n)
            .prop_map(|v| v.into_iter().map(u8::from).collect::<Vec<_>>())
            .prop_filter("non-empty", |v| v.iter().any(|&b| b == 1))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matches_brute_force(mask in mask_strategy(6), sz in 1.0f64..3.0) {
            let src = LabelField3D::from_vec([6; 3], [1.0, 0.7, sz], mask).unwrap();
            for unit in [DistanceUnit::Voxels, DistanceUnit::Millimetres] {
                let a = edt_exact(&src, unit).unwrap();
                let b = edt_brute_force(&src, unit).unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).abs() <= 1e-9 * y.max(1.0));
                }
            }
        }

        #[test]
        fn zero_on_source_and_lipschitz(mask in mask_strategy(6)) {
            let src = LabelField3D::from_vec([6; 3], [1.0, 2.0, 0.5], mask).unwrap();
            let map = edt_exact(&src, DistanceUnit::Millimetres).unwrap();
            for (i, &s) in src.data().iter().enumerate() {
                if s == 1 {
                    prop_assert_eq!(map.values()[i], 0.0);
                }
                let u = coords([6; 3], i);
                for a in 0..3 {
                    if u[a] + 1 < 6 {
                        let j = i + axis_stride([6; 3], a);
                        let step = src.spacing()[a];
                        prop_assert!((map.values()[i] - map.values()[j]).abs() <= step + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn growing_source_never_increases_distance(mask in mask_strategy(6), extra in proptest::collection::vec(proptest::bool::weighted(0.1), 216)) {
            let src = LabelField3D::from_vec([6; 3], UNIT_SPACING, mask.clone()).unwrap();
            let grown: Vec<u8> = mask.iter().zip(&extra).map(|(&m, &e)| m | u8::from(e)).collect();
            let grown = LabelField3D::from_vec([6; 3], UNIT_SPACING, grown).unwrap();
            let a = edt_exact(&src, DistanceUnit::Voxels).unwrap();
            let b = edt_exact(&grown, DistanceUnit::Voxels).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(y <= x);
            }
        }

        #[test]
        fn translation_equivariance(p in (0usize..4, 0usize..4, 0usize..4), shift in (0usize..3, 0usize..3, 0usize..3)) {
            let n = 8;
            let a = point_source([n; 3], UNIT_SPACING, [p.0, p.1, p.2]);
            let b = point_source([n; 3], UNIT_SPACING, [p.0 + shift.0, p.1 + shift.1, p.2 + shift.2]);
            let ma = edt_exact(&a, DistanceUnit::Voxels).unwrap();
            let mb = edt_exact(&b, DistanceUnit::Voxels).unwrap();
            for z in 0..n - shift.2 {
                for y in 0..n - shift.1 {
                    for x in 0..n - shift.0 {
                        prop_assert_eq!(ma.field.get(x, y, z), mb.field.get(x + shift.0, y + shift.1, z + shift.2));
                    }
                }
            }
        }
    }
}
