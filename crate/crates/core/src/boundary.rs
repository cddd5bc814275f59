//! Differentiable boundary detection on probability channels and discrete
//! split-boundary extraction on label maps.
//!
//! Spatial gradients use central differences (`(p[k+1] - p[k-1]) / 2`) in the
//! interior and one-sided differences on the first and last plane of each
//! axis, in voxel units.

use crate::error::{Error, Result};
use crate::fields::{axis_stride, coords, Dims, LabelField3D, ScalarField3D};

/// Tumour classes whose shared interface is the split boundary.
pub const INTRAMEATAL: u8 = 1;
pub const EXTRAMEATAL: u8 = 2;

/// Per-voxel norm of the spatial gradient of one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMagnitudeField(pub ScalarField3D);

/// Product of the gradient magnitudes of the two tumour channels.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryResponse(pub ScalarField3D);

pub(crate) fn check_stencil_dims(dims: Dims) -> Result<()> {
    if dims.iter().any(|&d| d < 2) {
        Err(Error::GridTooSmall { dims, min: 2 })
    } else {
        Ok(())
    }
}

/// Iterates `(base, stride, len)` for every line of the grid along `axis`.
#[inline]
fn for_each_block(dims: Dims, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    let n = dims[axis];
    let s = axis_stride(dims, axis);
    let outer = dims[0] * dims[1] * dims[2] / (n * s);
    for o in 0..outer {
        f(o * n * s, s, n);
    }
}

/// Finite-difference derivative of `p` along `axis`, written to `g`.
pub(crate) fn axis_gradient(p: &[f64], dims: Dims, axis: usize, g: &mut [f64]) {
    for_each_block(dims, axis, |base, s, n| {
        let last = base + (n - 1) * s;
        for j in 0..s {
            g[base + j] = p[base + s + j] - p[base + j];
            g[last + j] = p[last + j] - p[last - s + j];
        }
        for t in 1..n - 1 {
            let row = base + t * s;
            for j in 0..s {
                g[row + j] = 0.5 * (p[row + s + j] - p[row - s + j]);
            }
        }
    });
}

/// Adds the transpose of [`axis_gradient`] applied to `dg` onto `dp`.
pub(crate) fn axis_gradient_adjoint(dg: &[f64], dims: Dims, axis: usize, dp: &mut [f64]) {
    for_each_block(dims, axis, |base, s, n| {
        let last = base + (n - 1) * s;
        for j in 0..s {
            let d0 = dg[base + j];
            dp[base + s + j] += d0;
            dp[base + j] -= d0;
            let dl = dg[last + j];
            dp[last + j] += dl;
            dp[last - s + j] -= dl;
        }
        for t in 1..n - 1 {
            let row = base + t * s;
            for j in 0..s {
                let d = 0.5 * dg[row + j];
                dp[row + s + j] += d;
                dp[row - s + j] -= d;
            }
        }
    });
}

/// Gradient components and their norm for one channel, into reusable
/// buffers (resized as needed).
pub(crate) fn channel_gradient_into(p: &[f64], dims: Dims, components: &mut [Vec<f64>; 3], magnitude: &mut Vec<f64>) {
    let n = p.len();
    for (axis, g) in components.iter_mut().enumerate() {
        g.resize(n, 0.0);
        axis_gradient(p, dims, axis, g);
    }
    magnitude.resize(n, 0.0);
    let [gx, gy, gz] = &*components;
    for (i, m) in magnitude.iter_mut().enumerate() {
        *m = (gx[i] * gx[i] + gy[i] * gy[i] + gz[i] * gz[i]).sqrt();
    }
}

pub fn spatial_gradient(channel: &ScalarField3D) -> Result<[ScalarField3D; 3]> {
    let dims = channel.dims();
    check_stencil_dims(dims)?;
    let mk = |axis| {
        let mut g = vec![0.0; channel.len()];
        axis_gradient(channel.data(), dims, axis, &mut g);
        ScalarField3D::from_vec(dims, channel.spacing(), g)
    };
    Ok([mk(0)?, mk(1)?, mk(2)?])
}

pub fn gradient_magnitude(channel: &ScalarField3D) -> Result<GradientMagnitudeField> {
    check_stencil_dims(channel.dims())?;
    let mut components = Default::default();
    let mut magnitude = Vec::new();
    channel_gradient_into(channel.data(), channel.dims(), &mut components, &mut magnitude);
    Ok(GradientMagnitudeField(ScalarField3D::from_vec(
        channel.dims(),
        channel.spacing(),
        magnitude,
    )?))
}

pub fn boundary_detector(p1: &ScalarField3D, p2: &ScalarField3D) -> Result<BoundaryResponse> {
    p1.ensure_same_shape(p2, "boundary detector inputs")?;
    let m1 = gradient_magnitude(p1)?.0;
    let m2 = gradient_magnitude(p2)?.0;
    let data = m1.data().iter().zip(m2.data()).map(|(a, b)| a * b).collect();
    Ok(BoundaryResponse(ScalarField3D::from_vec(p1.dims(), p1.spacing(), data)?))
}

/// Voxels of either tumour class with a 6-neighbour of the other tumour
/// class. The result is two voxels thick across a planar interface and never
/// includes background/tumour edges.
pub fn gt_split_boundary(labels: &LabelField3D) -> LabelField3D {
    let dims = labels.dims();
    let l = labels.data();
    let data = (0..l.len())
        .map(|i| {
            let other = match l[i] {
                INTRAMEATAL => EXTRAMEATAL,
                EXTRAMEATAL => INTRAMEATAL,
                _ => return 0,
            };
            let u = coords(dims, i);
            let hit = (0..3).any(|a| {
                let s = axis_stride(dims, a);
                (u[a] > 0 && l[i - s] == other) || (u[a] + 1 < dims[a] && l[i + s] == other)
            });
            u8::from(hit)
        })
        .collect();
    LabelField3D::from_vec(dims, labels.spacing(), data).expect("same geometry")
}

/// Voxels of `mask` (non-zero) with a 6-neighbour outside the mask. Voxels on
/// the grid faces count as surface only if such a neighbour exists in-grid.
pub fn mask_surface(mask: &LabelField3D) -> LabelField3D {
    let dims = mask.dims();
    let m = mask.data();
    let data = (0..m.len())
        .map(|i| {
            if m[i] == 0 {
                return 0;
            }
            let u = coords(dims, i);
            let hit = (0..3).any(|a| {
                let s = axis_stride(dims, a);
                (u[a] > 0 && m[i - s] == 0) || (u[a] + 1 < dims[a] && m[i + s] == 0)
            });
            u8::from(hit)
        })
        .collect();
    LabelField3D::from_vec(dims, mask.spacing(), data).expect("same geometry")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{linear_index, UNIT_SPACING};
    use proptest::prelude::*;

    fn field(dims: Dims, f: impl FnMut(usize, usize, usize) -> f64) -> ScalarField3D {
        ScalarField3D::from_fn(dims, UNIT_SPACING, f).unwrap()
    }

    /// Index-arithmetic reimplementation of the stencil.
    fn stencil_oracle(p: &ScalarField3D, axis: usize) -> Vec<f64> {
        let d = p.dims();
        (0..p.len())
            .map(|i| {
                let u = coords(d, i);
                let at = |k: usize| {
                    let mut v = u;
                    v[axis] = k;
                    *p.get(v[0], v[1], v[2])
                };
                let k = u[axis];
                if k == 0 {
                    at(1) - at(0)
                } else if k == d[axis] - 1 {
                    at(k) - at(k - 1)
                } else {
                    (at(k + 1) - at(k - 1)) / 2.0
                }
            })
            .collect()
    }

    fn lcg_field(dims: Dims, seed: u64) -> ScalarField3D {
        let mut s = seed;
        field(dims, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn ramp_has_unit_gradient_everywhere() {
        let p = field([5, 4, 3], |x, _, _| x as f64);
        let [gx, gy, gz] = spatial_gradient(&p).unwrap();
        assert!(gx.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(gy.data().iter().chain(gz.data()).all(|&v| v == 0.0));
        let m = gradient_magnitude(&p).unwrap().0;
        assert!(m.data().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        let diag = field([5, 4, 3], |x, y, _| (x + y) as f64);
        let m = gradient_magnitude(&diag).unwrap().0;
        assert!(m.data().iter().all(|&v| (v - 2f64.sqrt()).abs() < 1e-15));
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let p = field([3, 3, 3], |_, _, _| 0.7);
        for g in spatial_gradient(&p).unwrap() {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn stencil_matches_index_oracle() {
        let p = lcg_field([5, 5, 5], 3);
        let g = spatial_gradient(&p).unwrap();
        for axis in 0..3 {
            for (a, b) in g[axis].data().iter().zip(stencil_oracle(&p, axis)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let m = gradient_magnitude(&p).unwrap().0;
        for i in 0..p.len() {
            let expect = (0..3).map(|a| g[a].data()[i].powi(2)).sum::<f64>().sqrt();
            assert!((m.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn adjoint_is_transpose() {
        // <G p, q> == <p, G^T q>
        let dims = [4, 3, 5];
        let p = lcg_field(dims, 11);
        let q = lcg_field(dims, 12);
        for axis in 0..3 {
            let mut gp = vec![0.0; p.len()];
            axis_gradient(p.data(), dims, axis, &mut gp);
            let mut gtq = vec![0.0; p.len()];
            axis_gradient_adjoint(q.data(), dims, axis, &mut gtq);
            let lhs: f64 = gp.iter().zip(q.data()).map(|(a, b)| a * b).sum();
            let rhs: f64 = p.data().iter().zip(&gtq).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn too_small_grid_rejected() {
        let p = field([1, 4, 4], |_, _, _| 0.0);
        assert!(matches!(spatial_gradient(&p), Err(Error::GridTooSmall { .. })));
    }

    #[test]
    fn detector_examples() {
        let k = 3;
        let p1 = field([7, 4, 4], |x, _, _| if x >= k { 1.0 } else { 0.0 });
        let p2 = p1.map(|v| 1.0 - v);
        let b = boundary_detector(&p1, &p2).unwrap().0;
        for z in 0..4 {
            for y in 0..4 {
                for x in 0..7 {
                    let v = *b.get(x, y, z);
                    if x == k - 1 || x == k {
                        assert!((v - 0.25).abs() < 1e-15);
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
        let c = field([7, 4, 4], |_, _, _| 0.4);
        let b = boundary_detector(&c, &p2).unwrap().0;
        assert!(b.data().iter().all(|&v| v == 0.0));

        let wrong = field([6, 4, 4], |_, _, _| 0.0);
        assert!(matches!(boundary_detector(&p1, &wrong), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn detector_is_symmetric() {
        let a = lcg_field([4, 5, 3], 1);
        let b = lcg_field([4, 5, 3], 2);
        assert_eq!(boundary_detector(&a, &b).unwrap(), boundary_detector(&b, &a).unwrap());
    }

    #[test]
    fn split_boundary_examples() {
        let all1 = LabelField3D::filled([4, 4, 4], UNIT_SPACING, 1).unwrap();
        assert!(gt_split_boundary(&all1).data().iter().all(|&v| v == 0));

        let split = LabelField3D::from_fn([4, 4, 4], UNIT_SPACING, |x, _, _| if x < 2 { 1 } else { 2 }).unwrap();
        let b = gt_split_boundary(&split);
        for i in 0..b.len() {
            let x = coords([4, 4, 4], i)[0];
            assert_eq!(b.data()[i], u8::from(x == 1 || x == 2));
        }

        // background/tumour edges are not split boundary
        let bg = LabelField3D::from_fn([4, 4, 4], UNIT_SPACING, |x, _, _| if x < 2 { 0 } else { 2 }).unwrap();
        assert!(gt_split_boundary(&bg).data().iter().all(|&v| v == 0));
    }

    proptest! {
        #[test]
        fn split_boundary_matches_neighbour_scan(labels in proptest::collection::vec(0u8..3, 125)) {
            let d = [5, 5, 5];
            let l = LabelField3D::from_vec(d, UNIT_SPACING, labels).unwrap();
            let b = gt_split_boundary(&l);
            for z in 0..5i64 {
                for y in 0..5i64 {
                    for x in 0..5i64 {
                        let c = *l.get(x as usize, y as usize, z as usize);
                        let mut expect = false;
                        if c == 1 || c == 2 {
                            for (dx, dy, dz) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                                let (nx, ny, nz) = (x + dx, y + dy, z + dz);
                                if (0..5).contains(&nx) && (0..5).contains(&ny) && (0..5).contains(&nz) {
                                    let o = *l.get(nx as usize, ny as usize, nz as usize);
                                    expect |= o == 3 - c;
                                }
                            }
                        }
                        let i = linear_index(d, x as usize, y as usize, z as usize);
                        prop_assert_eq!(b.data()[i], u8::from(expect));
                        if expect {
                            prop_assert!(c == 1 || c == 2);
                        }
                    }
                }
            }
        }

        #[test]
        fn magnitude_non_negative(vals in proptest::collection::vec(-3f64..3.0, 27)) {
            let p = ScalarField3D::from_vec([3, 3, 3], UNIT_SPACING, vals).unwrap();
            prop_assert!(gradient_magnitude(&p).unwrap().0.data().iter().all(|&v| v >= 0.0));
        }
    }
}
