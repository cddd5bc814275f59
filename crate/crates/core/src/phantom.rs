//! Deterministic synthetic tumour phantoms.
//!
//! A phantom is a cylinder (the tumour inside the canal) joined at a plane
//! (the meatus) to the half of an ellipsoid lying outside the canal. Voxels
//! on the canal side of the plane are intrameatal (class 1), the rest
//! extrameatal (class 2). The canal is surrounded by dark bone on its side
//! of the plane; tumour is bright. Noise is a pure function of the seed and
//! the voxel index.

use serde::{Deserialize, Serialize};

use crate::boundary::{EXTRAMEATAL, INTRAMEATAL};
use crate::error::{Error, Result};
use crate::fields::{Dims, LabelField3D, ScalarField3D, Spacing};
use crate::rng::{self, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intensities {
    pub background: f64,
    pub tumour: f64,
    pub canal_wall: f64,
}

impl Default for Intensities {
    fn default() -> Self {
        Self {
            background: 0.35,
            tumour: 1.0,
            canal_wall: 0.05,
        }
    }
}

/// Full geometric and photometric description of one phantom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub seed: u64,
    pub dims: Dims,
    pub spacing: Spacing,
    /// Radius of the canal (and of the tumour inside it), voxels.
    pub canal_radius: f64,
    /// How far the tumour reaches into the canal from the meatus plane.
    pub canal_length: f64,
    /// Semi-axes of the extrameatal ellipsoid: along the canal axis, then
    /// the two perpendicular directions.
    pub bulb_semi_axes: [f64; 3],
    /// A point on the meatus plane, voxel coordinates.
    pub meatus_point: [f64; 3],
    /// Unit normal of the meatus plane, pointing into the canal.
    pub meatus_normal: [f64; 3],
    pub noise_sigma: f64,
    pub intensities: Intensities,
}

/// Fraction of the bulb's axial semi-axis by which its centre sits outside
/// the meatus plane.
const BULB_OFFSET: f64 = 0.6;

/// Ranges random phantom specs are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomDistribution {
    pub dims: Dims,
    pub spacing: Spacing,
    pub canal_radius: (f64, f64),
    pub canal_length: (f64, f64),
    pub bulb_semi_axis: (f64, f64),
    /// Largest angle between the canal axis and +x, degrees.
    pub max_tilt_deg: f64,
    /// Half-width of the uniform jitter of the meatus point around the
    /// grid centre, voxels.
    pub center_jitter: f64,
    pub noise_sigma: f64,
    pub intensities: Intensities,
}

impl Default for PhantomDistribution {
    fn default() -> Self {
        Self {
            dims: [48, 48, 32],
            spacing: [1.0, 1.0, 1.0],
            canal_radius: (2.0, 4.0),
            canal_length: (8.0, 14.0),
            bulb_semi_axis: (4.0, 12.0),
            max_tilt_deg: 20.0,
            center_jitter: 4.0,
            noise_sigma: 0.2,
            intensities: Intensities::default(),
        }
    }
}

fn normalize(v: [f64; 3]) -> Result<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::DegenerateSpec("meatus normal must be non-zero".into()));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Orthonormal frame whose first vector is `n`.
fn frame(n: [f64; 3]) -> [[f64; 3]; 3] {
    let helper = if n[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [0.0, 1.0, 0.0] };
    let e1 = normalize(cross(helper, n)).expect("non-parallel helper");
    let e2 = cross(n, e1);
    [n, e1, e2]
}

impl PhantomSpec {
    /// Draws a spec from `dist` using `seed` for both geometry and noise.
    pub fn sample(seed: u64, dist: &PhantomDistribution) -> Self {
        let mut s = Stream::new(rng::splitmix64(seed ^ 0x5048_414e_544f_4d21));
        let canal_radius = s.range(dist.canal_radius.0, dist.canal_radius.1);
        let canal_length = s.range(dist.canal_length.0, dist.canal_length.1);
        // perpendicular bulb axes must cover the canal cross-section at the plane
        let cover = (canal_radius + 1.0) / (1.0 - BULB_OFFSET * BULB_OFFSET).sqrt();
        let lo_perp = dist.bulb_semi_axis.0.max(cover).min(dist.bulb_semi_axis.1);
        let bulb_semi_axes = [
            s.range(dist.bulb_semi_axis.0, dist.bulb_semi_axis.1),
            s.range(lo_perp, dist.bulb_semi_axis.1),
            s.range(lo_perp, dist.bulb_semi_axis.1),
        ];
        let tilt = s.range(0.0, dist.max_tilt_deg).to_radians();
        let azimuth = s.range(0.0, std::f64::consts::TAU);
        let meatus_normal = [tilt.cos(), tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin()];
        let j = dist.center_jitter;
        let meatus_point = [
            dist.dims[0] as f64 / 2.0 + s.range(-j, j),
            dist.dims[1] as f64 / 2.0 + s.range(-j, j),
            dist.dims[2] as f64 / 2.0 + s.range(-j, j) * 0.5,
        ];
        Self {
            seed,
            dims: dist.dims,
            spacing: dist.spacing,
            canal_radius,
            canal_length,
            bulb_semi_axes,
            meatus_point,
            meatus_normal,
            noise_sigma: dist.noise_sigma,
            intensities: dist.intensities,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(Error::DegenerateSpec(format!("dims {:?}", self.dims)));
        }
        let positive = [self.canal_radius, self.canal_length]
            .into_iter()
            .chain(self.bulb_semi_axes)
            .all(|v| v.is_finite() && v > 0.0);
        if !positive {
            return Err(Error::DegenerateSpec("radii and lengths must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::DegenerateSpec("noise sigma must be >= 0".into()));
        }
        normalize(self.meatus_normal)?;
        Ok(())
    }

    /// Signed distance of voxel centre `u` from the meatus plane, positive on
    /// the canal side.
    pub fn plane_offset(&self, u: [f64; 3]) -> f64 {
        let n = normalize(self.meatus_normal).expect("validated");
        let p = self.meatus_point;
        dot([u[0] - p[0], u[1] - p[1], u[2] - p[2]], n)
    }
}

/// Tissue type of a voxel before noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tissue {
    Background,
    Intrameatal,
    Extrameatal,
    Wall,
}

fn classify(spec: &PhantomSpec) -> Vec<Tissue> {
    let n = normalize(spec.meatus_normal).expect("validated");
    let [e0, e1, e2] = frame(n);
    let p = spec.meatus_point;
    let a = spec.bulb_semi_axes;
    let centre_t = -BULB_OFFSET * a[0];
    let r2 = spec.canal_radius * spec.canal_radius;
    let [nx, ny, nz] = spec.dims;
    let mut out = Vec::with_capacity(nx * ny * nz);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let d = [x as f64 - p[0], y as f64 - p[1], z as f64 - p[2]];
                let t = dot(d, e0);
                let (s1, s2) = (dot(d, e1), dot(d, e2));
                let radial2 = s1 * s1 + s2 * s2;
                let tissue = if t > 0.0 {
                    if radial2 > r2 {
                        Tissue::Wall
                    } else if t <= spec.canal_length {
                        Tissue::Intrameatal
                    } else {
                        Tissue::Background
                    }
                } else {
                    let q = ((t - centre_t) / a[0]).powi(2) + (s1 / a[1]).powi(2) + (s2 / a[2]).powi(2);
                    if q <= 1.0 {
                        Tissue::Extrameatal
                    } else {
                        Tissue::Background
                    }
                };
                out.push(tissue);
            }
        }
    }
    out
}

/// A generated volume with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomCase {
    pub id: String,
    pub image: ScalarField3D,
    pub labels: LabelField3D,
    pub whole_tumour: LabelField3D,
    pub spec: PhantomSpec,
}

pub fn generate(spec: &PhantomSpec) -> Result<PhantomCase> {
    generate_with_id(spec, format!("case-{:016x}", spec.seed))
}

pub fn generate_with_id(spec: &PhantomSpec, id: String) -> Result<PhantomCase> {
    spec.validate()?;
    let tissue = classify(spec);
    let lv = spec.intensities;
    let noise_key = rng::splitmix64(spec.seed ^ 0x4e4f_4953_45);
    let mut labels = Vec::with_capacity(tissue.len());
    let mut image = Vec::with_capacity(tissue.len());
    for (i, t) in tissue.iter().enumerate() {
        let (label, level) = match t {
            Tissue::Background => (0, lv.background),
            Tissue::Wall => (0, lv.canal_wall),
            Tissue::Intrameatal => (INTRAMEATAL, lv.tumour),
            Tissue::Extrameatal => (EXTRAMEATAL, lv.tumour),
        };
        let noise = if spec.noise_sigma > 0.0 {
            spec.noise_sigma * rng::normal(noise_key, i as u64)
        } else {
            0.0
        };
        labels.push(label);
        // stored at f32 precision so volumes round-trip through files exactly
        image.push((level + noise) as f32 as f64);
    }
    let labels = LabelField3D::from_vec(spec.dims, spec.spacing, labels)?;
    if labels.count(INTRAMEATAL) == 0 || labels.count(EXTRAMEATAL) == 0 {
        return Err(Error::DegenerateSpec(format!(
            "spec {} yields {} intrameatal and {} extrameatal voxels",
            spec.seed,
            labels.count(INTRAMEATAL),
            labels.count(EXTRAMEATAL)
        )));
    }
    Ok(PhantomCase {
        id,
        image: ScalarField3D::from_vec(spec.dims, spec.spacing, image)?,
        whole_tumour: labels.foreground(),
        labels,
        spec: spec.clone(),
    })
}

impl PhantomCase {
    /// The same case with the meatus plane moved `shift` voxels along its
    /// normal. Tumour voxels are relabelled by side; the whole-tumour mask
    /// and the image are unchanged.
    pub fn with_plane_shift(&self, shift: i32) -> Result<PhantomCase> {
        let mut spec = self.spec.clone();
        let n = normalize(spec.meatus_normal)?;
        for a in 0..3 {
            spec.meatus_point[a] += shift as f64 * n[a];
        }
        let labels = LabelField3D::from_fn(self.labels.dims(), self.labels.spacing(), |x, y, z| {
            if *self.whole_tumour.get(x, y, z) == 0 {
                0
            } else if spec.plane_offset([x as f64, y as f64, z as f64]) > 0.0 {
                INTRAMEATAL
            } else {
                EXTRAMEATAL
            }
        })?;
        if labels.count(INTRAMEATAL) == 0 || labels.count(EXTRAMEATAL) == 0 {
            return Err(Error::DegenerateShift(shift));
        }
        Ok(PhantomCase {
            id: self.id.clone(),
            image: self.image.clone(),
            labels,
            whole_tumour: self.whole_tumour.clone(),
            spec,
        })
    }
}

/// Labels of `case` with the split plane translated by `shift` voxels.
pub fn perturb_boundary(case: &PhantomCase, shift: i32) -> Result<LabelField3D> {
    if shift == 0 {
        return Ok(case.labels.clone());
    }
    case.with_plane_shift(shift).map(|c| c.labels)
}

/// Train, validation and test phantoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<PhantomCase>,
    pub val: Vec<PhantomCase>,
    pub test: Vec<PhantomCase>,
}

/// Per-case seeds for the three splits, all distinct, derived from the
/// master seed.
pub fn case_seeds(master_seed: u64, n_train: usize, n_val: usize, n_test: usize) -> [Vec<u64>; 3] {
    let mut seen = std::collections::BTreeSet::new();
    let mut stream = Stream::new(master_seed);
    let mut draw = |k: usize| -> Vec<u64> {
        (0..k)
            .map(|_| loop {
                let s = stream.next_u64();
                if seen.insert(s) {
                    break s;
                }
            })
            .collect()
    };
    [draw(n_train), draw(n_val), draw(n_test)]
}

pub fn make_dataset(
    master_seed: u64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    dist: &PhantomDistribution,
) -> Result<Dataset> {
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidConfig("split sizes must be at least 1".into()));
    }
    let [tr, va, te] = case_seeds(master_seed, n_train, n_val, n_test);
    let build = |prefix: &str, seeds: Vec<u64>| -> Result<Vec<PhantomCase>> {
        seeds
            .into_iter()
            .enumerate()
            .map(|(i, s)| generate_with_id(&PhantomSpec::sample(s, dist), format!("{prefix}-{i:03}")))
            .collect()
    };
    Ok(Dataset {
        train: build("train", tr)?,
        val: build("val", va)?,
        test: build("test", te)?,
    })
}
