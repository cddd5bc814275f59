//! Grid types shared by every module.
//!
//! All volumes use the same memory layout: `dims = [nx, ny, nz]` and the
//! voxel `(x, y, z)` lives at `x + nx * (y + ny * z)` (x fastest).

use crate::error::{Error, Result};

pub type Dims = [usize; 3];
pub type Spacing = [f64; 3];

pub const UNIT_SPACING: Spacing = [1.0, 1.0, 1.0];

#[inline]
pub fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

#[inline]
pub fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
pub fn coords(dims: Dims, index: usize) -> [usize; 3] {
    let x = index % dims[0];
    let yz = index / dims[0];
    [x, yz % dims[1], yz / dims[1]]
}

/// Distance between consecutive elements along `axis` in the flat layout.
#[inline]
pub fn axis_stride(dims: Dims, axis: usize) -> usize {
    match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    }
}

fn check_geometry(dims: Dims, spacing: Spacing, len: usize) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidField(format!("dims must be positive, got {dims:?}")));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidField(format!(
            "spacing must be finite and positive, got {spacing:?}"
        )));
    }
    if len != voxel_count(dims) {
        return Err(Error::InvalidField(format!(
            "data length {len} does not match dims {dims:?}"
        )));
    }
    Ok(())
}

/// A dense 3D grid with physical voxel spacing in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid3<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

/// Real-valued volume (images, distance maps, probability channels).
pub type ScalarField3D = Grid3<f64>;

/// One class id per voxel. Binary masks use the values 0 and 1.
pub type LabelField3D = Grid3<u8>;

impl<T> Grid3<T> {
    pub fn from_vec(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        check_geometry(dims, spacing, data.len())?;
        Ok(Self { dims, spacing, data })
    }

    pub fn from_fn(dims: Dims, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        check_geometry(dims, spacing, voxel_count(dims))?;
        let mut data = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Ok(Self { dims, spacing, data })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        linear_index(self.dims, x, y, z)
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn same_shape<U>(&self, other: &Grid3<U>) -> bool {
        self.dims == other.dims
    }

    pub fn ensure_same_shape<U>(&self, other: &Grid3<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims, other.dims
            )))
        }
    }

    /// Applies `f` voxelwise, keeping geometry.
    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid3<U> {
        Grid3 {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self> {
        check_geometry(self.dims, spacing, self.data.len())?;
        self.spacing = spacing;
        Ok(self)
    }
}

impl<T: Clone> Grid3<T> {
    pub fn filled(dims: Dims, spacing: Spacing, value: T) -> Result<Self> {
        check_geometry(dims, spacing, voxel_count(dims))?;
        Ok(Self {
            dims,
            spacing,
            data: vec![value; voxel_count(dims)],
        })
    }
}

impl LabelField3D {
    /// Checks every label is below `num_classes`.
    pub fn validate_labels(&self, num_classes: usize) -> Result<()> {
        match self.data.iter().position(|&l| l as usize >= num_classes) {
            Some(index) => Err(Error::InvalidLabel {
                label: self.data[index],
                index,
                num_classes,
            }),
            None => Ok(()),
        }
    }

    /// Binary mask of voxels equal to `class`.
    pub fn class_mask(&self, class: u8) -> LabelField3D {
        self.map(|&l| u8::from(l == class))
    }

    /// Binary mask of voxels with a non-zero label.
    pub fn foreground(&self) -> LabelField3D {
        self.map(|&l| u8::from(l != 0))
    }

    pub fn count(&self, class: u8) -> usize {
        self.data.iter().filter(|&&l| l == class).count()
    }
}

/// A stack of `C` real channels over one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStack {
    dims: Dims,
    spacing: Spacing,
    channels: Vec<Vec<f64>>,
}

impl ChannelStack {
    pub fn new(dims: Dims, spacing: Spacing, channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidField("channel stack needs at least one channel".into()));
        }
        for ch in &channels {
            check_geometry(dims, spacing, ch.len())?;
        }
        Ok(Self {
            dims,
            spacing,
            channels,
        })
    }

    pub fn zeros(dims: Dims, spacing: Spacing, num_channels: usize) -> Result<Self> {
        Self::new(dims, spacing, vec![vec![0.0; voxel_count(dims)]; num_channels])
    }

    pub fn from_fields(fields: &[ScalarField3D]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::InvalidField("no channels given".into()))?;
        for f in fields {
            first.ensure_same_shape(f, "channel")?;
        }
        Self::new(
            first.dims(),
            first.spacing(),
            fields.iter().map(|f| f.data().to_vec()).collect(),
        )
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn num_voxels(&self) -> usize {
        voxel_count(self.dims)
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel_field(&self, c: usize) -> ScalarField3D {
        Grid3 {
            dims: self.dims,
            spacing: self.spacing,
            data: self.channels[c].clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.channels.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &ChannelStack) -> f64 {
        self.channels
            .iter()
            .flatten()
            .zip(other.channels.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Pre-softmax scores, the variable the losses differentiate against.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitField(pub ChannelStack);

/// Per-voxel class probabilities (each voxel is a point on the simplex).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityField(pub ChannelStack);

impl std::ops::Deref for LogitField {
    type Target = ChannelStack;
    fn deref(&self) -> &ChannelStack {
        &self.0
    }
}

impl std::ops::DerefMut for LogitField {
    fn deref_mut(&mut self) -> &mut ChannelStack {
        &mut self.0
    }
}

impl std::ops::Deref for ProbabilityField {
    type Target = ChannelStack;
    fn deref(&self) -> &ChannelStack {
        &self.0
    }
}

impl LogitField {
    pub fn new(dims: Dims, spacing: Spacing, channels: Vec<Vec<f64>>) -> Result<Self> {
        let stack = ChannelStack::new(dims, spacing, channels)?;
        if !stack.all_finite() {
            return Err(Error::InvalidField("logits must be finite".into()));
        }
        Ok(Self(stack))
    }

    pub fn zeros(dims: Dims, spacing: Spacing, num_classes: usize) -> Result<Self> {
        Ok(Self(ChannelStack::zeros(dims, spacing, num_classes)?))
    }

    pub fn num_classes(&self) -> usize {
        self.0.num_channels()
    }
}

impl ProbabilityField {
    /// Wraps channels after checking the per-voxel simplex constraint.
    pub fn new(stack: ChannelStack) -> Result<Self> {
        let n = stack.num_voxels();
        for i in 0..n {
            let mut sum = 0.0;
            for ch in stack.channels() {
                let p = ch[i];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidField(format!("probability {p} at voxel {i}")));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidField(format!("channels sum to {sum} at voxel {i}")));
            }
        }
        Ok(Self(stack))
    }

    pub fn num_classes(&self) -> usize {
        self.0.num_channels()
    }
}

/// Numerically stable per-voxel softmax.
pub fn softmax(logits: &LogitField) -> Result<ProbabilityField> {
    if !logits.all_finite() {
        return Err(Error::InvalidField("logits must be finite".into()));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &LogitField) -> ProbabilityField {
    let mut out = vec![vec![0.0; logits.num_voxels()]; logits.num_classes()];
    softmax_into(logits.channels(), &mut out);
    ProbabilityField(ChannelStack {
        dims: logits.dims(),
        spacing: logits.spacing(),
        channels: out,
    })
}

/// Softmax of channel-major logits into preallocated channels of equal shape.
pub(crate) fn softmax_into(z: &[Vec<f64>], out: &mut [Vec<f64>]) {
    let c = z.len();
    let n = z[0].len();
    let mut buf = vec![0.0; c];
    for i in 0..n {
        let mut max = f64::NEG_INFINITY;
        for (b, zk) in buf.iter_mut().zip(z) {
            *b = zk[i];
            max = max.max(*b);
        }
        let mut sum = 0.0;
        for b in buf.iter_mut() {
            *b = (*b - max).exp();
            sum += *b;
        }
        for (b, ok) in buf.iter().zip(out.iter_mut()) {
            ok[i] = b / sum;
        }
    }
}

pub fn one_hot(labels: &LabelField3D, num_classes: usize) -> Result<ProbabilityField> {
    labels.validate_labels(num_classes)?;
    let mut channels = vec![vec![0.0; labels.len()]; num_classes];
    for (i, &l) in labels.data().iter().enumerate() {
        channels[l as usize][i] = 1.0;
    }
    Ok(ProbabilityField(ChannelStack::new(
        labels.dims(),
        labels.spacing(),
        channels,
    )?))
}

/// Per-voxel index of the largest channel; ties go to the lowest index.
pub fn argmax_labels(prob: &ChannelStack) -> LabelField3D {
    let n = prob.num_voxels();
    let mut data = vec![0u8; n];
    for (i, out) in data.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_val = prob.channel(0)[i];
        for k in 1..prob.num_channels() {
            let v = prob.channel(k)[i];
            if v > best_val {
                best = k;
                best_val = v;
            }
        }
        *out = best as u8;
    }
    Grid3 {
        dims: prob.dims(),
        spacing: prob.spacing(),
        data,
    }
}
