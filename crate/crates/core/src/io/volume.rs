//! `BDLV1` volumes: one line of JSON header, then a raw little-endian payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{voxel_count, Dims, LabelField3D, ScalarField3D, Spacing};

pub const MAGIC: &str = "BDLV1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeFileHeader {
    pub magic: String,
    pub dtype: Dtype,
    pub dims: Dims,
    pub spacing: Spacing,
    pub byte_order: String,
}

impl VolumeFileHeader {
    pub fn new(dtype: Dtype, dims: Dims, spacing: Spacing) -> Self {
        Self {
            magic: MAGIC.into(),
            dtype,
            dims,
            spacing,
            byte_order: "le".into(),
        }
    }

    pub fn payload_len(&self) -> usize {
        voxel_count(self.dims) * self.dtype.size()
    }
}

/// A decoded volume of either dtype.
#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Scalar(ScalarField3D),
    Labels(LabelField3D),
}

pub fn encode_scalar(field: &ScalarField3D) -> Vec<u8> {
    let header = VolumeFileHeader::new(Dtype::F32, field.dims(), field.spacing());
    let mut out = header_line(&header);
    for &v in field.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn encode_labels(field: &LabelField3D) -> Vec<u8> {
    let header = VolumeFileHeader::new(Dtype::U8, field.dims(), field.spacing());
    let mut out = header_line(&header);
    out.extend_from_slice(field.data());
    out
}

fn header_line(h: &VolumeFileHeader) -> Vec<u8> {
    let mut line = serde_json::to_vec(h).expect("header serializes");
    line.push(b'\n');
    line
}

pub fn decode(bytes: &[u8]) -> Result<Volume> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let header: VolumeFileHeader =
        serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.magic != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", header.magic)));
    }
    if header.byte_order != "le" {
        return Err(Error::Format(format!("unsupported byte order {:?}", header.byte_order)));
    }
    let payload = &bytes[nl + 1..];
    if payload.len() != header.payload_len() {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {}",
            payload.len(),
            header.payload_len()
        )));
    }
    let bad = |e: Error| Error::Format(e.to_string());
    Ok(match header.dtype {
        Dtype::F32 => {
            let data = payload
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            Volume::Scalar(ScalarField3D::from_vec(header.dims, header.spacing, data).map_err(bad)?)
        }
        Dtype::U8 => Volume::Labels(LabelField3D::from_vec(header.dims, header.spacing, payload.to_vec()).map_err(bad)?),
    })
}

/// Writes `f32` samples; values outside `f32` precision are rounded.
pub fn write_scalar(field: &ScalarField3D, path: &Path) -> Result<()> {
    fs::write(path, encode_scalar(field)).map_err(|e| Error::io(path, e))
}

pub fn write_labels(field: &LabelField3D, path: &Path) -> Result<()> {
    fs::write(path, encode_labels(field)).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn read_scalar(path: &Path) -> Result<ScalarField3D> {
    match read_volume(path)? {
        Volume::Scalar(f) => Ok(f),
        Volume::Labels(_) => Err(Error::Format(format!("{}: expected f32 volume", path.display()))),
    }
}

pub fn read_labels(path: &Path) -> Result<LabelField3D> {
    match read_volume(path)? {
        Volume::Labels(f) => Ok(f),
        Volume::Scalar(_) => Err(Error::Format(format!("{}: expected u8 volume", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar() -> ScalarField3D {
        ScalarField3D::from_fn([3, 4, 2], [1.0, 0.5, 2.5], |x, y, z| f64::from((x as f32 - 1.3) * (y * z) as f32 + 0.1)).unwrap()
    }

    #[test]
    fn header_is_one_json_line() {
        let bytes = encode_scalar(&scalar());
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let v: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        assert_eq!(v["magic"], "BDLV1");
        assert_eq!(v["dtype"], "f32");
        assert_eq!(v["byte_order"], "le");
        assert_eq!(bytes.len() - nl - 1, 24 * 4);
    }

    #[test]
    fn f32_values_round_trip_exactly() {
        let f = scalar();
        assert_eq!(decode(&encode_scalar(&f)).unwrap(), Volume::Scalar(f));
    }

    #[test]
    fn labels_round_trip() {
        let l = LabelField3D::from_fn([2, 3, 4], [1.0; 3], |x, y, z| ((x + y + z) % 3) as u8).unwrap();
        assert_eq!(decode(&encode_labels(&l)).unwrap(), Volume::Labels(l));
    }

    #[test]
    fn malformed_inputs_are_format_errors() {
        let good = encode_scalar(&scalar());
        let short = &good[..good.len() - 1];
        let mut long = good.clone();
        long.push(0);
        let mut magic = good.clone();
        magic[10] = b'X';
        for bytes in [short, &long[..], &magic[..], b"no newline", b"{}\n", b"\n"] {
            assert!(matches!(decode(bytes), Err(Error::Format(_))), "{:?}", String::from_utf8_lossy(&bytes[..bytes.len().min(40)]));
        }
    }

    #[test]
    fn zero_dims_and_bad_spacing_are_rejected() {
        let mut h = VolumeFileHeader::new(Dtype::U8, [0, 1, 1], [1.0; 3]);
        assert!(decode(&header_line(&h)).is_err());
        h.dims = [1, 1, 1];
        h.spacing = [1.0, -1.0, 1.0];
        let mut b = header_line(&h);
        b.push(0);
        assert!(matches!(decode(&b), Err(Error::Format(_))));
    }
}
