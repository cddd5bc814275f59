//! Minimal uncompressed NIfTI-1 reader (single 3D volume).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fields::{voxel_count, LabelField3D, ScalarField3D};

use super::volume::Volume;

pub const HEADER_LEN: usize = 348;

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct NiftiHeader {
    pub dims: [usize; 3],
    pub datatype: i16,
    pub pixdim: [f64; 3],
    pub vox_offset: usize,
    pub scl_slope: f64,
    pub scl_inter: f64,
    /// `true` for "n+1" (data in the same file), `false` for "ni1".
    pub single_file: bool,
    pub little_endian: bool,
}

struct Reader<'a> {
    b: &'a [u8],
    le: bool,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, at: usize) -> [u8; N] {
        let mut a = [0; N];
        a.copy_from_slice(&self.b[at..at + N]);
        a
    }
    fn i16(&self, at: usize) -> i16 {
        let a = self.bytes(at);
        if self.le { i16::from_le_bytes(a) } else { i16::from_be_bytes(a) }
    }
    fn f32(&self, at: usize) -> f32 {
        let a = self.bytes(at);
        if self.le { f32::from_le_bytes(a) } else { f32::from_be_bytes(a) }
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<NiftiHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("NIfTI header needs {HEADER_LEN} bytes, got {}", bytes.len())));
    }
    let single_file = match &bytes[344..348] {
        b"n+1\0" => true,
        b"ni1\0" => false,
        m => return Err(Error::Format(format!("bad NIfTI magic {m:?}"))),
    };
    let le = match bytes[0..4].try_into().map(i32::from_le_bytes) {
        Ok(348) => true,
        _ if i32::from_be_bytes(bytes[0..4].try_into().unwrap()) == 348 => false,
        _ => return Err(Error::Format("sizeof_hdr is not 348".into())),
    };
    let r = Reader { b: bytes, le };
    let ndim = r.i16(40);
    let dim: Vec<i16> = (1..=7).map(|k| r.i16(40 + 2 * k)).collect();
    let extra_ok = (3..ndim.clamp(3, 7) as usize).all(|k| dim[k] == 1);
    if !(1..=7).contains(&ndim) || !extra_ok {
        return Err(Error::Unsupported(format!("only single 3D volumes are read (dim = {ndim} {dim:?})")));
    }
    let mut dims = [1usize; 3];
    for (k, d) in dims.iter_mut().enumerate().take(ndim.min(3) as usize) {
        if dim[k] < 1 {
            return Err(Error::Format(format!("non-positive dimension {}", dim[k])));
        }
        *d = dim[k] as usize;
    }
    let datatype = r.i16(70);
    if ![DT_UINT8, DT_INT16, DT_FLOAT32].contains(&datatype) {
        return Err(Error::Unsupported(format!("NIfTI datatype {datatype}")));
    }
    let mut pixdim = [1.0; 3];
    for (k, p) in pixdim.iter_mut().enumerate() {
        let v = f64::from(r.f32(80 + 4 * k)).abs();
        // unset pixdim means unit spacing
        if v > 0.0 && v.is_finite() {
            *p = v;
        }
    }
    let off = r.f32(108);
    if !(off.is_finite() && off >= 0.0) {
        return Err(Error::Format(format!("bad vox_offset {off}")));
    }
    Ok(NiftiHeader {
        dims,
        datatype,
        pixdim,
        vox_offset: off as usize,
        scl_slope: f64::from(r.f32(112)),
        scl_inter: f64::from(r.f32(116)),
        single_file,
        little_endian: le,
    })
}

fn decode_data(h: &NiftiHeader, data: &[u8]) -> Result<Volume> {
    let n = voxel_count(h.dims);
    let size = match h.datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        _ => 4,
    };
    if data.len() < n * size {
        return Err(Error::Format(format!("NIfTI payload has {} bytes, need {}", data.len(), n * size)));
    }
    let data = &data[..n * size];
    let bad = |e: Error| Error::Format(e.to_string());
    if h.datatype == DT_UINT8 {
        return Ok(Volume::Labels(LabelField3D::from_vec(h.dims, h.pixdim, data.to_vec()).map_err(bad)?));
    }
    let r = Reader { b: data, le: h.little_endian };
    let raw: Vec<f64> = if h.datatype == DT_INT16 {
        (0..n).map(|i| f64::from(f32::from(r.i16(2 * i)))).collect()
    } else {
        (0..n).map(|i| f64::from(r.f32(4 * i))).collect()
    };
    let scaled = if h.scl_slope != 0.0 && h.scl_slope.is_finite() && (h.scl_slope, h.scl_inter) != (1.0, 0.0) {
        raw.into_iter().map(|v| v * h.scl_slope + h.scl_inter).collect()
    } else {
        raw
    };
    Ok(Volume::Scalar(ScalarField3D::from_vec(h.dims, h.pixdim, scaled).map_err(bad)?))
}

/// The data file paired with a two-file ("ni1") header.
pub fn image_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("img")
}

/// Reads a `.nii` file, or a `.hdr` with its `.img` sibling. `u8` data
/// becomes a label field; `i16` and `f32` become scalar fields.
pub fn read_nifti1(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let h = parse_header(&bytes)?;
    if h.single_file {
        if h.vox_offset < HEADER_LEN || h.vox_offset > bytes.len() {
            return Err(Error::Format(format!("vox_offset {} outside the file", h.vox_offset)));
        }
        decode_data(&h, &bytes[h.vox_offset..])
    } else {
        let img = image_path(path);
        let data = fs::read(&img).map_err(|e| Error::io(&img, e))?;
        if h.vox_offset > data.len() {
            return Err(Error::Format(format!("vox_offset {} outside the image file", h.vox_offset)));
        }
        decode_data(&h, &data[h.vox_offset..])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(datatype: i16, dims: [i16; 3], magic: &[u8; 4]) -> Vec<u8> {
        let mut b = vec![0u8; 352];
        b[0..4].copy_from_slice(&348i32.to_le_bytes());
        b[40..42].copy_from_slice(&3i16.to_le_bytes());
        for (k, d) in dims.iter().enumerate() {
            b[42 + 2 * k..44 + 2 * k].copy_from_slice(&d.to_le_bytes());
        }
        b[70..72].copy_from_slice(&datatype.to_le_bytes());
        for k in 0..3 {
            b[80 + 4 * k..84 + 4 * k].copy_from_slice(&(k as f32 + 1.0).to_le_bytes());
        }
        b[108..112].copy_from_slice(&352f32.to_le_bytes());
        b[344..348].copy_from_slice(magic);
        b
    }

    #[test]
    fn reads_int16_widened() {
        let mut b = header(DT_INT16, [2, 1, 2], b"n+1\0");
        for v in [-3i16, 0, 7, 300] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let h = parse_header(&b).unwrap();
        assert_eq!(h.pixdim, [1.0, 2.0, 3.0]);
        match decode_data(&h, &b[352..]).unwrap() {
            Volume::Scalar(f) => assert_eq!(f.data(), &[-3.0, 0.0, 7.0, 300.0]),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn big_endian_headers_are_detected() {
        let mut b = vec![0u8; 348];
        b[0..4].copy_from_slice(&348i32.to_be_bytes());
        b[40..42].copy_from_slice(&3i16.to_be_bytes());
        for k in 0..3 {
            b[42 + 2 * k..44 + 2 * k].copy_from_slice(&2i16.to_be_bytes());
        }
        b[70..72].copy_from_slice(&DT_FLOAT32.to_be_bytes());
        b[344..348].copy_from_slice(b"ni1\0");
        let h = parse_header(&b).unwrap();
        assert!(!h.little_endian && !h.single_file);
        assert_eq!(h.dims, [2, 2, 2]);
    }

    #[test]
    fn rejections() {
        assert!(matches!(parse_header(&header(DT_FLOAT32, [2, 2, 2], b"abc\0")), Err(Error::Format(_))));
        assert!(matches!(parse_header(&header(64, [2, 2, 2], b"n+1\0")), Err(Error::Unsupported(_))));
        assert!(matches!(parse_header(&[0u8; 100]), Err(Error::Format(_))));
        let mut four_d = header(DT_FLOAT32, [2, 2, 2], b"n+1\0");
        four_d[40..42].copy_from_slice(&4i16.to_le_bytes());
        four_d[48..50].copy_from_slice(&3i16.to_le_bytes());
        assert!(matches!(parse_header(&four_d), Err(Error::Unsupported(_))));
        let h = parse_header(&header(DT_FLOAT32, [2, 2, 2], b"n+1\0")).unwrap();
        assert!(matches!(decode_data(&h, &[0u8; 31]), Err(Error::Format(_))));
    }
}
