//! Single-file NIfTI-1 (`.nii`, optionally gzip-compressed) reading and writing.
//!
//! Supported datatypes are uint8, int16, float32 (and float64 on read). The
//! voxel-to-world affine comes from the sform when `sform_code > 0`, else
//! from the qform; files with neither are rejected. Written files carry the
//! affine in the sform (code 1, scanner) and leave the qform unset.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix4, Quaternion, UnitQuaternion};

use super::{GridGeometry, LabelVolume, ScalarVolume};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

fn format(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Decoded header fields this crate uses.
#[derive(Debug, Clone)]
struct Header {
    dims: [usize; 3],
    datatype: i16,
    pixdim: [f32; 8],
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
    affine: Matrix4<f64>,
}

fn parse_header<B: ByteOrder>(h: &[u8]) -> Result<Header> {
    let i16_at = |o: usize| B::read_i16(&h[o..o + 2]);
    let f32_at = |o: usize| B::read_f32(&h[o..o + 4]);
    if &h[344..347] != b"n+1" {
        return Err(format("not a single-file NIfTI-1 image (magic != n+1)"));
    }
    let dim: Vec<i16> = (0..8).map(|n| i16_at(40 + 2 * n)).collect();
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(format(format!("invalid dim[0] = {ndim}")));
    }
    for (n, &extent) in dim.iter().enumerate().skip(4).take(ndim.max(3) as usize - 3) {
        if extent > 1 {
            return Err(format(format!(
                "dimension {n} has extent {extent}; only 3D volumes are supported"
            )));
        }
    }
    let mut dims = [1usize; 3];
    for a in 0..3 {
        if (a as i16) < ndim {
            let e = dim[a + 1];
            if e < 1 {
                return Err(format(format!("invalid extent {e} on axis {a}")));
            }
            dims[a] = e as usize;
        }
    }
    let mut pixdim = [0f32; 8];
    for (n, p) in pixdim.iter_mut().enumerate() {
        *p = f32_at(76 + 4 * n);
    }
    let datatype = i16_at(70);
    let vox_offset = f32_at(108);
    if !(vox_offset >= HEADER_SIZE as f32) {
        return Err(format(format!("invalid vox_offset {vox_offset}")));
    }
    let qform_code = i16_at(252);
    let sform_code = i16_at(254);
    let affine = if sform_code > 0 {
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for c in 0..4 {
                m[(r, c)] = f64::from(f32_at(280 + 16 * r + 4 * c));
            }
        }
        m
    } else if qform_code > 0 {
        let (b, c, d) = (f64::from(f32_at(256)), f64::from(f32_at(260)), f64::from(f32_at(264)));
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let rot = UnitQuaternion::from_quaternion(Quaternion::new(a, b, c, d)).to_rotation_matrix();
        let qfac = if pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let scale = [
            f64::from(pixdim[1]).abs(),
            f64::from(pixdim[2]).abs(),
            qfac * f64::from(pixdim[3]).abs(),
        ];
        let mut m = Matrix4::identity();
        for r in 0..3 {
            for col in 0..3 {
                m[(r, col)] = rot[(r, col)] * scale[col];
            }
        }
        m[(0, 3)] = f64::from(f32_at(268));
        m[(1, 3)] = f64::from(f32_at(272));
        m[(2, 3)] = f64::from(f32_at(276));
        m
    } else {
        return Err(format("file has neither sform nor qform orientation"));
    };
    Ok(Header {
        dims,
        datatype,
        pixdim,
        vox_offset: vox_offset as usize,
        scl_slope: f32_at(112),
        scl_inter: f32_at(116),
        affine,
    })
}

fn decompress(raw: Vec<u8>) -> Result<Vec<u8>> {
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| format(format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Raw decode into geometry + f64 values (scaled by scl_slope/inter).
fn decode(bytes: &[u8]) -> Result<(GridGeometry, Vec<f64>, i16)> {
    if bytes.len() < HEADER_SIZE {
        return Err(format("file shorter than a NIfTI-1 header"));
    }
    let little = LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32;
    let big = BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32;
    let header = match (little, big) {
        (true, _) => parse_header::<LittleEndian>(&bytes[..HEADER_SIZE])?,
        (_, true) => parse_header::<BigEndian>(&bytes[..HEADER_SIZE])?,
        _ => return Err(format("sizeof_hdr is not 348")),
    };
    let n = header.dims.iter().product::<usize>();
    let width = match header.datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(format(format!("unsupported datatype {other}"))),
    };
    let end = header.vox_offset + n * width;
    if bytes.len() < end {
        return Err(format(format!(
            "truncated voxel data: need {end} bytes, have {}",
            bytes.len()
        )));
    }
    let mut rdr = Cursor::new(&bytes[header.vox_offset..end]);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let v = match (header.datatype, little) {
            (DT_UINT8, _) => f64::from(rdr.read_u8()?),
            (DT_INT16, true) => f64::from(rdr.read_i16::<LittleEndian>()?),
            (DT_INT16, false) => f64::from(rdr.read_i16::<BigEndian>()?),
            (DT_FLOAT32, true) => f64::from(rdr.read_f32::<LittleEndian>()?),
            (DT_FLOAT32, false) => f64::from(rdr.read_f32::<BigEndian>()?),
            (DT_FLOAT64, true) => rdr.read_f64::<LittleEndian>()?,
            (_, _) => rdr.read_f64::<BigEndian>()?,
        };
        values.push(v);
    }
    let slope = f64::from(header.scl_slope);
    if slope != 0.0 && slope.is_finite() && (slope != 1.0 || header.scl_inter != 0.0) {
        let inter = f64::from(header.scl_inter);
        for v in &mut values {
            *v = *v * slope + inter;
        }
    }
    let mut spacing = [0.0; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let p = f64::from(header.pixdim[a + 1]).abs();
        *s = if p > 0.0 {
            p
        } else {
            header.affine.fixed_view::<3, 1>(0, a).norm()
        };
    }
    let geometry =
        GridGeometry::new(header.dims, spacing, header.affine).map_err(|e| format(format!("invalid geometry: {e}")))?;
    Ok((geometry, values, header.datatype))
}

pub fn decode_scalar(bytes: &[u8]) -> Result<ScalarVolume> {
    let (g, values, _) = decode(&decompress(bytes.to_vec())?)?;
    ScalarVolume::new(g, values).map_err(|e| format(e.to_string()))
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelVolume> {
    let (g, values, _) = decode(&decompress(bytes.to_vec())?)?;
    let mut labels = Vec::with_capacity(values.len());
    for v in values {
        if v < 0.0 || v > f64::from(u16::MAX) || v.fract() != 0.0 {
            return Err(format(format!("label value {v} is not a non-negative integer")));
        }
        labels.push(v as u16);
    }
    LabelVolume::new(g, labels)
}

pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    decode_scalar(&fs::read(path)?)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    decode_labels(&fs::read(path)?)
}

fn header_bytes(g: &GridGeometry, datatype: i16, bitpix: i16) -> Vec<u8> {
    let mut h = vec![0u8; VOX_OFFSET];
    LittleEndian::write_i32(&mut h[0..4], HEADER_SIZE as i32);
    h[38] = b'r';
    let d = g.dims();
    let dim = [3i16, d[0] as i16, d[1] as i16, d[2] as i16, 1, 1, 1, 1];
    for (n, v) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[40 + 2 * n..42 + 2 * n], *v);
    }
    LittleEndian::write_i16(&mut h[70..72], datatype);
    LittleEndian::write_i16(&mut h[72..74], bitpix);
    let s = g.spacing();
    let pixdim = [1.0f32, s[0] as f32, s[1] as f32, s[2] as f32, 0.0, 0.0, 0.0, 0.0];
    for (n, v) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[76 + 4 * n..80 + 4 * n], *v);
    }
    LittleEndian::write_f32(&mut h[108..112], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[112..116], 1.0);
    h[123] = 2; // xyzt_units: mm
    LittleEndian::write_i16(&mut h[254..256], 1);
    let a = g.affine();
    for r in 0..3 {
        for c in 0..4 {
            let o = 280 + 16 * r + 4 * c;
            LittleEndian::write_f32(&mut h[o..o + 4], a[(r, c)] as f32);
        }
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

pub fn encode_scalar(vol: &ScalarVolume) -> Vec<u8> {
    let mut out = header_bytes(vol.geometry(), DT_FLOAT32, 32);
    out.reserve(vol.data().len() * 4);
    for &v in vol.data() {
        out.write_f32::<LittleEndian>(v as f32).expect("write to Vec");
    }
    out
}

/// Labels are stored as uint8 when they fit, int16 otherwise.
pub fn encode_labels(vol: &LabelVolume) -> Result<Vec<u8>> {
    let max = vol.data().iter().copied().max().unwrap_or(0);
    if max > i16::MAX as u16 {
        return Err(Error::InvalidInput(format!("label {max} does not fit in int16")));
    }
    let small = max <= u8::MAX as u16;
    let (dt, bp) = if small { (DT_UINT8, 8) } else { (DT_INT16, 16) };
    let mut out = header_bytes(vol.geometry(), dt, bp);
    for &v in vol.data() {
        if small {
            out.push(v as u8);
        } else {
            out.write_i16::<LittleEndian>(v as i16).expect("write to Vec");
        }
    }
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let gz = path.extension().is_some_and(|e| e == "gz");
    if gz {
        // no mtime or filename in the gzip header
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes)?;
        fs::write(path, enc.finish()?)?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

pub fn write_scalar(path: impl AsRef<Path>, vol: &ScalarVolume) -> Result<()> {
    write_bytes(path.as_ref(), &encode_scalar(vol))
}

pub fn write_labels(path: impl AsRef<Path>, vol: &LabelVolume) -> Result<()> {
    write_bytes(path.as_ref(), &encode_labels(vol)?)
}
