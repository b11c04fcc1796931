//! Single-file NIfTI-1 (`.nii`) subset: little-endian, 3D, datatypes uint8,
//! int16, float32 and float64.

use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{Geometry, Volume, MAX_AXIS_LEN};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte (empty) extension flag.
pub const DEFAULT_VOX_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    Uint8,
    Int16,
    Float32,
    Float64,
}

impl Datatype {
    pub fn code(self) -> i16 {
        match self {
            Datatype::Uint8 => 2,
            Datatype::Int16 => 4,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::Uint8),
            4 => Ok(Datatype::Int16),
            16 => Ok(Datatype::Float32),
            64 => Ok(Datatype::Float64),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            Datatype::Uint8 => 1,
            Datatype::Int16 => 2,
            Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }
}

/// The header fields this crate reads and writes.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeaderSubset {
    pub dims: [usize; 3],
    pub datatype: Datatype,
    pub pixdim: [f32; 3],
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub vox_offset: usize,
    pub geometry: Geometry,
}

fn rd_i16(b: &[u8], at: usize) -> i16 {
    i16::from_le_bytes([b[at], b[at + 1]])
}

fn rd_i32(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn rd_f32(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn wr(b: &mut [u8], at: usize, bytes: &[u8]) {
    b[at..at + bytes.len()].copy_from_slice(bytes);
}

impl NiftiHeaderSubset {
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Truncated {
                expected: HEADER_SIZE,
                found: bytes.len(),
            });
        }
        let sizeof_hdr = rd_i32(bytes, 0);
        if sizeof_hdr != HEADER_SIZE as i32 {
            if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
                return Err(Error::Header("big-endian NIfTI files are not supported".into()));
            }
            return Err(Error::Header(format!("sizeof_hdr is {sizeof_hdr}, expected 348")));
        }
        if bytes[344..348] != MAGIC {
            return Err(Error::BadMagic {
                kind: "NIfTI-1",
                found: bytes[344..348].to_vec(),
            });
        }
        let ndim = rd_i16(bytes, 40);
        if !(1..=7).contains(&ndim) {
            return Err(Error::Header(format!("dim[0] = {ndim} outside 1..=7")));
        }
        let mut dims = [1usize; 3];
        for d in 1..=ndim as usize {
            let v = rd_i16(bytes, 40 + 2 * d);
            if v < 1 || v as usize > MAX_AXIS_LEN {
                return Err(Error::Header(format!("dim[{d}] = {v} outside 1..={MAX_AXIS_LEN}")));
            }
            if d <= 3 {
                dims[d - 1] = v as usize;
            } else if v != 1 {
                return Err(Error::Header(format!("only 3D volumes are supported, dim[{d}] = {v}")));
            }
        }
        let datatype = Datatype::from_code(rd_i16(bytes, 70))?;
        let pixdim = [rd_f32(bytes, 80), rd_f32(bytes, 84), rd_f32(bytes, 88)];
        let vox_offset = rd_f32(bytes, 108);
        if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 || vox_offset > 1e9 {
            return Err(Error::Header(format!("vox_offset {vox_offset} is not a valid data offset")));
        }
        let srow = |at: usize| [rd_f32(bytes, at), rd_f32(bytes, at + 4), rd_f32(bytes, at + 8), rd_f32(bytes, at + 12)];
        Ok(Self {
            dims,
            datatype,
            pixdim,
            scl_slope: rd_f32(bytes, 112),
            scl_inter: rd_f32(bytes, 116),
            vox_offset: vox_offset as usize,
            geometry: Geometry {
                qform_code: rd_i16(bytes, 252),
                sform_code: rd_i16(bytes, 254),
                qfac: rd_f32(bytes, 76),
                quatern: [rd_f32(bytes, 256), rd_f32(bytes, 260), rd_f32(bytes, 264)],
                qoffset: [rd_f32(bytes, 268), rd_f32(bytes, 272), rd_f32(bytes, 276)],
                srow: [srow(280), srow(296), srow(312)],
            },
        })
    }

    pub fn encode(&self) -> [u8; HEADER_SIZE] {
        let mut b = [0u8; HEADER_SIZE];
        wr(&mut b, 0, &(HEADER_SIZE as i32).to_le_bytes());
        b[38] = b'r';
        wr(&mut b, 40, &3i16.to_le_bytes());
        for (d, &n) in self.dims.iter().enumerate() {
            wr(&mut b, 42 + 2 * d, &(n as i16).to_le_bytes());
        }
        for d in 4..8 {
            wr(&mut b, 40 + 2 * d, &1i16.to_le_bytes());
        }
        wr(&mut b, 70, &self.datatype.code().to_le_bytes());
        wr(&mut b, 72, &((8 * self.datatype.bytes()) as i16).to_le_bytes());
        let qfac = if self.geometry.qfac == 0.0 { 1.0 } else { self.geometry.qfac };
        wr(&mut b, 76, &qfac.to_le_bytes());
        for (d, &p) in self.pixdim.iter().enumerate() {
            wr(&mut b, 80 + 4 * d, &p.to_le_bytes());
        }
        wr(&mut b, 108, &(self.vox_offset as f32).to_le_bytes());
        wr(&mut b, 112, &self.scl_slope.to_le_bytes());
        wr(&mut b, 116, &self.scl_inter.to_le_bytes());
        b[123] = 2; // millimetres
        wr(&mut b, 148, b"flexconn");
        let g = &self.geometry;
        wr(&mut b, 252, &g.qform_code.to_le_bytes());
        wr(&mut b, 254, &g.sform_code.to_le_bytes());
        for (i, v) in g.quatern.iter().chain(&g.qoffset).enumerate() {
            wr(&mut b, 256 + 4 * i, &v.to_le_bytes());
        }
        for (r, row) in g.srow.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                wr(&mut b, 280 + 16 * r + 4 * c, &v.to_le_bytes());
            }
        }
        wr(&mut b, 344, &MAGIC);
        b
    }
}

/// Decodes a complete `.nii` byte image.
pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    let header = NiftiHeaderSubset::decode(bytes)?;
    let n: usize = header.dims.iter().product();
    let size = header.datatype.bytes();
    let expected = header.vox_offset + n * size;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[header.vox_offset..expected];
    let mut data: Vec<f32> = match header.datatype {
        Datatype::Uint8 => payload.iter().map(|&v| v as f32).collect(),
        Datatype::Int16 => payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32)
            .collect(),
        Datatype::Float32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect(),
        Datatype::Float64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")) as f32)
            .collect(),
    };
    let (slope, inter) = (header.scl_slope, header.scl_inter);
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope != 1.0 || inter != 0.0) {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    let spacing = header
        .pixdim
        .map(|p| if p.is_finite() && p != 0.0 { p.abs() as f64 } else { 1.0 });
    let mut vol = Volume::new(header.dims, spacing, data)?;
    vol.geometry = Some(header.geometry);
    Ok(vol)
}

/// Encodes `volume` with the given on-disk datatype. Integer types round to
/// nearest and saturate.
pub fn encode_volume(volume: &Volume, datatype: Datatype) -> Vec<u8> {
    let header = NiftiHeaderSubset {
        dims: volume.dims(),
        datatype,
        pixdim: volume.spacing().map(|s| s as f32),
        scl_slope: 1.0,
        scl_inter: 0.0,
        vox_offset: DEFAULT_VOX_OFFSET,
        geometry: volume.geometry.unwrap_or_default(),
    };
    let mut out = Vec::with_capacity(DEFAULT_VOX_OFFSET + volume.len() * datatype.bytes());
    out.extend_from_slice(&header.encode());
    out.extend_from_slice(&[0u8; DEFAULT_VOX_OFFSET - HEADER_SIZE]);
    for &v in volume.data() {
        match datatype {
            Datatype::Uint8 => out.push(v.round().clamp(0.0, 255.0) as u8),
            Datatype::Int16 => out.extend_from_slice(&(v.round().clamp(-32768.0, 32767.0) as i16).to_le_bytes()),
            Datatype::Float32 => out.extend_from_slice(&v.to_le_bytes()),
            Datatype::Float64 => out.extend_from_slice(&(v as f64).to_le_bytes()),
        }
    }
    out
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        return Err(Error::Header(format!(
            "{} is gzip-compressed; decompress it first",
            path.display()
        )));
    }
    decode_volume(&bytes)
}

pub fn write_volume(volume: &Volume, datatype: Datatype, path: &Path) -> Result<()> {
    std::fs::write(path, encode_volume(volume, datatype)).map_err(|e| Error::io(path, e))
}
