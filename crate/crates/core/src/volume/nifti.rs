//! Single-file NIfTI-1 (`.nii`, `.nii.gz`) reader and writer.
//!
//! Geometry is resolved sform first, then qform, then the pixdim diagonal.
//! Files are always written little-endian with a 352-byte data offset,
//! the grid affine stored as sform (code 2) and no extensions.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix3, Matrix4};

use super::{Volume, VoxelGrid};
use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
const NIFTI2_HEADER_SIZE: i32 = 540;
const VOX_OFFSET: usize = 352;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_INT32: i16 = 8;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;
pub const DT_UINT16: i16 = 512;

/// Voxel payload in its on-disk type.
#[derive(Debug, Clone, PartialEq)]
pub enum NiftiData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    U16(Vec<u16>),
    I32(Vec<i32>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl NiftiData {
    pub fn datatype(&self) -> i16 {
        match self {
            NiftiData::U8(_) => DT_UINT8,
            NiftiData::I16(_) => DT_INT16,
            NiftiData::U16(_) => DT_UINT16,
            NiftiData::I32(_) => DT_INT32,
            NiftiData::F32(_) => DT_FLOAT32,
            NiftiData::F64(_) => DT_FLOAT64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NiftiData::U8(v) => v.len(),
            NiftiData::I16(v) => v.len(),
            NiftiData::U16(v) => v.len(),
            NiftiData::I32(v) => v.len(),
            NiftiData::F32(v) => v.len(),
            NiftiData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn bytes_per_voxel(datatype: i16) -> Option<usize> {
        Some(match datatype {
            DT_UINT8 => 1,
            DT_INT16 | DT_UINT16 => 2,
            DT_INT32 | DT_FLOAT32 => 4,
            DT_FLOAT64 => 8,
            _ => return None,
        })
    }

    /// Raw stored values, before any header scaling.
    pub fn values_f64(&self) -> Vec<f64> {
        match self {
            NiftiData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            NiftiData::I16(v) => v.iter().map(|&x| x as f64).collect(),
            NiftiData::U16(v) => v.iter().map(|&x| x as f64).collect(),
            NiftiData::I32(v) => v.iter().map(|&x| x as f64).collect(),
            NiftiData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            NiftiData::F64(v) => v.clone(),
        }
    }

    /// Same payload with every voxel where `keep` is false set to zero.
    pub fn masked(&self, keep: &[bool]) -> Self {
        fn zero<T: Copy + Default>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter()
                .zip(keep)
                .map(|(&x, &k)| if k { x } else { T::default() })
                .collect()
        }
        match self {
            NiftiData::U8(v) => NiftiData::U8(zero(v, keep)),
            NiftiData::I16(v) => NiftiData::I16(zero(v, keep)),
            NiftiData::U16(v) => NiftiData::U16(zero(v, keep)),
            NiftiData::I32(v) => NiftiData::I32(zero(v, keep)),
            NiftiData::F32(v) => NiftiData::F32(zero(v, keep)),
            NiftiData::F64(v) => NiftiData::F64(zero(v, keep)),
        }
    }

    fn decode(datatype: i16, raw: &[u8], swap: bool) -> Self {
        macro_rules! decode {
            ($t:ty, $n:expr, $variant:ident) => {
                NiftiData::$variant(
                    raw.chunks_exact($n)
                        .map(|c| {
                            let mut b = [0u8; $n];
                            b.copy_from_slice(c);
                            if swap {
                                b.reverse();
                            }
                            <$t>::from_le_bytes(b)
                        })
                        .collect(),
                )
            };
        }
        match datatype {
            DT_UINT8 => NiftiData::U8(raw.to_vec()),
            DT_INT16 => decode!(i16, 2, I16),
            DT_UINT16 => decode!(u16, 2, U16),
            DT_INT32 => decode!(i32, 4, I32),
            DT_FLOAT32 => decode!(f32, 4, F32),
            DT_FLOAT64 => decode!(f64, 8, F64),
            _ => unreachable!("datatype validated by header parser"),
        }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            NiftiData::U8(v) => out.extend_from_slice(v),
            NiftiData::I16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NiftiData::U16(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NiftiData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NiftiData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            NiftiData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
}

/// The header fields this crate reads.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub big_endian: bool,
}

struct Fields<'a> {
    bytes: &'a [u8],
    swap: bool,
}

impl Fields<'_> {
    fn raw<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.bytes[off..off + N]);
        if self.swap {
            b.reverse();
        }
        b
    }
    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.raw(off))
    }
    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.raw(off))
    }
}

impl NiftiHeader {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::CorruptHeader(format!(
                "{} bytes is shorter than a NIfTI-1 header",
                bytes.len()
            )));
        }
        let le = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let swap = match le {
            348 => false,
            _ if le.swap_bytes() == 348 => true,
            NIFTI2_HEADER_SIZE => return Err(Error::CorruptHeader("NIfTI-2 files are not supported".into())),
            _ if le.swap_bytes() == NIFTI2_HEADER_SIZE => {
                return Err(Error::CorruptHeader("NIfTI-2 files are not supported".into()))
            }
            other => return Err(Error::CorruptHeader(format!("sizeof_hdr is {other}, expected 348"))),
        };
        let magic = &bytes[344..348];
        if magic != b"n+1\0" {
            let shown = String::from_utf8_lossy(&magic[..3]).into_owned();
            return Err(Error::CorruptHeader(if magic == b"ni1\0" {
                "two-file NIfTI (magic \"ni1\") is not supported".into()
            } else {
                format!("bad magic {shown:?}, expected \"n+1\"")
            }));
        }
        let f = Fields { bytes, swap };
        let dim: [i16; 8] = std::array::from_fn(|i| f.i16(40 + 2 * i));
        let pixdim: [f32; 8] = std::array::from_fn(|i| f.f32(76 + 4 * i));
        let header = NiftiHeader {
            dim,
            datatype: f.i16(70),
            bitpix: f.i16(72),
            pixdim,
            vox_offset: f.f32(108),
            scl_slope: f.f32(112),
            scl_inter: f.f32(116),
            qform_code: f.i16(252),
            sform_code: f.i16(254),
            quatern: [f.f32(256), f.f32(260), f.f32(264)],
            qoffset: [f.f32(268), f.f32(272), f.f32(276)],
            srow: std::array::from_fn(|r| std::array::from_fn(|c| f.f32(280 + 16 * r + 4 * c))),
            big_endian: swap,
        };
        header.validate()?;
        Ok(header)
    }

    fn validate(&self) -> Result<()> {
        let nd = self.dim[0];
        if !(1..=7).contains(&nd) {
            return Err(Error::CorruptHeader(format!("dim[0] = {nd} out of range")));
        }
        for a in 1..=nd as usize {
            if self.dim[a] < 1 {
                return Err(Error::CorruptHeader(format!(
                    "dim[{a}] = {} is not positive",
                    self.dim[a]
                )));
            }
            if a > 3 && self.dim[a] != 1 {
                return Err(Error::CorruptHeader(format!(
                    "only 3D volumes are supported (dim[{a}] = {})",
                    self.dim[a]
                )));
            }
        }
        let bpv = NiftiData::bytes_per_voxel(self.datatype).ok_or(Error::UnsupportedDatatype(self.datatype))?;
        if self.bitpix as usize != 8 * bpv {
            return Err(Error::CorruptHeader(format!(
                "bitpix {} inconsistent with datatype {}",
                self.bitpix, self.datatype
            )));
        }
        if !(self.vox_offset >= HEADER_SIZE as f32) {
            return Err(Error::CorruptHeader(format!(
                "vox_offset {} inside header",
                self.vox_offset
            )));
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        std::array::from_fn(|a| {
            if a < self.dim[0] as usize {
                self.dim[a + 1] as usize
            } else {
                1
            }
        })
    }

    fn n_voxels(&self) -> usize {
        self.shape().iter().product()
    }

    /// Voxel-to-world affine: sform, else qform, else pixdim diagonal.
    pub fn affine(&self) -> Matrix4<f64> {
        let pix = |a: usize| {
            let p = self.pixdim[a].abs() as f64;
            if p > 0.0 {
                p
            } else {
                1.0
            }
        };
        if self.sform_code > 0 {
            let mut m = Matrix4::identity();
            for r in 0..3 {
                for c in 0..4 {
                    m[(r, c)] = self.srow[r][c] as f64;
                }
            }
            return m;
        }
        if self.qform_code > 0 {
            let [b, c, d] = self.quatern.map(|v| v as f64);
            let mut a2 = 1.0 - (b * b + c * c + d * d);
            let (b, c, d) = if a2 < 1e-7 {
                // a ~ 0: renormalise (b, c, d) as the standard does
                let n = (b * b + c * c + d * d).sqrt();
                a2 = 0.0;
                (b / n, c / n, d / n)
            } else {
                (b, c, d)
            };
            let a = a2.sqrt();
            let r = Matrix3::new(
                a * a + b * b - c * c - d * d,
                2.0 * (b * c - a * d),
                2.0 * (b * d + a * c),
                2.0 * (b * c + a * d),
                a * a + c * c - b * b - d * d,
                2.0 * (c * d - a * b),
                2.0 * (b * d - a * c),
                2.0 * (c * d + a * b),
                a * a + d * d - c * c - b * b,
            );
            let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
            let scale = [pix(1), pix(2), qfac * pix(3)];
            let mut m = Matrix4::identity();
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = r[(i, j)] * scale[j];
                }
                m[(i, 3)] = self.qoffset[i] as f64;
            }
            return m;
        }
        let mut m = Matrix4::identity();
        for a in 0..3 {
            m[(a, a)] = pix(a + 1);
        }
        m
    }

    /// `(slope, intercept)` when the header requests a non-identity scaling.
    pub fn scaling(&self) -> Option<(f64, f64)> {
        let (s, i) = (self.scl_slope as f64, self.scl_inter as f64);
        if s == 0.0 || !s.is_finite() || (s == 1.0 && i == 0.0) {
            None
        } else {
            Some((s, if i.is_finite() { i } else { 0.0 }))
        }
    }
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        MultiGzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// Parses only the header of a file.
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader> {
    let bytes = read_file_bytes(path.as_ref())?;
    NiftiHeader::parse(&bytes)
}

/// Reads the stored voxel payload without applying intensity scaling.
pub fn read_raw(path: impl AsRef<Path>) -> Result<(NiftiHeader, VoxelGrid, NiftiData)> {
    let bytes = read_file_bytes(path.as_ref())?;
    let header = NiftiHeader::parse(&bytes)?;
    let grid = VoxelGrid::with_affine(header.shape(), header.affine())?;
    let start = header.vox_offset as usize;
    let bpv = NiftiData::bytes_per_voxel(header.datatype).expect("validated");
    let end = start + header.n_voxels() * bpv;
    if bytes.len() < end {
        return Err(Error::CorruptHeader(format!(
            "file holds {} bytes, voxel data needs {end}",
            bytes.len()
        )));
    }
    let data = NiftiData::decode(header.datatype, &bytes[start..end], header.big_endian);
    Ok((header, grid, data))
}

/// Writes `data` on `grid`. Gzip is applied iff the path ends in `.gz`.
pub fn write_raw(path: impl AsRef<Path>, grid: &VoxelGrid, data: &NiftiData) -> Result<()> {
    let path = path.as_ref();
    if data.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            actual: data.len(),
        });
    }
    let mut buf = Vec::with_capacity(VOX_OFFSET + data.len() * 8);
    buf.extend_from_slice(&encode_header(grid, data.datatype()));
    buf.extend_from_slice(&[0u8; VOX_OFFSET - HEADER_SIZE]);
    data.encode(&mut buf);

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let gz = path.extension().is_some_and(|e| e == "gz");
    let result = if gz {
        let mut enc = GzEncoder::new(w, Compression::default());
        enc.write_all(&buf)
            .and_then(|_| enc.finish())
            .and_then(|mut inner| inner.flush())
    } else {
        w.write_all(&buf).and_then(|_| w.flush())
    };
    result.map_err(|e| Error::io(path, e))
}

fn encode_header(grid: &VoxelGrid, datatype: i16) -> [u8; HEADER_SIZE] {
    let mut h = [0u8; HEADER_SIZE];
    let mut put = |off: usize, b: &[u8]| h[off..off + b.len()].copy_from_slice(b);
    put(0, &348i32.to_le_bytes());
    let shape = grid.shape();
    let dim: [i16; 8] = [3, shape[0] as i16, shape[1] as i16, shape[2] as i16, 1, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put(40 + 2 * i, &d.to_le_bytes());
    }
    put(70, &datatype.to_le_bytes());
    let bits = 8 * NiftiData::bytes_per_voxel(datatype).expect("known datatype") as i16;
    put(72, &bits.to_le_bytes());
    let sp = grid.spacing();
    let pixdim: [f32; 8] = [1.0, sp[0] as f32, sp[1] as f32, sp[2] as f32, 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        put(76 + 4 * i, &p.to_le_bytes());
    }
    put(108, &(VOX_OFFSET as f32).to_le_bytes());
    put(112, &1.0f32.to_le_bytes());
    put(116, &0.0f32.to_le_bytes());
    put(123, &[2u8]); // mm
    put(148, b"sulcikit");
    put(252, &0i16.to_le_bytes());
    put(254, &2i16.to_le_bytes());
    let a = grid.affine();
    for r in 0..3 {
        for c in 0..4 {
            put(280 + 16 * r + 4 * c, &(a[(r, c)] as f32).to_le_bytes());
        }
    }
    put(344, b"n+1\0");
    h
}

/// Voxel types with a canonical on-disk representation.
pub trait NiftiVoxel: super::Voxel {
    fn from_stored(header: &NiftiHeader, data: NiftiData) -> Result<Vec<Self>>;
    fn to_stored(voxels: &[Self]) -> NiftiData;
}

impl NiftiVoxel for f32 {
    fn from_stored(header: &NiftiHeader, data: NiftiData) -> Result<Vec<Self>> {
        let values: Vec<f32> = match (header.scaling(), data) {
            (None, NiftiData::F32(v)) => v,
            (scale, data) => {
                let (s, i) = scale.unwrap_or((1.0, 0.0));
                data.values_f64().into_iter().map(|v| (v * s + i) as f32).collect()
            }
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("NIfTI voxel data"));
        }
        Ok(values)
    }

    fn to_stored(voxels: &[Self]) -> NiftiData {
        NiftiData::F32(voxels.to_vec())
    }
}

impl NiftiVoxel for u16 {
    fn from_stored(header: &NiftiHeader, data: NiftiData) -> Result<Vec<Self>> {
        if let (None, NiftiData::U16(v)) = (header.scaling(), &data) {
            return Ok(v.clone());
        }
        let (s, i) = header.scaling().unwrap_or((1.0, 0.0));
        data.values_f64()
            .into_iter()
            .map(|v| {
                let v = v * s + i;
                if v.fract() == 0.0 && (0.0..=u16::MAX as f64).contains(&v) {
                    Ok(v as u16)
                } else {
                    Err(Error::NonIntegerLabels(v))
                }
            })
            .collect()
    }

    fn to_stored(voxels: &[Self]) -> NiftiData {
        NiftiData::U16(voxels.to_vec())
    }
}

impl NiftiVoxel for bool {
    fn from_stored(header: &NiftiHeader, data: NiftiData) -> Result<Vec<Self>> {
        Ok(u16::from_stored(header, data)?.into_iter().map(|v| v != 0).collect())
    }

    fn to_stored(voxels: &[Self]) -> NiftiData {
        NiftiData::U8(voxels.iter().map(|&b| b as u8).collect())
    }
}

/// Reads a volume, converting stored voxels to `T`. Loading as labels
/// (`u16`) or masks (`bool`) verifies every value is a non-negative integer.
pub fn read_nifti<T: NiftiVoxel>(path: impl AsRef<Path>) -> Result<Volume<T>> {
    let (header, grid, data) = read_raw(path)?;
    let voxels = T::from_stored(&header, data)?;
    Volume::new(grid, voxels)
}

/// Writes intensities as float32, labels as uint16 and masks as uint8.
pub fn write_nifti<T: NiftiVoxel>(volume: &Volume<T>, path: impl AsRef<Path>) -> Result<()> {
    write_raw(path, volume.grid(), &T::to_stored(volume.voxels()))
}
