//! NIfTI-1 reading and writing.
//!
//! Only single-file volumes (`.nii`, `.nii.gz`) are supported. Gzip streams are
//! detected from their leading bytes rather than the file extension, and byte
//! order is inferred from the `sizeof_hdr` field. Voxel values are widened to
//! `f64` and the header's `scl_slope`/`scl_inter` scaling is applied on load.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

/// Size of a NIfTI-1 header in bytes.
pub const HEADER_SIZE: usize = 348;
/// Data offset used when writing: header plus the 4-byte extension flag.
pub const WRITE_VOX_OFFSET: usize = 352;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

mod offsets {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN: usize = 256;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated voxel data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("non-finite voxel value at index {index}")]
    NonFiniteVoxel { index: usize },
    #[error("invalid volume: {0}")]
    InvalidGrid(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl VolumeError {
    /// Stable short name of the error kind, used in reports and tests.
    pub fn kind(&self) -> &'static str {
        match self {
            VolumeError::MalformedHeader(_) => "MalformedHeader",
            VolumeError::UnsupportedDatatype(_) => "UnsupportedDatatype",
            VolumeError::TruncatedData { .. } => "TruncatedData",
            VolumeError::NonFiniteVoxel { .. } => "NonFiniteVoxel",
            VolumeError::InvalidGrid(_) => "InvalidGrid",
            VolumeError::Io { .. } => "IoFailure",
        }
    }
}

/// On-disk voxel types accepted by the reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Datatype {
    UInt8,
    Int16,
    Int32,
    Float32,
    Float64,
}

impl Datatype {
    pub fn from_code(code: i16) -> Result<Self, VolumeError> {
        match code {
            2 => Ok(Datatype::UInt8),
            4 => Ok(Datatype::Int16),
            8 => Ok(Datatype::Int32),
            16 => Ok(Datatype::Float32),
            64 => Ok(Datatype::Float64),
            other => Err(VolumeError::UnsupportedDatatype(other)),
        }
    }

    pub fn code(self) -> i16 {
        match self {
            Datatype::UInt8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
        }
    }

    pub fn bitpix(self) -> i16 {
        match self {
            Datatype::UInt8 => 8,
            Datatype::Int16 => 16,
            Datatype::Int32 => 32,
            Datatype::Float32 => 32,
            Datatype::Float64 => 64,
        }
    }

    fn byte_size(self) -> usize {
        self.bitpix() as usize / 8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endianness {
    Little,
    Big,
}

/// Orientation fields, parsed and carried for provenance only.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Orientation {
    pub qform_code: i16,
    pub sform_code: i16,
    /// quatern_b, quatern_c, quatern_d, qoffset_x, qoffset_y, qoffset_z
    pub quatern: [f32; 6],
    pub srow: [[f32; 4]; 3],
}

/// The subset of the NIfTI-1 header this crate interprets.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub sizeof_hdr: i32,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub magic: [u8; 4],
    pub orientation: Orientation,
    pub endianness: Endianness,
}

impl NiftiHeader {
    /// Parses and validates a header from the first 348 bytes of `bytes`.
    pub fn parse(bytes: &[u8]) -> Result<Self, VolumeError> {
        if bytes.len() < HEADER_SIZE {
            return Err(VolumeError::MalformedHeader(format!(
                "file has {} bytes, a NIfTI-1 header needs {HEADER_SIZE}",
                bytes.len()
            )));
        }
        if LittleEndian::read_i32(&bytes[..4]) == HEADER_SIZE as i32 {
            Self::parse_with::<LittleEndian>(bytes, Endianness::Little)
        } else if BigEndian::read_i32(&bytes[..4]) == HEADER_SIZE as i32 {
            Self::parse_with::<BigEndian>(bytes, Endianness::Big)
        } else {
            Err(VolumeError::MalformedHeader(format!(
                "sizeof_hdr is {} (expected 348 in either byte order)",
                LittleEndian::read_i32(&bytes[..4])
            )))
        }
    }

    fn parse_with<B: ByteOrder>(b: &[u8], endianness: Endianness) -> Result<Self, VolumeError> {
        let mut dim = [0i16; 8];
        for (k, d) in dim.iter_mut().enumerate() {
            *d = B::read_i16(&b[offsets::DIM + 2 * k..]);
        }
        let mut pixdim = [0f32; 8];
        for (k, p) in pixdim.iter_mut().enumerate() {
            *p = B::read_f32(&b[offsets::PIXDIM + 4 * k..]);
        }
        let mut quatern = [0f32; 6];
        for (k, q) in quatern.iter_mut().enumerate() {
            *q = B::read_f32(&b[offsets::QUATERN + 4 * k..]);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = B::read_f32(&b[offsets::SROW_X + 16 * r + 4 * c..]);
            }
        }
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&b[offsets::MAGIC..offsets::MAGIC + 4]);

        let header = NiftiHeader {
            sizeof_hdr: B::read_i32(&b[offsets::SIZEOF_HDR..]),
            dim,
            datatype: B::read_i16(&b[offsets::DATATYPE..]),
            bitpix: B::read_i16(&b[offsets::BITPIX..]),
            pixdim,
            vox_offset: B::read_f32(&b[offsets::VOX_OFFSET..]),
            scl_slope: B::read_f32(&b[offsets::SCL_SLOPE..]),
            scl_inter: B::read_f32(&b[offsets::SCL_INTER..]),
            xyzt_units: b[offsets::XYZT_UNITS],
            magic,
            orientation: Orientation {
                qform_code: B::read_i16(&b[offsets::QFORM_CODE..]),
                sform_code: B::read_i16(&b[offsets::SFORM_CODE..]),
                quatern,
                srow,
            },
            endianness,
        };
        header.validate()?;
        Ok(header)
    }

    fn validate(&self) -> Result<(), VolumeError> {
        match &self.magic {
            b"n+1\0" => {}
            b"ni1\0" => {
                return Err(VolumeError::MalformedHeader(
                    "paired .hdr/.img volumes (magic \"ni1\") are not supported; \
                     convert to a single-file .nii"
                        .into(),
                ))
            }
            other => {
                return Err(VolumeError::MalformedHeader(format!(
                    "bad magic {:?}",
                    String::from_utf8_lossy(other)
                )))
            }
        }
        let rank = self.dim[0];
        if !(1..=7).contains(&rank) {
            return Err(VolumeError::MalformedHeader(format!(
                "dim[0] = {rank} outside 1..=7"
            )));
        }
        for k in 1..=3 {
            // Axes beyond the declared rank are treated as singleton.
            if k <= rank as usize && self.dim[k] < 1 {
                return Err(VolumeError::MalformedHeader(format!(
                    "dim[{k}] = {} must be >= 1",
                    self.dim[k]
                )));
            }
            if k <= rank as usize && !(self.pixdim[k] > 0.0 && self.pixdim[k].is_finite()) {
                return Err(VolumeError::MalformedHeader(format!(
                    "pixdim[{k}] = {} must be > 0",
                    self.pixdim[k]
                )));
            }
        }
        for k in 4..=rank as usize {
            if self.dim[k] < 1 {
                return Err(VolumeError::MalformedHeader(format!(
                    "dim[{k}] = {} must be >= 1",
                    self.dim[k]
                )));
            }
        }
        let datatype = Datatype::from_code(self.datatype)?;
        if datatype.bitpix() != self.bitpix {
            return Err(VolumeError::MalformedHeader(format!(
                "bitpix {} inconsistent with datatype {}",
                self.bitpix, self.datatype
            )));
        }
        if !self.vox_offset.is_finite() || (self.vox_offset as f64) < HEADER_SIZE as f64 {
            return Err(VolumeError::MalformedHeader(format!(
                "vox_offset {} points inside the header",
                self.vox_offset
            )));
        }
        if !self.scl_slope.is_finite() || !self.scl_inter.is_finite() {
            return Err(VolumeError::MalformedHeader(
                "non-finite scaling parameters".into(),
            ));
        }
        Ok(())
    }

    fn axis(&self, k: usize) -> usize {
        if k <= self.dim[0] as usize {
            self.dim[k] as usize
        } else {
            1
        }
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.axis(1), self.axis(2), self.axis(3)]
    }

    /// Number of volumes stacked along dims 4..7.
    pub fn channel_count(&self) -> usize {
        (4..=7).map(|k| self.axis(k)).product()
    }

    pub fn spacing(&self) -> [f64; 3] {
        let mut s = [1.0; 3];
        for (k, v) in s.iter_mut().enumerate() {
            if k < self.dim[0] as usize {
                *v = self.pixdim[k + 1] as f64;
            }
        }
        s
    }
}

/// A scalar intensity volume, x-fastest, with channels stacked after the
/// spatial axes.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    spacing: [f64; 3],
    channels: usize,
    values: Vec<f64>,
    orientation: Orientation,
}

impl VoxelGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], values: Vec<f64>) -> Result<Self, VolumeError> {
        Self::with_channels(dims, spacing, 1, values)
    }

    pub fn with_channels(
        dims: [usize; 3],
        spacing: [f64; 3],
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self, VolumeError> {
        if dims.contains(&0) || channels == 0 {
            return Err(VolumeError::InvalidGrid(format!(
                "dims {dims:?} x {channels} channels must be positive"
            )));
        }
        if spacing.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(VolumeError::InvalidGrid(format!(
                "spacing {spacing:?} must be positive"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2] * channels;
        if values.len() != expected {
            return Err(VolumeError::InvalidGrid(format!(
                "{} values for dims {dims:?} x {channels} channels (expected {expected})",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFiniteVoxel { index });
        }
        Ok(VoxelGrid {
            dims,
            spacing,
            channels,
            values,
            orientation: Orientation::default(),
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn channel_count(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn orientation(&self) -> &Orientation {
        &self.orientation
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Extracts one channel as a single-channel grid.
    pub fn channel(&self, c: usize) -> Result<VoxelGrid, VolumeError> {
        if c >= self.channels {
            return Err(VolumeError::InvalidGrid(format!(
                "channel {c} requested from a {}-channel volume",
                self.channels
            )));
        }
        let n = self.voxel_count();
        Ok(VoxelGrid {
            dims: self.dims,
            spacing: self.spacing,
            channels: 1,
            values: self.values[c * n..(c + 1) * n].to_vec(),
            orientation: self.orientation,
        })
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<VoxelGrid, VolumeError> {
        let mut g = VoxelGrid::with_channels(self.dims, self.spacing, self.channels, values)?;
        g.orientation = self.orientation;
        Ok(g)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> VolumeError + '_ {
    move |source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a `.nii` or gzip-compressed `.nii.gz` file.
pub fn load_volume(path: impl AsRef<Path>) -> Result<VoxelGrid, VolumeError> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(io_err(path))?;
    let bytes = if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::with_capacity(raw.len() * 4);
        match GzDecoder::new(raw.as_slice()).read_to_end(&mut out) {
            Ok(_) => out,
            // A cut-off stream still yields its prefix; decoding that reports
            // the truncation with the right typed error.
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                log::warn!("{}: gzip stream ended early", path.display());
                out
            }
            Err(source) => {
                return Err(VolumeError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        }
    } else {
        raw
    };
    decode_volume(&bytes)
}

/// Decodes an uncompressed NIfTI-1 byte image.
pub fn decode_volume(bytes: &[u8]) -> Result<VoxelGrid, VolumeError> {
    let header = NiftiHeader::parse(bytes)?;
    let datatype = Datatype::from_code(header.datatype)?;
    let dims = header.spatial_dims();
    let channels = header.channel_count();
    let count = dims[0] * dims[1] * dims[2] * channels;
    let offset = header.vox_offset as usize;
    let expected = count * datatype.byte_size();
    let available = bytes.len().saturating_sub(offset);
    if available < expected {
        return Err(VolumeError::TruncatedData {
            expected,
            found: available,
        });
    }
    let data = &bytes[offset..offset + expected];
    let mut values = match header.endianness {
        Endianness::Little => read_values::<LittleEndian>(data, datatype, count),
        Endianness::Big => read_values::<BigEndian>(data, datatype, count),
    };

    let slope = header.scl_slope as f64;
    let inter = header.scl_inter as f64;
    if slope != 0.0 {
        if slope != 1.0 {
            log::info!("applying scl_slope={slope} scl_inter={inter}");
        }
        for v in values.iter_mut() {
            *v = slope * *v + inter;
        }
    }

    let mut grid = VoxelGrid::with_channels(dims, header.spacing(), channels, values)?;
    grid.orientation = header.orientation;
    Ok(grid)
}

fn read_values<B: ByteOrder>(data: &[u8], datatype: Datatype, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    match datatype {
        Datatype::UInt8 => out.extend(data.iter().map(|&b| b as f64)),
        Datatype::Int16 => out.extend(data.chunks_exact(2).map(|c| B::read_i16(c) as f64)),
        Datatype::Int32 => out.extend(data.chunks_exact(4).map(|c| B::read_i32(c) as f64)),
        Datatype::Float32 => out.extend(data.chunks_exact(4).map(|c| B::read_f32(c) as f64)),
        Datatype::Float64 => out.extend(data.chunks_exact(8).map(B::read_f64)),
    }
    out
}

/// Serializes a grid as a little-endian float32 single-file NIfTI-1 image.
pub fn encode_volume(grid: &VoxelGrid) -> Vec<u8> {
    let n = grid.values.len();
    let mut buf = vec![0u8; WRITE_VOX_OFFSET + 4 * n];
    let h = &mut buf[..HEADER_SIZE];
    LittleEndian::write_i32(&mut h[offsets::SIZEOF_HDR..], HEADER_SIZE as i32);
    let rank: i16 = if grid.channels > 1 { 4 } else { 3 };
    let dim = [
        rank,
        grid.dims[0] as i16,
        grid.dims[1] as i16,
        grid.dims[2] as i16,
        grid.channels as i16,
        1,
        1,
        1,
    ];
    for (k, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[offsets::DIM + 2 * k..], *d);
    }
    LittleEndian::write_i16(&mut h[offsets::DATATYPE..], Datatype::Float32.code());
    LittleEndian::write_i16(&mut h[offsets::BITPIX..], Datatype::Float32.bitpix());
    let pixdim = [
        1.0,
        grid.spacing[0] as f32,
        grid.spacing[1] as f32,
        grid.spacing[2] as f32,
        1.0,
        1.0,
        1.0,
        1.0,
    ];
    for (k, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[offsets::PIXDIM + 4 * k..], *p);
    }
    LittleEndian::write_f32(&mut h[offsets::VOX_OFFSET..], WRITE_VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[offsets::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut h[offsets::SCL_INTER..], 0.0);
    // mm, seconds
    h[offsets::XYZT_UNITS] = 2 | 8;
    let o = &grid.orientation;
    LittleEndian::write_i16(&mut h[offsets::QFORM_CODE..], o.qform_code);
    LittleEndian::write_i16(&mut h[offsets::SFORM_CODE..], o.sform_code);
    for (k, q) in o.quatern.iter().enumerate() {
        LittleEndian::write_f32(&mut h[offsets::QUATERN + 4 * k..], *q);
    }
    for (r, row) in o.srow.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            LittleEndian::write_f32(&mut h[offsets::SROW_X + 16 * r + 4 * c..], *v);
        }
    }
    h[offsets::MAGIC..offsets::MAGIC + 4].copy_from_slice(b"n+1\0");

    for (chunk, v) in buf[WRITE_VOX_OFFSET..]
        .chunks_exact_mut(4)
        .zip(&grid.values)
    {
        LittleEndian::write_f32(chunk, *v as f32);
    }
    buf
}

/// Writes `grid` to `path`; a `.gz` extension selects gzip compression.
pub fn write_volume(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let path = path.as_ref();
    let bytes = encode_volume(grid);
    let gz = path.extension().is_some_and(|e| e == "gz");
    let mut file = io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    if gz {
        let mut enc = GzEncoder::new(file, Compression::fast());
        enc.write_all(&bytes).map_err(io_err(path))?;
        enc.finish()
            .map_err(io_err(path))?
            .flush()
            .map_err(io_err(path))?;
    } else {
        file.write_all(&bytes).map_err(io_err(path))?;
        file.flush().map_err(io_err(path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header_bytes(datatype: i16, bitpix: i16, dim: [i16; 8], slope: f32, inter: f32) -> Vec<u8> {
        let mut h = vec![0u8; WRITE_VOX_OFFSET];
        LittleEndian::write_i32(&mut h[0..], 348);
        for (k, d) in dim.iter().enumerate() {
            LittleEndian::write_i16(&mut h[40 + 2 * k..], *d);
        }
        LittleEndian::write_i16(&mut h[70..], datatype);
        LittleEndian::write_i16(&mut h[72..], bitpix);
        for k in 0..8 {
            LittleEndian::write_f32(&mut h[76 + 4 * k..], 1.0);
        }
        LittleEndian::write_f32(&mut h[108..], 352.0);
        LittleEndian::write_f32(&mut h[112..], slope);
        LittleEndian::write_f32(&mut h[116..], inter);
        h[344..348].copy_from_slice(b"n+1\0");
        h
    }

    fn float_file(slope: f32, inter: f32) -> Vec<u8> {
        let mut b = header_bytes(16, 32, [3, 2, 2, 2, 1, 1, 1, 1], slope, inter);
        for v in 0..8 {
            b.extend_from_slice(&(v as f32).to_le_bytes());
        }
        b
    }

    #[test]
    fn identity_scaling_when_slope_zero() {
        let g = decode_volume(&float_file(0.0, 0.0)).unwrap();
        assert_eq!(g.dims(), [2, 2, 2]);
        assert_eq!(g.values(), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn affine_scaling_applied() {
        let g = decode_volume(&float_file(2.0, 1.0)).unwrap();
        assert_eq!(g.values(), &[1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0]);
    }

    #[test]
    fn single_voxel_file_size() {
        let g = VoxelGrid::new([1, 1, 1], [1.0; 3], vec![0.0]).unwrap();
        assert_eq!(encode_volume(&g).len(), 356);
    }

    #[test]
    fn bad_sizeof_hdr() {
        let mut b = float_file(0.0, 0.0);
        LittleEndian::write_i32(&mut b[0..], 540);
        assert_eq!(decode_volume(&b).unwrap_err().kind(), "MalformedHeader");
    }

    #[test]
    fn paired_magic_rejected() {
        let mut b = float_file(0.0, 0.0);
        b[344..348].copy_from_slice(b"ni1\0");
        let err = decode_volume(&b).unwrap_err();
        assert!(err.to_string().contains("ni1"), "{err}");
    }

    #[test]
    fn unsupported_datatype() {
        let mut b = float_file(0.0, 0.0);
        LittleEndian::write_i16(&mut b[70..], 512);
        assert!(matches!(
            decode_volume(&b),
            Err(VolumeError::UnsupportedDatatype(512))
        ));
    }

    #[test]
    fn bitpix_mismatch() {
        let mut b = float_file(0.0, 0.0);
        LittleEndian::write_i16(&mut b[72..], 64);
        assert_eq!(decode_volume(&b).unwrap_err().kind(), "MalformedHeader");
    }

    #[test]
    fn truncated() {
        let b = float_file(0.0, 0.0);
        let err = decode_volume(&b[..b.len() - 3]).unwrap_err();
        assert!(matches!(
            err,
            VolumeError::TruncatedData {
                expected: 32,
                found: 29
            }
        ));
    }

    #[test]
    fn nan_voxel() {
        let mut b = float_file(0.0, 0.0);
        LittleEndian::write_f32(&mut b[352 + 8..], f32::NAN);
        assert!(matches!(
            decode_volume(&b),
            Err(VolumeError::NonFiniteVoxel { index: 2 })
        ));
    }

    #[test]
    fn integer_datatypes() {
        let mut b = header_bytes(4, 16, [3, 2, 1, 1, 1, 1, 1, 1], 0.0, 0.0);
        b.extend_from_slice(&(-7i16).to_le_bytes());
        b.extend_from_slice(&300i16.to_le_bytes());
        assert_eq!(decode_volume(&b).unwrap().values(), &[-7.0, 300.0]);

        let mut b = header_bytes(2, 8, [3, 3, 1, 1, 1, 1, 1, 1], 0.5, 0.0);
        b.extend_from_slice(&[0, 10, 255]);
        assert_eq!(decode_volume(&b).unwrap().values(), &[0.0, 5.0, 127.5]);
    }

    #[test]
    fn multichannel_split() {
        let g = VoxelGrid::with_channels([2, 1, 1], [1.0; 3], 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let back = decode_volume(&encode_volume(&g)).unwrap();
        assert_eq!(back.channel_count(), 2);
        assert_eq!(back.channel(1).unwrap().values(), &[3.0, 4.0]);
        assert!(back.channel(2).is_err());
    }

    #[test]
    fn invalid_grid_rejected() {
        assert!(VoxelGrid::new([2, 1, 1], [1.0; 3], vec![1.0]).is_err());
        assert!(VoxelGrid::new([1, 1, 1], [0.0, 1.0, 1.0], vec![1.0]).is_err());
        assert!(matches!(
            VoxelGrid::new([1, 1, 1], [1.0; 3], vec![f64::INFINITY]),
            Err(VolumeError::NonFiniteVoxel { index: 0 })
        ));
    }
}
