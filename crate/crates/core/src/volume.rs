//! Volumetric data model shared by every stage of the pipeline.
//!
//! Voxels are stored z-major (z slowest, x fastest) so that axial slices are
//! contiguous in memory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lower end of the HU window mapped to 0.
pub const HU_MIN: f32 = -1024.0;
/// Upper end of the HU window mapped to 1.
pub const HU_MAX: f32 = 3071.0;
const HU_RANGE: f32 = HU_MAX - HU_MIN;

const VOLUME_MAGIC: &[u8; 6] = b"CTVOL1";
const VOLUME_VERSION: u16 = 1;
const VOLUME_HEADER_LEN: usize = 6 + 2 + 3 * 4 + 3 * 4;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("voxel count {actual} does not match dims {dims:?}")]
    LengthMismatch { dims: [usize; 3], actual: usize },
    #[error("dims must be positive, got {0:?}")]
    EmptyDims([usize; 3]),
    #[error("spacing must be positive and finite, got {0:?}")]
    BadSpacing([f32; 3]),
    #[error("voxel {index} is not finite")]
    NonFinite { index: usize },
    #[error("ROI exceeds volume along {axis}: origin {origin} + extent {extent} > {size}")]
    RoiOutOfBounds {
        axis: &'static str,
        origin: usize,
        extent: usize,
        size: usize,
    },
    #[error("ROI extent must be at least 1 along every axis, got {0:?}")]
    EmptyRoi([usize; 3]),
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 6]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated: header needs {needed} bytes, found {found}")]
    TruncatedHeader { needed: usize, found: usize },
    #[error("payload holds {found} voxels but header declares {declared}")]
    PayloadMismatch { declared: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VolumeError>;

/// Anatomical viewing plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Plane {
    /// x-y plane, one image per z index.
    Axial,
    /// x-z plane, one image per y index.
    Coronal,
    /// y-z plane, one image per x index.
    Sagittal,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Axial, Plane::Coronal, Plane::Sagittal];

    pub fn short_name(self) -> &'static str {
        match self {
            Plane::Axial => "Ax",
            Plane::Coronal => "Co",
            Plane::Sagittal => "Sa",
        }
    }
}

/// Row-major 2D image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Image2 {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols, "image data length mismatch");
        Image2 { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Image2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.cols + c] = v;
    }

    pub fn same_shape(&self, other: &Image2) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Axis-aligned voxel box `[origin, origin + extent)` in (z, y, x) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiBox {
    pub origin: [usize; 3],
    pub extent: [usize; 3],
}

impl RoiBox {
    pub fn new(origin: [usize; 3], extent: [usize; 3]) -> Self {
        RoiBox { origin, extent }
    }

    /// Checks that the box is non-empty and fits inside `dims`.
    pub fn check_within(&self, dims: [usize; 3]) -> Result<()> {
        if self.extent.contains(&0) {
            return Err(VolumeError::EmptyRoi(self.extent));
        }
        for (axis, name) in ["z", "y", "x"].iter().enumerate() {
            if self.origin[axis] + self.extent[axis] > dims[axis] {
                return Err(VolumeError::RoiOutOfBounds {
                    axis: name,
                    origin: self.origin[axis],
                    extent: self.extent[axis],
                    size: dims[axis],
                });
            }
        }
        Ok(())
    }

    /// Box of `extent` centred on `center`, shifted to fit inside `dims`.
    /// Extents larger than the volume are clipped.
    pub fn centered(center: [usize; 3], extent: [usize; 3], dims: [usize; 3]) -> Self {
        let mut origin = [0; 3];
        let mut ext = extent;
        for a in 0..3 {
            ext[a] = ext[a].clamp(1, dims[a]);
            let half = ext[a] / 2;
            let start = center[a].saturating_sub(half);
            origin[a] = start.min(dims[a] - ext[a]);
        }
        RoiBox {
            origin,
            extent: ext,
        }
    }
}

/// 3D scalar field in Hounsfield units with per-axis spacing in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f32; 3],
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(dims: [usize; 3], spacing: [f32; 3], voxels: Vec<f32>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(VolumeError::EmptyDims(dims));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if voxels.len() != expected {
            return Err(VolumeError::LengthMismatch {
                dims,
                actual: voxels.len(),
            });
        }
        if let Some(index) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite { index });
        }
        Ok(Volume {
            dims,
            spacing,
            voxels,
        })
    }

    pub fn filled(dims: [usize; 3], spacing: [f32; 3], value: f32) -> Result<Self> {
        Volume::new(dims, spacing, vec![value; dims[0] * dims[1] * dims[2]])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f32; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn into_voxels(self) -> Vec<f32> {
        self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.voxels[self.index(z, y, x)]
    }

    /// Contiguous axial slice `z`.
    pub fn axial(&self, z: usize) -> &[f32] {
        let n = self.dims[1] * self.dims[2];
        &self.voxels[z * n..(z + 1) * n]
    }

    /// Applies `f` voxel-wise; the result must stay finite.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Volume {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            voxels: self.voxels.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn with_spacing(mut self, spacing: [f32; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn sum(&self) -> f64 {
        self.voxels.iter().map(|&v| v as f64).sum()
    }
}

/// Maps HU linearly from `[HU_MIN, HU_MAX]` onto `[0, 1]`, clamping outside.
#[inline]
pub fn hu_to_unit_value(hu: f32) -> f32 {
    ((hu - HU_MIN) / HU_RANGE).clamp(0.0, 1.0)
}

#[inline]
pub fn unit_to_hu_value(u: f32) -> f32 {
    u * HU_RANGE + HU_MIN
}

pub fn hu_to_unit(v: &Volume) -> Volume {
    v.map(hu_to_unit_value)
}

pub fn unit_to_hu(v: &Volume) -> Volume {
    v.map(unit_to_hu_value)
}

/// Copies every slice of `v` along `plane`.
///
/// Axial slices are (ny, nx), coronal (nz, nx), sagittal (nz, ny).
pub fn extract_plane_slices(v: &Volume, plane: Plane) -> Vec<Image2> {
    let [nz, ny, nx] = v.dims;
    match plane {
        Plane::Axial => (0..nz)
            .map(|z| Image2::new(ny, nx, v.axial(z).to_vec()))
            .collect(),
        Plane::Coronal => (0..ny)
            .map(|y| {
                let mut data = Vec::with_capacity(nz * nx);
                for z in 0..nz {
                    let row = v.index(z, y, 0);
                    data.extend_from_slice(&v.voxels[row..row + nx]);
                }
                Image2::new(nz, nx, data)
            })
            .collect(),
        Plane::Sagittal => (0..nx)
            .map(|x| {
                let mut data = Vec::with_capacity(nz * ny);
                for z in 0..nz {
                    for y in 0..ny {
                        data.push(v.get(z, y, x));
                    }
                }
                Image2::new(nz, ny, data)
            })
            .collect(),
    }
}

pub fn crop_roi(v: &Volume, roi: &RoiBox) -> Result<Volume> {
    roi.check_within(v.dims)?;
    let [oz, oy, ox] = roi.origin;
    let [dz, dy, dx] = roi.extent;
    let mut voxels = Vec::with_capacity(dz * dy * dx);
    for z in oz..oz + dz {
        for y in oy..oy + dy {
            let start = v.index(z, y, ox);
            voxels.extend_from_slice(&v.voxels[start..start + dx]);
        }
    }
    Volume::new(roi.extent, v.spacing, voxels)
}

/// Resamples along z to `target_nz` slices by nearest slice centre.
///
/// Used to pair thick-slice acquisitions with thin-slice references.
pub fn resample_z_nearest(v: &Volume, target_nz: usize) -> Result<Volume> {
    let [nz, ny, nx] = v.dims;
    if target_nz == 0 {
        return Err(VolumeError::EmptyDims([target_nz, ny, nx]));
    }
    let plane = ny * nx;
    let mut voxels = Vec::with_capacity(target_nz * plane);
    for t in 0..target_nz {
        // centre of target slice t in source index units
        let src = ((t as f64 + 0.5) * nz as f64 / target_nz as f64 - 0.5).round();
        let src = (src.max(0.0) as usize).min(nz - 1);
        voxels.extend_from_slice(v.axial(src));
    }
    let sz = v.spacing[0] * nz as f32 / target_nz as f32;
    Volume::new(
        [target_nz, ny, nx],
        [sz, v.spacing[1], v.spacing[2]],
        voxels,
    )
}

pub fn encode_volume(v: &Volume) -> Vec<u8> {
    let mut buf = Vec::with_capacity(VOLUME_HEADER_LEN + 4 * v.voxels.len());
    buf.extend_from_slice(VOLUME_MAGIC);
    buf.extend_from_slice(&VOLUME_VERSION.to_le_bytes());
    for d in v.dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for s in v.spacing {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    for x in &v.voxels {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < 6 {
        return Err(VolumeError::TruncatedHeader {
            needed: VOLUME_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 6] = bytes[..6].try_into().unwrap();
    if &magic != VOLUME_MAGIC {
        return Err(VolumeError::BadMagic(magic));
    }
    if bytes.len() < VOLUME_HEADER_LEN {
        return Err(VolumeError::TruncatedHeader {
            needed: VOLUME_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != VOLUME_VERSION {
        return Err(VolumeError::UnsupportedVersion(version));
    }
    let word = |i: usize| -> [u8; 4] { bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap() };
    let dims = [0, 1, 2].map(|i| u32::from_le_bytes(word(i)) as usize);
    let spacing = [3, 4, 5].map(|i| f32::from_le_bytes(word(i)));
    let payload = &bytes[VOLUME_HEADER_LEN..];
    let declared = dims[0] * dims[1] * dims[2];
    if !payload.len().is_multiple_of(4) || payload.len() / 4 != declared {
        return Err(VolumeError::PayloadMismatch {
            declared,
            found: payload.len() / 4,
        });
    }
    let voxels = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::new(dims, spacing, voxels)
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_volume(v))?;
    w.flush()?;
    Ok(())
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_volume(&bytes)
}
