//! NLVT: a minimal little-endian container for float32 volumes.
//!
//! Layout: magic `NLVT`, version byte, kind byte, two reserved zero bytes,
//! three `u32` dims, five `f64` fields (wall width, bin width, frame start,
//! meters per unit, reserved), then `dims[0]·dims[1]·dims[2]` `f32` values
//! with the last dim varying fastest.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3};

use super::{AxisKind, DepthMap, GridSpec, HeatMap2D, ProjectionAxis, ReflectanceVolume, TransientImage};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NLVT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8 + 3 * 4 + 5 * 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum NlvtKind {
    Transient = 0,
    ReflectanceZ = 1,
    ReflectanceU = 2,
    HeatMap = 3,
    Depth = 4,
}

impl NlvtKind {
    fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0 => NlvtKind::Transient,
            1 => NlvtKind::ReflectanceZ,
            2 => NlvtKind::ReflectanceU,
            3 => NlvtKind::HeatMap,
            4 => NlvtKind::Depth,
            _ => return None,
        })
    }
}

/// Raw decoded NLVT file.
#[derive(Debug, Clone, PartialEq)]
pub struct NlvtRecord {
    pub kind: NlvtKind,
    pub dims: [u32; 3],
    pub wall_width_m: f64,
    pub bin_width_s: f64,
    pub t_start: f64,
    pub meters_per_unit: f64,
    pub payload: Vec<f32>,
}

impl NlvtRecord {
    pub fn element_count(dims: [u32; 3]) -> usize {
        dims.iter().map(|&d| d as usize).product()
    }

    pub fn dims_usize(&self) -> (usize, usize, usize) {
        (
            self.dims[0] as usize,
            self.dims[1] as usize,
            self.dims[2] as usize,
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&[0, 0]);
        for d in self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for f in [
            self.wall_width_m,
            self.bin_width_s,
            self.t_start,
            self.meters_per_unit,
            0.0,
        ] {
            out.extend_from_slice(&f.to_le_bytes());
        }
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// `path` is only used for diagnostics.
    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            if bytes.len() < 4 || &bytes[..4] != MAGIC {
                return Err(Error::format(path, "bad magic"));
            }
            return Err(Error::format(
                path,
                format!("truncated header ({} bytes)", bytes.len()),
            ));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::format(path, "bad magic"));
        }
        if bytes[4] != VERSION {
            return Err(Error::format(path, format!("unsupported version {}", bytes[4])));
        }
        let kind = NlvtKind::from_byte(bytes[5])
            .ok_or_else(|| Error::format(path, format!("unknown kind {}", bytes[5])))?;
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let dims = [u32_at(8), u32_at(12), u32_at(16)];
        if dims.contains(&0) {
            return Err(Error::format(path, format!("zero dimension in {dims:?}")));
        }
        let expected = Self::element_count(dims)
            .checked_mul(4)
            .ok_or_else(|| Error::format(path, "dims overflow"))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(Error::Length {
                path: path.to_path_buf(),
                expected,
                actual: body.len(),
            });
        }
        let payload = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            kind,
            dims,
            wall_width_m: f64_at(20),
            bin_width_s: f64_at(28),
            t_start: f64_at(36),
            meters_per_unit: f64_at(44),
            payload,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(i) = self.payload.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "{}: entry {i} is not finite, refusing to write",
                path.display()
            )));
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.encode())
            .map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }

    fn array3(&self) -> Array3<f32> {
        Array3::from_shape_vec(self.dims_usize(), self.payload.clone())
            .expect("payload length checked on decode")
    }
}

/// Any volume that has an NLVT representation.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Transient(TransientImage),
    Reflectance(ReflectanceVolume),
    HeatMap(HeatMap2D),
    Depth(DepthMap),
}

/// Borrowed form of [`Volume`] accepted by [`write_volume`].
#[derive(Debug, Clone, Copy)]
pub enum VolumeRef<'a> {
    Transient(&'a TransientImage),
    Reflectance(&'a ReflectanceVolume),
    HeatMap(&'a HeatMap2D),
    Depth(&'a DepthMap),
}

impl<'a> From<&'a TransientImage> for VolumeRef<'a> {
    fn from(v: &'a TransientImage) -> Self {
        VolumeRef::Transient(v)
    }
}

impl<'a> From<&'a ReflectanceVolume> for VolumeRef<'a> {
    fn from(v: &'a ReflectanceVolume) -> Self {
        VolumeRef::Reflectance(v)
    }
}

impl<'a> From<&'a HeatMap2D> for VolumeRef<'a> {
    fn from(v: &'a HeatMap2D) -> Self {
        VolumeRef::HeatMap(v)
    }
}

impl<'a> From<&'a DepthMap> for VolumeRef<'a> {
    fn from(v: &'a DepthMap) -> Self {
        VolumeRef::Depth(v)
    }
}

impl<'a> From<&'a Volume> for VolumeRef<'a> {
    fn from(v: &'a Volume) -> Self {
        match v {
            Volume::Transient(t) => VolumeRef::Transient(t),
            Volume::Reflectance(r) => VolumeRef::Reflectance(r),
            Volume::HeatMap(h) => VolumeRef::HeatMap(h),
            Volume::Depth(d) => VolumeRef::Depth(d),
        }
    }
}

fn dims_of(shape: &[usize]) -> [u32; 3] {
    let mut dims = [1u32; 3];
    for (d, &s) in dims.iter_mut().zip(shape) {
        *d = s as u32;
    }
    dims
}

impl VolumeRef<'_> {
    pub fn to_record(self) -> NlvtRecord {
        match self {
            VolumeRef::Transient(t) => NlvtRecord {
                kind: NlvtKind::Transient,
                dims: dims_of(t.data().shape()),
                wall_width_m: t.grid().wall_width_m,
                bin_width_s: t.grid().bin_width_s,
                t_start: t.t_start(),
                meters_per_unit: 0.0,
                payload: t.data().iter().copied().collect(),
            },
            VolumeRef::Reflectance(r) => {
                let g = r.grid();
                // Files carry only the third-axis length, so store the bin
                // width that reproduces z_max with that many bins.
                let axis_len = r.axis().len(g);
                let bin_width_s = if axis_len == g.nt {
                    g.bin_width_s
                } else {
                    g.bin_width_s * g.nt as f64 / axis_len as f64
                };
                NlvtRecord {
                    kind: match r.axis() {
                        AxisKind::Depth => NlvtKind::ReflectanceZ,
                        AxisKind::DepthSquared | AxisKind::TimeSquared => NlvtKind::ReflectanceU,
                    },
                    dims: dims_of(r.data().shape()),
                    wall_width_m: g.wall_width_m,
                    bin_width_s,
                    t_start: 0.0,
                    meters_per_unit: 0.0,
                    payload: r.data().iter().copied().collect(),
                }
            }
            VolumeRef::HeatMap(h) => {
                let (a, b) = h.data().dim();
                let dims = match h.axis() {
                    ProjectionAxis::X => [1, a as u32, b as u32],
                    ProjectionAxis::Y => [a as u32, 1, b as u32],
                    ProjectionAxis::Z => [a as u32, b as u32, 1],
                };
                NlvtRecord {
                    kind: NlvtKind::HeatMap,
                    dims,
                    wall_width_m: 0.0,
                    bin_width_s: 0.0,
                    t_start: h.t_start(),
                    meters_per_unit: 0.0,
                    payload: h.data().iter().copied().collect(),
                }
            }
            VolumeRef::Depth(d) => NlvtRecord {
                kind: NlvtKind::Depth,
                dims: dims_of(d.data().shape()),
                wall_width_m: d.grid().wall_width_m,
                // Time window of the grid; readers rebuild a 2-bin grid from it.
                bin_width_s: d.grid().t_max(),
                t_start: 0.0,
                meters_per_unit: 1.0,
                payload: d.data().iter().copied().collect(),
            },
        }
    }
}

/// Writes any volume as an NLVT file. The parent directory must exist.
pub fn write_volume<'a>(vol: impl Into<VolumeRef<'a>>, path: impl AsRef<Path>) -> Result<()> {
    vol.into().to_record().write(path.as_ref())
}

/// Reads an NLVT file into the volume type its header declares.
///
/// Transient files do not record `nz`, so the returned grid has `nz = nt`;
/// reflectance files likewise come back with `nt` equal to their depth
/// length. Use `with_grid` to relabel with the pipeline's grid.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let rec = NlvtRecord::read(path)?;
    let (d0, d1, d2) = rec.dims_usize();
    let grid_for = |n: usize, bw: f64| {
        GridSpec::new(d0, d1, n, n, rec.wall_width_m, bw)
            .map_err(|e| Error::format(path, e.to_string()))
    };
    let vol = match rec.kind {
        NlvtKind::Transient => {
            let grid = grid_for(d2, rec.bin_width_s)?;
            Volume::Transient(TransientImage::new(grid, rec.array3(), rec.t_start)?)
        }
        NlvtKind::ReflectanceZ | NlvtKind::ReflectanceU => {
            let grid = grid_for(d2, rec.bin_width_s)?;
            let axis = if rec.kind == NlvtKind::ReflectanceZ {
                AxisKind::Depth
            } else {
                AxisKind::DepthSquared
            };
            Volume::Reflectance(ReflectanceVolume::new(grid, rec.array3(), axis)?)
        }
        NlvtKind::HeatMap => {
            let (axis, shape) = match rec.dims.iter().rposition(|&d| d == 1) {
                Some(2) => (ProjectionAxis::Z, (d0, d1)),
                Some(1) => (ProjectionAxis::Y, (d0, d2)),
                Some(0) => (ProjectionAxis::X, (d1, d2)),
                _ => {
                    return Err(Error::format(
                        path,
                        format!("heat map dims {:?} have no unit axis", rec.dims),
                    ))
                }
            };
            let data = Array2::from_shape_vec(shape, rec.payload).expect("length checked");
            Volume::HeatMap(HeatMap2D::new(data, axis, rec.t_start)?)
        }
        NlvtKind::Depth => {
            if d2 != 1 {
                return Err(Error::format(path, format!("depth dims {:?}", rec.dims)));
            }
            let grid = grid_for(2, rec.bin_width_s / 2.0)?;
            let meters = depth_payload_meters(&rec, path)?;
            Volume::Depth(DepthMap::new(grid, meters)?)
        }
    };
    Ok(vol)
}

pub(super) fn depth_payload_meters(rec: &NlvtRecord, path: &Path) -> Result<Array2<f32>> {
    let mpu = rec.meters_per_unit;
    if !(mpu.is_finite() && mpu > 0.0) {
        return Err(Error::format(path, format!("meters_per_unit = {mpu}")));
    }
    let (d0, d1, _) = rec.dims_usize();
    let data = Array2::from_shape_vec((d0, d1), rec.payload.clone()).expect("length checked");
    Ok(if mpu == 1.0 {
        data
    } else {
        data.mapv(|v| (v as f64 * mpu) as f32)
    })
}
