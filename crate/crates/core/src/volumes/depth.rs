use std::fs;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use ndarray::Array2;

use super::nlvt::{depth_payload_meters, NlvtKind, NlvtRecord, MAGIC};
use super::{DepthMap, GridSpec};
use crate::error::{Error, Result};

/// Reads a depth map from a 16-bit grayscale PNG or an NLVT depth file.
///
/// PNG pixel `k` becomes `k · meters_per_unit` meters (0 stays the
/// "no surface" sentinel). NLVT depth files carry their own scale in the
/// header, which takes precedence. Distances beyond the grid's `z_max` are
/// clamped to it. Image width maps to `x`, height to `y`.
pub fn read_depth_map(
    path: impl AsRef<Path>,
    grid: &GridSpec,
    meters_per_unit: f64,
) -> Result<DepthMap> {
    let path = path.as_ref();
    grid.validate()?;
    if !(meters_per_unit.is_finite() && meters_per_unit > 0.0) {
        return Err(Error::param(
            "meters_per_unit",
            format!("{meters_per_unit} is not > 0"),
        ));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meters: Array2<f64> = if bytes.starts_with(MAGIC) {
        let rec = NlvtRecord::decode(&bytes, path)?;
        if rec.kind != NlvtKind::Depth {
            return Err(Error::format(path, format!("expected depth kind, found {:?}", rec.kind)));
        }
        let (d0, d1, d2) = rec.dims_usize();
        if (d0, d1, d2) != (grid.nx, grid.ny, 1) {
            return Err(Error::format(
                path,
                format!("depth dims {:?}, grid is {}×{}", rec.dims, grid.nx, grid.ny),
            ));
        }
        depth_payload_meters(&rec, path)?.mapv(|v| v as f64)
    } else {
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| Error::format(path, e.to_string()))?;
        let img = match img {
            DynamicImage::ImageLuma16(buf) => buf,
            other => {
                return Err(Error::format(
                    path,
                    format!(
                        "expected 16-bit single-channel image, found {:?}",
                        other.color()
                    ),
                ))
            }
        };
        let (w, h) = img.dimensions();
        if (w as usize, h as usize) != (grid.nx, grid.ny) {
            return Err(Error::format(
                path,
                format!("image is {w}×{h}, grid is {}×{}", grid.nx, grid.ny),
            ));
        }
        Array2::from_shape_fn((grid.nx, grid.ny), |(x, y)| {
            img.get_pixel(x as u32, y as u32)[0] as f64 * meters_per_unit
        })
    };
    DepthMap::from_meters_clamped(*grid, meters)
}

/// Writes a depth map as a 16-bit grayscale PNG, quantizing to
/// `meters_per_unit` steps (sentinels stay 0).
pub fn write_depth_png(depth: &DepthMap, path: impl AsRef<Path>, meters_per_unit: f64) -> Result<()> {
    let path = path.as_ref();
    if !(meters_per_unit.is_finite() && meters_per_unit > 0.0) {
        return Err(Error::param(
            "meters_per_unit",
            format!("{meters_per_unit} is not > 0"),
        ));
    }
    let (nx, ny) = depth.data().dim();
    let img = ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(nx as u32, ny as u32, |x, y| {
        let d = depth.data()[[x as usize, y as usize]] as f64;
        let units = (d / meters_per_unit).round();
        Luma([units.clamp(0.0, u16::MAX as f64) as u16])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::format(path, other.to_string()),
        })
}
