use std::path::Path;

use image::{GrayImage, Luma};
use ndarray::Array2;

use crate::error::{CliError, Result};

/// 8-bit grayscale image of `data` indexed `[x, y]`, scaled so `max` maps
/// to 255. A nonpositive `max` gives a black image.
pub fn to_gray(data: &Array2<f32>, max: f32) -> GrayImage {
    let (w, h) = data.dim();
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = data[[x as usize, y as usize]] * scale;
        Luma([v.round().clamp(0.0, 255.0) as u8])
    })
}

pub fn write_gray(data: &Array2<f32>, max: f32, path: &Path) -> Result<()> {
    to_gray(data, max)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_to_max_and_handles_zero() {
        let mut d = Array2::zeros((3, 2));
        d[[2, 1]] = 4.0;
        d[[0, 0]] = 2.0;
        let img = to_gray(&d, 4.0);
        assert_eq!(img.dimensions(), (3, 2));
        assert_eq!(img.get_pixel(2, 1)[0], 255);
        assert_eq!(img.get_pixel(0, 0)[0], 128);
        assert!(to_gray(&Array2::zeros((2, 2)), 0.0).pixels().all(|p| p[0] == 0));
    }
}
