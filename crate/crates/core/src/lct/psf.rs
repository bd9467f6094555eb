use std::path::Path;

use ndarray::{Array3, Zip};
use rustfft::num_complex::Complex64;

use super::fft::Fft3;
use crate::error::{Error, Result};
use crate::volumes::{GridSpec, NlvtKind, NlvtRecord};

/// Discretized hypercone kernel on the zero-padded light-cone grid.
///
/// Shape is `(2·nx, 2·ny, 2·nv)` where `nv = nt · oversample` is the number
/// of v-samples. Lateral offsets use wrap-around layout: index `i < nx` is
/// offset `+i`, otherwise `i − 2·nx`.
#[derive(Debug, Clone, PartialEq)]
pub struct Psf {
    grid: GridSpec,
    oversample: usize,
    data: Array3<f32>,
}

/// Kernel on the `nt`-sample v-grid.
pub fn build_psf(grid: &GridSpec) -> Result<Psf> {
    Psf::build(grid, 1)
}

fn signed_offset(i: usize, n: usize) -> f64 {
    if i < n {
        i as f64
    } else {
        i as f64 - 2.0 * n as f64
    }
}

impl Psf {
    /// Kernel on a v-grid with `nt · oversample` samples.
    pub fn build(grid: &GridSpec, oversample: usize) -> Result<Self> {
        grid.validate()?;
        if oversample == 0 {
            return Err(Error::param("oversample", "must be at least 1"));
        }
        let nv = grid.nt * oversample;
        let dv = grid.cone_step(nv);
        let (dx, dy) = (grid.dx(), grid.dy());
        let mut data = Array3::zeros((2 * grid.nx, 2 * grid.ny, 2 * nv));
        for ix in 0..2 * grid.nx {
            let ox = signed_offset(ix, grid.nx) * dx;
            for iy in 0..2 * grid.ny {
                let oy = signed_offset(iy, grid.ny) * dy;
                let w = ((ox * ox + oy * oy) / dv).round() as usize;
                // Lags past the v-range would wrap around the circular axis.
                if w < nv {
                    data[[ix, iy, w]] = 1.0;
                }
            }
        }
        Ok(Self {
            grid: *grid,
            oversample,
            data,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn oversample(&self) -> usize {
        self.oversample
    }

    /// Number of samples on the unpadded v-axis.
    pub fn cone_len(&self) -> usize {
        self.grid.nt * self.oversample
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn to_record(&self) -> NlvtRecord {
        let (a, b, c) = self.data.dim();
        NlvtRecord {
            kind: NlvtKind::ReflectanceU,
            dims: [a as u32, b as u32, c as u32],
            wall_width_m: self.grid.wall_width_m,
            bin_width_s: self.grid.bin_width_s,
            t_start: 0.0,
            meters_per_unit: 1.0,
            payload: self.data.iter().copied().collect(),
        }
    }

    /// Rebuild from a record written by [`Psf::to_record`], checking it
    /// against `grid`.
    pub fn from_record(rec: NlvtRecord, grid: &GridSpec, path: &Path) -> Result<Self> {
        if rec.kind != NlvtKind::ReflectanceU {
            return Err(Error::format(path, format!("expected a reflectance-u kernel, got {:?}", rec.kind)));
        }
        let (a, b, c) = rec.dims_usize();
        if a != 2 * grid.nx || b != 2 * grid.ny || c == 0 || c % (2 * grid.nt) != 0 {
            return Err(Error::format(
                path,
                format!(
                    "kernel dims ({a}, {b}, {c}) do not fit grid {}×{}×{}",
                    grid.nx, grid.ny, grid.nt
                ),
            ));
        }
        if rec.wall_width_m != grid.wall_width_m || rec.bin_width_s != grid.bin_width_s {
            return Err(Error::format(
                path,
                format!(
                    "kernel geometry (wall {} m, bin {} s) differs from grid (wall {} m, bin {} s)",
                    rec.wall_width_m, rec.bin_width_s, grid.wall_width_m, grid.bin_width_s
                ),
            ));
        }
        if let Some(v) = rec.payload.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::format(path, format!("kernel entry {v} is not a finite nonnegative value")));
        }
        let data = Array3::from_shape_vec((a, b, c), rec.payload)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(Self {
            grid: *grid,
            oversample: c / (2 * grid.nt),
            data,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_record().write(path.as_ref())
    }

    pub fn read(path: impl AsRef<Path>, grid: &GridSpec) -> Result<Self> {
        let path = path.as_ref();
        Self::from_record(NlvtRecord::read(path)?, grid, path)
    }
}

/// 3D Fourier transform of a [`Psf`].
#[derive(Debug, Clone)]
pub struct PsfSpectrum {
    data: Array3<Complex64>,
}

impl PsfSpectrum {
    pub fn new(psf: &Psf) -> Self {
        Self::with_fft(psf, &Fft3::new(psf.shape()))
    }

    pub(crate) fn with_fft(psf: &Psf, fft: &Fft3) -> Self {
        let mut data = psf.data.mapv(|v| Complex64::new(f64::from(v), 0.0));
        fft.forward(&mut data);
        Self { data }
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    /// Mean of `|Ĥ|²`, equal to the kernel's squared L2 norm.
    pub fn mean_power(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.data.len() as f64
    }

    /// Transform back to the spatial domain.
    pub fn to_kernel(&self) -> Array3<f64> {
        let mut data = self.data.clone();
        Fft3::new(data.dim()).inverse(&mut data);
        data.mapv(|v| v.re)
    }
}

/// Additive real correction to the inverse filter, broadcast along any axis
/// of length 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionVolume {
    data: Array3<f32>,
}

impl CorrectionVolume {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("correction entry {i} is not finite")));
        }
        Ok(Self { data })
    }

    pub fn zeros(shape: (usize, usize, usize)) -> Self {
        Self {
            data: Array3::zeros(shape),
        }
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rec = NlvtRecord::read(path)?;
        if rec.kind != NlvtKind::ReflectanceU {
            return Err(Error::format(path, format!("expected a reflectance-u correction, got {:?}", rec.kind)));
        }
        let dims = rec.dims_usize();
        let data = Array3::from_shape_vec(dims, rec.payload)
            .map_err(|e| Error::format(path, e.to_string()))?;
        Self::new(data)
    }

    pub fn to_record(&self) -> NlvtRecord {
        let (a, b, c) = self.data.dim();
        NlvtRecord {
            kind: NlvtKind::ReflectanceU,
            dims: [a as u32, b as u32, c as u32],
            wall_width_m: 0.0,
            bin_width_s: 0.0,
            t_start: 0.0,
            meters_per_unit: 1.0,
            payload: self.data.iter().copied().collect(),
        }
    }

    pub fn check_broadcast(&self, target: (usize, usize, usize)) -> Result<()> {
        let t = [target.0, target.1, target.2];
        let ok = self.data.shape().iter().zip(t).all(|(&d, n)| d == 1 || d == n);
        if !ok {
            return Err(Error::Shape {
                expected: t.to_vec(),
                actual: self.data.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub(crate) fn add_to(&self, filter: &mut Array3<Complex64>) -> Result<()> {
        self.check_broadcast(filter.dim())?;
        let view = self
            .data
            .broadcast(filter.dim())
            .expect("broadcast checked above");
        Zip::from(filter)
            .and(&view)
            .par_for_each(|f, &c| f.re += f64::from(c));
        Ok(())
    }
}
