use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Spatial and temporal discretization of a confocal scan.
///
/// Wall samples sit at pixel centers of an `nx × ny` grid spanning a square
/// of side `wall_width_m`, centered on the origin. Time bin `k` covers
/// `[k·Δt, (k+1)·Δt)` and is represented by its center. The depth axis spans
/// `(0, z_max]` with `z_max = c·nt·Δt/2`, split into `nz` bins represented by
/// their centers. The light-cone axes `u = z²` and `v = (ct/2)²` are sampled
/// uniformly over `[0, z_max²]` with `nz` and `nt` samples, both endpoints
/// included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub nz: usize,
    pub wall_width_m: f64,
    pub bin_width_s: f64,
}

impl Default for GridSpec {
    /// 32×32 wall, 64 time and depth bins, 2 m wall, 0.25 ns bins.
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            nt: 64,
            nz: 64,
            wall_width_m: 2.0,
            bin_width_s: 0.25e-9,
        }
    }
}

impl GridSpec {
    pub fn new(
        nx: usize,
        ny: usize,
        nt: usize,
        nz: usize,
        wall_width_m: f64,
        bin_width_s: f64,
    ) -> Result<Self> {
        let grid = Self {
            nx,
            ny,
            nt,
            nz,
            wall_width_m,
            bin_width_s,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("nx", self.nx),
            ("ny", self.ny),
            ("nt", self.nt),
            ("nz", self.nz),
        ] {
            if n < 2 {
                return Err(Error::InvalidGrid(format!("{name} = {n}, must be >= 2")));
            }
        }
        if !(self.wall_width_m.is_finite() && self.wall_width_m > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "wall_width_m = {}, must be > 0",
                self.wall_width_m
            )));
        }
        if !(self.bin_width_s.is_finite() && self.bin_width_s > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "bin_width_s = {}, must be > 0",
                self.bin_width_s
            )));
        }
        Ok(())
    }

    pub fn transient_shape(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nt)
    }

    pub fn volume_shape(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    /// Padded shape used for linear convolution via FFT.
    pub fn padded_shape(&self) -> (usize, usize, usize) {
        (2 * self.nx, 2 * self.ny, 2 * self.nt)
    }

    pub fn dx(&self) -> f64 {
        self.wall_width_m / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.wall_width_m / self.ny as f64
    }

    /// Wall coordinate of sample `i` along x.
    pub fn wall_x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx() - 0.5 * self.wall_width_m
    }

    pub fn wall_y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy() - 0.5 * self.wall_width_m
    }

    /// Total duration of one transient.
    pub fn t_max(&self) -> f64 {
        self.nt as f64 * self.bin_width_s
    }

    pub fn time_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.bin_width_s
    }

    pub fn z_max(&self) -> f64 {
        SPEED_OF_LIGHT * self.nt as f64 * self.bin_width_s / 2.0
    }

    /// Largest `f32` not exceeding `z_max`.
    pub fn z_max_f32(&self) -> f32 {
        let z = self.z_max();
        let zf = z as f32;
        if zf as f64 > z {
            zf.next_down()
        } else {
            zf
        }
    }

    pub fn depth_bin_width(&self) -> f64 {
        self.z_max() / self.nz as f64
    }

    pub fn depth_center(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.depth_bin_width()
    }

    /// Index of the depth bin whose center is nearest `z`, for `z` in `(0, z_max]`.
    pub fn nearest_depth_bin(&self, z: f64) -> Option<usize> {
        if !(z > 0.0 && z <= self.z_max()) {
            return None;
        }
        let k = (z / self.depth_bin_width() - 0.5).round().max(0.0) as usize;
        Some(k.min(self.nz - 1))
    }

    pub fn u_max(&self) -> f64 {
        self.z_max() * self.z_max()
    }

    pub fn v_max(&self) -> f64 {
        self.u_max()
    }

    /// Spacing of a uniform light-cone axis with `n` samples over `[0, z_max²]`.
    pub fn cone_step(&self, n: usize) -> f64 {
        self.v_max() / (n - 1) as f64
    }

    pub fn v_step(&self) -> f64 {
        self.cone_step(self.nt)
    }

    pub fn u_step(&self) -> f64 {
        self.cone_step(self.nz)
    }
}
