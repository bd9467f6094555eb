//! Light-cone resampling between bin-centered depth/time axes and uniform
//! grids in `u = z²` / `v = (ct/2)²`.
//!
//! Both directions use linear interpolation of the source samples, averaged
//! exactly over each destination cell instead of point-sampled. Point
//! sampling drops whole depth bins where the squared grid is coarser than the
//! source axis.

use ndarray::{Array3, ArrayView3, Axis, Zip};

use crate::error::{Error, Result};
use crate::volumes::{AxisKind, GridSpec, ReflectanceVolume, TransientImage};

/// Sparse linear map along the innermost axis of a volume.
#[derive(Debug, Clone)]
pub(crate) struct AxisMap {
    n_in: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl AxisMap {
    fn from_dense(n_in: usize, dense: Vec<Vec<f64>>) -> Self {
        let rows = dense
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .enumerate()
                    .filter(|&(_, w)| w != 0.0)
                    .collect()
            })
            .collect();
        Self { n_in, rows }
    }

    pub fn n_out(&self) -> usize {
        self.rows.len()
    }

    /// Multiply each row by `f(row index)`.
    fn scale_rows(mut self, f: impl Fn(usize) -> f64) -> Self {
        for (i, row) in self.rows.iter_mut().enumerate() {
            let s = f(i);
            row.iter_mut().for_each(|(_, w)| *w *= s);
        }
        self
    }

    /// Multiply each column by `f(column index)`.
    fn scale_cols(mut self, f: impl Fn(usize) -> f64) -> Self {
        for row in &mut self.rows {
            row.iter_mut().for_each(|(j, w)| *w *= f(*j));
        }
        self
    }

    #[cfg(test)]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.rows[row]
            .iter()
            .find(|&&(j, _)| j == col)
            .map_or(0.0, |&(_, w)| w)
    }

    pub fn apply(&self, input: ArrayView3<f64>) -> Array3<f64> {
        let (nx, ny, n) = input.dim();
        assert_eq!(n, self.n_in, "axis length mismatch");
        let mut out = Array3::zeros((nx, ny, self.n_out()));
        Zip::from(out.lanes_mut(Axis(2)))
            .and(input.lanes(Axis(2)))
            .par_for_each(|mut dst, src| {
                for (d, row) in dst.iter_mut().zip(&self.rows) {
                    *d = row.iter().map(|&(j, w)| w * src[j]).sum();
                }
            });
        out
    }
}

/// Linear piece `a + b·z` on `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

/// Pieces of the interpolation basis function of center sample `r` out of
/// `n` bins of width `h` over `(0, n·h]`. The first and last functions are
/// held constant out to the axis ends.
fn center_basis(r: usize, n: usize, h: f64) -> Vec<Piece> {
    let c = |k: f64| (k + 0.5) * h;
    let rf = r as f64;
    let mut pieces = Vec::with_capacity(2);
    if r == 0 {
        pieces.push(Piece { lo: 0.0, hi: c(0.0), a: 1.0, b: 0.0 });
    } else {
        let lo = c(rf - 1.0);
        pieces.push(Piece { lo, hi: c(rf), a: -lo / h, b: 1.0 / h });
    }
    if r + 1 == n {
        pieces.push(Piece { lo: c(rf), hi: n as f64 * h, a: 1.0, b: 0.0 });
    } else {
        let hi = c(rf + 1.0);
        pieces.push(Piece { lo: c(rf), hi, a: hi / h, b: -1.0 / h });
    }
    pieces
}

/// Map from `n_in` bin-centered samples over `(0, len]` to `n_out` uniform
/// samples of the squared coordinate over `[0, len²]`. Row `m` is the mean
/// of the interpolant over the cell `[s_m − Δ/2, s_m + Δ/2]`; row 0 is zero.
fn to_squared(n_in: usize, n_out: usize, len: f64) -> AxisMap {
    let h = len / n_in as f64;
    let step = len * len / (n_out - 1) as f64;
    let bases: Vec<_> = (0..n_in).map(|r| center_basis(r, n_in, h)).collect();
    let mut dense = vec![vec![0.0; n_in]; n_out];
    for (m, row) in dense.iter_mut().enumerate().skip(1) {
        let s = m as f64 * step;
        let za = (s - 0.5 * step).max(0.0).sqrt();
        let zb = (s + 0.5 * step).min(len * len).sqrt();
        for (w, pieces) in row.iter_mut().zip(&bases) {
            // ∫ f(√s) ds = ∫ f(z)·2z dz over each linear piece.
            *w = pieces
                .iter()
                .map(|p| {
                    let (lo, hi) = (p.lo.max(za), p.hi.min(zb));
                    if hi <= lo {
                        return 0.0;
                    }
                    p.a * (hi * hi - lo * lo) + 2.0 * p.b / 3.0 * (hi.powi(3) - lo.powi(3))
                })
                .sum::<f64>()
                / step;
        }
    }
    AxisMap::from_dense(n_in, dense)
}

/// Map from `n_in` uniform samples of the squared coordinate over `[0, len²]`
/// to `n_out` bins over `(0, len]`. Row `k` is the mean of the interpolant
/// over `[k·h, (k+1)·h]`.
fn from_squared(n_in: usize, n_out: usize, len: f64) -> AxisMap {
    let h = len / n_out as f64;
    let step = len * len / (n_in - 1) as f64;
    let mut dense = vec![vec![0.0; n_in]; n_out];
    for (k, row) in dense.iter_mut().enumerate() {
        let (za, zb) = (k as f64 * h, (k + 1) as f64 * h);
        for (m, w) in row.iter_mut().enumerate() {
            let s = m as f64 * step;
            // Rising edge (z² − s_prev)/Δ, falling edge (s_next − z²)/Δ.
            let mut pieces = Vec::with_capacity(2);
            if m > 0 {
                let prev = s - step;
                pieces.push((prev.sqrt(), s.sqrt(), -prev / step, 1.0 / step));
            }
            let next = s + step;
            pieces.push((s.sqrt(), next.sqrt(), next / step, -1.0 / step));
            *w = pieces
                .iter()
                .map(|&(plo, phi, a, b)| {
                    let (lo, hi) = (plo.max(za), phi.min(zb));
                    if hi <= lo {
                        return 0.0;
                    }
                    a * (hi - lo) + b / 3.0 * (hi.powi(3) - lo.powi(3))
                })
                .sum::<f64>()
                / h;
        }
    }
    AxisMap::from_dense(n_in, dense)
}

/// The four light-cone resampling operators for one grid and cone length.
#[derive(Debug, Clone)]
pub(crate) struct ConeMaps {
    pub depth_to_cone: AxisMap,
    pub cone_to_depth: AxisMap,
    pub time_to_cone: AxisMap,
    pub cone_to_time: AxisMap,
}

impl ConeMaps {
    pub fn new(grid: &GridSpec, depth_samples: usize, time_samples: usize) -> Self {
        let len = grid.z_max();
        let dz = grid.depth_bin_width();
        // Distance travelled out and back during time bin k, at its center.
        let tz = len / grid.nt as f64;
        let depth = |k: usize| (k as f64 + 0.5) * dz;
        let tdepth = |k: usize| (k as f64 + 0.5) * tz;
        Self {
            depth_to_cone: to_squared(grid.nz, depth_samples, len)
                .scale_cols(|r| 0.5 / depth(r)),
            cone_to_depth: from_squared(depth_samples, grid.nz, len)
                .scale_rows(|k| 2.0 * depth(k)),
            time_to_cone: to_squared(grid.nt, time_samples, len)
                .scale_cols(|k| tdepth(k).powi(3)),
            cone_to_time: from_squared(time_samples, grid.nt, len)
                .scale_rows(|k| if k == 0 { 0.0 } else { tdepth(k).powi(-3) }),
        }
    }
}

pub(crate) fn to_f64(a: &Array3<f32>) -> Array3<f64> {
    a.mapv(f64::from)
}

pub(crate) fn to_f32_clamped(a: &Array3<f64>) -> Array3<f32> {
    a.mapv(|v| v.max(0.0) as f32)
}

fn require_axis(vol: &ReflectanceVolume, axis: AxisKind) -> Result<()> {
    if vol.axis() != axis {
        return Err(Error::InvalidData(format!(
            "expected a {axis:?} volume, got {:?}",
            vol.axis()
        )));
    }
    Ok(())
}

/// `τ(x, y, t) → v^{3/2}·τ(x, y, 2√v/c)` on the `nt`-sample v-grid.
pub fn resample_time(tau: &TransientImage) -> ReflectanceVolume {
    let grid = *tau.grid();
    let maps = ConeMaps::new(&grid, grid.nz, grid.nt);
    let out = maps.time_to_cone.apply(to_f64(tau.data()).view());
    ReflectanceVolume::from_parts(grid, to_f32_clamped(&out), AxisKind::TimeSquared)
}

/// Inverse of [`resample_time`]: divides by `v^{3/2}`; time bin 0 is zero.
pub fn resample_time_inverse(cone: &ReflectanceVolume) -> Result<TransientImage> {
    require_axis(cone, AxisKind::TimeSquared)?;
    let grid = *cone.grid();
    let maps = ConeMaps::new(&grid, grid.nz, grid.nt);
    let out = maps.cone_to_time.apply(to_f64(cone.data()).view());
    Ok(TransientImage::from_parts(grid, to_f32_clamped(&out), 0.0))
}

/// `ρ(x, y, z) → ρ(x, y, √u)/(2√u)` on the `nz`-sample u-grid.
pub fn resample_depth(rho: &ReflectanceVolume) -> Result<ReflectanceVolume> {
    require_axis(rho, AxisKind::Depth)?;
    let grid = *rho.grid();
    let maps = ConeMaps::new(&grid, grid.nz, grid.nt);
    let out = maps.depth_to_cone.apply(to_f64(rho.data()).view());
    Ok(ReflectanceVolume::from_parts(
        grid,
        to_f32_clamped(&out),
        AxisKind::DepthSquared,
    ))
}

/// Inverse of [`resample_depth`]: multiplies by `2z` at depth bin centers.
pub fn resample_depth_inverse(rho_u: &ReflectanceVolume) -> Result<ReflectanceVolume> {
    require_axis(rho_u, AxisKind::DepthSquared)?;
    let grid = *rho_u.grid();
    let maps = ConeMaps::new(&grid, grid.nz, grid.nt);
    let out = maps.cone_to_depth.apply(to_f64(rho_u.data()).view());
    Ok(ReflectanceVolume::from_parts(grid, to_f32_clamped(&out), AxisKind::Depth))
}
