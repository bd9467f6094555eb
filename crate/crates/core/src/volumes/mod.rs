//! Discretization, volume containers and the NLVT file format.

mod depth;
mod grid;
mod nlvt;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use depth::{read_depth_map, write_depth_png};
pub use grid::{GridSpec, SPEED_OF_LIGHT};
pub use nlvt::{read_volume, write_volume, NlvtKind, NlvtRecord, Volume, VolumeRef, HEADER_LEN};

fn check_values<'a>(values: impl IntoIterator<Item = &'a f32>, what: &str) -> Result<()> {
    for (i, &v) in values.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidData(format!("{what}: entry {i} is not finite")));
        }
        if v < 0.0 {
            return Err(Error::InvalidData(format!("{what}: entry {i} is negative ({v})")));
        }
    }
    Ok(())
}

fn check_shape(expected: &[usize], actual: &[usize]) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        });
    }
    Ok(())
}

/// One confocal transient: photon counts `τ(x, y, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientImage {
    grid: GridSpec,
    data: Array3<f32>,
    t_start: f64,
}

impl TransientImage {
    pub fn new(grid: GridSpec, data: Array3<f32>, t_start: f64) -> Result<Self> {
        grid.validate()?;
        let (nx, ny, nt) = grid.transient_shape();
        check_shape(&[nx, ny, nt], data.shape())?;
        check_values(data.iter(), "transient")?;
        if !t_start.is_finite() {
            return Err(Error::param("t_start", "must be finite"));
        }
        Ok(Self {
            grid,
            data,
            t_start,
        })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            data: Array3::zeros(grid.transient_shape()),
            grid,
            t_start: 0.0,
        }
    }

    /// Caller guarantees the shape and value invariants.
    pub(crate) fn from_parts(grid: GridSpec, data: Array3<f32>, t_start: f64) -> Self {
        debug_assert_eq!(data.dim(), grid.transient_shape());
        Self {
            grid,
            data,
            t_start,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn with_t_start(mut self, t_start: f64) -> Self {
        self.t_start = t_start;
        self
    }

    /// Same volume, relabelled with a compatible grid (e.g. one that also
    /// carries `nz`, which transient files do not store).
    pub fn with_grid(mut self, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        check_shape(
            &[grid.nx, grid.ny, grid.nt],
            &[self.grid.nx, self.grid.ny, self.grid.nt],
        )?;
        self.grid = grid;
        Ok(self)
    }

    pub fn total(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }
}

/// Sampling of the third axis of a [`ReflectanceVolume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisKind {
    /// Uniform in depth `z` (bin centers), `nz` bins.
    Depth,
    /// Uniform in `u = z²` over `[0, z_max²]`, `nz` samples.
    DepthSquared,
    /// Uniform in `v = (ct/2)²` over `[0, z_max²]`, `nt` samples.
    TimeSquared,
}

impl AxisKind {
    pub fn len(self, grid: &GridSpec) -> usize {
        match self {
            AxisKind::Depth | AxisKind::DepthSquared => grid.nz,
            AxisKind::TimeSquared => grid.nt,
        }
    }
}

/// Hidden-scene albedo `ρ(x, y, z)`, or one of its light-cone resamplings.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceVolume {
    grid: GridSpec,
    data: Array3<f32>,
    axis: AxisKind,
}

impl ReflectanceVolume {
    pub fn new(grid: GridSpec, data: Array3<f32>, axis: AxisKind) -> Result<Self> {
        grid.validate()?;
        check_shape(&[grid.nx, grid.ny, axis.len(&grid)], data.shape())?;
        check_values(data.iter(), "reflectance")?;
        Ok(Self { grid, data, axis })
    }

    pub fn zeros(grid: GridSpec, axis: AxisKind) -> Self {
        Self {
            data: Array3::zeros((grid.nx, grid.ny, axis.len(&grid))),
            grid,
            axis,
        }
    }

    pub(crate) fn from_parts(grid: GridSpec, data: Array3<f32>, axis: AxisKind) -> Self {
        debug_assert_eq!(data.shape(), &[grid.nx, grid.ny, axis.len(&grid)]);
        Self { grid, data, axis }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<f32> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<f32> {
        self.data
    }

    pub fn axis(&self) -> AxisKind {
        self.axis
    }

    pub fn with_grid(mut self, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        check_shape(
            &[grid.nx, grid.ny, self.axis.len(&grid)],
            self.data.shape(),
        )?;
        self.grid = grid;
        Ok(self)
    }
}

/// Distance to the hidden surface per wall pixel; `0` marks "no surface".
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    grid: GridSpec,
    data: Array2<f32>,
}

impl DepthMap {
    pub fn new(grid: GridSpec, data: Array2<f32>) -> Result<Self> {
        grid.validate()?;
        check_shape(&[grid.nx, grid.ny], data.shape())?;
        let z_max = grid.z_max();
        for (i, &d) in data.iter().enumerate() {
            if !d.is_finite() || d < 0.0 || d as f64 > z_max {
                return Err(Error::InvalidData(format!(
                    "depth entry {i} = {d} outside {{0}} ∪ (0, {z_max}]"
                )));
            }
        }
        Ok(Self { grid, data })
    }

    /// Builds a depth map from arbitrary distances: non-positive or
    /// non-finite values become the sentinel, values beyond `z_max` are clamped.
    pub fn from_meters_clamped(grid: GridSpec, meters: Array2<f64>) -> Result<Self> {
        grid.validate()?;
        check_shape(&[grid.nx, grid.ny], meters.shape())?;
        let z_max = grid.z_max();
        let z_max_f = grid.z_max_f32();
        let data = meters.mapv(|d| {
            if !(d.is_finite() && d > 0.0) {
                0.0
            } else if d >= z_max {
                z_max_f
            } else {
                let f = d as f32;
                if f as f64 > z_max {
                    z_max_f
                } else if f <= 0.0 {
                    0.0
                } else {
                    f
                }
            }
        });
        Ok(Self { grid, data })
    }

    pub fn empty(grid: GridSpec) -> Self {
        Self {
            data: Array2::zeros((grid.nx, grid.ny)),
            grid,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn with_grid(self, grid: GridSpec) -> Result<Self> {
        Self::new(grid, self.data)
    }

    pub fn is_sentinel(d: f32) -> bool {
        d == 0.0
    }
}

/// The axis collapsed by a max projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionAxis {
    X,
    Y,
    Z,
}

impl ProjectionAxis {
    pub fn index(self) -> usize {
        match self {
            ProjectionAxis::X => 0,
            ProjectionAxis::Y => 1,
            ProjectionAxis::Z => 2,
        }
    }
}

/// Max projection of a volume along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap2D {
    data: Array2<f32>,
    axis: ProjectionAxis,
    t_start: f64,
}

impl HeatMap2D {
    pub fn new(data: Array2<f32>, axis: ProjectionAxis, t_start: f64) -> Result<Self> {
        check_values(data.iter(), "heat map")?;
        Ok(Self {
            data,
            axis,
            t_start,
        })
    }

    /// Max over `axis` of a nonnegative volume.
    pub fn from_volume(vol: &Array3<f32>, axis: ProjectionAxis, t_start: f64) -> Self {
        let data = vol.fold_axis(Axis(axis.index()), 0.0f32, |&acc, &v| acc.max(v));
        Self {
            data,
            axis,
            t_start,
        }
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn axis(&self) -> ProjectionAxis {
        self.axis
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }
}

/// Time-ordered transients at a nominal frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<TransientImage>,
    rate_hz: f64,
}

/// Allowed deviation of consecutive frame gaps from `1/rate`.
pub const FRAME_GAP_TOLERANCE_S: f64 = 1e-9;

impl FrameSequence {
    pub fn new(frames: Vec<TransientImage>, rate_hz: f64) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(Error::param("rate_hz", format!("{rate_hz} is not > 0")));
        }
        let period = 1.0 / rate_hz;
        for (k, pair) in frames.windows(2).enumerate() {
            let gap = pair[1].t_start - pair[0].t_start;
            if !(gap > 0.0) || (gap - period).abs() > FRAME_GAP_TOLERANCE_S {
                return Err(Error::InvalidData(format!(
                    "frames {k}->{}: gap {gap} s, expected {period} s",
                    k + 1
                )));
            }
            let (a, b) = (pair[0].grid, pair[1].grid);
            if a.transient_shape() != b.transient_shape() {
                return Err(Error::Shape {
                    expected: vec![a.nx, a.ny, a.nt],
                    actual: vec![b.nx, b.ny, b.nt],
                });
            }
        }
        Ok(Self { frames, rate_hz })
    }

    /// Builds a sequence from volumes, stamping frame `k` with `t0 + k/rate`.
    pub fn from_volumes(frames: Vec<TransientImage>, rate_hz: f64, t0: f64) -> Result<Self> {
        let frames = frames
            .into_iter()
            .enumerate()
            .map(|(k, f)| f.with_t_start(t0 + k as f64 / rate_hz))
            .collect();
        Self::new(frames, rate_hz)
    }

    pub fn frames(&self) -> &[TransientImage] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<TransientImage> {
        self.frames
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.frames.first().map(|f| f.t_start)
    }

    /// End of the last frame's interval.
    pub fn end_time(&self) -> Option<f64> {
        self.frames.last().map(|f| f.t_start + 1.0 / self.rate_hz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(3, 2, 4, 5, 1.0, 1e-9).unwrap()
    }

    #[test]
    fn transient_rejects_negative_and_nan() {
        let g = grid();
        let mut data = Array3::<f32>::zeros(g.transient_shape());
        data[[0, 0, 0]] = -1.0;
        assert!(TransientImage::new(g, data.clone(), 0.0).is_err());
        data[[0, 0, 0]] = f32::NAN;
        assert!(TransientImage::new(g, data, 0.0).is_err());
        let bad_shape = Array3::<f32>::zeros((3, 2, 5));
        assert!(matches!(
            TransientImage::new(g, bad_shape, 0.0),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn depth_map_clamps_and_sentinels() {
        let g = grid();
        let z_max = g.z_max();
        let m = Array2::from_shape_vec((3, 2), vec![0.0, -0.5, 0.1, z_max * 3.0, f64::NAN, z_max])
            .unwrap();
        let d = DepthMap::from_meters_clamped(g, m).unwrap();
        let v = d.data().iter().copied().collect::<Vec<_>>();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[1], 0.0);
        assert_eq!(v[2], 0.1f32);
        assert_eq!(v[3], g.z_max_f32());
        assert_eq!(v[4], 0.0);
        assert!(v.iter().all(|&x| x == 0.0 || (x > 0.0 && x as f64 <= z_max)));
    }

    #[test]
    fn heat_map_is_axis_max() {
        let mut vol = Array3::<f32>::zeros((4, 6, 5));
        vol[[3, 5, 2]] = 7.0;
        let h = HeatMap2D::from_volume(&vol, ProjectionAxis::Z, 0.0);
        assert_eq!(h.data().dim(), (4, 6));
        assert_eq!(h.data()[[3, 5]], 7.0);
        assert_eq!(h.data().sum(), 7.0);
        let hy = HeatMap2D::from_volume(&vol, ProjectionAxis::Y, 0.0);
        assert_eq!(hy.data().dim(), (4, 5));
        assert_eq!(hy.data()[[3, 2]], 7.0);
    }

    #[test]
    fn frame_sequence_checks_gaps() {
        let g = grid();
        let f = |t| TransientImage::zeros(g).with_t_start(t);
        assert!(FrameSequence::new(vec![f(0.0), f(0.25), f(0.5)], 4.0).is_ok());
        assert!(FrameSequence::new(vec![f(0.0), f(0.3)], 4.0).is_err());
        assert!(FrameSequence::new(vec![f(0.25), f(0.0)], 4.0).is_err());
        let seq = FrameSequence::from_volumes(vec![f(9.0); 30], 30.0, 0.0).unwrap();
        assert_eq!(seq.len(), 30);
        assert!((seq.end_time().unwrap() - 1.0).abs() < 1e-12);
    }
}
