//! Confocal image formation through the light-cone transform, and its
//! Wiener-filtered inverse.

mod fft;
mod psf;
mod resample;

use ndarray::{s, Array3, Zip};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::volumes::{
    AxisKind, GridSpec, HeatMap2D, ProjectionAxis, ReflectanceVolume, TransientImage,
};
use fft::Fft3;
use resample::{to_f32_clamped, to_f64, ConeMaps};

pub use psf::{build_psf, CorrectionVolume, Psf, PsfSpectrum};
pub use resample::{resample_depth, resample_depth_inverse, resample_time, resample_time_inverse};

/// Default Wiener regularization weight.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Frequency-domain inverse filter for one kernel and regularization weight.
#[derive(Debug, Clone)]
pub struct WienerFilter {
    data: Array3<Complex64>,
}

impl WienerFilter {
    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }
}

/// Forward and inverse projection sharing one kernel spectrum, FFT plan and
/// set of resampling operators.
pub struct LctOperator {
    grid: GridSpec,
    cone_len: usize,
    fft: Fft3,
    spectrum: PsfSpectrum,
    maps: ConeMaps,
}

impl LctOperator {
    pub fn new(psf: &Psf) -> Self {
        let fft = Fft3::new(psf.shape());
        let spectrum = PsfSpectrum::with_fft(psf, &fft);
        let grid = *psf.grid();
        let cone_len = psf.cone_len();
        Self {
            maps: ConeMaps::new(&grid, cone_len, cone_len),
            grid,
            cone_len,
            fft,
            spectrum,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spectrum(&self) -> &PsfSpectrum {
        &self.spectrum
    }

    fn check_grid(&self, other: &GridSpec) -> Result<()> {
        if *other != self.grid {
            return Err(Error::InvalidGrid(format!(
                "volume grid {other:?} does not match kernel grid {:?}",
                self.grid
            )));
        }
        Ok(())
    }

    /// Circular convolution of a light-cone volume with `filter` on the
    /// padded grid, cropped back to the unpadded extent.
    fn convolve(&self, cone: &Array3<f64>, filter: &Array3<Complex64>) -> Array3<f64> {
        let (nx, ny, nv) = cone.dim();
        let mut buf = Array3::<Complex64>::zeros(self.fft.shape());
        Zip::from(buf.slice_mut(s![..nx, ..ny, ..nv]))
            .and(cone)
            .for_each(|b, &v| *b = Complex64::new(v, 0.0));
        self.fft.forward(&mut buf);
        Zip::from(&mut buf).and(filter).par_for_each(|b, &f| *b *= f);
        self.fft.inverse(&mut buf);
        buf.slice(s![..nx, ..ny, ..nv]).mapv(|v| v.re)
    }

    pub(crate) fn forward_raw(&self, rho: &Array3<f64>) -> Array3<f64> {
        let cone = self.maps.depth_to_cone.apply(rho.view());
        let blurred = self.convolve(&cone, self.spectrum.data());
        self.maps.cone_to_time.apply(blurred.view())
    }

    /// Transient produced by the scene `rho`.
    pub fn forward(&self, rho: &ReflectanceVolume) -> Result<TransientImage> {
        self.check_grid(rho.grid())?;
        if rho.axis() != AxisKind::Depth {
            return Err(Error::InvalidData(format!(
                "forward projection needs a Depth volume, got {:?}",
                rho.axis()
            )));
        }
        let tau = self.forward_raw(&to_f64(rho.data()));
        Ok(TransientImage::new(self.grid, to_f32_clamped(&tau), 0.0)?)
    }

    /// `Ĥ*/(|Ĥ|² + E/α) + correction`, with `E` the kernel's squared L2 norm
    /// so that `alpha` does not depend on the kernel's scale.
    pub fn wiener_filter(
        &self,
        alpha: f64,
        correction: Option<&CorrectionVolume>,
    ) -> Result<WienerFilter> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::param("alpha", format!("{alpha} is not a positive finite number")));
        }
        if let Some(c) = correction {
            c.check_broadcast(self.fft.shape())?;
        }
        let reg = self.spectrum.mean_power() / alpha;
        let mut data = self.spectrum.data().mapv(|h| h.conj() / (h.norm_sqr() + reg));
        if let Some(c) = correction {
            c.add_to(&mut data)?;
        }
        Ok(WienerFilter { data })
    }

    pub fn reconstruct_with(
        &self,
        tau: &TransientImage,
        filter: &WienerFilter,
    ) -> Result<ReflectanceVolume> {
        self.check_grid(tau.grid())?;
        if filter.data.dim() != self.fft.shape() {
            let (a, b, c) = filter.data.dim();
            let (x, y, z) = self.fft.shape();
            return Err(Error::Shape {
                expected: vec![x, y, z],
                actual: vec![a, b, c],
            });
        }
        let cone = self.maps.time_to_cone.apply(to_f64(tau.data()).view());
        let deconv = self.convolve(&cone, &filter.data);
        let rho = self.maps.cone_to_depth.apply(deconv.view());
        ReflectanceVolume::new(self.grid, to_f32_clamped(&rho), AxisKind::Depth)
    }

    pub fn reconstruct(
        &self,
        tau: &TransientImage,
        alpha: f64,
        correction: Option<&CorrectionVolume>,
    ) -> Result<ReflectanceVolume> {
        self.reconstruct_with(tau, &self.wiener_filter(alpha, correction)?)
    }

    pub fn cone_len(&self) -> usize {
        self.cone_len
    }
}

/// Transient of `rho` under the kernel `psf`; negatives from interpolation
/// are clamped to zero.
pub fn forward_project(rho: &ReflectanceVolume, psf: &Psf) -> Result<TransientImage> {
    LctOperator::new(psf).forward(rho)
}

/// Regularized inverse of [`forward_project`].
pub fn wiener_reconstruct(
    tau: &TransientImage,
    psf: &Psf,
    alpha: f64,
    correction: Option<&CorrectionVolume>,
) -> Result<ReflectanceVolume> {
    LctOperator::new(psf).reconstruct(tau, alpha, correction)
}

/// Max over depth of a reconstruction.
pub fn depth_max_project(rho: &ReflectanceVolume) -> Result<HeatMap2D> {
    max_project(rho, ProjectionAxis::Z)
}

pub fn max_project(rho: &ReflectanceVolume, axis: ProjectionAxis) -> Result<HeatMap2D> {
    if rho.axis() != AxisKind::Depth {
        return Err(Error::InvalidData(format!(
            "max projection needs a Depth volume, got {:?}",
            rho.axis()
        )));
    }
    Ok(HeatMap2D::from_volume(rho.data(), axis, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volumes::SPEED_OF_LIGHT;
    use proptest::prelude::*;

    fn small() -> GridSpec {
        GridSpec::new(8, 8, 16, 16, 0.8, 0.25e-9).unwrap()
    }

    fn volume(grid: GridSpec, voxels: &[((usize, usize, usize), f32)]) -> ReflectanceVolume {
        let mut data = Array3::zeros(grid.volume_shape());
        for &(idx, v) in voxels {
            data[idx] = v;
        }
        ReflectanceVolume::new(grid, data, AxisKind::Depth).unwrap()
    }

    fn argmax(lane: ndarray::ArrayView1<f32>) -> usize {
        lane.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
    }

    #[test]
    fn zero_scene_gives_zero_transient() {
        let g = small();
        let psf = build_psf(&g).unwrap();
        let tau = forward_project(&ReflectanceVolume::zeros(g, AxisKind::Depth), &psf).unwrap();
        assert!(tau.data().iter().all(|&v| v == 0.0));
        let rho = wiener_reconstruct(&tau, &psf, 1.0, None).unwrap();
        assert!(rho.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn on_axis_voxel_peaks_at_round_trip_time() {
        let g = GridSpec::new(16, 16, 64, 64, 1.0, 0.25e-9).unwrap();
        let psf = Psf::build(&g, 2).unwrap();
        for k in [30, 45, 60] {
            let tau = forward_project(&volume(g, &[((5, 9, k), 1.0)]), &psf).unwrap();
            let lane = tau.data().slice(s![5, 9, ..]);
            let z = g.depth_center(k);
            let want = (2.0 * z / (SPEED_OF_LIGHT * g.bin_width_s) - 0.5).round() as usize;
            assert_eq!(argmax(lane), want);
            // The wall point above the voxel collects the most photons. Close
            // neighbours tie with it: their offsets round to the same v-lag.
            let totals = tau.data().sum_axis(ndarray::Axis(2));
            let best = totals.iter().copied().fold(0.0f32, f32::max);
            assert_eq!(totals[[5, 9]], best);
        }
    }

    #[test]
    fn two_voxels_at_double_depth_fall_off_sixteen_fold() {
        let g = GridSpec::new(4, 4, 64, 64, 0.5, 0.25e-9).unwrap();
        let psf = Psf::build(&g, 4).unwrap();
        let peak = |z: f64| {
            let k = g.nearest_depth_bin(z).unwrap();
            let tau = forward_project(&volume(g, &[((1, 1, k), 1.0)]), &psf).unwrap();
            let lane = tau.data().slice(s![1, 1, ..]);
            f64::from(lane[argmax(lane)])
        };
        let ratio = peak(1.1) / peak(2.2);
        assert!((ratio / 16.0 - 1.0).abs() < 0.1, "ratio {ratio}");
    }

    #[test]
    fn alpha_must_be_positive() {
        let g = small();
        let psf = build_psf(&g).unwrap();
        let tau = TransientImage::zeros(g);
        for a in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                wiener_reconstruct(&tau, &psf, a, None),
                Err(Error::Parameter { name: "alpha", .. })
            ));
        }
    }

    #[test]
    fn correction_shape_is_checked() {
        let g = small();
        let psf = build_psf(&g).unwrap();
        let tau = TransientImage::zeros(g);
        let bad = CorrectionVolume::zeros((3, 1, 1));
        assert!(matches!(
            wiener_reconstruct(&tau, &psf, 1.0, Some(&bad)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_correction_is_identity() {
        let g = small();
        let psf = build_psf(&g).unwrap();
        let tau = forward_project(&volume(g, &[((2, 3, 10), 4.0), ((6, 1, 12), 1.0)]), &psf).unwrap();
        let plain = wiener_reconstruct(&tau, &psf, 10.0, None).unwrap();
        let zero = CorrectionVolume::zeros(psf.shape());
        let corrected = wiener_reconstruct(&tau, &psf, 10.0, Some(&zero)).unwrap();
        assert_eq!(plain, corrected);
        let broadcast = CorrectionVolume::zeros((1, 1, 1));
        assert_eq!(plain, wiener_reconstruct(&tau, &psf, 10.0, Some(&broadcast)).unwrap());
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let psf = build_psf(&small()).unwrap();
        let other = GridSpec::new(8, 8, 16, 16, 1.0, 0.25e-9).unwrap();
        assert!(matches!(
            forward_project(&ReflectanceVolume::zeros(other, AxisKind::Depth), &psf),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn max_projection_examples() {
        let g = small();
        let zero = depth_max_project(&ReflectanceVolume::zeros(g, AxisKind::Depth)).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));

        let one = depth_max_project(&volume(g, &[((3, 5, 7), 7.0)])).unwrap();
        assert_eq!(one.data().dim(), (8, 8));
        for ((i, j), &v) in one.data().indexed_iter() {
            assert_eq!(v, if (i, j) == (3, 5) { 7.0 } else { 0.0 });
        }

        let data = Array3::from_shape_fn(g.volume_shape(), |(i, j, k)| (i + j + k) as f32);
        let rho = ReflectanceVolume::new(g, data.clone(), AxisKind::Depth).unwrap();
        let map = depth_max_project(&rho).unwrap();
        assert_eq!(map.data(), &data.slice(s![.., .., g.nz - 1]));
    }

    fn sparse_volume(g: GridSpec, voxels: &[(usize, usize, usize, f32)]) -> Array3<f64> {
        let mut a = Array3::zeros(g.volume_shape());
        for &(i, j, k, v) in voxels {
            a[[i % g.nx, j % g.ny, k % g.nz]] += f64::from(v);
        }
        a
    }

    fn voxel_strategy() -> impl Strategy<Value = Vec<(usize, usize, usize, f32)>> {
        prop::collection::vec((0usize..8, 0usize..8, 0usize..16, 0.1f32..10.0), 1..8)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn forward_is_linear(
            v1 in voxel_strategy(),
            v2 in voxel_strategy(),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let g = small();
            let op = LctOperator::new(&build_psf(&g).unwrap());
            let (r1, r2) = (sparse_volume(g, &v1), sparse_volume(g, &v2));
            let combined = op.forward_raw(&(&r1 * a + &r2 * b));
            let separate = op.forward_raw(&r1) * a + op.forward_raw(&r2) * b;
            let err = (&combined - &separate).mapv(|v| v * v).sum().sqrt();
            let norm = separate.mapv(|v| v * v).sum().sqrt().max(1e-30);
            prop_assert!(err / norm < 1e-5, "relative error {}", err / norm);
        }

        #[test]
        fn lateral_shift_moves_transient(
            v in prop::collection::vec((2usize..5, 2usize..5, 4usize..16, 0.5f32..5.0), 1..4),
            dx in 0usize..3,
            dy in 0usize..3,
        ) {
            let g = small();
            let op = LctOperator::new(&build_psf(&g).unwrap());
            let base = sparse_volume(g, &v);
            let shifted: Vec<_> = v.iter().map(|&(i, j, k, a)| (i + dx, j + dy, k, a)).collect();
            let moved = sparse_volume(g, &shifted);
            let t0 = op.forward_raw(&base);
            let t1 = op.forward_raw(&moved);
            let scale = t0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..g.nx - dx {
                for j in 0..g.ny - dy {
                    for k in 0..g.nt {
                        let d = (t1[[i + dx, j + dy, k]] - t0[[i, j, k]]).abs();
                        prop_assert!(d <= 1e-9 * scale.max(1.0), "mismatch at {:?}", (i, j, k));
                    }
                }
            }
        }
    }
}
