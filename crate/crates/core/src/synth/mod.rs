//! Pseudo-transient synthesis from depth maps and its augmentations.

use ndarray::{Array2, Array3, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lct::{LctOperator, Psf};
use crate::volumes::{AxisKind, DepthMap, FrameSequence, ReflectanceVolume, TransientImage};

/// Conversion from FWHM to standard deviation of a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Albedo written into every occupied voxel; sets the photon scale.
    pub albedo: f64,
    /// Temporal blur FWHM in picoseconds; 0 disables blur.
    pub fwhm_ps: f64,
    /// Depth offsets in meters, one output sequence per entry.
    pub shift_levels: Vec<f64>,
    pub poisson: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            albedo: 100.0,
            fwhm_ps: 70.0,
            shift_levels: vec![-0.5, -0.25, 0.0, 0.25, 0.5],
            poisson: true,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.albedo.is_finite() && self.albedo > 0.0) {
            return Err(Error::param("albedo", format!("{} must be > 0", self.albedo)));
        }
        if !(self.fwhm_ps.is_finite() && self.fwhm_ps >= 0.0) {
            return Err(Error::param("fwhm_ps", format!("{} must be >= 0", self.fwhm_ps)));
        }
        if self.shift_levels.is_empty() {
            return Err(Error::param("shift_levels", "must not be empty"));
        }
        if let Some(s) = self.shift_levels.iter().find(|s| !s.is_finite()) {
            return Err(Error::param("shift_levels", format!("{s} is not finite")));
        }
        Ok(())
    }
}

/// Binary occupancy volume: `albedo` at the depth bin nearest each pixel's
/// depth, zero elsewhere.
pub fn depth_to_reflectance(depth: &DepthMap, albedo: f64) -> Result<ReflectanceVolume> {
    if !(albedo.is_finite() && albedo > 0.0) {
        return Err(Error::param("albedo", format!("{albedo} must be > 0")));
    }
    let grid = *depth.grid();
    let mut data = Array3::zeros(grid.volume_shape());
    for ((i, j), &d) in depth.data().indexed_iter() {
        if let Some(k) = grid.nearest_depth_bin(f64::from(d)) {
            data[[i, j, k]] = albedo as f32;
        }
    }
    ReflectanceVolume::new(grid, data, AxisKind::Depth)
}

/// Gaussian width in time bins for a given FWHM.
pub fn blur_sigma_bins(fwhm_ps: f64, bin_width_s: f64) -> f64 {
    fwhm_ps * 1e-12 / (FWHM_PER_SIGMA * bin_width_s)
}

/// Normalized Gaussian taps over `[-⌊4σ⌋, ⌊4σ⌋]`.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).floor() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|w| w / total).collect()
}

/// Convolve every transient with a normalized Gaussian along time. Photons
/// blurred past either end of the time axis are lost.
pub fn apply_temporal_blur(tau: &TransientImage, fwhm_ps: f64) -> Result<TransientImage> {
    if !(fwhm_ps.is_finite() && fwhm_ps >= 0.0) {
        return Err(Error::param("fwhm_ps", format!("{fwhm_ps} must be >= 0")));
    }
    let sigma = blur_sigma_bins(fwhm_ps, tau.grid().bin_width_s);
    let taps = gaussian_taps(sigma);
    if taps.len() == 1 {
        return Ok(tau.clone());
    }
    let radius = (taps.len() / 2) as isize;
    let nt = tau.grid().nt as isize;
    let mut out = Array3::<f32>::zeros(tau.data().dim());
    Zip::from(out.lanes_mut(Axis(2)))
        .and(tau.data().lanes(Axis(2)))
        .par_for_each(|mut dst, src| {
            for (k, d) in dst.iter_mut().enumerate() {
                let k = k as isize;
                let mut acc = 0.0f64;
                for (o, w) in taps.iter().enumerate() {
                    let s = k + o as isize - radius;
                    if (0..nt).contains(&s) {
                        acc += w * f64::from(src[s as usize]);
                    }
                }
                *d = acc as f32;
            }
        });
    TransientImage::new(*tau.grid(), out, tau.t_start())
}

/// Replace each voxel by a Poisson draw with that mean. Voxels are visited
/// in storage order from one seeded stream.
pub fn apply_poisson(tau: &TransientImage, seed: u64) -> Result<TransientImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = tau.data().clone();
    for v in out.iter_mut() {
        let mean = f64::from(*v);
        *v = if mean > 0.0 {
            let dist = Poisson::new(mean)
                .map_err(|e| Error::InvalidData(format!("Poisson mean {mean}: {e}")))?;
            dist.sample(&mut rng) as f32
        } else {
            0.0
        };
    }
    TransientImage::new(*tau.grid(), out, tau.t_start())
}

/// Move every surface pixel by `delta_m`; pixels pushed to or behind the
/// wall become empty, those pushed past `z_max` stick to it.
pub fn shift_depth(depth: &DepthMap, delta_m: f64) -> Result<DepthMap> {
    if !delta_m.is_finite() {
        return Err(Error::param("delta_m", format!("{delta_m} is not finite")));
    }
    let meters: Array2<f64> = depth.data().mapv(|d| {
        if DepthMap::is_sentinel(d) {
            0.0
        } else {
            f64::from(d) + delta_m
        }
    });
    DepthMap::from_meters_clamped(*depth.grid(), meters)
}

/// Deterministic per-frame seed.
pub fn frame_seed(seed: u64, level: usize, frame: usize) -> u64 {
    fn splitmix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    splitmix(seed ^ splitmix(((level as u64) << 32) ^ frame as u64))
}

/// Forward model plus augmentations, reusing one projection operator.
pub struct Synthesizer {
    op: LctOperator,
    cfg: AugmentConfig,
}

impl Synthesizer {
    pub fn new(psf: &Psf, cfg: AugmentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            op: LctOperator::new(psf),
            cfg,
        })
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.cfg
    }

    /// Forward projection, then blur, then Poisson noise drawn from `seed`.
    pub fn synthesize(&self, depth: &DepthMap, seed: u64) -> Result<TransientImage> {
        let rho = depth_to_reflectance(depth, self.cfg.albedo)?;
        let mut tau = self.op.forward(&rho)?;
        if self.cfg.fwhm_ps > 0.0 {
            tau = apply_temporal_blur(&tau, self.cfg.fwhm_ps)?;
        }
        if self.cfg.poisson {
            tau = apply_poisson(&tau, seed)?;
        }
        Ok(tau)
    }

    /// One sequence per shift level, every frame shifted by that level.
    pub fn augment(&self, depths: &[DepthMap], rate_hz: f64) -> Result<Vec<FrameSequence>> {
        if depths.is_empty() {
            return Err(Error::InvalidData("no depth frames to augment".into()));
        }
        self.cfg
            .shift_levels
            .iter()
            .enumerate()
            .map(|(level, &delta)| {
                let frames = depths
                    .par_iter()
                    .enumerate()
                    .map(|(i, d)| {
                        self.synthesize(&shift_depth(d, delta)?, frame_seed(self.cfg.seed, level, i))
                    })
                    .collect::<Result<Vec<_>>>()?;
                FrameSequence::from_volumes(frames, rate_hz, 0.0)
            })
            .collect()
    }
}

/// Synthesize one frame with noise drawn from `cfg.seed`.
pub fn synthesize_transient(depth: &DepthMap, psf: &Psf, cfg: &AugmentConfig) -> Result<TransientImage> {
    Synthesizer::new(psf, cfg.clone())?.synthesize(depth, cfg.seed)
}

/// Shifted, synthesized copies of a depth sequence captured at `rate_hz`.
pub fn augment_dataset(
    depths: &[DepthMap],
    psf: &Psf,
    cfg: &AugmentConfig,
    rate_hz: f64,
) -> Result<Vec<FrameSequence>> {
    Synthesizer::new(psf, cfg.clone())?.augment(depths, rate_hz)
}
