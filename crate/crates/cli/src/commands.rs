use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info};
use nlos_core::lct::{build_psf, depth_max_project, CorrectionVolume, LctOperator, Psf};
use nlos_core::pose::{
    avg_acceleration, keypoint_error_2d, mpjpe, rewards, velocity_error, Keypoints2D,
    PoseSequence, RewardBreakdown, RewardWeights,
};
use nlos_core::rescan::{build_schedule, downsample_to_scan_rate, upsample_to_policy_rate};
use nlos_core::synth::Synthesizer;
use nlos_core::volumes::{
    read_depth_map, read_volume, write_volume, DepthMap, FrameSequence, GridSpec, HeatMap2D,
    TransientImage, Volume,
};
use rayon::prelude::*;
use serde_json::json;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::manifest::Manifest;
use crate::png::write_gray;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Files in `dir` whose extension is one of `exts`, sorted by name.
fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| exts.iter().any(|x| e.eq_ignore_ascii_case(x)));
        if matches && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn frame_name(k: usize) -> String {
    format!("frame_{k:05}.nlvt")
}

/// Kernel named by `[lct] psf`, or built from the grid.
pub fn load_psf(cfg: &PipelineConfig) -> Result<Psf> {
    match &cfg.lct.psf {
        Some(path) => {
            if !path.is_file() {
                return Err(CliError::Data(format!("PSF file {} not found", path.display())));
            }
            Ok(Psf::read(path, &cfg.grid)?)
        }
        None => Ok(Psf::build(&cfg.grid, cfg.lct.oversample)?),
    }
}

/// Writes the kernel for the configured grid to `out`.
pub fn cmd_psf(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let psf = if cfg.lct.oversample == 1 {
        build_psf(&cfg.grid)?
    } else {
        Psf::build(&cfg.grid, cfg.lct.oversample)?
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    info!("writing kernel {:?} to {}", psf.shape(), out.display());
    psf.write(out)?;
    Ok(())
}

fn read_depths(cfg: &PipelineConfig, dir: &Path) -> Result<(Vec<PathBuf>, Vec<DepthMap>)> {
    let files = list_files(dir, &["png", "nlvt"])?;
    if files.is_empty() {
        return Err(CliError::Data(format!("no depth files (.png, .nlvt) in {}", dir.display())));
    }
    let results: Vec<_> = files
        .par_iter()
        .map(|p| read_depth_map(p, &cfg.grid, cfg.io.meters_per_unit))
        .collect();
    let mut depths = Vec::with_capacity(files.len());
    let mut failures = Vec::new();
    for (path, r) in files.iter().zip(results) {
        match r {
            Ok(d) => depths.push(d),
            Err(e) => failures.push(format!("  {}: {e}", path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Data(format!(
            "{} of {} depth files could not be read:\n{}",
            failures.len(),
            files.len(),
            failures.join("\n")
        )));
    }
    Ok((files, depths))
}

/// Directory name of shift level `i`.
pub fn level_dir_name(i: usize, shift_m: f64) -> String {
    format!("level{i}_{shift_m:+.3}m")
}

/// Synthesizes one frame directory per shift level from the depth maps in
/// `depth_dir`.
pub fn cmd_synth(cfg: &PipelineConfig, depth_dir: &Path, out: &Path) -> Result<()> {
    let (files, depths) = read_depths(cfg, depth_dir)?;
    info!("synthesizing {} depth frames × {} shift levels", depths.len(), cfg.augment.shift_levels.len());
    let psf = load_psf(cfg)?;
    let synth = Synthesizer::new(&psf, cfg.augment.clone())?;
    let sequences = synth.augment(&depths, cfg.io.depth_rate_hz)?;

    create_dir(out)?;
    let mut manifest = Manifest::new("synth", cfg);
    manifest.inputs = files.iter().map(|p| p.display().to_string()).collect();
    let mut levels = Vec::new();
    for (i, (seq, &shift)) in sequences.iter().zip(&cfg.augment.shift_levels).enumerate() {
        let name = level_dir_name(i, shift);
        let dir = out.join(&name);
        create_dir(&dir)?;
        seq.frames()
            .par_iter()
            .enumerate()
            .try_for_each(|(k, f)| write_volume(f, dir.join(frame_name(k))))?;
        debug!("wrote {} frames to {}", seq.len(), dir.display());
        manifest
            .outputs
            .extend((0..seq.len()).map(|k| format!("{name}/{}", frame_name(k))));
        levels.push(json!({ "dir": name, "shift_m": shift, "frames": seq.len() }));
    }
    manifest.details = json!({
        "rate_hz": cfg.io.depth_rate_hz,
        "frame_seed": "splitmix64(seed, level, frame)",
        "levels": levels,
    });
    manifest.write(out)
}

fn read_transient(path: &Path, grid: &GridSpec) -> Result<TransientImage> {
    let tau = match read_volume(path)? {
        Volume::Transient(t) => t,
        other => {
            return Err(CliError::Data(format!(
                "{}: expected a transient, found {}",
                path.display(),
                match other {
                    Volume::Reflectance(_) => "a reflectance volume",
                    Volume::HeatMap(_) => "a heat map",
                    Volume::Depth(_) => "a depth map",
                    Volume::Transient(_) => unreachable!(),
                }
            )))
        }
    };
    let g = tau.grid();
    if g.wall_width_m != grid.wall_width_m || g.bin_width_s != grid.bin_width_s {
        return Err(CliError::Data(format!(
            "{}: wall {} m / bin {} s, config has {} m / {} s",
            path.display(),
            g.wall_width_m,
            g.bin_width_s,
            grid.wall_width_m,
            grid.bin_width_s
        )));
    }
    tau.with_grid(*grid)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_transients(dir: &Path, grid: &GridSpec) -> Result<(Vec<PathBuf>, Vec<TransientImage>)> {
    let files = list_files(dir, &["nlvt"])?;
    if files.is_empty() {
        return Err(CliError::Data(format!("no .nlvt transients in {}", dir.display())));
    }
    let frames = files
        .par_iter()
        .map(|p| read_transient(p, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok((files, frames))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReconstructOptions {
    /// Normalize PNGs by the maximum over all frames instead of per frame.
    pub global_max: bool,
}

/// Wiener reconstruction and depth max-projection of every transient in
/// `input`; writes an NLVT heat map and a PNG per frame.
pub fn cmd_reconstruct(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    opts: ReconstructOptions,
) -> Result<()> {
    let psf = load_psf(cfg)?;
    let op = LctOperator::new(&psf);
    let correction = cfg
        .lct
        .correction
        .as_ref()
        .map(CorrectionVolume::read)
        .transpose()?;
    let filter = op.wiener_filter(cfg.lct.alpha, correction.as_ref())?;
    let (files, frames) = read_transients(input, &cfg.grid)?;
    info!("reconstructing {} frames with alpha {}", frames.len(), cfg.lct.alpha);

    let heat = frames
        .par_iter()
        .map(|tau| {
            let rho = op.reconstruct_with(tau, &filter)?;
            let h = depth_max_project(&rho)?;
            Ok(HeatMap2D::new(h.data().clone(), h.axis(), tau.t_start())?)
        })
        .collect::<Result<Vec<_>>>()?;

    create_dir(out)?;
    let global = heat.iter().map(HeatMap2D::max_value).fold(0.0f32, f32::max);
    let stems: Vec<String> = files
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    heat.par_iter().zip(&stems).try_for_each(|(h, stem)| -> Result<()> {
        write_volume(h, out.join(format!("{stem}.heat.nlvt")))?;
        let max = if opts.global_max { global } else { h.max_value() };
        write_gray(h.data(), max, &out.join(format!("{stem}.png")))
    })?;

    let mut manifest = Manifest::new("reconstruct", cfg);
    manifest.inputs = files.iter().map(|p| p.display().to_string()).collect();
    manifest.outputs = stems
        .iter()
        .flat_map(|s| [format!("{s}.heat.nlvt"), format!("{s}.png")])
        .collect();
    manifest.details = json!({
        "png_normalization": if opts.global_max { "global_max" } else { "per_frame_max" },
        "global_max": global,
        "kernel_shape": psf.shape(),
    });
    manifest.write(out)
}

/// Re-times the transient sequence in `input` from `from_hz` to `to_hz`.
/// Lowering the rate simulates raster acquisition at `to_hz`; raising it
/// redistributes captures taken at `from_hz`.
pub fn cmd_resample(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    from_hz: f64,
    to_hz: f64,
) -> Result<()> {
    for (name, v) in [("--from-hz", from_hz), ("--to-hz", to_hz)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Usage(format!("{name} {v} must be a positive rate")));
        }
    }
    if from_hz == to_hz {
        return Err(CliError::Usage(format!(
            "unsupported rate pair {from_hz} -> {to_hz} Hz: rates must differ"
        )));
    }
    let (files, frames) = read_transients(input, &cfg.grid)?;
    let t0 = frames[0].t_start();
    let seq = FrameSequence::from_volumes(frames, from_hz, t0)?;
    let (scan_rate, result) = if to_hz < from_hz {
        let sched = build_schedule(&cfg.grid, to_hz, cfg.rescan.order)?;
        (to_hz, downsample_to_scan_rate(&seq, &sched)?)
    } else {
        let sched = build_schedule(&cfg.grid, from_hz, cfg.rescan.order)?;
        (from_hz, upsample_to_policy_rate(&seq, &sched, to_hz)?)
    };
    info!("resampled {} frames at {from_hz} Hz to {} at {to_hz} Hz", seq.len(), result.len());

    create_dir(out)?;
    result
        .frames()
        .par_iter()
        .enumerate()
        .try_for_each(|(k, f)| write_volume(f, out.join(frame_name(k))))?;
    let mut manifest = Manifest::new("resample", cfg);
    manifest.inputs = files.iter().map(|p| p.display().to_string()).collect();
    manifest.outputs = (0..result.len()).map(frame_name).collect();
    let g = &cfg.grid;
    manifest.details = json!({
        "from_hz": from_hz,
        "to_hz": to_hz,
        "schedule": {
            "scan_rate_hz": scan_rate,
            "order": cfg.rescan.order,
            "dwell_s": 1.0 / (scan_rate * (g.nx * g.ny) as f64),
            "points": g.nx * g.ny,
        },
        "t_start": result.start_time(),
        "frames": result.len(),
    });
    manifest.write(out)
}

/// Pose evaluation metrics of one estimate against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mpjpe_mm: f64,
    pub e_vel: f64,
    pub a_accl: f64,
    pub e_key: Option<f64>,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mpjpe_mm={}", self.mpjpe_mm)?;
        writeln!(f, "e_vel={}", self.e_vel)?;
        writeln!(f, "a_accl={}", self.a_accl)?;
        if let Some(e) = self.e_key {
            writeln!(f, "e_key={e}")?;
        }
        Ok(())
    }
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let e_key = self.e_key.map(|e| e.to_string()).unwrap_or_default();
        format!(
            "mpjpe_mm,e_vel,a_accl,e_key\n{},{},{},{e_key}\n",
            self.mpjpe_mm, self.e_vel, self.a_accl
        )
    }
}

fn read_poses(path: &Path, rate_hz: f64) -> Result<PoseSequence> {
    Ok(PoseSequence::read_jsonl(path, rate_hz)?)
}

/// `keypoints` holds the estimated and ground-truth 2D keypoint files.
pub fn cmd_metrics(
    est: &Path,
    gt: &Path,
    rate_hz: f64,
    keypoints: Option<(&Path, &Path)>,
) -> Result<MetricsReport> {
    let (est, gt) = (read_poses(est, rate_hz)?, read_poses(gt, rate_hz)?);
    let e_key = keypoints
        .map(|(a, b)| -> Result<f64> {
            Ok(keypoint_error_2d(&Keypoints2D::read_jsonl(a)?, &Keypoints2D::read_jsonl(b)?)?)
        })
        .transpose()?;
    Ok(MetricsReport {
        mpjpe_mm: mpjpe(&est, &gt)?,
        e_vel: velocity_error(&est, &gt)?,
        a_accl: avg_acceleration(&est)?,
        e_key,
    })
}

/// Per-frame reward terms of `est` against `gt`.
pub fn cmd_reward(
    est: &Path,
    gt: &Path,
    rate_hz: f64,
    weights: &RewardWeights,
) -> Result<Vec<RewardBreakdown>> {
    let (est, gt) = (read_poses(est, rate_hz)?, read_poses(gt, rate_hz)?);
    if est.len() != gt.len() {
        return Err(CliError::Data(format!(
            "estimate has {} frames, ground truth {}",
            est.len(),
            gt.len()
        )));
    }
    est.frames()
        .iter()
        .zip(gt.frames())
        .enumerate()
        .map(|(t, (a, b))| {
            rewards(a, b, weights).map_err(|e| CliError::Data(format!("frame {t}: {e}")))
        })
        .collect()
}

pub fn rewards_csv(rows: &[RewardBreakdown]) -> String {
    let mut out = String::from("frame,r_q,r_e,r_p,r_v,total\n");
    for (t, r) in rows.iter().enumerate() {
        out.push_str(&format!(
            "{t},{},{},{},{},{}\n",
            r.pose, r.end_effector, r.root_pose, r.root_velocity, r.total
        ));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
