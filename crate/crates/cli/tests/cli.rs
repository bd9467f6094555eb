use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array3;
use nlos_core::lct::{build_psf, forward_project, CorrectionVolume};
use nlos_core::pose::{PoseFrame, Quat, END_EFFECTORS};
use nlos_core::volumes::{
    read_volume, write_volume, AxisKind, GridSpec, NlvtRecord, ReflectanceVolume, TransientImage,
    Volume,
};
use tempfile::TempDir;

const CONFIG: &str = "\
[grid]
nx = 8
ny = 8
nt = 16
nz = 16
wall_width_m = 1.0
bin_width_s = 0.25e-9

[lct]
alpha = 10
";

fn grid() -> GridSpec {
    GridSpec::new(8, 8, 16, 16, 1.0, 0.25e-9).unwrap()
}

fn nlos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlos")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn workspace() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.ini");
    fs::write(&cfg, CONFIG).unwrap();
    (dir, cfg)
}

fn write_frames(dir: &Path, frames: &[TransientImage]) {
    fs::create_dir_all(dir).unwrap();
    for (k, f) in frames.iter().enumerate() {
        write_volume(f, dir.join(format!("frame_{k:05}.nlvt"))).unwrap();
    }
}

fn read_frames(dir: &Path) -> Vec<TransientImage> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "nlvt"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| match read_volume(p).unwrap() {
            Volume::Transient(t) => t,
            other => panic!("{}: {other:?}", p.display()),
        })
        .collect()
}

fn single_voxel_transient(x: usize, y: usize, z: usize) -> TransientImage {
    let g = grid();
    let mut data = Array3::zeros(g.volume_shape());
    data[[x, y, z]] = 1.0;
    let rho = ReflectanceVolume::new(g, data, AxisKind::Depth).unwrap();
    forward_project(&rho, &build_psf(&g).unwrap()).unwrap()
}

#[test]
fn psf_has_padded_shape_and_is_reproducible() {
    let (dir, cfg) = workspace();
    let a = dir.path().join("a.nlvt");
    let b = dir.path().join("b.nlvt");
    for out in [&a, &b] {
        let res = nlos(&["--config", s(&cfg), "psf", "--out", s(out)]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    assert_eq!(NlvtRecord::read(&a).unwrap().dims, [16, 16, 32]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn zero_bin_width_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, CONFIG.replace("0.25e-9", "0")).unwrap();
    let res = nlos(&["--config", s(&cfg), "psf", "--out", s(&dir.path().join("k.nlvt"))]);
    assert_eq!(code(&res), 1);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&nlos(&["psf", "--bogus"])), 1);
}

#[test]
fn synth_rejects_an_empty_directory() {
    let (dir, cfg) = workspace();
    let empty = dir.path().join("depth");
    fs::create_dir(&empty).unwrap();
    let res = nlos(&[
        "--config", s(&cfg), "synth", "--depth-dir", s(&empty), "--out", s(&dir.path().join("o")),
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn zero_transient_reconstructs_to_a_black_image() {
    let (dir, cfg) = workspace();
    let input = dir.path().join("in");
    let out = dir.path().join("out");
    write_frames(&input, &[TransientImage::zeros(grid())]);
    let res = nlos(&["--config", s(&cfg), "reconstruct", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let img = image::open(out.join("frame_00000.png")).unwrap().to_luma8();
    assert_eq!(img.dimensions(), (8, 8));
    assert!(img.pixels().all(|p| p[0] == 0));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn single_voxel_lights_up_its_wall_position() {
    let (dir, cfg) = workspace();
    let input = dir.path().join("in");
    let out = dir.path().join("out");
    write_frames(&input, &[single_voxel_transient(5, 2, 8)]);
    let res = nlos(&["--config", s(&cfg), "reconstruct", "--input", s(&input), "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let heat = match read_volume(out.join("frame_00000.heat.nlvt")).unwrap() {
        Volume::HeatMap(h) => h,
        other => panic!("{other:?}"),
    };
    let (idx, _) = heat
        .data()
        .indexed_iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    assert_eq!(idx, (5, 2));
    let img = image::open(out.join("frame_00000.png")).unwrap().to_luma8();
    assert_eq!(img.get_pixel(5, 2)[0], 255);
}

#[test]
fn zero_correction_changes_nothing() {
    let (dir, cfg) = workspace();
    let input = dir.path().join("in");
    write_frames(&input, &[single_voxel_transient(3, 4, 6), single_voxel_transient(1, 6, 10)]);
    let corr = dir.path().join("corr.nlvt");
    CorrectionVolume::zeros((16, 16, 32)).to_record().write(&corr).unwrap();

    let plain = dir.path().join("plain");
    let corrected = dir.path().join("corrected");
    let res = nlos(&["--config", s(&cfg), "reconstruct", "--input", s(&input), "--out", s(&plain)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let res = nlos(&[
        "--config", s(&cfg), "reconstruct", "--input", s(&input), "--out", s(&corrected),
        "--correction", s(&corr),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["frame_00000.png", "frame_00001.png"] {
        assert_eq!(fs::read(plain.join(name)).unwrap(), fs::read(corrected.join(name)).unwrap());
    }
}

#[test]
fn static_scene_survives_down_and_up_sampling() {
    let (dir, cfg) = workspace();
    let still = single_voxel_transient(4, 4, 7);
    let input = dir.path().join("in");
    write_frames(&input, &vec![still.clone(); 60]);
    let slow = dir.path().join("slow");
    let fast = dir.path().join("fast");
    for (from, to, src, dst) in [("30", "4", &input, &slow), ("4", "30", &slow, &fast)] {
        let res = nlos(&[
            "--config", s(&cfg), "resample", "--input", s(src), "--out", s(dst), "--from-hz", from,
            "--to-hz", to, "--order", "serpentine",
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    }
    let frames = read_frames(&fast);
    assert!(!frames.is_empty());
    for f in &frames {
        assert_eq!(f.data(), still.data());
    }
}

#[test]
fn four_scans_upsample_to_twenty_three_policy_frames() {
    let (dir, cfg) = workspace();
    let input = dir.path().join("in");
    let out = dir.path().join("out");
    write_frames(&input, &vec![single_voxel_transient(2, 2, 5); 4]);
    let res = nlos(&[
        "--config", s(&cfg), "resample", "--input", s(&input), "--out", s(&out), "--from-hz", "4",
        "--to-hz", "30",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(read_frames(&out).len(), 23);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["details"]["schedule"]["order"], "rowmajor");
}

#[test]
fn equal_rates_are_rejected() {
    let (dir, cfg) = workspace();
    let input = dir.path().join("in");
    write_frames(&input, &[TransientImage::zeros(grid())]);
    let res = nlos(&[
        "--config", s(&cfg), "resample", "--input", s(&input), "--out",
        s(&dir.path().join("out")), "--from-hz", "30", "--to-hz", "30",
    ]);
    assert_eq!(code(&res), 1);
}

fn pose_frame(t: usize) -> PoseFrame {
    let x = 0.05 * t as f64;
    let mut joints = BTreeMap::new();
    let mut joint_pos = BTreeMap::new();
    joint_pos.insert("root".to_owned(), [x, 0.0, 0.9]);
    for (j, name) in ["hip", "knee", "shoulder", "elbow"].iter().enumerate() {
        joints.insert(name.to_string(), Quat::from_axis_angle([0.0, 1.0, 0.0], 0.1 * (t + j) as f64));
        joint_pos.insert(name.to_string(), [x + 0.1 * j as f64, 0.0, 0.9 - 0.2 * j as f64]);
    }
    PoseFrame {
        root_pos: [x, 0.0, 0.9],
        root_quat: Quat::IDENTITY,
        joints,
        joint_pos,
        end_effectors: END_EFFECTORS.iter().map(|n| (n.to_string(), [0.1, 0.2, 0.3])).collect(),
        lin_vel: [1.5, 0.0, 0.0],
        ang_vel: [0.0, 0.0, 0.0],
        joint_vel: vec![0.1 * t as f64, 0.0],
    }
}

fn write_poses(path: &Path, len: usize) {
    let text: String = (0..len)
        .map(|t| serde_json::to_string(&pose_frame(t)).unwrap() + "\n")
        .collect();
    fs::write(path, text).unwrap();
}

fn metrics(text: &str) -> BTreeMap<String, f64> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_owned(), v.trim().parse().unwrap()))
        .collect()
}

#[test]
fn identical_sequences_have_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let est = dir.path().join("est.jsonl");
    write_poses(&est, 10);
    let res = nlos(&["metrics", "--est", s(&est), "--gt", s(&est)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let m = metrics(&String::from_utf8(res.stdout).unwrap());
    assert_eq!(m["mpjpe_mm"], 0.0);
    assert_eq!(m["e_vel"], 0.0);
    assert!(m["a_accl"] > 0.0);
}

#[test]
fn mismatched_lengths_fail() {
    let dir = tempfile::tempdir().unwrap();
    let (est, gt) = (dir.path().join("est.jsonl"), dir.path().join("gt.jsonl"));
    write_poses(&est, 10);
    write_poses(&gt, 7);
    assert_ne!(code(&nlos(&["metrics", "--est", s(&est), "--gt", s(&gt)])), 0);
    assert_eq!(code(&nlos(&["reward", "--est", s(&est), "--gt", s(&gt)])), 2);
}

fn totals(csv: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("frame,r_q,r_e,r_p,r_v,total"));
    lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect()
}

#[test]
fn reward_of_ground_truth_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.jsonl");
    write_poses(&gt, 5);
    let res = nlos(&["reward", "--est", s(&gt), "--gt", s(&gt)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let t = totals(&String::from_utf8(res.stdout).unwrap());
    assert_eq!(t.len(), 5);
    assert!(t.iter().all(|&v| (v - 1.0).abs() < 1e-12), "{t:?}");

    let csv = dir.path().join("r.csv");
    let res = nlos(&[
        "reward", "--est", s(&gt), "--gt", s(&gt), "--weights", "0,0,0,0", "--out", s(&csv),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(totals(&fs::read_to_string(&csv).unwrap()).iter().all(|&v| v == 0.0));
}

#[test]
fn three_weights_are_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt.jsonl");
    write_poses(&gt, 2);
    assert_eq!(code(&nlos(&["reward", "--est", s(&gt), "--gt", s(&gt), "--weights", "1,1,1"])), 1);
}
