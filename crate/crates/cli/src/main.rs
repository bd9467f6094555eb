use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlos_cli::commands::{
    cmd_metrics, cmd_psf, cmd_reconstruct, cmd_resample, cmd_reward, cmd_synth, rewards_csv,
    write_text, ReconstructOptions,
};
use nlos_cli::error::EXIT_USAGE;
use nlos_cli::{CliError, PipelineConfig, Result};
use nlos_core::pose::RewardWeights;
use nlos_core::rescan::ScanOrder;

#[derive(Debug, Parser)]
#[command(name = "nlos", version, about = "Transient synthesis, NLOS reconstruction and pose evaluation")]
struct Cli {
    /// Pipeline config (INI sections or a JSON object).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the augmentation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the light-cone kernel for the configured grid.
    Psf {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Synthesize augmented transient sequences from depth maps.
    Synth {
        /// Directory of depth maps (16-bit PNG or NLVT); defaults to `[io] input_dir`.
        #[arg(long)]
        depth_dir: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Kernel file; built from the grid when omitted.
        #[arg(long)]
        psf: Option<PathBuf>,
    },
    /// Reconstruct heat maps from a directory of transients.
    Reconstruct {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        psf: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Additive correction to the inverse filter (NLVT).
        #[arg(long)]
        correction: Option<PathBuf>,
        /// Scale every PNG by the sequence maximum.
        #[arg(long)]
        global_max: bool,
    },
    /// Re-time a transient sequence between frame rates.
    Resample {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        from_hz: f64,
        #[arg(long)]
        to_hz: f64,
        /// Raster order (rowmajor or serpentine); defaults to `[rescan] order`.
        #[arg(long)]
        order: Option<ScanOrder>,
    },
    /// Pose metrics as key=value lines.
    Metrics {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Estimated and ground-truth 2D keypoint files.
        #[arg(long, num_args = 2, value_names = ["EST", "GT"])]
        keypoints2d: Option<Vec<PathBuf>>,
        /// Pose sequence frame rate; defaults to `[rescan] policy_rate_hz`.
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Per-frame imitation rewards as CSV.
    Reward {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Pose, end-effector, root pose and root velocity weights.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[arg(long)]
        rate: Option<f64>,
        /// Write the CSV here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn pick(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Usage(format!("{name} is required (flag or config)")))
}

fn validated(cfg: PipelineConfig) -> Result<PipelineConfig> {
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.augment.seed = seed;
    }
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--jobs {jobs}: {e}")))?;
    }
    let policy_rate = cfg.rescan.policy_rate_hz;
    match cli.command {
        Command::Psf { out } => cmd_psf(&cfg, &out),
        Command::Synth { depth_dir, out, psf } => {
            let depth_dir = pick(depth_dir, &cfg.io.input_dir, "--depth-dir")?;
            let out = pick(out, &cfg.io.output_dir, "--out")?;
            if psf.is_some() {
                cfg.lct.psf = psf;
            }
            cmd_synth(&cfg, &depth_dir, &out)
        }
        Command::Reconstruct {
            input,
            out,
            psf,
            alpha,
            correction,
            global_max,
        } => {
            let input = pick(input, &cfg.io.input_dir, "--input")?;
            let out = pick(out, &cfg.io.output_dir, "--out")?;
            if psf.is_some() {
                cfg.lct.psf = psf;
            }
            if correction.is_some() {
                cfg.lct.correction = correction;
            }
            if let Some(a) = alpha {
                cfg.lct.alpha = a;
            }
            let cfg = validated(cfg)?;
            cmd_reconstruct(&cfg, &input, &out, ReconstructOptions { global_max })
        }
        Command::Resample {
            input,
            out,
            from_hz,
            to_hz,
            order,
        } => {
            if let Some(order) = order {
                cfg.rescan.order = order;
            }
            let input = pick(input, &cfg.io.input_dir, "--input")?;
            let out = pick(out, &cfg.io.output_dir, "--out")?;
            cmd_resample(&cfg, &input, &out, from_hz, to_hz)
        }
        Command::Metrics {
            est,
            gt,
            keypoints2d,
            rate,
            csv,
        } => {
            let kp = keypoints2d.as_deref().map(|v| (v[0].as_path(), v[1].as_path()));
            let report = cmd_metrics(&est, &gt, rate.unwrap_or(policy_rate), kp)?;
            print!("{report}");
            if let Some(path) = csv {
                write_text(&path, &report.to_csv())?;
            }
            Ok(())
        }
        Command::Reward {
            est,
            gt,
            weights,
            rate,
            out,
        } => {
            let weights = match weights.as_deref() {
                Some(&[a, b, c, d]) => RewardWeights::new(a, b, c, d)?,
                Some(_) => return Err(CliError::Usage("--weights takes four values".into())),
                None => RewardWeights::default(),
            };
            let rows = cmd_reward(&est, &gt, rate.unwrap_or(policy_rate), &weights)?;
            let csv = rewards_csv(&rows);
            match out.as_deref() {
                Some(path) => write_text(Path::new(path), &csv),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
