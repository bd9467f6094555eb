//! Pipeline configuration: INI-style `key = value` sections or one JSON object.

use std::fmt;
use std::path::{Path, PathBuf};

use nlos_core::lct::DEFAULT_ALPHA;
use nlos_core::rescan::ScanOrder;
use nlos_core::synth::AugmentConfig;
use nlos_core::volumes::GridSpec;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {msg}")]
    Syntax {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LctConfig {
    pub alpha: f64,
    pub correction: Option<PathBuf>,
    /// Light-cone oversampling factor of the kernel's v-axis.
    pub oversample: usize,
    pub psf: Option<PathBuf>,
}

impl Default for LctConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            correction: None,
            oversample: 1,
            psf: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RescanConfig {
    pub scan_rate_hz: f64,
    pub policy_rate_hz: f64,
    pub order: ScanOrder,
}

impl Default for RescanConfig {
    fn default() -> Self {
        Self {
            scan_rate_hz: 4.0,
            policy_rate_hz: 30.0,
            order: ScanOrder::RowMajor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Scale of 16-bit depth PNG values.
    pub meters_per_unit: f64,
    /// Frame rate of depth sequences fed to `synth`.
    pub depth_rate_hz: f64,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            output_dir: None,
            meters_per_unit: 1e-3,
            depth_rate_hz: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid: GridSpec,
    pub augment: AugmentConfig,
    pub lct: LctConfig,
    pub rescan: RescanConfig,
    pub io: IoConfig,
}

#[derive(Clone, Copy)]
enum Kind {
    Int,
    Float,
    Bool,
    Str,
    FloatList,
}

fn schema(section: &str, key: &str) -> Option<Kind> {
    use Kind::*;
    Some(match (section, key) {
        ("grid", "nx" | "ny" | "nt" | "nz") => Int,
        ("grid", "wall_width_m" | "bin_width_s") => Float,
        ("augment", "albedo" | "fwhm_ps") => Float,
        ("augment", "shift_levels") => FloatList,
        ("augment", "poisson") => Bool,
        ("augment", "seed") => Int,
        ("lct", "alpha") => Float,
        ("lct", "oversample") => Int,
        ("lct", "correction" | "psf") => Str,
        ("rescan", "scan_rate_hz" | "policy_rate_hz") => Float,
        ("rescan", "order") => Str,
        ("io", "input_dir" | "output_dir") => Str,
        ("io", "meters_per_unit" | "depth_rate_hz") => Float,
        _ => return None,
    })
}

const SECTIONS: [&str; 5] = ["grid", "augment", "lct", "rescan", "io"];

fn parse_scalar(kind: Kind, raw: &str) -> Result<Value, String> {
    let raw = raw.trim();
    match kind {
        Kind::Int => raw
            .parse::<u64>()
            .map(Value::from)
            .map_err(|_| format!("`{raw}` is not a nonnegative integer")),
        Kind::Float => match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Value::from(v)),
            _ => Err(format!("`{raw}` is not a finite number")),
        },
        Kind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("`{raw}` is not true or false")),
        },
        Kind::Str => Ok(Value::String(raw.trim_matches('"').to_owned())),
        Kind::FloatList => {
            let inner = raw.trim_start_matches('[').trim_end_matches(']');
            inner
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_scalar(Kind::Float, s))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array)
        }
    }
}

fn parse_ini(text: &str, path: &str) -> Result<Value, ConfigError> {
    let err = |line: usize, msg: String| ConfigError::Syntax {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut root = Map::new();
    let mut section: Option<String> = None;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, format!("malformed section header `{line}`")))?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(err(line_no, format!("unknown section `[{name}]`")));
            }
            root.entry(name.to_owned()).or_insert_with(|| Value::Object(Map::new()));
            section = Some(name.to_owned());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim();
        let sec = section
            .as_deref()
            .ok_or_else(|| err(line_no, format!("key `{key}` appears before any section")))?;
        let kind = schema(sec, key)
            .ok_or_else(|| err(line_no, format!("unknown key `{key}` in section [{sec}]")))?;
        let value = parse_scalar(kind, value).map_err(|m| err(line_no, format!("key `{key}`: {m}")))?;
        let table = root[sec].as_object_mut().expect("sections are objects");
        if table.insert(key.to_owned(), value).is_some() {
            return Err(err(line_no, format!("duplicate key `{key}` in section [{sec}]")));
        }
    }
    Ok(Value::Object(root))
}

impl PipelineConfig {
    /// Parse either format; text starting with `{` is read as JSON.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
                path: origin.to_owned(),
                line: e.line(),
                msg: e.to_string(),
            })?
        } else {
            serde_json::from_value(parse_ini(text, origin)?).map_err(|e| ConfigError::Invalid {
                path: origin.to_owned(),
                msg: e.to_string(),
            })?
        };
        cfg.validate().map_err(|msg| ConfigError::Invalid {
            path: origin.to_owned(),
            msg,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.grid.validate().map_err(|e| format!("[grid] {e}"))?;
        self.augment.validate().map_err(|e| format!("[augment] {e}"))?;
        if !(self.lct.alpha.is_finite() && self.lct.alpha > 0.0) {
            return Err(format!("[lct] alpha = {} must be > 0", self.lct.alpha));
        }
        if self.lct.oversample == 0 {
            return Err("[lct] oversample must be at least 1".into());
        }
        for (name, v) in [
            ("[rescan] scan_rate_hz", self.rescan.scan_rate_hz),
            ("[rescan] policy_rate_hz", self.rescan.policy_rate_hz),
            ("[io] meters_per_unit", self.io.meters_per_unit),
            ("[io] depth_rate_hz", self.io.depth_rate_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} = {v} must be > 0"));
            }
        }
        Ok(())
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string_pretty(self).expect("config serializes"))
    }
}
