//! Plain `key = value` run configuration.
//!
//! Keys are namespaced by stage (`association.time_window = 0.85`). Blank
//! lines and `#` comments are ignored. Every key has a default, so an empty
//! file is a valid configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::association::AssociationConfig;
use crate::error::{Error, Result};
use crate::model::SamplingMode;
use crate::screening::{Platform, ScreeningConfig};
use crate::stats::{Variable, DEFAULT_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub association: AssociationConfig,
    pub screening: ScreeningConfig,
    pub variables: Vec<Variable>,
    pub bins: usize,
    /// Labels of the two populations to compare; when unset, the two labels
    /// present in the data are compared if there are exactly two.
    pub compare: Option<(String, String)>,
    pub model_mode: Option<SamplingMode>,
    pub model_samples: usize,
    pub input: PathBuf,
    pub output: PathBuf,
    /// Emit per-event time-to-conflict-point traces.
    pub traces: bool,
    pub jobs: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            association: AssociationConfig::default(),
            screening: ScreeningConfig::default(),
            variables: vec![Variable::DcpInv, Variable::TcpInv, Variable::Vsdv, Variable::Vtv],
            bins: DEFAULT_BINS,
            compare: None,
            model_mode: None,
            model_samples: 1000,
            input: PathBuf::from("."),
            output: PathBuf::from("out"),
            traces: false,
            jobs: 1,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one namespaced key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let a = &mut self.association;
        let s = &mut self.screening;
        match key {
            "association.min_closing_speed" => a.min_closing_speed = parse_num(key, v)?,
            "association.max_azimuth" => a.max_azimuth = parse_num(key, v)?,
            "association.time_window" => a.time_window = parse_num(key, v)?,
            "association.correspondence_tol" => a.correspondence_tol = parse_num(key, v)?,
            "association.max_transversal_rate" => a.max_transversal_rate = parse_num(key, v)?,
            "association.min_cluster_size" => a.min_cluster_size = parse_num(key, v)?,
            "screening.min_host_speed" => s.min_host_speed = parse_num(key, v)?,
            "screening.max_heading_change" => s.max_heading_change = parse_num(key, v)?,
            "screening.max_target_longitudinal_speed" => s.max_target_longitudinal_speed = parse_num(key, v)?,
            "screening.min_duration" => s.min_duration = parse_num(key, v)?,
            "screening.max_point_gap" => s.max_point_gap = parse_num(key, v)?,
            "screening.platform" => s.platform = v.parse::<Platform>()?,
            "stats.variables" => {
                self.variables = v
                    .split(',')
                    .filter(|x| !x.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "stats.bins" => self.bins = parse_num(key, v)?,
            "stats.compare" => {
                self.compare = if v.is_empty() {
                    None
                } else {
                    let (x, y) = v
                        .split_once(',')
                        .ok_or_else(|| Error::Config(format!("`{key}`: expected `label_a,label_b`")))?;
                    Some((x.trim().to_string(), y.trim().to_string()))
                }
            }
            "model.mode" => {
                self.model_mode = match v.to_ascii_lowercase().as_str() {
                    "" | "none" | "off" => None,
                    m => Some(m.parse()?),
                }
            }
            "model.samples" => self.model_samples = parse_num(key, v)?,
            "io.input" => self.input = PathBuf::from(v),
            "io.output" => self.output = PathBuf::from(v),
            "io.traces" => self.traces = parse_bool(key, v)?,
            "run.jobs" => self.jobs = parse_num(key, v)?,
            "run.seed" => self.seed = parse_num(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.association.validate()?;
        self.screening.validate()?;
        if self.bins == 0 {
            return Err(Error::Config("stats.bins must be >= 1".into()));
        }
        if self.model_mode.is_some() && self.model_samples == 0 {
            return Err(Error::Config("model.samples must be >= 1".into()));
        }
        Ok(())
    }

    /// Renders the configuration in the file format accepted by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let a = &self.association;
        let s = &self.screening;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("association.min_closing_speed", a.min_closing_speed.to_string());
        kv("association.max_azimuth", a.max_azimuth.to_string());
        kv("association.time_window", a.time_window.to_string());
        kv("association.correspondence_tol", a.correspondence_tol.to_string());
        kv("association.max_transversal_rate", a.max_transversal_rate.to_string());
        kv("association.min_cluster_size", a.min_cluster_size.to_string());
        kv("screening.min_host_speed", s.min_host_speed.to_string());
        kv("screening.max_heading_change", s.max_heading_change.to_string());
        kv("screening.max_target_longitudinal_speed", s.max_target_longitudinal_speed.to_string());
        kv("screening.min_duration", s.min_duration.to_string());
        kv("screening.max_point_gap", s.max_point_gap.to_string());
        kv("screening.platform", s.platform.code().to_string());
        kv(
            "stats.variables",
            self.variables.iter().map(|v| v.code()).collect::<Vec<_>>().join(","),
        );
        kv("stats.bins", self.bins.to_string());
        kv(
            "stats.compare",
            self.compare.as_ref().map(|(x, y)| format!("{x},{y}")).unwrap_or_default(),
        );
        kv("model.mode", self.model_mode.map_or("none".to_string(), |m| m.to_string()));
        kv("model.samples", self.model_samples.to_string());
        kv("io.input", self.input.display().to_string());
        kv("io.output", self.output.display().to_string());
        kv("io.traces", self.traces.to_string());
        kv("run.jobs", self.jobs.to_string());
        kv("run.seed", self.seed.to_string());
        out
    }
}
