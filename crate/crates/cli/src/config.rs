//! Run configuration: JSON file and command-line flags, flags winning.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rwpt::asymptotic::predict::{PredictParams, ToleranceConfig};
use rwpt::harnack::SChoice;
use rwpt::mc::EventSpec;
use rwpt::{DistributionSpec, Error, Point, Result};

pub const COMMANDS: [&str; 13] = [
    "validate",
    "green",
    "escape",
    "hit",
    "ruin",
    "potkern",
    "predict",
    "mc",
    "harnack-interior",
    "harnack-interior-toral",
    "harnack-exterior",
    "harnack-exterior-toral",
    "green-floor",
];

/// Everything a run depends on. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    /// Short name (`lazy_srw`, `king`, `truncated_power_law(a,c)`) or a
    /// `{"kind", "params"}` object.
    #[serde(default, deserialize_with = "dist_field", skip_serializing_if = "Option::is_none")]
    pub dist: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, rename = "R", skip_serializing_if = "Option::is_none")]
    pub big_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<SChoice>,
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PredictParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<EventSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<bool>,
}

fn dist_field<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<DistributionSpec>, D::Error> {
    use serde::de::Error as _;
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::Null => Ok(None),
        serde_json::Value::String(s) => DistributionSpec::parse_short(&s).map(Some).map_err(D::Error::custom),
        v => serde_json::from_value(v).map(Some).map_err(D::Error::custom),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Schema checks that do not depend on the command.
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = &self.command {
            if !COMMANDS.contains(&c.as_str()) {
                return Err(Error::Config(format!("unknown command `{c}`")));
            }
        }
        for (name, v) in [("r", self.r), ("R", self.big_r), ("n", self.n), ("eps", self.eps)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!("{name} must be finite and > 0")));
                }
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if let Some(f) = &self.formula {
            f.parse::<rwpt::asymptotic::FormulaId>()?;
        }
        Ok(())
    }

    /// `other`'s fields replace ours where set.
    pub fn overlay(mut self, other: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            command, dist, r, big_r, n, m, s, k, x, y, n_paths, cap, seed, threads, out, tolerances, formula, params,
            form, event, j_max, radius, eps, budget, split
        );
        self
    }

    /// SHA-256 of the canonical JSON, ignoring output location and worker
    /// count.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.threads = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `x1,x2`, got `{s}`"))?;
    let a = a.trim().parse::<i64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<i64>().map_err(|e| e.to_string())?;
    Ok(Point::new(a, b))
}

fn parse_dist(s: &str) -> std::result::Result<DistributionSpec, String> {
    DistributionSpec::parse_short(s).map_err(|e| e.to_string())
}

fn parse_s(s: &str) -> std::result::Result<SChoice, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Flags shared by every command.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// JSON run configuration; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Step distribution: lazy_srw | king | truncated_power_law(a,c) | JSON
    #[arg(long, value_parser = parse_dist)]
    pub dist: Option<DistributionSpec>,
    /// JSON file with a step distribution spec
    #[arg(long)]
    pub dist_file: Option<PathBuf>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long = "R")]
    pub big_r: Option<f64>,
    /// Disc radius
    #[arg(long)]
    pub n: Option<f64>,
    /// Comma-separated scale factors
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<u32>>,
    /// Annulus width: integer or `auto`
    #[arg(long, value_parser = parse_s)]
    pub s: Option<SChoice>,
    /// Torus side
    #[arg(long = "K")]
    pub k: Option<i64>,
    /// Source point `x1,x2`
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub x: Option<Point>,
    /// Second point `y1,y2`
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    pub y: Option<Point>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Path step cap for Monte Carlo runs
    #[arg(long)]
    pub cap: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (falls back to RWPT_THREADS)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory for report.json and plot-data CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON tolerance file (calibration and fitted constants)
    #[arg(long)]
    pub tol_file: Option<PathBuf>,
    /// Predictor id
    #[arg(long)]
    pub formula: Option<String>,
    /// Predictor inputs as JSON
    #[arg(long)]
    pub params: Option<String>,
    /// Formula variant (`ruin` | `success`, `escape` | `entry`)
    #[arg(long)]
    pub form: Option<String>,
    /// Monte Carlo event as JSON
    #[arg(long)]
    pub event: Option<String>,
    #[arg(long)]
    pub j_max: Option<u64>,
    /// Half-width of the potential-kernel table
    #[arg(long)]
    pub radius: Option<i64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Largest killed domain (points)
    #[arg(long)]
    pub budget: Option<usize>,
    /// Run the split-probability experiment instead of the ratio sweep
    #[arg(long)]
    pub split: bool,
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl Flags {
    /// Config file (if any) overlaid with the flags.
    pub fn resolve(&self, command: &str) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::from_json(&read(p)?)?,
            None => RunConfig::default(),
        };
        if let Some(c) = &base.command {
            if c != command {
                return Err(Error::Config(format!("config file is for `{c}`, not `{command}`")));
            }
        }
        let dist = match (&self.dist, &self.dist_file) {
            (Some(_), Some(_)) => return Err(Error::Config("use only one of --dist and --dist-file".into())),
            (Some(d), None) => Some(d.clone()),
            (None, Some(p)) => Some(DistributionSpec::from_json(&read(p)?)?),
            (None, None) => None,
        };
        let tolerances = self.tol_file.as_ref().map(|p| ToleranceConfig::from_json(&read(p)?)).transpose()?;
        let params = self.params.as_deref().map(serde_json::from_str::<PredictParams>).transpose()?;
        let event = self.event.as_deref().map(serde_json::from_str::<EventSpec>).transpose()?;
        let flags = RunConfig {
            command: Some(command.to_string()),
            dist,
            r: self.r,
            big_r: self.big_r,
            n: self.n,
            m: self.m.clone(),
            s: self.s,
            k: self.k,
            x: self.x,
            y: self.y,
            n_paths: self.n_paths,
            cap: self.cap,
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            tolerances,
            formula: self.formula.clone(),
            params,
            form: self.form.clone(),
            event,
            j_max: self.j_max,
            radius: self.radius,
            eps: self.eps,
            budget: self.budget,
            split: self.split.then_some(true),
        };
        let cfg = base.overlay(flags);
        cfg.validate()?;
        Ok(cfg)
    }
}
