//! `rwpt` command-line driver.

pub mod commands;
pub mod config;

use std::path::Path;

use clap::{Parser, Subcommand};
use serde::Serialize;

use rwpt::{Error, Result};

use crate::config::{Flags, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

const KERNEL_CSV: &str =
    "CSV (green): x1,x2,y1,y2,value = G(x, y) for every y of the domain; metadata in green.meta.json.";
const ESCAPE_CSV: &str = "CSV (escape): x1,x2,exact,lower,upper = E^x T and the escape-time bounds per x.";
const HIT_CSV: &str = "CSV (hit): y1,y2,lastexit,direct = hitting masses by both methods.";
const POTKERN_CSV: &str = "CSV (potkern): x1,x2,a,cauchy_gap = a(x) on the box and its doubling gap.";
const MC_CSV: &str =
    "CSV (mc): path_id,stop_index,x1,x2,steps = one stop record per path (stop_index empty when capped).";
const HARNACK_CSV: &str = "CSV (harnack-*): m,sup_ratio_dev,fitted_value = plot data of the decay fit.";
const FLOOR_CSV: &str = "CSV (green-floor): m,R,exterior_min,near_disc_min,implied_constant = Green floors per scale.";
const NO_CSV: &str = "No CSV output.";

#[derive(Parser)]
#[command(name = "rwpt", version, about = "Exact potential theory for planar and toral random walks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Check a step distribution's structural flags and Condition A
    #[command(after_help = NO_CSV)]
    Validate(Flags),
    /// Green's function of D(0,n)
    #[command(after_help = KERNEL_CSV)]
    Green(Flags),
    /// Expected escape times of D(0,n) against their bounds
    #[command(after_help = ESCAPE_CSV)]
    Escape(Flags),
    /// Hitting distribution of D(0,r) by last exit and by first-step analysis
    #[command(after_help = HIT_CSV)]
    Hit(Flags),
    /// Annulus ruin probability against its log-ratio prediction
    #[command(after_help = NO_CSV)]
    Ruin(Flags),
    /// Potential-kernel table and slope fit
    #[command(after_help = POTKERN_CSV)]
    Potkern(Flags),
    /// Any closed-form predictor against its exact value
    #[command(after_help = NO_CSV)]
    Predict(Flags),
    /// Monte Carlo estimate of a stopping-time event
    #[command(after_help = MC_CSV)]
    Mc(Flags),
    /// Interior Harnack ratios (or the split experiment with --split)
    #[command(after_help = HARNACK_CSV)]
    HarnackInterior(Flags),
    /// Interior Harnack ratios on the torus
    #[command(after_help = HARNACK_CSV)]
    HarnackInteriorToral(Flags),
    /// Exterior Harnack ratios in the plane
    #[command(after_help = HARNACK_CSV)]
    HarnackExterior(Flags),
    /// Exterior Harnack ratios on the torus (constrained form)
    #[command(after_help = HARNACK_CSV)]
    HarnackExteriorToral(Flags),
    /// Exterior Green floor probe
    #[command(after_help = FLOOR_CSV)]
    GreenFloor(Flags),
}

impl Command {
    fn parts(&self) -> (&'static str, &Flags) {
        match self {
            Command::Validate(f) => ("validate", f),
            Command::Green(f) => ("green", f),
            Command::Escape(f) => ("escape", f),
            Command::Hit(f) => ("hit", f),
            Command::Ruin(f) => ("ruin", f),
            Command::Potkern(f) => ("potkern", f),
            Command::Predict(f) => ("predict", f),
            Command::Mc(f) => ("mc", f),
            Command::HarnackInterior(f) => ("harnack-interior", f),
            Command::HarnackInteriorToral(f) => ("harnack-interior-toral", f),
            Command::HarnackExterior(f) => ("harnack-exterior", f),
            Command::HarnackExteriorToral(f) => ("harnack-exterior-toral", f),
            Command::GreenFloor(f) => ("green-floor", f),
        }
    }
}

#[derive(Serialize)]
pub struct Envelope<'a> {
    pub schema_version: u32,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub config_hash: String,
    /// Wall-clock time; not part of the hash.
    pub generated_at: String,
    pub pass: bool,
    pub config: &'a RunConfig,
    pub report: serde_json::Value,
}

fn threads(cfg: &RunConfig) -> Result<Option<usize>> {
    if let Some(t) = cfg.threads {
        return Ok(Some(t));
    }
    match std::env::var("RWPT_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|&t| t >= 1)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("RWPT_THREADS must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn write_outputs(dir: &Path, command: &str, json: &str, out: &commands::Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), json)?;
    if let Some(csv) = &out.csv {
        std::fs::write(dir.join(format!("{command}.csv")), csv)?;
    }
    if let Some(meta) = &out.sidecar {
        std::fs::write(dir.join(format!("{command}.meta.json")), serde_json::to_string_pretty(meta)?)?;
    }
    Ok(())
}

/// Runs one command; returns (exit code, report JSON).
pub fn execute(command: &str, cfg: &RunConfig) -> Result<(i32, String)> {
    let mut out = commands::dispatch(command, cfg)?;
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed.unwrap_or(0),
        config_hash: cfg.hash(),
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        pass: out.pass,
        config: cfg,
        report: std::mem::take(&mut out.report),
    };
    let json = serde_json::to_string_pretty(&env)?;
    if let Some(dir) = &cfg.out {
        write_outputs(dir, command, &json, &out)?;
    }
    Ok((if out.pass { 0 } else { 2 }, json))
}

/// Full CLI: 0 on pass, 2 on experiment failure, 1 on usage or config error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                eprintln!(
                    "error: {}",
                    e.to_string().lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ")
                );
            }
            return code;
        }
    };
    let (command, flags) = cli.command.parts();
    let result = flags.resolve(command).and_then(|cfg| {
        if let Some(t) = threads(&cfg)? {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
        execute(command, &cfg)
    });
    match result {
        Ok((code, json)) => {
            println!("{json}");
            code
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}
