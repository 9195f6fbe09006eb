//! Harnack-ratio experiments for interior and exterior hitting
//! distributions, and the exterior Green floor probe.
//!
//! Every experiment works at R = 4·m·r for each m of the config, compares
//! H(x, ·) and H(x′, ·) at 16 targets spread in angle, and fits the decay of
//! the worst ratio deviation against log m.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::potkern::linear_fit;
use crate::error::{Error, Result};
use crate::kernel::exterior::ExteriorDisc;
use crate::kernel::{ConstrainedProblem, Domain, GreenOperator, HittingKernel, HittingMethod, SolverOptions};
use crate::lattice::{Geometry, Point, Region};
use crate::report::Tagged;
use crate::stepdist::{moment, StepDistribution};

pub const N_ANGLES: usize = 16;
pub const HARNACK_BUDGET: usize = 4_000_000;
/// Largest allowed |lastexit − direct| and |mass − expected| in pre-flight.
pub const PREFLIGHT_TOL: f64 = 1e-8;
pub const INTERIOR_SLOPE: f64 = -0.5;
pub const EXTERIOR_SLOPE: f64 = -0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SChoice {
    Fixed(u32),
    #[serde(with = "auto_tag")]
    Auto,
}

mod auto_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected \"auto\" or an integer, got \"{s}\"")))
        }
    }
}

impl std::str::FromStr for SChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SChoice::Auto);
        }
        s.parse().map(SChoice::Fixed).map_err(|_| Error::Config(format!("s must be `auto` or an integer, got `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackConfig {
    pub r: u32,
    pub m_list: Vec<u32>,
    #[serde(default = "auto")]
    pub s: SChoice,
    /// Torus side for the toral experiments.
    #[serde(default, rename = "K")]
    pub k: Option<i64>,
    /// Source pair override; antipodal points of the allowed set otherwise.
    #[serde(default)]
    pub sources: Option<(Point, Point)>,
    #[serde(default)]
    pub seed: u64,
    /// Margin ε of the near-disc range in the floor probe.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Multiplier of the K^{−M}·scale² bound on toral/planar differences.
    #[serde(default = "one")]
    pub toral_calibration: f64,
    /// Also compute the product-form defect in `interior_split`.
    #[serde(default = "yes")]
    pub split_defect: bool,
    #[serde(default = "harnack_budget")]
    pub budget: usize,
}

fn auto() -> SChoice {
    SChoice::Auto
}
fn default_eps() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn harnack_budget() -> usize {
    HARNACK_BUDGET
}

impl HarnackConfig {
    pub fn new(r: u32, m_list: Vec<u32>) -> Self {
        HarnackConfig {
            r,
            m_list,
            s: SChoice::Auto,
            k: None,
            sources: None,
            seed: 0,
            eps: 0.5,
            toral_calibration: 1.0,
            split_defect: true,
            budget: HARNACK_BUDGET,
        }
    }

    pub fn big_r(&self, m: u32) -> f64 {
        4.0 * m as f64 * self.r as f64
    }

    /// ⌊(log R)⁴⌋ capped at r/2 when automatic.
    pub fn s_for(&self, m: u32) -> u32 {
        match self.s {
            SChoice::Fixed(s) => s,
            SChoice::Auto => {
                let cap = (self.r / 2).max(1);
                (self.big_r(m).ln().powi(4).floor() as u32).clamp(1, cap)
            }
        }
    }

    fn opts(&self) -> SolverOptions {
        SolverOptions::with_budget(self.budget)
    }

    fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(Error::Config("r must be >= 1".into()));
        }
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return Err(Error::Config("m list must be non-empty with entries >= 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be > 0".into()));
        }
        Ok(())
    }

    fn sorted_m(&self) -> Vec<u32> {
        let mut m = self.m_list.clone();
        m.sort_unstable();
        m.dedup();
        m
    }

    fn torus(&self) -> Result<i64> {
        self.k.ok_or_else(|| Error::MissingParameter("K".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Triple {
    pub x: Point,
    pub x_prime: Point,
    pub y: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarnackRow {
    pub m: u32,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub s: u32,
    pub n_triples: usize,
    /// sup |H(x,y)/H(x′,y) − 1|.
    pub sup_ratio_dev: Tagged,
    /// sup |H(x′,y)/H(x,y) − 1|.
    pub sup_ratio_dev_reverse: f64,
    pub worst: Option<Triple>,
    /// Worst identity defect of the kernels behind this row.
    pub preflight_defect: f64,
    pub domain_size: usize,
    /// Experiment-specific quantities.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Tagged>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub slope: Tagged,
    pub intercept: f64,
    pub r2: f64,
}

impl DecayFit {
    pub fn at(&self, m: f64) -> f64 {
        (self.intercept + self.slope.value * m.ln()).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(value: f64, threshold: f64) -> Self {
        Check { value, threshold, pass: value <= threshold }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HarnackReport {
    pub experiment: String,
    pub dist: String,
    pub geometry: Geometry,
    pub r: u32,
    pub rows: Vec<HarnackRow>,
    pub fit: Option<DecayFit>,
    pub checks: BTreeMap<String, Check>,
    pub notes: Vec<String>,
    pub pass: bool,
}

pub const PLOT_CSV_HEADER: &str = "m,sup_ratio_dev,fitted_value";

impl HarnackReport {
    fn new(experiment: &str, d: &StepDistribution, geometry: Geometry, r: u32) -> Self {
        HarnackReport {
            experiment: experiment.to_string(),
            dist: d.spec().name(),
            geometry,
            r,
            rows: Vec::new(),
            fit: None,
            checks: BTreeMap::new(),
            notes: Vec::new(),
            pass: false,
        }
    }

    pub fn deviations(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup_ratio_dev.value).collect()
    }

    /// Plot data: m, sup_ratio_dev, fitted_value (empty without a fit).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{PLOT_CSV_HEADER}")?;
        for row in &self.rows {
            let fitted = self.fit.map(|f| format!("{:e}", f.at(row.m as f64))).unwrap_or_default();
            writeln!(w, "{},{:e},{}", row.m, row.sup_ratio_dev.value, fitted)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Self {
        self.pass = self.checks.values().all(|c| c.pass);
        self
    }

    /// Adds the preflight, monotonicity and slope checks.
    fn decay_checks(&mut self, slope_max: f64) {
        let preflight = self.rows.iter().map(|r| r.preflight_defect).fold(0.0, f64::max);
        self.checks.insert("preflight_identity".into(), Check::at_most(preflight, PREFLIGHT_TOL));
        let devs = self.deviations();
        self.checks.insert("inversions".into(), Check::at_most(inversions(&devs) as f64, 1.0));
        self.fit = decay_fit(&self.rows);
        match self.fit {
            Some(f) => {
                self.checks.insert("fitted_slope".into(), Check::at_most(f.slope.value, slope_max));
            }
            None if self.rows.len() >= 2 => {
                self.notes.push("decay fit skipped: some deviation is zero".into());
            }
            None => {}
        }
    }
}

/// Number of i with dev[i+1] > dev[i].
/// Notes the m values beyond the regime the inequality is stated for.
fn note_scale_regime(rep: &mut HarnackReport, cfg: &HarnackConfig, exponent: f64, label: &str) {
    let cap = f64::from(cfg.r).powf(exponent);
    let over: Vec<String> = cfg.m_list.iter().filter(|&&m| f64::from(m) > cap).map(|m| m.to_string()).collect();
    if !over.is_empty() {
        rep.notes.push(format!("m in [{}] exceeds {label} = {cap:.2}", over.join(", ")));
    }
}

pub fn inversions(devs: &[f64]) -> usize {
    devs.windows(2).filter(|w| w[1] > w[0]).count()
}

/// Least squares of log sup_ratio_dev on log m.
pub fn decay_fit(rows: &[HarnackRow]) -> Option<DecayFit> {
    if rows.len() < 2 || rows.iter().any(|r| !(r.sup_ratio_dev.value > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.m as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sup_ratio_dev.value.ln()).collect();
    let f = linear_fit(&xs, &ys);
    Some(DecayFit { slope: Tagged::fitted(f.slope), intercept: f.intercept, r2: f.r2 })
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Up to 16 targets charged by both kernels, each the candidate closest in
/// angle to one of 16 equally spaced directions.
pub fn pick_targets(a: &HittingKernel, b: &HittingKernel, keep: impl Fn(Point) -> bool) -> Vec<Point> {
    let candidates: Vec<Point> =
        a.masses.iter().filter(|(y, v)| *v > 0.0 && b.mass(*y) > 0.0 && keep(*y)).map(|(y, _)| *y).collect();
    let mut out: Vec<Point> = (0..N_ANGLES)
        .filter_map(|k| {
            let theta = 2.0 * PI * k as f64 / N_ANGLES as f64;
            candidates.iter().copied().min_by(|p, q| {
                let gp = angle_gap((p.y as f64).atan2(p.x as f64), theta);
                let gq = angle_gap((q.y as f64).atan2(q.x as f64), theta);
                gp.total_cmp(&gq).then(p.norm2().cmp(&q.norm2())).then(p.cmp(q))
            })
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

struct RatioStats {
    dev: f64,
    dev_reverse: f64,
    worst: Option<Point>,
}

fn ratio_stats(a: &HittingKernel, b: &HittingKernel, targets: &[Point]) -> RatioStats {
    let mut s = RatioStats { dev: 0.0, dev_reverse: 0.0, worst: None };
    for &y in targets {
        let (ha, hb) = (a.mass(y), b.mass(y));
        let dev = (ha / hb - 1.0).abs();
        if dev > s.dev || s.worst.is_none() {
            s.worst = Some(y);
        }
        s.dev = s.dev.max(dev);
        s.dev_reverse = s.dev_reverse.max((hb / ha - 1.0).abs());
    }
    s
}

/// Identity pre-flight: every last-exit mass at the chosen targets must
/// match a first-step harmonic solve for that target, and the total mass
/// must match `expected_total` when given.
fn preflight(
    g: &GreenOperator,
    kernels: &[&HittingKernel],
    targets: &[Point],
    expected_total: &[Option<f64>],
) -> Result<f64> {
    let dom = g.domain();
    let geom = dom.geometry();
    let cols: Vec<Vec<f64>> = targets
        .par_iter()
        .map(|&y| {
            let mut rhs = vec![0.0; dom.len()];
            for &(v, p) in g.dist().support() {
                if let Some(i) = dom.index_of(geom.canon(y - v)) {
                    rhs[i] += p;
                }
            }
            g.solve(&rhs)
        })
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for (k, expect) in kernels.iter().zip(expected_total) {
        let i = dom.index_of(k.source).ok_or(Error::SourceOutsideDomain(k.source))?;
        for (y, col) in targets.iter().zip(&cols) {
            worst = worst.max((k.mass(*y) - col[i]).abs());
        }
        if let Some(t) = expect {
            worst = worst.max((k.total - t).abs());
        }
    }
    Ok(worst)
}

fn antipodal(radius: f64) -> (Point, Point) {
    let x = Point::new(radius as i64, 0);
    (x, -x)
}

fn exit_kernel(g: &GreenOperator, x: Point, accept: impl Fn(Point) -> bool) -> Result<HittingKernel> {
    let masses: Vec<(Point, f64)> = g.exit_distribution(x, accept)?.into_iter().collect();
    let total = masses.iter().map(|m| m.1).sum();
    Ok(HittingKernel {
        source: x,
        masses,
        total,
        method: HittingMethod::LastExit,
        window: None,
        geometry: g.domain().geometry(),
    })
}

struct InteriorRun {
    row: HarnackRow,
    kernels: (HittingKernel, HittingKernel),
}

/// Exit distribution of D(0,R) from two sources in D(0,2r), compared at
/// targets in the s-annulus outside D(0,R).
fn interior_row(d: &StepDistribution, cfg: &HarnackConfig, m: u32, geom: Geometry) -> Result<InteriorRun> {
    let big_r = cfg.big_r(m);
    let s = cfg.s_for(m);
    let (x, xp) = cfg.sources.unwrap_or_else(|| antipodal(2.0 * cfg.r as f64 - 1.0));
    for p in [x, xp] {
        if geom.distance(p, Point::ORIGIN) >= 2.0 * cfg.r as f64 {
            return Err(Error::SourceOutsideDomain(p));
        }
    }
    let disc = Region::disc(Point::ORIGIN, big_r, geom)?;
    let g = GreenOperator::new(d, Domain::from_region(&disc, cfg.budget)?, cfg.opts())?;
    let accept = |q: Point| !disc.contains(q);
    let hx = exit_kernel(&g, geom.canon(x), accept)?;
    let hxp = exit_kernel(&g, geom.canon(xp), accept)?;
    let ring = big_r + s as f64;
    let targets = pick_targets(&hx, &hxp, |y| geom.distance(y, Point::ORIGIN) < ring);
    let defect = preflight(&g, &[&hx, &hxp], &targets, &[Some(1.0), Some(1.0)])?;
    let st = ratio_stats(&hx, &hxp, &targets);
    let row = HarnackRow {
        m,
        big_r,
        s,
        n_triples: targets.len(),
        sup_ratio_dev: Tagged::exact(st.dev),
        sup_ratio_dev_reverse: st.dev_reverse,
        worst: st.worst.map(|y| Triple { x, x_prime: xp, y }),
        preflight_defect: defect,
        domain_size: g.domain().len(),
        extra: BTreeMap::new(),
    };
    Ok(InteriorRun { row, kernels: (hx, hxp) })
}

/// Interior Harnack ratios of the exit distribution of D(0, 4mr).
pub fn interior_harnack(d: &StepDistribution, cfg: &HarnackConfig) -> Result<HarnackReport> {
    cfg.validate()?;
    let mut rep = HarnackReport::new("harnack-interior", d, Geometry::Planar, cfg.r);
    note_scale_regime(&mut rep, cfg, 0.5, "sqrt(r)");
    let rows = cfg
        .sorted_m()
        .into_par_iter()
        .map(|m| interior_row(d, cfg, m, Geometry::Planar).map(|run| run.row))
        .collect::<Result<Vec<_>>>()?;
    rep.rows = rows;
    rep.decay_checks(INTERIOR_SLOPE);
    Ok(rep.finish())
}

/// Largest finite moment order and its value.
fn top_moment(d: &StepDistribution) -> Result<(f64, f64)> {
    let m = d.moments().keys().copied().filter(|&m| m >= 1).max().ok_or(Error::Unsupported("moment bound".into()))?;
    Ok((m as f64, moment(d, m as f64)?))
}

/// sup_y |toral mass − Σ planar masses projecting to y|.
fn projected_diff(toral: &HittingKernel, planar: &HittingKernel, k: i64) -> f64 {
    let mut proj: BTreeMap<Point, f64> = BTreeMap::new();
    for (y, v) in &planar.masses {
        *proj.entry(crate::lattice::project_pi(*y, k)).or_default() += v;
    }
    let mut worst: f64 = 0.0;
    for (y, v) in &toral.masses {
        worst = worst.max((v - proj.get(y).copied().unwrap_or(0.0)).abs());
    }
    for (y, v) in &proj {
        if toral.mass(*y) == 0.0 {
            worst = worst.max(v.abs());
        }
    }
    worst
}

/// Toral interior ratios, plus the sup difference between toral and planar
/// hitting masses against C_M·K^{−M}·R².
pub fn interior_harnack_toral(d: &StepDistribution, cfg: &HarnackConfig) -> Result<HarnackReport> {
    cfg.validate()?;
    let k = cfg.torus()?;
    let geom = Geometry::Toral(k);
    for &m in &cfg.m_list {
        if cfg.big_r(m) >= k as f64 / 6.0 {
            return Err(Error::Config(format!(
                "toral interior run needs R = {} < K/6 = {}",
                cfg.big_r(m),
                k as f64 / 6.0
            )));
        }
    }
    let (mm, cm) = top_moment(d)?;
    let mut rep = HarnackReport::new("harnack-interior-toral", d, geom, cfg.r);
    note_scale_regime(&mut rep, cfg, 0.5, "sqrt(r)");
    let rows = cfg
        .sorted_m()
        .into_par_iter()
        .map(|m| {
            let toral = interior_row(d, cfg, m, geom)?;
            let planar = interior_row(d, cfg, m, Geometry::Planar)?;
            let diff = projected_diff(&toral.kernels.0, &planar.kernels.0, k).max(projected_diff(
                &toral.kernels.1,
                &planar.kernels.1,
                k,
            ));
            let bound = cfg.toral_calibration * cm * (k as f64).powf(-mm) * cfg.big_r(m).powi(2);
            let mut row = toral.row;
            row.extra.insert("toral_planar_diff".into(), Tagged::exact(diff));
            row.extra.insert("toral_planar_bound".into(), Tagged::predicted(bound));
            row.extra.insert("planar_sup_ratio_dev".into(), planar.row.sup_ratio_dev);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let excess = rows
        .iter()
        .map(|r| r.extra["toral_planar_diff"].value - r.extra["toral_planar_bound"].value)
        .fold(f64::NEG_INFINITY, f64::max);
    rep.rows = rows;
    rep.checks.insert("toral_planar_diff_within_bound".into(), Check::at_most(excess, 0.0));
    rep.decay_checks(INTERIOR_SLOPE);
    Ok(rep.finish())
}

/// Inner forbidden radius r/(4m) + s of the split experiment, with
/// s = min(⌊(log R)⁴⌋, ⌊r/(4m)⌋) when automatic. Radii below 1 mean no
/// forbidden set.
pub fn split_inner_radius(cfg: &HarnackConfig, m: u32) -> f64 {
    let base = cfg.r as f64 / (4.0 * m as f64);
    let s = match cfg.s {
        SChoice::Fixed(s) => s as f64,
        SChoice::Auto => (cfg.big_r(m).ln().powi(4).floor()).min(base.floor()),
    };
    base + s
}

/// Sources of ∂D(0,r)_r tested for the split probability: 16 directions
/// on three radii.
pub fn split_sources(r: u32) -> Vec<Point> {
    let r = r as f64;
    let mut out: Vec<Point> = [r + 0.5, 1.5 * r, 2.0 * r - 1.0]
        .iter()
        .flat_map(|&rho| (0..N_ANGLES).map(move |k| Point::nearest(rho, 2.0 * PI * k as f64 / N_ANGLES as f64)))
        .filter(|p| {
            let n = p.norm();
            n >= r && n < 2.0 * r
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Split probability P^x(T_out < T_in) over ∂D(0,r)_r and the
/// multiplicative defect of P^x(S_{T_out} = y, T_out < T_in) against
/// P^x(T_out < T_in)·H(x,y).
pub fn interior_split(d: &StepDistribution, cfg: &HarnackConfig) -> Result<HarnackReport> {
    cfg.validate()?;
    let mut rep = HarnackReport::new("harnack-interior-split", d, Geometry::Planar, cfg.r);
    let sources = split_sources(cfg.r);
    let mut rows = Vec::new();
    for m in cfg.sorted_m() {
        let big_r = cfg.big_r(m);
        let rho = split_inner_radius(cfg, m);
        let outer = Region::disc(Point::ORIGIN, big_r, Geometry::Planar)?;
        let exterior = Region::complement(&outer, None)?;
        let inner = (rho >= 1.0).then(|| Region::disc(Point::ORIGIN, rho, Geometry::Planar)).transpose()?;
        let mut extra = BTreeMap::new();
        let (split_min, split_max, cons) = match &inner {
            Some(inner) => {
                let cons = ConstrainedProblem::new(d, &exterior, inner, Some(&outer), cfg.opts())?;
                let profile = cons.success_profile()?;
                let vals: Vec<f64> = sources
                    .iter()
                    .map(|x| {
                        cons.green().domain().index_of(*x).map(|i| profile[i]).ok_or(Error::SourceOutsideDomain(*x))
                    })
                    .collect::<Result<_>>()?;
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi, Some(cons))
            }
            None => (1.0, 1.0, None),
        };
        extra.insert("inner_radius".into(), Tagged::exact(rho));
        extra.insert("split_min".into(), Tagged::exact(split_min));
        extra.insert("split_max".into(), Tagged::exact(split_max));
        let mut row = HarnackRow {
            m,
            big_r,
            s: split_inner_radius(cfg, m).floor() as u32 - (cfg.r as f64 / (4.0 * m as f64)).floor() as u32,
            n_triples: 0,
            sup_ratio_dev: Tagged::exact(0.0),
            sup_ratio_dev_reverse: 0.0,
            worst: None,
            preflight_defect: 0.0,
            domain_size: 0,
            extra,
        };
        if cfg.split_defect {
            let g = GreenOperator::new(d, Domain::from_region(&outer, cfg.budget)?, cfg.opts())?;
            row.domain_size = g.domain().len();
            let probes: Vec<Point> = (0..4).map(|k| Point::nearest(1.5 * cfg.r as f64, PI / 2.0 * k as f64)).collect();
            let mut worst: f64 = 0.0;
            let mut worst_rev: f64 = 0.0;
            let mut n = 0;
            let mut pre: f64 = 0.0;
            for x in probes {
                let h = exit_kernel(&g, x, |q| !outer.contains(q))?;
                let (joint, p) = match &cons {
                    Some(c) => c.kernel(x)?,
                    None => (h.clone(), 1.0),
                };
                let targets = pick_targets(&joint, &h, |_| true);
                pre = pre.max(preflight(&g, &[&h], &targets, &[Some(1.0)])?);
                if let Some(c) = &cons {
                    pre = pre.max(preflight(c.green(), &[&joint], &targets, &[None])?);
                }
                for &y in &targets {
                    let product = p * h.mass(y);
                    let dev = (joint.mass(y) / product - 1.0).abs();
                    if dev > worst {
                        row.worst = Some(Triple { x, x_prime: x, y });
                    }
                    worst = worst.max(dev);
                    worst_rev = worst_rev.max((product / joint.mass(y) - 1.0).abs());
                }
                n += targets.len();
            }
            row.sup_ratio_dev = Tagged::exact(worst);
            row.sup_ratio_dev_reverse = worst_rev;
            row.n_triples = n;
            row.preflight_defect = pre;
        }
        rows.push(row);
    }
    for row in &rows {
        if row.m >= 8 {
            let lo = row.extra["split_min"].value;
            let hi = row.extra["split_max"].value;
            rep.checks.insert(
                format!("split_in_range_m{}", row.m),
                Check { value: lo.min(1.0 - hi), threshold: 0.4, pass: lo >= 0.4 && hi <= 0.6 },
            );
        }
    }
    rep.rows = rows;
    if cfg.split_defect {
        let pre = rep.rows.iter().map(|r| r.preflight_defect).fold(0.0, f64::max);
        rep.checks.insert("preflight_identity".into(), Check::at_most(pre, PREFLIGHT_TOL));
        rep.checks.insert("inversions".into(), Check::at_most(inversions(&rep.deviations()) as f64, 1.0));
        rep.fit = decay_fit(&rep.rows);
    }
    Ok(rep.finish())
}

/// Exterior Harnack ratios of the hitting distribution of D(0, r+s) on the
/// infinite plane from two sources in ∂D(0,R)_{√R}.
pub fn exterior_harnack(d: &StepDistribution, cfg: &HarnackConfig) -> Result<HarnackReport> {
    cfg.validate()?;
    let mut rep = HarnackReport::new("harnack-exterior", d, Geometry::Planar, cfg.r);
    note_scale_regime(&mut rep, cfg, 0.25, "r^(1/4)");
    let rows = cfg
        .sorted_m()
        .into_par_iter()
        .map(|m| {
            let big_r = cfg.big_r(m);
            let s = cfg.s_for(m);
            let radius = cfg.r as f64 + s as f64;
            let (x, xp) = cfg.sources.unwrap_or_else(|| antipodal(big_r));
            let ext = ExteriorDisc::new(d, radius)?;
            let hx = ext.hitting(x)?;
            let hxp = ext.hitting(xp)?;
            let targets = pick_targets(&hx, &hxp, |y| y.norm() >= cfg.r as f64);
            let st = ratio_stats(&hx, &hxp, &targets);
            let sym = (ext.green(x, xp)? - ext.green(xp, x)?).abs();
            let defect = sym.max((hx.total - 1.0).abs()).max((hxp.total - 1.0).abs());
            let mut extra = BTreeMap::new();
            if let Some((ratio, bound)) = entrance_ratio(d, cfg, m, radius)? {
                extra.insert("entrance_ratio_dev".into(), Tagged::exact(ratio));
                extra.insert("entrance_ratio_bound".into(), Tagged::predicted(bound));
            }
            Ok(HarnackRow {
                m,
                big_r,
                s,
                n_triples: targets.len(),
                sup_ratio_dev: Tagged::exact(st.dev),
                sup_ratio_dev_reverse: st.dev_reverse,
                worst: st.worst.map(|y| Triple { x, x_prime: xp, y }),
                preflight_defect: defect,
                domain_size: ext.entry_points().len(),
                extra,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rep.rows = rows;
    for row in &rep.rows {
        match (row.extra.get("entrance_ratio_dev"), row.extra.get("entrance_ratio_bound")) {
            (Some(v), Some(b)) => {
                rep.checks.insert(format!("entrance_ratio_m{}", row.m), Check::at_most(v.value, b.value));
            }
            _ => rep.notes.push(format!("entrance ratio at m={} skipped: D(0,4mR) exceeds the budget", row.m)),
        }
    }
    rep.decay_checks(EXTERIOR_SLOPE);
    Ok(rep.finish())
}

/// |P^x(T_A < T_out)/P^{x′}(T_A < T_out) − 1| for |x| = R, |x′| = R + √R,
/// A = D(0, r+s), T_out the exit of D(0, 4mR), and the bound
/// 5·√R / (R·log(R/r)). None when the domain exceeds the budget.
fn entrance_ratio(d: &StepDistribution, cfg: &HarnackConfig, m: u32, radius: f64) -> Result<Option<(f64, f64)>> {
    let big_r = cfg.big_r(m);
    let outer = 4.0 * m as f64 * big_r;
    if PI * outer * outer > cfg.budget as f64 {
        return Ok(None);
    }
    let ring = Region::annulus(Point::ORIGIN, radius, outer - radius, Geometry::Planar)?;
    let inner = Region::disc(Point::ORIGIN, radius, Geometry::Planar)?;
    let g = GreenOperator::new(d, Domain::from_region(&ring, cfg.budget)?, cfg.opts())?;
    let prof = g.absorption(|q| inner.contains(q))?;
    let at = |p: Point| g.domain().index_of(p).map(|i| prof[i]).ok_or(Error::SourceOutsideDomain(p));
    let a = at(Point::new(big_r as i64, 0))?;
    let b = at(Point::new((big_r + big_r.sqrt()).round() as i64, 0))?;
    let bound = 5.0 * big_r.sqrt() / (big_r * (big_r / cfg.r as f64).ln());
    Ok(Some(((a / b - 1.0).abs(), bound)))
}

struct ConstrainedRun {
    dev: RatioStats,
    targets: Vec<Point>,
    kernels: (HittingKernel, HittingKernel),
    defect: f64,
    size: usize,
}

/// Hit D(0, r+s) before leaving D(0, 4mR), from x, x′.
fn constrained_run(
    d: &StepDistribution,
    cfg: &HarnackConfig,
    m: u32,
    geom: Geometry,
    x: Point,
    xp: Point,
) -> Result<ConstrainedRun> {
    let big_r = cfg.big_r(m);
    let s = cfg.s_for(m);
    let radius = cfg.r as f64 + s as f64;
    let outer_r = 4.0 * m as f64 * big_r;
    let target = Region::disc(Point::ORIGIN, radius, geom)?;
    let outer = Region::disc(Point::ORIGIN, outer_r, geom)?;
    let forbidden = Region::complement(&outer, None)?;
    let cons = ConstrainedProblem::new(d, &target, &forbidden, Some(&outer), cfg.opts())?;
    let (hx, px) = cons.kernel(x)?;
    let (hxp, pxp) = cons.kernel(xp)?;
    let targets = pick_targets(&hx, &hxp, |y| geom.distance(y, Point::ORIGIN) >= cfg.r as f64);
    let prof = cons.success_profile()?;
    let dom = cons.green().domain();
    let expect = [dom.index_of(hx.source).map(|i| prof[i]), dom.index_of(hxp.source).map(|i| prof[i])];
    let defect = preflight(cons.green(), &[&hx, &hxp], &targets, &expect)?
        .max((px - hx.total).abs())
        .max((pxp - hxp.total).abs());
    let dev = ratio_stats(&hx, &hxp, &targets);
    Ok(ConstrainedRun { dev, targets, kernels: (hx, hxp), defect, size: dom.len() })
}

/// Toral exterior ratios of the constrained kernel (hit D(0, r+s) before
/// leaving D(0, 4mR)), paired with the planar run on the same sources.
pub fn exterior_harnack_toral(d: &StepDistribution, cfg: &HarnackConfig) -> Result<HarnackReport> {
    cfg.validate()?;
    let k = cfg.torus()?;
    let geom = Geometry::Toral(k);
    for &m in &cfg.m_list {
        let outer = 4.0 * m as f64 * cfg.big_r(m);
        if outer >= k as f64 / 4.0 {
            return Err(Error::Config(format!("toral exterior run needs 4mR = {outer} < K/4 = {}", k as f64 / 4.0)));
        }
    }
    let (mm, cm) = top_moment(d)?;
    let mut rep = HarnackReport::new("harnack-exterior-toral", d, geom, cfg.r);
    note_scale_regime(&mut rep, cfg, 0.25, "r^(1/4)");
    let rows = cfg
        .sorted_m()
        .into_iter()
        .map(|m| {
            let big_r = cfg.big_r(m);
            let (x, xp) = cfg.sources.unwrap_or_else(|| antipodal(big_r));
            let toral = constrained_run(d, cfg, m, geom, x, xp)?;
            let planar = constrained_run(d, cfg, m, Geometry::Planar, x, xp)?;
            let diff = projected_diff(&toral.kernels.0, &planar.kernels.0, k).max(projected_diff(
                &toral.kernels.1,
                &planar.kernels.1,
                k,
            ));
            let bound = cfg.toral_calibration * cm * (k as f64).powf(-mm) * (m as f64 * big_r).powi(2);
            let mut extra = BTreeMap::new();
            extra.insert("toral_planar_diff".into(), Tagged::exact(diff));
            extra.insert("toral_planar_bound".into(), Tagged::predicted(bound));
            extra.insert("planar_sup_ratio_dev".into(), Tagged::exact(planar.dev.dev));
            Ok(HarnackRow {
                m,
                big_r,
                s: cfg.s_for(m),
                n_triples: toral.targets.len(),
                sup_ratio_dev: Tagged::exact(toral.dev.dev),
                sup_ratio_dev_reverse: toral.dev.dev_reverse,
                worst: toral.dev.worst.map(|y| Triple { x, x_prime: xp, y }),
                preflight_defect: toral.defect.max(planar.defect),
                domain_size: toral.size,
                extra,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let excess = rows
        .iter()
        .map(|r| r.extra["toral_planar_diff"].value - r.extra["toral_planar_bound"].value)
        .fold(f64::NEG_INFINITY, f64::max);
    rep.rows = rows;
    rep.checks.insert("toral_planar_diff_within_bound".into(), Check::at_most(excess, 0.0));
    rep.decay_checks(EXTERIOR_SLOPE);
    Ok(rep.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloorRow {
    pub m: u32,
    #[serde(rename = "R")]
    pub big_r: f64,
    pub s: u32,
    pub n_pairs: usize,
    /// min G(x̂, ŷ) over exterior pairs.
    pub exterior_min: Tagged,
    /// min G(x̂, ẑ) with ẑ ∈ D(0,2r) \ D(0, r + (1+ε)s).
    pub near_disc_min: Tagged,
    /// near_disc_min · R log R.
    pub implied_constant: Tagged,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloorReport {
    pub experiment: String,
    pub dist: String,
    pub r: u32,
    pub eps: f64,
    pub seed: u64,
    pub rows: Vec<FloorRow>,
    /// For consecutive m: observed near-disc ratio over the (R log R)⁻¹ ratio.
    pub scaling: Vec<Check>,
    pub checks: BTreeMap<String, Check>,
    pub pass: bool,
}

pub const FLOOR_CSV_HEADER: &str = "m,R,exterior_min,near_disc_min,implied_constant";

impl FloorReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{FLOOR_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e}",
                r.m, r.big_r, r.exterior_min.value, r.near_disc_min.value, r.implied_constant.value
            )?;
        }
        Ok(())
    }
}

pub const FLOOR_PAIRS: usize = 64;

/// Exterior Green values G_{D(0,r+s)^c} on sampled pairs: a positive floor
/// for x̂, ŷ outside D(0,R), and the near-disc floor with ẑ close to the
/// disc, compared with the (R log R)⁻¹ scale across m.
pub fn green_floor_probe(d: &StepDistribution, cfg: &HarnackConfig) -> Result<FloorReport> {
    cfg.validate()?;
    let rows = cfg
        .sorted_m()
        .into_iter()
        .map(|m| {
            let big_r = cfg.big_r(m);
            let s = cfg.s_for(m);
            let r = cfg.r as f64;
            let near_lo = r + (1.0 + cfg.eps) * s as f64;
            if near_lo >= 2.0 * r - 1.0 {
                return Err(Error::Config(format!("near-disc range D(0,{})\\D(0,{near_lo}) is empty", 2.0 * r)));
            }
            let ext = ExteriorDisc::new(d, r + s as f64)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(m as u64);
            let mut far = || Point::nearest(big_r * rng.random_range(1.0..2.0), rng.random_range(0.0..2.0 * PI));
            let pairs: Vec<(Point, Point)> = (0..FLOOR_PAIRS).map(|_| (far(), far())).collect();
            let xs: Vec<Point> = (0..FLOOR_PAIRS / 4).map(|_| far()).collect();
            let zs: Vec<Point> = (0..FLOOR_PAIRS / 4)
                .map(|_| {
                    Point::nearest(rng.random_range(near_lo + 0.5..2.0 * r - 0.5), rng.random_range(0.0..2.0 * PI))
                })
                .filter(|z| z.norm() >= near_lo && z.norm() < 2.0 * r)
                .collect();
            let ext_min = pairs
                .par_iter()
                .map(|&(x, y)| ext.green(x, y))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let near_min = xs
                .par_iter()
                .map(|&x| ext.green_row(x, &zs))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .fold(f64::INFINITY, f64::min);
            Ok(FloorRow {
                m,
                big_r,
                s,
                n_pairs: pairs.len() + xs.len() * zs.len(),
                exterior_min: Tagged::exact(ext_min),
                near_disc_min: Tagged::exact(near_min),
                implied_constant: Tagged::fitted(near_min * big_r * big_r.ln()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scaling: Vec<Check> = rows
        .windows(2)
        .map(|w| {
            let observed = w[0].near_disc_min.value / w[1].near_disc_min.value;
            let predicted = (w[1].big_r * w[1].big_r.ln()) / (w[0].big_r * w[0].big_r.ln());
            let q = observed / predicted;
            Check { value: q, threshold: 3.0, pass: (1.0 / 3.0..=3.0).contains(&q) }
        })
        .collect();
    let mut checks = BTreeMap::new();
    let floor = rows.iter().map(|r| r.exterior_min.value.min(r.near_disc_min.value)).fold(f64::INFINITY, f64::min);
    checks.insert("positive_floor".into(), Check { value: floor, threshold: 0.0, pass: floor > 0.0 });
    let pass = checks.values().all(|c| c.pass) && scaling.iter().all(|c| c.pass);
    Ok(FloorReport {
        experiment: "green-floor".into(),
        dist: d.spec().name(),
        r: cfg.r,
        eps: cfg.eps,
        seed: cfg.seed,
        rows,
        scaling,
        checks,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepdist::{build_distribution, DistributionSpec};

    fn lazy() -> StepDistribution {
        build_distribution(&DistributionSpec::LazySrw).unwrap()
    }

    #[test]
    fn auto_s_is_capped() {
        let cfg = HarnackConfig::new(4, vec![2]);
        assert_eq!(cfg.s_for(2), 2);
        let cfg = HarnackConfig::new(32, vec![8]);
        assert_eq!(split_inner_radius(&cfg, 8), 2.0);
        assert!(split_inner_radius(&HarnackConfig::new(4, vec![64]), 64) < 1.0);
    }

    #[test]
    fn s_choice_parses() {
        assert_eq!("auto".parse::<SChoice>().unwrap(), SChoice::Auto);
        assert_eq!("3".parse::<SChoice>().unwrap(), SChoice::Fixed(3));
        assert!("x".parse::<SChoice>().is_err());
        let cfg: HarnackConfig = serde_json::from_str(r#"{"r":4,"m_list":[2],"s":"auto"}"#).unwrap();
        assert_eq!(cfg.s, SChoice::Auto);
        let cfg: HarnackConfig = serde_json::from_str(r#"{"r":4,"m_list":[2],"s":5}"#).unwrap();
        assert_eq!(cfg.s, SChoice::Fixed(5));
    }

    #[test]
    fn identical_sources_give_zero_deviation() {
        let mut cfg = HarnackConfig::new(4, vec![2]);
        cfg.sources = Some((Point::new(3, 1), Point::new(3, 1)));
        let rep = interior_harnack(&lazy(), &cfg).unwrap();
        assert_eq!(rep.rows[0].sup_ratio_dev.value, 0.0);
        let rep = exterior_harnack(
            &lazy(),
            &HarnackConfig { sources: Some((Point::new(40, 2), Point::new(40, 2))), ..HarnackConfig::new(4, vec![2]) },
        )
        .unwrap();
        assert_eq!(rep.rows[0].sup_ratio_dev.value, 0.0);
    }

    #[test]
    fn interior_small_run() {
        let rep = interior_harnack(&lazy(), &HarnackConfig::new(2, vec![2, 4])).unwrap();
        assert_eq!(rep.rows.len(), 2);
        assert!(rep.rows[1].sup_ratio_dev.value < rep.rows[0].sup_ratio_dev.value);
        assert!(rep.rows.iter().all(|r| r.n_triples == N_ANGLES && r.preflight_defect < PREFLIGHT_TOL));
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("m,sup_ratio_dev,fitted_value\n2,"));
    }

    #[test]
    fn empty_forbidden_disc_gives_exact_product() {
        let rep = interior_split(&lazy(), &HarnackConfig::new(2, vec![1])).unwrap();
        assert!(rep.rows[0].sup_ratio_dev.value <= 1e-9);
        assert_eq!(rep.rows[0].extra["split_min"].value, 1.0);
    }

    #[test]
    fn inversion_count() {
        assert_eq!(inversions(&[4.0, 3.0, 3.5, 1.0]), 1);
        assert_eq!(inversions(&[1.0, 2.0, 3.0]), 2);
    }
}
