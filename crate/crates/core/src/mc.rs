//! Monte Carlo path engine for stopping-time events.
//!
//! Paths are simulated with planar increments; toral positions are the
//! projection of the planar one, so planar and toral stopping times can be
//! compared on one path. Path `i` draws from the ChaCha8 stream `i` of the
//! run seed, and per-path results are reduced in path order, so estimates
//! do not depend on the worker count.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::lattice::{project_pi, Geometry, Point, Region};
use crate::report::Tagged;
use crate::stepdist::StepDistribution;

pub const DEFAULT_CAP: u64 = 100_000_000;
pub const MIN_PATHS: usize = 100;

pub struct PathSampler {
    dist: StepDistribution,
    steps: Vec<Point>,
    alias: WeightedAliasIndex<f64>,
    seed: u64,
}

impl PathSampler {
    pub fn new(dist: &StepDistribution, seed: u64) -> Result<Self> {
        let (steps, weights): (Vec<Point>, Vec<f64>) = dist.support().iter().copied().unzip();
        let alias = WeightedAliasIndex::new(weights).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        Ok(PathSampler { dist: dist.clone(), steps, alias, seed })
    }

    pub fn dist(&self) -> &StepDistribution {
        &self.dist
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn step(&self, rng: &mut ChaCha8Rng) -> Point {
        self.steps[self.alias.sample(rng)]
    }

    /// Planar positions S_0..S_n of path `stream`.
    pub fn path(&self, start: Point, stream: u64, n_steps: usize) -> Vec<Point> {
        let mut rng = self.rng(stream);
        let mut out = Vec::with_capacity(n_steps + 1);
        let mut p = start;
        out.push(p);
        for _ in 0..n_steps {
            p = p + self.step(&mut rng);
            out.push(p);
        }
        out
    }
}

/// Stopping rule. Regions are tested on the projected position when their
/// geometry is toral and on the planar position otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopSpec {
    Hit(Region),
    Escape(Region),
    FirstOf(Vec<StopSpec>),
}

impl StopSpec {
    fn leaves(&self) -> Vec<(bool, &Region)> {
        match self {
            StopSpec::Hit(r) => vec![(true, r)],
            StopSpec::Escape(r) => vec![(false, r)],
            StopSpec::FirstOf(list) => list.iter().flat_map(|s| s.leaves()).collect(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            StopSpec::Hit(r) => format!("hit({})", r.to_json()),
            StopSpec::Escape(r) => format!("escape({})", r.to_json()),
            StopSpec::FirstOf(list) => {
                format!("first_of([{}])", list.iter().map(|s| s.describe()).collect::<Vec<_>>().join(", "))
            }
        }
    }
}

fn in_region(r: &Region, planar: Point) -> bool {
    r.contains(r.geometry().canon(planar))
}

/// Index of the first leaf condition met at `p`, in declaration order.
fn triggered(leaves: &[(bool, &Region)], p: Point) -> Option<usize> {
    leaves.iter().position(|(hit, r)| in_region(r, p) == *hit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StopRecord {
    pub path_id: u64,
    /// Index of the triggering condition (flattened `first_of` order).
    pub stop_index: usize,
    /// Planar position at the stopping time.
    pub position: Point,
    pub steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopOutcome {
    Stopped(StopRecord),
    Capped { path_id: u64, position: Point, steps: u64 },
}

impl StopOutcome {
    pub fn record(&self) -> Option<&StopRecord> {
        match self {
            StopOutcome::Stopped(r) => Some(r),
            StopOutcome::Capped { .. } => None,
        }
    }
}

pub fn sample_until(sampler: &PathSampler, x: Point, stop: &StopSpec, cap: u64, path_id: u64) -> Result<StopOutcome> {
    if cap == 0 {
        return Err(Error::Config("path cap must be >= 1".into()));
    }
    let leaves = stop.leaves();
    let mut rng = sampler.rng(path_id);
    let mut p = x;
    let mut t = 0;
    loop {
        if let Some(i) = triggered(&leaves, p) {
            return Ok(StopOutcome::Stopped(StopRecord { path_id, stop_index: i, position: p, steps: t }));
        }
        if t == cap {
            return Ok(StopOutcome::Capped { path_id, position: p, steps: t });
        }
        p = p + sampler.step(&mut rng);
        t += 1;
    }
}

/// Event whose frequency (or mean) is estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventSpec {
    /// The stop rule triggers through condition `index`.
    StopsAt { stop: StopSpec, index: usize },
    /// The stopping position, reduced under `geometry`, equals `point`.
    LandsAt {
        stop: StopSpec,
        point: Point,
        #[serde(default)]
        geometry: Geometry,
    },
    /// Mean number of steps until the stop rule triggers.
    MeanSteps { stop: StopSpec },
    /// Toral exit of D(0,n) happens strictly after the planar exit: at the
    /// planar exit time the projected position is back inside the disc.
    ToralExitMismatch { n: f64, k: i64 },
    /// Leaves D(0,n+s) without visiting the annulus D(0,n+s) \ D(0,n).
    AnnulusOverjump {
        n: f64,
        s: f64,
        #[serde(default)]
        geometry: Geometry,
    },
}

impl EventSpec {
    pub fn describe(&self) -> String {
        match self {
            EventSpec::StopsAt { stop, index } => format!("P(stop index = {index} under {})", stop.describe()),
            EventSpec::LandsAt { stop, point, .. } => format!("P(stop at {point} under {})", stop.describe()),
            EventSpec::MeanSteps { stop } => format!("E[steps until {}]", stop.describe()),
            EventSpec::ToralExitMismatch { n, k } => format!("P(T_toral_exit > T_planar_exit), n={n}, K={k}"),
            EventSpec::AnnulusOverjump { n, s, geometry } => {
                format!("P(escape D(0,{}) avoiding annulus D(0,{})\\D(0,{n})), {:?}", n + s, n + s, geometry)
            }
        }
    }

    fn is_probability(&self) -> bool {
        !matches!(self, EventSpec::MeanSteps { .. })
    }

    fn stop_spec(&self) -> Result<StopSpec> {
        Ok(match self {
            EventSpec::StopsAt { stop, .. } | EventSpec::LandsAt { stop, .. } | EventSpec::MeanSteps { stop } => {
                stop.clone()
            }
            EventSpec::ToralExitMismatch { n, .. } => {
                StopSpec::Escape(Region::disc(Point::ORIGIN, *n, Geometry::Planar)?)
            }
            EventSpec::AnnulusOverjump { n, s, geometry } => StopSpec::FirstOf(vec![
                StopSpec::Hit(Region::annulus(Point::ORIGIN, *n, *s, *geometry)?),
                StopSpec::Escape(Region::disc(Point::ORIGIN, n + s, *geometry)?),
            ]),
        })
    }

    /// Per-path sample value, or None when the path hit the cap.
    fn score(&self, out: &StopOutcome) -> Option<f64> {
        let r = out.record()?;
        Some(match self {
            EventSpec::StopsAt { index, .. } => f64::from(r.stop_index == *index),
            EventSpec::LandsAt { point, geometry, .. } => f64::from(geometry.canon(r.position) == *point),
            EventSpec::MeanSteps { .. } => r.steps as f64,
            EventSpec::ToralExitMismatch { n, k } => f64::from((project_pi(r.position, *k).norm2() as f64) < n * n),
            EventSpec::AnnulusOverjump { .. } => f64::from(r.stop_index == 1),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub event: String,
    pub start: Point,
    pub n_paths: usize,
    pub n_capped: usize,
    pub estimate: Tagged,
    pub std_error: f64,
    pub ci95: [f64; 2],
    pub seed: u64,
    pub cap: u64,
}

/// Frequency (or mean) of `event` over `n_paths` paths from `x`. Capped
/// paths are excluded and counted in `n_capped`.
pub fn estimate(
    sampler: &PathSampler,
    x: Point,
    event: &EventSpec,
    n_paths: usize,
    cap: u64,
) -> Result<EstimateReport> {
    let (report, _) = estimate_with_records(sampler, x, event, n_paths, cap)?;
    Ok(report)
}

pub fn estimate_with_records(
    sampler: &PathSampler,
    x: Point,
    event: &EventSpec,
    n_paths: usize,
    cap: u64,
) -> Result<(EstimateReport, Vec<StopOutcome>)> {
    if n_paths < MIN_PATHS {
        return Err(Error::Config(format!("n_paths must be >= {MIN_PATHS}")));
    }
    let stop = event.stop_spec()?;
    let outcomes: Vec<StopOutcome> =
        (0..n_paths as u64).into_par_iter().map(|i| sample_until(sampler, x, &stop, cap, i)).collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut used = 0usize;
    for o in &outcomes {
        if let Some(v) = event.score(o) {
            sum += v;
            sum2 += v * v;
            used += 1;
        }
    }
    let n = used.max(1) as f64;
    let mean = sum / n;
    let var = if used > 1 { ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    let se = (var / n).sqrt();
    let mut ci = [mean - 1.96 * se, mean + 1.96 * se];
    if event.is_probability() {
        ci = [ci[0].max(0.0), ci[1].min(1.0)];
    }
    let report = EstimateReport {
        event: event.describe(),
        start: x,
        n_paths,
        n_capped: n_paths - used,
        estimate: Tagged::mc(mean),
        std_error: se,
        ci95: ci,
        seed: sampler.seed(),
        cap,
    };
    Ok((report, outcomes))
}

pub const STOP_CSV_HEADER: &str = "path_id,stop_index,x1,x2,steps";

/// Stop records as CSV; capped paths get an empty stop_index.
pub fn write_stop_csv<W: Write>(mut w: W, outcomes: &[StopOutcome]) -> Result<()> {
    writeln!(w, "{STOP_CSV_HEADER}")?;
    for o in outcomes {
        match o {
            StopOutcome::Stopped(r) => {
                writeln!(w, "{},{},{},{},{}", r.path_id, r.stop_index, r.position.x, r.position.y, r.steps)?
            }
            StopOutcome::Capped { path_id, position, steps } => {
                writeln!(w, "{path_id},,{},{},{steps}", position.x, position.y)?
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub draws: usize,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Largest |observed − expected| in standard deviations.
    pub max_sigma: f64,
    pub pass: bool,
}

/// Pearson test of sampled step frequencies against p₁ at level `alpha`.
pub fn step_frequency_test(sampler: &PathSampler, draws: usize, alpha: f64) -> ChiSquareReport {
    const CHUNK: usize = 1 << 16;
    let k = sampler.steps.len();
    let chunks = draws.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = sampler.rng(c as u64);
            let mut counts = vec![0u64; k];
            for _ in 0..CHUNK.min(draws - c * CHUNK) {
                counts[sampler.alias.sample(&mut rng)] += 1;
            }
            counts
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(vec![0u64; k], |mut acc, c| {
            acc.iter_mut().zip(c).for_each(|(a, b)| *a += b);
            acc
        });
    let n = draws as f64;
    let mut stat = 0.0;
    let mut max_sigma: f64 = 0.0;
    for ((_, p), &c) in sampler.dist.support().iter().zip(&counts) {
        let e = n * p;
        stat += (c as f64 - e).powi(2) / e;
        max_sigma = max_sigma.max((c as f64 - e).abs() / (e * (1.0 - p)).sqrt().max(f64::MIN_POSITIVE));
    }
    let dof = k.saturating_sub(1).max(1);
    let p_value = ChiSquared::new(dof as f64).map(|c| c.sf(stat)).unwrap_or(f64::NAN);
    ChiSquareReport { draws, statistic: stat, dof, p_value, max_sigma, pass: p_value >= alpha }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepdist::{build_distribution, DistributionSpec};

    fn lazy_sampler(seed: u64) -> PathSampler {
        PathSampler::new(&build_distribution(&DistributionSpec::LazySrw).unwrap(), seed).unwrap()
    }

    #[test]
    fn start_inside_hit_region_stops_immediately() {
        let s = lazy_sampler(1);
        let stop = StopSpec::Hit(Region::disc(Point::ORIGIN, 3.0, Geometry::Planar).unwrap());
        let out = sample_until(&s, Point::new(1, 1), &stop, 10, 0).unwrap();
        assert_eq!(
            out,
            StopOutcome::Stopped(StopRecord { path_id: 0, stop_index: 0, position: Point::new(1, 1), steps: 0 })
        );
    }

    #[test]
    fn same_stream_same_path() {
        let s = lazy_sampler(9);
        assert_eq!(s.path(Point::ORIGIN, 3, 500), s.path(Point::ORIGIN, 3, 500));
        assert_ne!(s.path(Point::ORIGIN, 3, 500), s.path(Point::ORIGIN, 4, 500));
    }

    #[test]
    fn cap_is_reported() {
        let s = lazy_sampler(2);
        let stop = StopSpec::Escape(Region::disc(Point::ORIGIN, 1000.0, Geometry::Planar).unwrap());
        let out = sample_until(&s, Point::ORIGIN, &stop, 5, 0).unwrap();
        assert!(matches!(out, StopOutcome::Capped { steps: 5, .. }));
    }

    #[test]
    fn too_few_paths_rejected() {
        let s = lazy_sampler(2);
        let ev = EventSpec::ToralExitMismatch { n: 10.0, k: 64 };
        assert!(estimate(&s, Point::ORIGIN, &ev, 10, DEFAULT_CAP).is_err());
    }

    #[test]
    fn bounded_walk_never_mismatches() {
        let s = lazy_sampler(3);
        let ev = EventSpec::ToralExitMismatch { n: 10.0, k: 64 };
        let r = estimate(&s, Point::ORIGIN, &ev, 2000, DEFAULT_CAP).unwrap();
        assert_eq!(r.estimate.value, 0.0);
        assert_eq!(r.ci95, [0.0, 0.0]);
    }

    #[test]
    fn chi_square_passes() {
        let r = step_frequency_test(&lazy_sampler(5), 200_000, 1e-6);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn event_json_roundtrip() {
        let ev: EventSpec = serde_json::from_str(
            r#"{"kind":"stops_at","index":0,"stop":{"first_of":[{"hit":{"kind":"disc","center":[0,0],"n":4}},{"escape":{"kind":"disc","center":[0,0],"n":32}}]}}"#,
        )
        .unwrap();
        assert!(matches!(&ev, EventSpec::StopsAt { index: 0, stop: StopSpec::FirstOf(v) } if v.len() == 2));
        let back: EventSpec = serde_json::from_str(&serde_json::to_string(&ev).unwrap()).unwrap();
        assert_eq!(back, ev);
        assert!(serde_json::from_str::<EventSpec>(r#"{"kind":"toral_exit_mismatch","n":10,"k":64,"extra":1}"#).is_err());
    }

    #[test]
    fn stop_csv_format() {
        let outs = [
            StopOutcome::Stopped(StopRecord { path_id: 0, stop_index: 1, position: Point::new(3, -4), steps: 17 }),
            StopOutcome::Capped { path_id: 1, position: Point::new(0, 2), steps: 9 },
        ];
        let mut buf = Vec::new();
        write_stop_csv(&mut buf, &outs).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "path_id,stop_index,x1,x2,steps\n0,1,3,-4,17\n1,,0,2,9\n");
    }
}
