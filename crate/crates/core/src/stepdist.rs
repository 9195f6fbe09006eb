//! One-step laws p₁ for planar walks: construction and validation of the
//! standing assumptions (symmetry, Γ = cI, strong aperiodicity, moments,
//! Condition A).

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Point, COORD_LIMIT};

/// Largest accepted table size / power-law cutoff.
pub const MAX_SUPPORT: usize = 1 << 20;
pub const MAX_CUTOFF: u32 = 512;

/// Relative tolerance used for normalisation and isotropy checks.
pub const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum TableProb {
    Exact(Ratio<i64>),
    Float(f64),
}

impl TableProb {
    pub fn value(&self) -> f64 {
        match self {
            TableProb::Exact(r) => *r.numer() as f64 / *r.denom() as f64,
            TableProb::Float(f) => *f,
        }
    }
}

impl Serialize for TableProb {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TableProb::Exact(r) => s.serialize_str(&format!("{}/{}", r.numer(), r.denom())),
            TableProb::Float(f) => s.serialize_f64(*f),
        }
    }
}

impl<'de> Deserialize<'de> for TableProb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(f) => Ok(TableProb::Float(f)),
            Raw::Text(t) => parse_ratio(&t).map(TableProb::Exact).map_err(serde::de::Error::custom),
        }
    }
}

fn parse_ratio(text: &str) -> std::result::Result<Ratio<i64>, String> {
    let (n, d) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text.trim(), "1"),
    };
    let n: i64 = n.parse().map_err(|_| format!("bad rational `{text}`"))?;
    let d: i64 = d.parse().map_err(|_| format!("bad rational `{text}`"))?;
    if d <= 0 || n.unsigned_abs() > 1 << 40 || d > 1 << 40 {
        return Err(format!("bad rational `{text}`"));
    }
    Ok(Ratio::new(n, d))
}

/// One row `[dx, dy, p]` of a custom table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry(pub i64, pub i64, pub TableProb);

#[derive(Clone, Debug, PartialEq)]
pub enum DistributionSpec {
    /// Hold with probability ½, each of the four neighbours with ⅛.
    LazySrw,
    /// Uniform on the eight king-move neighbours.
    King,
    CustomTable(Vec<TableEntry>),
    /// p₁(x) ∝ |x|^(−exponent) on 0 < |x| ≤ cutoff. Stands in for a long-range
    /// law; moments of order ≥ exponent − 2 are reported as divergent.
    TruncatedPowerLaw {
        exponent: f64,
        cutoff: u32,
    },
}

impl DistributionSpec {
    /// Plain nearest-neighbour walk (periodic; not strongly aperiodic).
    pub fn simple_srw() -> Self {
        let q = TableProb::Exact(Ratio::new(1, 4));
        DistributionSpec::CustomTable(vec![
            TableEntry(1, 0, q.clone()),
            TableEntry(-1, 0, q.clone()),
            TableEntry(0, 1, q.clone()),
            TableEntry(0, -1, q),
        ])
    }

    pub fn name(&self) -> String {
        match self {
            DistributionSpec::LazySrw => "lazy_srw".into(),
            DistributionSpec::King => "king".into(),
            DistributionSpec::CustomTable(t) => format!("custom_table[{}]", t.len()),
            DistributionSpec::TruncatedPowerLaw { exponent, cutoff } => {
                format!("truncated_power_law({exponent},{cutoff})")
            }
        }
    }

    /// Parses a short command-line form: `lazy_srw`, `king`,
    /// `truncated_power_law(6,50)` or a JSON document.
    pub fn parse_short(text: &str) -> Result<Self> {
        let t = text.trim();
        match t {
            "lazy_srw" => return Ok(DistributionSpec::LazySrw),
            "king" => return Ok(DistributionSpec::King),
            _ => {}
        }
        if let Some(args) = t.strip_prefix("truncated_power_law(").and_then(|r| r.strip_suffix(')')) {
            let (a, c) = args.split_once(',').ok_or_else(|| {
                Error::InvalidSpec(format!("expected truncated_power_law(exponent,cutoff), got `{t}`"))
            })?;
            let exponent: f64 = a.trim().parse().map_err(|_| Error::InvalidSpec(format!("bad exponent `{a}`")))?;
            let cutoff: u32 = c.trim().parse().map_err(|_| Error::InvalidSpec(format!("bad cutoff `{c}`")))?;
            return Ok(DistributionSpec::TruncatedPowerLaw { exponent, cutoff });
        }
        if t.starts_with('{') {
            return DistributionSpec::from_json(t);
        }
        Err(Error::InvalidSpec(format!("unknown distribution `{t}`")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

// {"kind": "...", "params": {...}}; custom tables accept either
// "params": [[dx,dy,p],...] or "params": {"table": [[dx,dy,p],...]}.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    params: serde_json::Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerLawParams {
    exponent: f64,
    cutoff: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableParams {
    table: Vec<TableEntry>,
}

impl Serialize for DistributionSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (kind, params) = match self {
            DistributionSpec::LazySrw => ("lazy_srw", serde_json::Value::Null),
            DistributionSpec::King => ("king", serde_json::Value::Null),
            DistributionSpec::CustomTable(t) => {
                ("custom_table", serde_json::to_value(t).map_err(serde::ser::Error::custom)?)
            }
            DistributionSpec::TruncatedPowerLaw { exponent, cutoff } => {
                ("truncated_power_law", serde_json::json!({ "exponent": exponent, "cutoff": cutoff }))
            }
        };
        SpecRepr { kind: kind.to_string(), params }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DistributionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = SpecRepr::deserialize(d)?;
        let empty = |v: &serde_json::Value| v.is_null() || v.as_object().is_some_and(|o| o.is_empty());
        match repr.kind.as_str() {
            "lazy_srw" | "king" => {
                if !empty(&repr.params) {
                    return Err(D::Error::custom(format!("`{}` takes no parameters", repr.kind)));
                }
                Ok(if repr.kind == "king" { DistributionSpec::King } else { DistributionSpec::LazySrw })
            }
            "custom_table" => {
                let table = if repr.params.is_array() {
                    serde_json::from_value::<Vec<TableEntry>>(repr.params)
                } else {
                    serde_json::from_value::<TableParams>(repr.params).map(|p| p.table)
                }
                .map_err(D::Error::custom)?;
                Ok(DistributionSpec::CustomTable(table))
            }
            "truncated_power_law" => {
                let p: PowerLawParams = serde_json::from_value(repr.params).map_err(D::Error::custom)?;
                Ok(DistributionSpec::TruncatedPowerLaw { exponent: p.exponent, cutoff: p.cutoff })
            }
            other => Err(D::Error::custom(format!("unknown distribution kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionFlags {
    pub symmetric: bool,
    pub isotropic_cov: bool,
    pub strongly_aperiodic: bool,
    pub bounded_support: bool,
    /// p₁(x₁, x₂) = p₁(−x₁, x₂).
    pub reflection_symmetric: bool,
    /// p₁(x₁, x₂) = p₁(x₂, x₁).
    pub swap_symmetric: bool,
}

/// A validated one-step law. Immutable after construction.
#[derive(Clone, Debug, Serialize)]
pub struct StepDistribution {
    spec: DistributionSpec,
    support: Vec<(Point, f64)>,
    #[serde(skip)]
    exact: Option<Vec<Ratio<i64>>>,
    cov_scale: f64,
    gamma2: f64,
    pi_gamma: f64,
    moments: BTreeMap<u32, f64>,
    /// β with M = 4 + 2β for the supremum of finite moment orders; `None`
    /// when every moment is finite.
    beta: Option<f64>,
    flags: DistributionFlags,
    max_norm: f64,
    max_coord: i64,
}

impl fmt::Display for StepDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spec.name())
    }
}

pub fn build_distribution(spec: &DistributionSpec) -> Result<StepDistribution> {
    let (entries, exact): (Vec<(Point, f64)>, Option<Vec<Ratio<i64>>>) = match spec {
        DistributionSpec::LazySrw => {
            let h = Ratio::new(1, 2);
            let e = Ratio::new(1, 8);
            let pts = [(0, 0, h), (1, 0, e), (-1, 0, e), (0, 1, e), (0, -1, e)];
            split_exact(&pts)
        }
        DistributionSpec::King => {
            let e = Ratio::new(1, 8);
            let mut pts = Vec::new();
            for dx in -1..=1 {
                for dy in -1..=1 {
                    if (dx, dy) != (0, 0) {
                        pts.push((dx, dy, e));
                    }
                }
            }
            split_exact(&pts)
        }
        DistributionSpec::CustomTable(table) => custom_entries(table)?,
        DistributionSpec::TruncatedPowerLaw { exponent, cutoff } => (power_law_entries(*exponent, *cutoff)?, None),
    };

    let mut pairs: Vec<(Point, f64, Option<Ratio<i64>>)> = entries
        .into_iter()
        .enumerate()
        .map(|(i, (p, w))| (p, w, exact.as_ref().map(|e| e[i])))
        .filter(|(_, w, _)| *w > 0.0)
        .collect();
    pairs.sort_by_key(|(p, _, _)| *p);

    let total: f64 = pairs.iter().map(|(_, w, _)| w).sum();
    let exact_total = exact
        .as_ref()
        .map(|_| pairs.iter().fold(Ratio::new(0i64, 1), |acc, (_, _, r)| acc + r.expect("exact weights present")));
    match exact_total {
        Some(t) if t != Ratio::new(1, 1) => {
            return Err(Error::NotAProbability(format!("probabilities sum to {t}")));
        }
        None if (total - 1.0).abs() > STRUCTURE_TOL => {
            return Err(Error::NotAProbability(format!("probabilities sum to {total}")));
        }
        _ => {}
    }

    let lookup: BTreeMap<Point, (f64, Option<Ratio<i64>>)> = pairs.iter().map(|(p, w, r)| (*p, (*w, *r))).collect();
    let same = |a: Option<&(f64, Option<Ratio<i64>>)>, b: Option<&(f64, Option<Ratio<i64>>)>| match (a, b) {
        (Some((_, Some(x))), Some((_, Some(y)))) => x == y,
        (Some((x, _)), Some((y, _))) => x == y,
        (None, None) => true,
        _ => false,
    };
    for (p, _, _) in &pairs {
        if !same(lookup.get(p), lookup.get(&-*p)) {
            return Err(Error::NotSymmetric(*p));
        }
    }

    let (mut g11, mut g22, mut g12) = (0.0, 0.0, 0.0);
    for (p, w, _) in &pairs {
        g11 += w * (p.x * p.x) as f64;
        g22 += w * (p.y * p.y) as f64;
        g12 += w * (p.x * p.y) as f64;
    }
    if g11 <= 0.0 || g22 <= 0.0 {
        return Err(Error::AnisotropicCovariance { g11, g22, g12 });
    }
    if (g11 - g22).abs() > STRUCTURE_TOL * g11 || g12.abs() > STRUCTURE_TOL {
        return Err(Error::AnisotropicCovariance { g11, g22, g12 });
    }
    let cov_scale = 0.5 * (g11 + g22);

    let reflection_symmetric = pairs.iter().all(|(p, _, _)| same(lookup.get(p), lookup.get(&Point::new(-p.x, p.y))));
    let swap_symmetric = pairs.iter().all(|(p, _, _)| same(lookup.get(p), lookup.get(&Point::new(p.y, p.x))));

    let support: Vec<(Point, f64)> = pairs.iter().map(|(p, w, _)| (*p, *w)).collect();
    let exact: Option<Vec<Ratio<i64>>> = exact.map(|_| pairs.iter().map(|(_, _, r)| r.unwrap()).collect());
    let max_norm = support.iter().map(|(p, _)| p.norm()).fold(0.0, f64::max);
    let max_coord = support.iter().map(|(p, _)| p.x.abs().max(p.y.abs())).max().unwrap_or(0);

    let divergence = match spec {
        DistributionSpec::TruncatedPowerLaw { exponent, .. } => Some(exponent - 2.0),
        _ => None,
    };
    let mut moments = BTreeMap::new();
    for order in 0..=6u32 {
        if divergence.is_none_or(|d| (order as f64) < d) {
            moments.insert(order, raw_moment(&support, order as f64));
        }
    }

    let mut dist = StepDistribution {
        spec: spec.clone(),
        support,
        exact,
        cov_scale,
        gamma2: 2.0 * cov_scale,
        pi_gamma: 2.0 * PI * cov_scale,
        moments,
        beta: divergence.map(|d| (d - 4.0) / 2.0),
        flags: DistributionFlags {
            symmetric: true,
            isotropic_cov: true,
            strongly_aperiodic: false,
            bounded_support: !matches!(spec, DistributionSpec::TruncatedPowerLaw { .. }),
            reflection_symmetric,
            swap_symmetric,
        },
        max_norm,
        max_coord,
    };
    dist.flags.strongly_aperiodic = check_strong_aperiodicity(&dist);
    Ok(dist)
}

fn split_exact(pts: &[(i64, i64, Ratio<i64>)]) -> (Vec<(Point, f64)>, Option<Vec<Ratio<i64>>>) {
    let entries = pts.iter().map(|(x, y, r)| (Point::new(*x, *y), *r.numer() as f64 / *r.denom() as f64)).collect();
    (entries, Some(pts.iter().map(|(_, _, r)| *r).collect()))
}

type Entries = (Vec<(Point, f64)>, Option<Vec<Ratio<i64>>>);

fn custom_entries(table: &[TableEntry]) -> Result<Entries> {
    if table.is_empty() {
        return Err(Error::NotAProbability("empty table".into()));
    }
    if table.len() > MAX_SUPPORT {
        return Err(Error::InvalidSpec(format!("table has more than {MAX_SUPPORT} entries")));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(table.len());
    let all_exact = table.iter().all(|e| matches!(e.2, TableProb::Exact(_)));
    let mut exact = Vec::new();
    for TableEntry(dx, dy, p) in table {
        if dx.abs() > COORD_LIMIT || dy.abs() > COORD_LIMIT {
            return Err(Error::InvalidSpec(format!("offset ({dx},{dy}) out of range")));
        }
        if !seen.insert((*dx, *dy)) {
            return Err(Error::InvalidSpec(format!("duplicate offset ({dx},{dy})")));
        }
        let v = p.value();
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NotAProbability(format!("entry ({dx},{dy}) has probability {v}")));
        }
        entries.push((Point::new(*dx, *dy), v));
        if let TableProb::Exact(r) = p {
            exact.push(*r);
        }
    }
    Ok((entries, all_exact.then_some(exact)))
}

fn power_law_entries(exponent: f64, cutoff: u32) -> Result<Vec<(Point, f64)>> {
    if !exponent.is_finite() || exponent <= 0.0 || exponent > 64.0 {
        return Err(Error::InvalidSpec(format!("power-law exponent {exponent} must lie in (0, 64]")));
    }
    if cutoff < 1 || cutoff > MAX_CUTOFF {
        return Err(Error::InvalidSpec(format!("power-law cutoff {cutoff} must lie in [1, {MAX_CUTOFF}]")));
    }
    let c = cutoff as i64;
    let mut raw = Vec::new();
    for x in -c..=c {
        for y in -c..=c {
            let n2 = x * x + y * y;
            if n2 == 0 || n2 > c * c {
                continue;
            }
            // function of n2 only, so symmetric points get bit-identical weights
            raw.push((Point::new(x, y), (n2 as f64).powf(-exponent / 2.0)));
        }
    }
    let z: f64 = raw.iter().map(|(_, w)| w).sum();
    Ok(raw.into_iter().map(|(p, w)| (p, w / z)).collect())
}

fn raw_moment(support: &[(Point, f64)], order: f64) -> f64 {
    support.iter().map(|(p, w)| if order == 0.0 { *w } else { w * p.norm().powf(order) }).sum()
}

impl StepDistribution {
    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn support(&self) -> &[(Point, f64)] {
        &self.support
    }

    pub fn exact_weights(&self) -> Option<&[Ratio<i64>]> {
        self.exact.as_deref()
    }

    /// p₁(v), zero off the support.
    pub fn prob(&self, v: Point) -> f64 {
        self.support.binary_search_by_key(&v, |(p, _)| *p).map(|i| self.support[i].1).unwrap_or(0.0)
    }

    pub fn cov_scale(&self) -> f64 {
        self.cov_scale
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn pi_gamma(&self) -> f64 {
        self.pi_gamma
    }

    /// 2/π_Γ, the log-slope of the potential kernel and of G_{D(0,n)}(0,0).
    pub fn log_slope(&self) -> f64 {
        2.0 / self.pi_gamma
    }

    pub fn moments(&self) -> &BTreeMap<u32, f64> {
        &self.moments
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn flags(&self) -> DistributionFlags {
        self.flags
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm
    }

    /// Largest |coordinate| of a support point.
    pub fn max_coord(&self) -> i64 {
        self.max_coord
    }

    /// P(|X₁| > t).
    pub fn tail_probability(&self, t: f64) -> f64 {
        self.support.iter().filter(|(p, _)| p.norm() > t).map(|(_, w)| w).sum()
    }

    /// Per-coordinate variance Σ p v₁² (equal to `cov_scale`).
    pub fn coord_variance(&self) -> f64 {
        self.cov_scale
    }
}

/// E|X₁|^M.
pub fn moment(d: &StepDistribution, order: f64) -> Result<f64> {
    if !order.is_finite() || order < 0.0 {
        return Err(Error::InvalidSpec(format!("moment order {order} must be finite and >= 0")));
    }
    if let DistributionSpec::TruncatedPowerLaw { exponent, .. } = d.spec {
        if order >= exponent - 2.0 {
            return Err(Error::DivergentMoment { order });
        }
    }
    Ok(raw_moment(&d.support, order))
}

/// Decides strong aperiodicity by iterating exact-k-step reachable sets
/// inside a box of radius 4·max|support| until two consecutive steps cover
/// the whole box (at most 64 iterations).
pub fn check_strong_aperiodicity(d: &StepDistribution) -> bool {
    let reach = d.max_norm.ceil().max(1.0) as i64;
    let inner = 4 * reach;
    let outer = 2 * inner;
    let mut grid = BitGrid::new(outer);
    grid.set(0, 0);
    let steps: Vec<Point> = d.support.iter().map(|(p, _)| *p).collect();
    let mut covered_before = false;
    for _ in 0..64 {
        let mut next = BitGrid::new(outer);
        for v in &steps {
            next.or_shifted(&grid, v.x, v.y);
        }
        grid = next;
        let covered = grid.covers_box(inner);
        if covered && covered_before {
            return true;
        }
        covered_before = covered;
    }
    false
}

/// Square bitset over `[−r, r]²`.
struct BitGrid {
    r: i64,
    side: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitGrid {
    fn new(r: i64) -> Self {
        let side = (2 * r + 1) as usize;
        let words = side.div_ceil(64);
        BitGrid { r, side, words, bits: vec![0; side * words] }
    }

    fn set(&mut self, x: i64, y: i64) {
        let (row, col) = ((y + self.r) as usize, (x + self.r) as usize);
        self.bits[row * self.words + col / 64] |= 1 << (col % 64);
    }

    fn get(&self, x: i64, y: i64) -> bool {
        let (row, col) = ((y + self.r) as usize, (x + self.r) as usize);
        self.bits[row * self.words + col / 64] >> (col % 64) & 1 == 1
    }

    /// self |= src shifted by (dx, dy), clipped to the box.
    fn or_shifted(&mut self, src: &BitGrid, dx: i64, dy: i64) {
        let side = self.side as i64;
        for row in 0..side {
            let from = row - dy;
            if from < 0 || from >= side {
                continue;
            }
            let s = &src.bits[from as usize * self.words..(from as usize + 1) * self.words];
            let d = &mut self.bits[row as usize * self.words..(row as usize + 1) * self.words];
            shift_or(d, s, dx);
        }
        let tail = self.side % 64;
        if tail != 0 {
            let mask = (1u64 << tail) - 1;
            for row in 0..self.side {
                self.bits[row * self.words + self.words - 1] &= mask;
            }
        }
    }

    fn covers_box(&self, inner: i64) -> bool {
        (-inner..=inner).all(|y| (-inner..=inner).all(|x| self.get(x, y)))
    }
}

/// dst |= src << shift (bit index grows with x), words little-endian.
fn shift_or(dst: &mut [u64], src: &[u64], shift: i64) {
    let n = dst.len() as i64;
    let (wshift, bshift) = (shift.div_euclid(64), shift.rem_euclid(64) as u32);
    for i in 0..n {
        let j = i - wshift;
        let lo = if (0..n).contains(&j) { src[j as usize] } else { 0 };
        let hi = if bshift > 0 && (0..n).contains(&(j - 1)) { src[(j - 1) as usize] } else { 0 };
        let v = if bshift == 0 { lo } else { (lo << bshift) | (hi >> (64 - bshift)) };
        dst[i as usize] |= v;
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConditionAReport {
    pub n: f64,
    pub s: f64,
    pub c: f64,
    pub beta: f64,
    /// `true` when bounded support made the check unnecessary.
    pub short_circuit: bool,
    /// inf over the ring of the one-step entry probability.
    pub inf_entry: Option<f64>,
    pub argmin: Option<Point>,
    pub threshold: f64,
    pub pass: bool,
}

/// Checks `inf_{n ≤ |y| < n+s} P^y(X₁ ∈ D(0,n)) ≥ c·exp(−β s^{1/4})`.
pub fn check_condition_a(d: &StepDistribution, n: f64, s: f64, c: f64, beta: f64) -> ConditionAReport {
    let threshold = c * (-beta * s.powf(0.25)).exp();
    if d.flags.bounded_support {
        return ConditionAReport {
            n,
            s,
            c,
            beta,
            short_circuit: true,
            inf_entry: None,
            argmin: None,
            threshold,
            pass: true,
        };
    }
    let outer = (n + s).ceil() as i64;
    let mut best = f64::INFINITY;
    let mut argmin = None;
    for x in -outer..=outer {
        for y in -outer..=outer {
            let q = Point::new(x, y);
            let r = q.norm();
            if r < n || r >= n + s {
                continue;
            }
            let mass: f64 = d.support.iter().filter(|(v, _)| ((q + *v).norm2() as f64) < n * n).map(|(_, w)| w).sum();
            if mass < best {
                best = mass;
                argmin = Some(q);
            }
        }
    }
    let inf = if argmin.is_some() { best } else { 0.0 };
    ConditionAReport {
        n,
        s,
        c,
        beta,
        short_circuit: false,
        inf_entry: Some(inf),
        argmin,
        threshold,
        pass: argmin.is_some() && inf >= threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lazy_constants() {
        let d = build_distribution(&DistributionSpec::LazySrw).unwrap();
        assert_relative_eq!(d.cov_scale(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(d.gamma2(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(d.pi_gamma(), PI / 2.0, epsilon = 1e-15);
        assert!(d.flags().strongly_aperiodic);
        assert!(d.flags().bounded_support);
    }

    #[test]
    fn king_constants() {
        let d = build_distribution(&DistributionSpec::King).unwrap();
        assert_relative_eq!(d.cov_scale(), 0.75, epsilon = 1e-15);
        assert_relative_eq!(d.gamma2(), 1.5, epsilon = 1e-15);
        assert_relative_eq!(d.pi_gamma(), 1.5 * PI, epsilon = 1e-15);
        assert!(d.flags().strongly_aperiodic);
    }

    #[test]
    fn asymmetric_table_rejected() {
        let spec = DistributionSpec::from_json(
            r#"{"kind":"custom_table","params":[[1,0,"1/2"],[-1,0,"1/4"],[0,1,"1/8"],[0,-1,"1/8"]]}"#,
        )
        .unwrap();
        assert!(matches!(build_distribution(&spec), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn anisotropic_table_rejected() {
        let spec = DistributionSpec::from_json(
            r#"{"kind":"custom_table","params":[[1,0,"3/8"],[-1,0,"3/8"],[0,1,"1/8"],[0,-1,"1/8"]]}"#,
        )
        .unwrap();
        assert!(matches!(build_distribution(&spec), Err(Error::AnisotropicCovariance { .. })));
    }

    #[test]
    fn unnormalized_table_rejected() {
        let spec = DistributionSpec::from_json(r#"{"kind":"custom_table","params":[[1,0,0.3],[-1,0,0.3]]}"#).unwrap();
        assert!(matches!(build_distribution(&spec), Err(Error::NotAProbability(_))));
        let dup =
            DistributionSpec::from_json(r#"{"kind":"custom_table","params":{"table":[[1,0,0.5],[1,0,0.5]]}}"#).unwrap();
        assert!(matches!(build_distribution(&dup), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn moment_examples() {
        let lazy = build_distribution(&DistributionSpec::LazySrw).unwrap();
        let king = build_distribution(&DistributionSpec::King).unwrap();
        assert_relative_eq!(moment(&lazy, 2.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(moment(&king, 2.0).unwrap(), 1.5, epsilon = 1e-15);
        assert_relative_eq!(moment(&king, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        let tpl = build_distribution(&DistributionSpec::TruncatedPowerLaw { exponent: 6.0, cutoff: 20 }).unwrap();
        assert_relative_eq!(moment(&tpl, 0.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(matches!(moment(&tpl, 4.0), Err(Error::DivergentMoment { .. })));
        assert!(moment(&tpl, 3.5).is_ok());
    }

    #[test]
    fn aperiodicity_examples() {
        let lazy = build_distribution(&DistributionSpec::LazySrw).unwrap();
        let srw = build_distribution(&DistributionSpec::simple_srw()).unwrap();
        let king = build_distribution(&DistributionSpec::King).unwrap();
        assert!(check_strong_aperiodicity(&lazy));
        assert!(!check_strong_aperiodicity(&srw));
        assert!(check_strong_aperiodicity(&king));
    }

    #[test]
    fn condition_a_examples() {
        let lazy = build_distribution(&DistributionSpec::LazySrw).unwrap();
        let r = check_condition_a(&lazy, 20.0, 5.0, 0.01, 1.0);
        assert!(r.pass && r.short_circuit);

        let long = build_distribution(&DistributionSpec::TruncatedPowerLaw { exponent: 6.0, cutoff: 50 }).unwrap();
        let r = check_condition_a(&long, 20.0, 5.0, 0.01, 1.0);
        assert!(!r.short_circuit);
        assert!(r.inf_entry.unwrap() > 0.0);

        let short = build_distribution(&DistributionSpec::TruncatedPowerLaw { exponent: 6.0, cutoff: 3 }).unwrap();
        let r = check_condition_a(&short, 20.0, 10.0, 0.01, 1.0);
        assert!(!r.pass);
        assert_eq!(r.inf_entry, Some(0.0));
    }

    #[test]
    fn spec_json_forms() {
        assert_eq!(DistributionSpec::from_json(r#"{"kind":"lazy_srw"}"#).unwrap(), DistributionSpec::LazySrw);
        assert_eq!(DistributionSpec::from_json(r#"{"kind":"king","params":{}}"#).unwrap(), DistributionSpec::King);
        assert!(DistributionSpec::from_json(r#"{"kind":"king","params":{"x":1}}"#).is_err());
        assert!(DistributionSpec::from_json(r#"{"kind":"lazy_srw","extra":1}"#).is_err());
        let tpl = DistributionSpec::parse_short("truncated_power_law(6, 50)").unwrap();
        let text = serde_json::to_string(&tpl).unwrap();
        assert_eq!(DistributionSpec::from_json(&text).unwrap(), tpl);
    }
}
