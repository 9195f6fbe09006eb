//! Exact Green's functions, hitting distributions, escape times and ruin
//! probabilities from linear solves on the killed transition operator.

pub mod exterior;
pub mod solver;
pub mod sparse;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Geometry, Point, Region};
use crate::stepdist::{DistributionSpec, StepDistribution};
use solver::{Solver, SolverKind, DEFAULT_RESIDUAL_TOL};
use sparse::{Csr, PointIndex};

pub const DEFAULT_BUDGET: usize = 500_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Maximum number of unknowns.
    pub budget: usize,
    pub residual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { budget: DEFAULT_BUDGET, residual_tol: DEFAULT_RESIDUAL_TOL }
    }
}

impl SolverOptions {
    pub fn with_budget(budget: usize) -> Self {
        SolverOptions { budget, ..Default::default() }
    }
}

/// Finite set of lattice points (primary-copy representatives on the torus)
/// with a constant-time index.
#[derive(Clone, Debug)]
pub struct Domain {
    points: Vec<Point>,
    index: PointIndex,
    geometry: Geometry,
}

impl Domain {
    pub fn from_points(points: Vec<Point>, geometry: Geometry, budget: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDomain);
        }
        if points.len() > budget {
            return Err(Error::DomainTooLarge { size: points.len(), budget });
        }
        if let Geometry::Toral(k) = geometry {
            if points.len() as i64 >= k * k {
                return Err(Error::InvalidRegion("domain covers the whole torus; nothing is killed".into()));
            }
        }
        let index = PointIndex::new(&points);
        Ok(Domain { points, index, geometry })
    }

    pub fn from_region(region: &Region, budget: usize) -> Result<Self> {
        let pts = region.enumerate_with_budget(scan_budget(budget))?;
        Domain::from_points(pts, region.geometry(), budget)
    }

    /// Points of `ambient` (the whole torus when `None`) not in any of `remove`.
    pub fn difference(ambient: Option<&Region>, geometry: Geometry, remove: &[&Region], budget: usize) -> Result<Self> {
        let base = match (ambient, geometry) {
            (Some(a), _) => a.enumerate_with_budget(scan_budget(budget))?,
            (None, Geometry::Toral(k)) => {
                let lo = -(k / 2);
                if (k * k) as u128 > scan_budget(budget) as u128 {
                    return Err(Error::DomainTooLarge { size: (k * k) as usize, budget });
                }
                (lo..lo + k).flat_map(|x| (lo..lo + k).map(move |y| Point::new(x, y))).collect()
            }
            (None, Geometry::Planar) => return Err(Error::UnboundedRegion),
        };
        let pts = base.into_iter().filter(|p| !remove.iter().any(|r| r.contains(*p))).collect();
        Domain::from_points(pts, geometry, budget)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn index_of(&self, p: Point) -> Option<usize> {
        self.index.get(self.geometry.canon(p))
    }

    pub fn contains(&self, p: Point) -> bool {
        self.index_of(p).is_some()
    }
}

fn scan_budget(budget: usize) -> usize {
    budget.saturating_mul(4).max(4096)
}

/// Assembles I − P_B, accumulating every step that wraps onto the same
/// toral representative.
pub fn killed_operator(domain: &Domain, dist: &StepDistribution) -> Csr {
    let n = domain.len();
    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let z = domain.points[i];
            let mut e = vec![(i as u32, 1.0)];
            for &(v, p) in dist.support() {
                if let Some(j) = domain.index_of(z + v) {
                    e.push((j as u32, -p));
                }
            }
            e
        })
        .collect();
    let mut b = Csr::builder(n);
    for mut e in rows {
        b.push_unsorted(&mut e);
    }
    b.finish()
}

/// Exact killed Green's function G_B on a finite domain.
pub struct GreenOperator {
    domain: Domain,
    dist: StepDistribution,
    matrix: Csr,
    solver: Solver,
    residual_tol: f64,
    columns: Mutex<HashMap<usize, Arc<Vec<f64>>>>,
    worst_residual: Mutex<f64>,
}

impl GreenOperator {
    pub fn new(dist: &StepDistribution, domain: Domain, opts: SolverOptions) -> Result<Self> {
        let matrix = killed_operator(&domain, dist);
        let solver = Solver::new(&matrix, &domain.points, domain.geometry, opts.residual_tol)?;
        Ok(GreenOperator {
            domain,
            dist: dist.clone(),
            matrix,
            solver,
            residual_tol: opts.residual_tol,
            columns: Mutex::new(HashMap::new()),
            worst_residual: Mutex::new(0.0),
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dist(&self) -> &StepDistribution {
        &self.dist
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn solver_kind(&self) -> SolverKind {
        self.solver.kind()
    }

    pub fn residual_tol(&self) -> f64 {
        self.residual_tol
    }

    /// Largest relative residual seen so far.
    pub fn worst_residual(&self) -> f64 {
        *self.worst_residual.lock().unwrap()
    }

    /// Solves (I − P_B) u = b.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (x, stats) = self.solver.solve(&self.matrix, b)?;
        let mut w = self.worst_residual.lock().unwrap();
        *w = w.max(stats.relative_residual);
        Ok(x)
    }

    fn column(&self, i: usize) -> Result<Arc<Vec<f64>>> {
        if let Some(c) = self.columns.lock().unwrap().get(&i) {
            return Ok(c.clone());
        }
        let mut e = vec![0.0; self.domain.len()];
        e[i] = 1.0;
        let col = Arc::new(self.solve(&e)?);
        self.columns.lock().unwrap().insert(i, col.clone());
        Ok(col)
    }

    /// G_B(x, ·) indexed like `domain().points()`.
    pub fn row(&self, x: Point) -> Result<Arc<Vec<f64>>> {
        let i = self.domain.index_of(x).ok_or(Error::SourceOutsideDomain(x))?;
        // symmetric walk: G(x, ·) = G(·, x)
        self.column(i)
    }

    pub fn value(&self, x: Point, y: Point) -> Result<f64> {
        match (self.domain.index_of(x), self.domain.index_of(y)) {
            (Some(_), Some(j)) => Ok(self.row(x)?[j]),
            _ => Ok(0.0),
        }
    }

    /// E^x T_{B^c} as the Green row sum.
    pub fn expected_escape_time(&self, x: Point) -> Result<f64> {
        Ok(self.row(x)?.iter().sum())
    }

    /// E^z T_{B^c} for every z by first-step analysis, (I − P_B) t = 1.
    pub fn expected_escape_times_direct(&self) -> Result<Vec<f64>> {
        self.solve(&vec![1.0; self.domain.len()])
    }

    /// Residual of the killed-generator identity at (x, y).
    pub fn generator_defect(&self, x: Point, y: Point) -> Result<f64> {
        let g = self.row(y)?;
        let i = self.domain.index_of(x).ok_or(Error::SourceOutsideDomain(x))?;
        let lhs: f64 =
            self.dist.support().iter().filter_map(|&(v, p)| self.domain.index_of(x + v).map(|j| p * g[j])).sum();
        let delta = if self.domain.index_of(y) == Some(i) { 1.0 } else { 0.0 };
        Ok((lhs - (g[i] - delta)).abs())
    }

    /// Law of the exit position S_{T_{B^c}} from x restricted to landing
    /// points accepted by `accept`, by last-exit summation over G(x, ·).
    pub fn exit_distribution(&self, x: Point, accept: impl Fn(Point) -> bool) -> Result<BTreeMap<Point, f64>> {
        let row = self.row(x)?;
        let geom = self.domain.geometry;
        let mut acc: HashMap<Point, f64> = HashMap::new();
        for (z, &g) in self.domain.points.iter().zip(row.iter()) {
            if g == 0.0 {
                continue;
            }
            for &(v, p) in self.dist.support() {
                let q = geom.canon(*z + v);
                if !self.domain.contains(q) && accept(q) {
                    *acc.entry(q).or_insert(0.0) += g * p;
                }
            }
        }
        Ok(acc.into_iter().collect())
    }

    /// One-step exit mass into accepted points, per domain point.
    pub fn exit_mass(&self, accept: impl Fn(Point) -> bool + Sync) -> Vec<f64> {
        let geom = self.domain.geometry;
        self.domain
            .points
            .par_iter()
            .with_min_len(1024)
            .map(|z| {
                self.dist
                    .support()
                    .iter()
                    .filter(|(v, _)| {
                        let q = geom.canon(*z + *v);
                        !self.domain.contains(q) && accept(q)
                    })
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect()
    }

    /// P^z(S_{T_{B^c}} is accepted) for every z in the domain.
    pub fn absorption(&self, accept: impl Fn(Point) -> bool + Sync) -> Result<Vec<f64>> {
        self.solve(&self.exit_mass(accept))
    }
}

pub fn green(d: &StepDistribution, b: &Region) -> Result<GreenOperator> {
    green_with(d, b, SolverOptions::default())
}

pub fn green_with(d: &StepDistribution, b: &Region, opts: SolverOptions) -> Result<GreenOperator> {
    GreenOperator::new(d, Domain::from_region(b, opts.budget)?, opts)
}

pub fn expected_escape_time(g: &GreenOperator, x: Point) -> Result<f64> {
    g.expected_escape_time(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HittingMethod {
    LastExit,
    Direct,
    Constrained,
}

/// y ↦ H_A(x, y), sorted by y.
#[derive(Clone, Debug, Serialize)]
pub struct HittingKernel {
    pub source: Point,
    pub masses: Vec<(Point, f64)>,
    pub total: f64,
    pub method: HittingMethod,
    /// Radius of the truncating ambient disc for planar kernels.
    pub window: Option<f64>,
    pub geometry: Geometry,
}

impl HittingKernel {
    fn from_map(
        source: Point,
        map: BTreeMap<Point, f64>,
        method: HittingMethod,
        window: Option<f64>,
        geometry: Geometry,
    ) -> Self {
        let masses: Vec<(Point, f64)> = map.into_iter().collect();
        let total = masses.iter().map(|m| m.1).sum();
        HittingKernel { source, masses, total, method, window, geometry }
    }

    pub fn mass(&self, y: Point) -> f64 {
        self.masses.binary_search_by_key(&y, |m| m.0).map(|i| self.masses[i].1).unwrap_or(0.0)
    }

    pub fn sup_diff(&self, other: &HittingKernel) -> f64 {
        let mut ys: Vec<Point> = self.masses.iter().chain(&other.masses).map(|m| m.0).collect();
        ys.sort();
        ys.dedup();
        ys.into_iter().map(|y| (self.mass(y) - other.mass(y)).abs()).fold(0.0, f64::max)
    }
}

fn window_of(ambient: Option<&Region>) -> Option<f64> {
    use crate::lattice::Shape;
    match ambient.map(|a| a.shape()) {
        Some(Shape::Disc { n, .. }) => Some(*n),
        Some(Shape::Annulus { n, s, .. }) => Some(n + s),
        _ => None,
    }
}

/// Hitting problems for one target set on one killed domain, answering
/// many sources with a shared factorisation.
pub struct HittingProblem {
    target: Region,
    green: GreenOperator,
    window: Option<f64>,
    direct: Mutex<Option<Arc<DirectTable>>>,
}

struct DirectTable {
    targets: Vec<Point>,
    /// h[y][z] = P^z(S_{T_A} = y).
    h: Vec<Vec<f64>>,
}

impl HittingProblem {
    /// `ambient = None` is the whole torus (toral targets only).
    pub fn new(d: &StepDistribution, target: &Region, ambient: Option<&Region>, opts: SolverOptions) -> Result<Self> {
        let domain = Domain::difference(ambient, target.geometry(), &[target], opts.budget)?;
        Ok(HittingProblem {
            target: target.clone(),
            green: GreenOperator::new(d, domain, opts)?,
            window: if target.geometry().is_toral() { None } else { window_of(ambient) },
            direct: Mutex::new(None),
        })
    }

    pub fn green(&self) -> &GreenOperator {
        &self.green
    }

    fn check_source(&self, x: Point) -> Result<Point> {
        let x = self.target.geometry().canon(x);
        if self.target.contains(x) {
            return Err(Error::SourceInsideTarget(x));
        }
        if !self.green.domain.contains(x) {
            return Err(Error::SourceOutsideDomain(x));
        }
        Ok(x)
    }

    pub fn lastexit(&self, x: Point) -> Result<HittingKernel> {
        let x = self.check_source(x)?;
        let map = self.green.exit_distribution(x, |q| self.target.contains(q))?;
        Ok(HittingKernel::from_map(x, map, HittingMethod::LastExit, self.window, self.target.geometry()))
    }

    fn direct_table(&self) -> Result<Arc<DirectTable>> {
        if let Some(t) = self.direct.lock().unwrap().as_ref() {
            return Ok(t.clone());
        }
        let g = &self.green;
        let geom = g.domain.geometry;
        let mut rhs: BTreeMap<Point, Vec<f64>> = BTreeMap::new();
        for (i, z) in g.domain.points.iter().enumerate() {
            for &(v, p) in g.dist.support() {
                let q = geom.canon(*z + v);
                if !g.domain.contains(q) && self.target.contains(q) {
                    rhs.entry(q).or_insert_with(|| vec![0.0; g.domain.len()])[i] += p;
                }
            }
        }
        let targets: Vec<Point> = rhs.keys().copied().collect();
        let h =
            rhs.into_values().collect::<Vec<_>>().into_par_iter().map(|b| g.solve(&b)).collect::<Result<Vec<_>>>()?;
        let table = Arc::new(DirectTable { targets, h });
        *self.direct.lock().unwrap() = Some(table.clone());
        Ok(table)
    }

    /// First-step-analysis oracle: one harmonic solve per reachable target.
    pub fn direct(&self, x: Point) -> Result<HittingKernel> {
        let x = self.check_source(x)?;
        let i = self.green.domain.index_of(x).expect("checked");
        let t = self.direct_table()?;
        let map = t.targets.iter().zip(&t.h).map(|(y, h)| (*y, h[i])).filter(|(_, v)| *v != 0.0).collect();
        Ok(HittingKernel::from_map(x, map, HittingMethod::Direct, self.window, self.target.geometry()))
    }
}

pub fn hitting_distribution_lastexit(
    d: &StepDistribution,
    a: &Region,
    ambient: Option<&Region>,
    x: Point,
) -> Result<HittingKernel> {
    HittingProblem::new(d, a, ambient, SolverOptions::default())?.lastexit(x)
}

pub fn hitting_distribution_direct(
    d: &StepDistribution,
    a: &Region,
    ambient: Option<&Region>,
    x: Point,
) -> Result<HittingKernel> {
    HittingProblem::new(d, a, ambient, SolverOptions::default())?.direct(x)
}

/// P^z(T_{D(0,r)} < T_{D(0,R)^c}) for every z of the annulus.
pub struct RuinProfile {
    pub domain: Domain,
    pub values: Vec<f64>,
}

impl RuinProfile {
    pub fn new(d: &StepDistribution, r: f64, outer: f64, geometry: Geometry, opts: SolverOptions) -> Result<Self> {
        if !(r > 0.0 && outer > r) {
            return Err(Error::InvalidRegion(format!("ruin annulus needs 0 < r < R (got {r}, {outer})")));
        }
        let ring = Region::annulus(Point::ORIGIN, r, outer - r, geometry)?;
        let inner = Region::disc(Point::ORIGIN, r, geometry)?;
        let g = GreenOperator::new(d, Domain::from_region(&ring, opts.budget)?, opts)?;
        let values = g.absorption(|q| inner.contains(q))?;
        Ok(RuinProfile { domain: g.domain, values })
    }

    pub fn at(&self, x: Point) -> Result<f64> {
        self.domain.index_of(x).map(|i| self.values[i]).ok_or(Error::SourceOutsideAnnulus(x))
    }
}

pub fn ruin_probability(d: &StepDistribution, r: f64, outer: f64, x: Point, geometry: Geometry) -> Result<f64> {
    ruin_probability_with(d, r, outer, x, geometry, SolverOptions::default())
}

pub fn ruin_probability_with(
    d: &StepDistribution,
    r: f64,
    outer: f64,
    x: Point,
    geometry: Geometry,
    opts: SolverOptions,
) -> Result<f64> {
    let xn = geometry.distance(x, Point::ORIGIN);
    if !(r <= xn && xn < outer) {
        return Err(Error::SourceOutsideAnnulus(x));
    }
    RuinProfile::new(d, r, outer, geometry, opts)?.at(x)
}

/// Killed domain ambient \ (A ∪ F) for "hit A before F" questions.
pub struct ConstrainedProblem {
    target: Region,
    forbidden: Region,
    green: GreenOperator,
    window: Option<f64>,
}

impl ConstrainedProblem {
    pub fn new(
        d: &StepDistribution,
        target: &Region,
        forbidden: &Region,
        ambient: Option<&Region>,
        opts: SolverOptions,
    ) -> Result<Self> {
        let geometry = target.geometry();
        if forbidden.geometry() != geometry {
            return Err(Error::InvalidRegion("target and forbidden sets mix geometries".into()));
        }
        if let Ok(pts) = forbidden.enumerate_with_budget(scan_budget(opts.budget)) {
            if pts.iter().any(|p| target.contains(*p)) {
                return Err(Error::OverlappingSets);
            }
        }
        let domain = Domain::difference(ambient, geometry, &[target, forbidden], opts.budget)?;
        Ok(ConstrainedProblem {
            target: target.clone(),
            forbidden: forbidden.clone(),
            green: GreenOperator::new(d, domain, opts)?,
            window: window_of(ambient),
        })
    }

    pub fn green(&self) -> &GreenOperator {
        &self.green
    }

    fn accept(&self, q: Point) -> bool {
        self.target.contains(q) && !self.forbidden.contains(q)
    }

    fn check_source(&self, x: Point) -> Result<Point> {
        let x = self.target.geometry().canon(x);
        if self.target.contains(x) || self.forbidden.contains(x) {
            return Err(Error::SourceInsideTarget(x));
        }
        if !self.green.domain.contains(x) {
            return Err(Error::SourceOutsideDomain(x));
        }
        Ok(x)
    }

    /// (y ↦ P^x(S_T = y, T_A < T_F), P^x(T_A < T_F)).
    pub fn kernel(&self, x: Point) -> Result<(HittingKernel, f64)> {
        let x = self.check_source(x)?;
        let map = self.green.exit_distribution(x, |q| self.accept(q))?;
        let k = HittingKernel::from_map(x, map, HittingMethod::Constrained, self.window, self.target.geometry());
        let p = k.total;
        Ok((k, p))
    }

    /// P^z(T_A < T_F) for every z of the killed domain.
    pub fn success_profile(&self) -> Result<Vec<f64>> {
        self.green.absorption(|q| self.accept(q))
    }
}

pub fn constrained_hitting(
    d: &StepDistribution,
    target: &Region,
    forbidden: &Region,
    ambient: Option<&Region>,
    x: Point,
) -> Result<(HittingKernel, f64)> {
    ConstrainedProblem::new(d, target, forbidden, ambient, SolverOptions::default())?.kernel(x)
}

/// Green's function of the annulus D(0,N) \ D(0,r+s).
pub fn exterior_green(d: &StepDistribution, r: f64, s: f64, x: Point, y: Point, outer: f64) -> Result<f64> {
    exterior_green_with(d, r, s, x, y, outer, SolverOptions::default())
}

pub fn exterior_green_with(
    d: &StepDistribution,
    r: f64,
    s: f64,
    x: Point,
    y: Point,
    outer: f64,
    opts: SolverOptions,
) -> Result<f64> {
    let inner = r + s;
    for p in [x, y] {
        let n = p.norm();
        if !(inner <= n && n < outer) {
            return Err(Error::PointOutsideAnnulus(p));
        }
    }
    let ring = Region::annulus(Point::ORIGIN, inner, outer - inner, Geometry::Planar)?;
    green_with(d, &ring, opts)?.value(x, y)
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelDumpMeta {
    pub domain: serde_json::Value,
    pub dist: DistributionSpec,
    pub residual_tol: f64,
    pub window: Option<f64>,
}

pub const KERNEL_CSV_HEADER: &str = "x1,x2,y1,y2,value";

/// Writes kernel rows as CSV (`x1,x2,y1,y2,value`).
pub fn write_kernel_csv<W: Write>(mut w: W, rows: &[(Point, Point, f64)]) -> Result<()> {
    writeln!(w, "{KERNEL_CSV_HEADER}")?;
    for (x, y, v) in rows {
        writeln!(w, "{},{},{},{},{:e}", x.x, x.y, y.x, y.y, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepdist::build_distribution;

    fn lazy() -> StepDistribution {
        build_distribution(&DistributionSpec::LazySrw).unwrap()
    }

    #[test]
    fn single_point_green() {
        let d = lazy();
        let b = Region::disc(Point::ORIGIN, 0.5, Geometry::Planar).unwrap();
        let g = green(&d, &b).unwrap();
        assert!((g.value(Point::ORIGIN, Point::ORIGIN).unwrap() - 2.0).abs() < 1e-12);
        assert!((g.expected_escape_time(Point::ORIGIN).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(g.value(Point::new(3, 0), Point::ORIGIN).unwrap(), 0.0);
    }

    #[test]
    fn green_symmetry_and_generator() {
        let d = lazy();
        let b = Region::disc(Point::ORIGIN, 12.0, Geometry::Planar).unwrap();
        let g = green(&d, &b).unwrap();
        let pts = g.domain().points().to_vec();
        for k in 0..20 {
            let (x, y) = (pts[(k * 37) % pts.len()], pts[(k * 101 + 5) % pts.len()]);
            assert!((g.value(x, y).unwrap() - g.value(y, x).unwrap()).abs() < 1e-9);
            assert!(g.generator_defect(x, y).unwrap() < 1e-9);
        }
    }

    #[test]
    fn escape_time_within_bounds() {
        let d = lazy();
        let b = Region::disc(Point::ORIGIN, 10.0, Geometry::Planar).unwrap();
        let g = green(&d, &b).unwrap();
        let t = g.expected_escape_time(Point::ORIGIN).unwrap();
        assert!((200.0..=221.0).contains(&t), "{t}");
        let direct = g.expected_escape_times_direct().unwrap();
        let i = g.domain().index_of(Point::ORIGIN).unwrap();
        assert!((direct[i] - t).abs() < 1e-8);
    }

    #[test]
    fn toral_hitting_sums_to_one_and_matches_direct() {
        let d = lazy();
        let a = Region::disc(Point::ORIGIN, 5.0, Geometry::Toral(32)).unwrap();
        let prob = HittingProblem::new(&d, &a, None, SolverOptions::default()).unwrap();
        for x in [Point::new(10, 3), Point::new(-16, -16), Point::new(0, 6)] {
            let h = prob.lastexit(x).unwrap();
            assert!((h.total - 1.0).abs() < 1e-9);
            assert!(h.sup_diff(&prob.direct(x).unwrap()) < 1e-10);
        }
        assert!(matches!(prob.lastexit(Point::new(1, 1)), Err(Error::SourceInsideTarget(_))));
    }

    #[test]
    fn ruin_monotone() {
        let d = lazy();
        let prof = RuinProfile::new(&d, 5.0, 40.0, Geometry::Planar, SolverOptions::default()).unwrap();
        let v: Vec<f64> = [8, 12, 20].iter().map(|&r| prof.at(Point::new(r, 0)).unwrap()).collect();
        assert!(v[0] > v[1] && v[1] > v[2]);
        assert!(matches!(
            ruin_probability(&d, 5.0, 40.0, Point::new(2, 0), Geometry::Planar),
            Err(Error::SourceOutsideAnnulus(_))
        ));
    }

    #[test]
    fn constrained_without_forbidden_is_plain_hitting() {
        let d = lazy();
        let a = Region::disc(Point::ORIGIN, 4.0, Geometry::Toral(24)).unwrap();
        let f = Region::disc(Point::new(9, 9), 0.5, Geometry::Toral(24)).unwrap();
        let cp = ConstrainedProblem::new(&d, &a, &f, None, SolverOptions::default()).unwrap();
        let (k, p) = cp.kernel(Point::new(8, 0)).unwrap();
        let total_f: f64 = {
            let prof = cp.green().absorption(|q| f.contains(q)).unwrap();
            prof[cp.green().domain().index_of(Point::new(8, 0)).unwrap()]
        };
        assert!((p + total_f - 1.0).abs() < 1e-9);
        assert!((k.total - p).abs() < 1e-15);
    }
}
