//! Potential kernel a(x) = lim Σ_j [p_j(0) − p_j(x)].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::stepdist::{DistributionSpec, StepDistribution};

/// Per-step aliasing mass allowed on the periodic convolution grid.
pub const LEAKAGE_TOL: f64 = 1e-12;
pub const MAX_GRID: usize = 4096;
pub const DEFAULT_J_MAX: u64 = 1 << 16;

/// Bernstein radius t with P(|S_J|_∞ ≥ t) ≤ LEAKAGE_TOL.
fn bernstein_radius(d: &StepDistribution, j_max: u64) -> f64 {
    let l = (4.0 / LEAKAGE_TOL).ln();
    let var = j_max as f64 * d.coord_variance();
    let b = 2.0 * l * d.max_coord() as f64 / 3.0;
    0.5 * (b + (b * b + 8.0 * l * var).sqrt())
}

fn leakage_bound(d: &StepDistribution, j_max: u64, t: f64) -> f64 {
    let var = j_max as f64 * d.coord_variance();
    4.0 * (-t * t / (2.0 * (var + d.max_coord() as f64 * t / 3.0))).exp()
}

/// Side of the periodic grid needed for `j_max` steps and |x|_∞ ≤ radius.
pub fn grid_side(d: &StepDistribution, j_max: u64, radius: i64) -> Result<usize> {
    let need = bernstein_radius(d, j_max).ceil() as usize + radius as usize + 1;
    let side = need.next_power_of_two().max(16);
    if side > MAX_GRID {
        let t = (MAX_GRID as i64 - radius - 1).max(0) as f64;
        return Err(Error::GridLeakage { side, j_max, bound: leakage_bound(d, j_max, t) });
    }
    Ok(side)
}

/// Accelerated partial sums on a periodic grid: A(J) = 2a_J − a_{J/2} and
/// A(J/2), whose difference is the reported Cauchy gap.
pub struct FftKernel {
    side: usize,
    j_max: u64,
    acc: Vec<f64>,
    acc_half: Vec<f64>,
}

impl FftKernel {
    pub fn new(d: &StepDistribution, j_max: u64, radius: i64) -> Result<Self> {
        if !d.flags().strongly_aperiodic {
            return Err(Error::NotAperiodic);
        }
        if j_max < 4 {
            return Err(Error::Config(format!("j_max must be at least 4 (got {j_max})")));
        }
        let side = grid_side(d, j_max, radius)?;
        let psi = symbol_gap(d, side);
        // S_J = (1 − φ^{J+1}) / ψ, DC term dropped (cancels in g(0) − g(x))
        let partial = |j: u64, k: usize| -> f64 {
            let p = psi[k];
            if k == 0 {
                return 0.0;
            }
            let phi = 1.0 - p;
            (1.0 - phi.powi((j + 1).min(i32::MAX as u64) as i32)) / p
        };
        let (j1, j2, j4) = (j_max, j_max / 2, j_max / 4);
        let spectrum = |a: u64, b: u64| -> Vec<Complex<f64>> {
            (0..side * side).into_par_iter().map(|k| Complex::new(2.0 * partial(a, k) - partial(b, k), 0.0)).collect()
        };
        let acc = kernel_from_spectrum(spectrum(j1, j2), side);
        let acc_half = kernel_from_spectrum(spectrum(j2, j4), side);
        Ok(FftKernel { side, j_max, acc, acc_half })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn j_max(&self) -> u64 {
        self.j_max
    }

    fn at(&self, grid: &[f64], x: Point) -> f64 {
        let l = self.side as i64;
        let (i, j) = (x.x.rem_euclid(l) as usize, x.y.rem_euclid(l) as usize);
        grid[i * self.side + j]
    }

    pub fn value(&self, x: Point) -> f64 {
        self.at(&self.acc, Point::ORIGIN) - self.at(&self.acc, x)
    }

    pub fn cauchy_gap(&self, x: Point) -> f64 {
        let half = self.at(&self.acc_half, Point::ORIGIN) - self.at(&self.acc_half, x);
        (self.value(x) - half).abs()
    }
}

/// ψ(θ) = 1 − φ(θ) on the L × L frequency grid, row-major in (k1, k2).
fn symbol_gap(d: &StepDistribution, side: usize) -> Vec<f64> {
    let l = side as i64;
    if d.support().len() <= 64 {
        let sin2: Vec<f64> = (0..side).map(|k| (PI * k as f64 / side as f64).sin().powi(2)).collect();
        let sup: Vec<(i64, i64, f64)> = d.support().iter().map(|(v, p)| (v.x, v.y, *p)).collect();
        (0..side * side)
            .into_par_iter()
            .map(|k| {
                let (k1, k2) = ((k / side) as i64, (k % side) as i64);
                sup.iter().map(|&(vx, vy, p)| 2.0 * p * sin2[(k1 * vx + k2 * vy).rem_euclid(l) as usize]).sum()
            })
            .collect()
    } else {
        let mut buf = vec![Complex::new(0.0, 0.0); side * side];
        for (v, p) in d.support() {
            let (i, j) = (v.x.rem_euclid(l) as usize, v.y.rem_euclid(l) as usize);
            buf[i * side + j].re += p;
        }
        fft2(&mut buf, side, false);
        buf.into_iter().map(|c| 1.0 - c.re).collect()
    }
}

fn kernel_from_spectrum(mut buf: Vec<Complex<f64>>, side: usize) -> Vec<f64> {
    fft2(&mut buf, side, true);
    let norm = 1.0 / (side * side) as f64;
    buf.into_iter().map(|c| c.re * norm).collect()
}

fn fft2(buf: &mut [Complex<f64>], side: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(side) } else { planner.plan_fft_forward(side) };
    let pass = |buf: &mut [Complex<f64>]| {
        buf.par_chunks_mut(side * 16).for_each(|c| fft.process(c));
    };
    pass(buf);
    transpose(buf, side);
    pass(buf);
    transpose(buf, side);
}

fn transpose(buf: &mut [Complex<f64>], side: usize) {
    for i in 0..side {
        for j in i + 1..side {
            buf.swap(i * side + j, j * side + i);
        }
    }
}

/// Partial-sum value with acceleration and its Cauchy gap.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelValue {
    pub value: f64,
    pub cauchy_gap: f64,
    pub j_max: u64,
    pub grid: usize,
}

pub fn potential_kernel(d: &StepDistribution, x: Point, j_max: u64) -> Result<KernelValue> {
    let radius = x.x.abs().max(x.y.abs());
    let k = FftKernel::new(d, j_max, radius)?;
    Ok(KernelValue { value: k.value(x), cauchy_gap: k.cauchy_gap(x), j_max, grid: k.side })
}

/// Exact a(x) by a one-dimensional integral, for walks with |v₁| ≤ 1 (or
/// |v₂| ≤ 1) whose law is invariant under reflection of each coordinate.
pub struct QuadratureKernel {
    /// Support with the bounded-range coordinate first.
    support: Vec<(i64, i64, f64)>,
    swapped: bool,
    swap_symmetric: bool,
    cache: Mutex<HashMap<(i64, i64), f64>>,
    nodes: Mutex<HashMap<usize, Arc<Vec<(f64, f64, f64)>>>>,
}

const GL16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003_0, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
];

impl QuadratureKernel {
    pub fn supports(d: &StepDistribution) -> bool {
        Self::orientation(d).is_some()
    }

    fn orientation(d: &StepDistribution) -> Option<bool> {
        if !d.flags().reflection_symmetric {
            return None;
        }
        if d.support().iter().all(|(v, _)| v.x.abs() <= 1) {
            Some(false)
        } else if d.support().iter().all(|(v, _)| v.y.abs() <= 1) {
            Some(true)
        } else {
            None
        }
    }

    pub fn new(d: &StepDistribution) -> Result<Self> {
        let swapped =
            Self::orientation(d).ok_or_else(|| Error::Unsupported("exact potential-kernel quadrature".into()))?;
        let support = d.support().iter().map(|(v, p)| if swapped { (v.y, v.x, *p) } else { (v.x, v.y, *p) }).collect();
        Ok(QuadratureKernel {
            support,
            swapped,
            swap_symmetric: d.flags().swap_symmetric,
            cache: Mutex::new(HashMap::new()),
            nodes: Mutex::new(HashMap::new()),
        })
    }

    pub fn value(&self, x: Point) -> f64 {
        let (mut a, mut b) = if self.swapped { (x.y.abs(), x.x.abs()) } else { (x.x.abs(), x.y.abs()) };
        if self.swap_symmetric && b > a {
            std::mem::swap(&mut a, &mut b);
        }
        if (a, b) == (0, 0) {
            return 0.0;
        }
        if let Some(v) = self.cache.lock().unwrap().get(&(a, b)) {
            return *v;
        }
        let v = self.integrate(a, b);
        self.cache.lock().unwrap().insert((a, b), v);
        v
    }

    /// (θ, quadrature weight / W(θ), ρ(θ)) at the GL16 nodes of `panels`
    /// equal panels of [0, π].
    fn nodes(&self, panels: usize) -> Arc<Vec<(f64, f64, f64)>> {
        if let Some(t) = self.nodes.lock().unwrap().get(&panels) {
            return t.clone();
        }
        let h = PI / panels as f64;
        let half = 0.5 * h;
        let mut out = Vec::with_capacity(panels * 16);
        for k in 0..panels {
            let mid = (k as f64 + 0.5) * h;
            for &(node, weight) in &GL16 {
                for t in [mid - half * node, mid + half * node] {
                    let (mut minus, mut plus, mut beta) = (0.0, 0.0, 0.0);
                    for &(v1, v2, p) in &self.support {
                        let c = (t * v2 as f64).cos();
                        minus += 2.0 * p * (0.5 * t * v2 as f64).sin().powi(2);
                        plus += if v1 == 0 { p * (1.0 - c) } else { p * (1.0 + c) };
                        if v1 != 0 {
                            beta += p * c;
                        }
                    }
                    let w = (minus * plus).sqrt();
                    if w > 0.0 {
                        // A = (plus + minus)/2
                        out.push((t, weight * half / (PI * w), beta / (0.5 * (plus + minus) + w)));
                    }
                }
            }
        }
        let out = Arc::new(out);
        self.nodes.lock().unwrap().insert(panels, out.clone());
        out
    }

    fn integrate(&self, x1: i64, x2: i64) -> f64 {
        let scale = x1.max(x2).max(1) as f64;
        self.integrate_with(x1, x2, ((PI * scale / 2.0).ceil() as usize).next_power_of_two().max(64))
    }

    fn integrate_with(&self, x1: i64, x2: i64, panels: usize) -> f64 {
        self.nodes(panels).iter().map(|&(t, c, rho)| c * (1.0 - rho.powi(x1 as i32) * (x2 as f64 * t).cos())).sum()
    }
}

/// Evaluates a(x) by quadrature when available, else from an FFT table.
pub enum PotentialKernel {
    Exact(QuadratureKernel),
    Table { fft: FftKernel, radius: i64 },
}

impl PotentialKernel {
    pub fn exact(d: &StepDistribution) -> Result<Self> {
        Ok(PotentialKernel::Exact(QuadratureKernel::new(d)?))
    }

    pub fn value(&self, x: Point) -> Result<f64> {
        match self {
            PotentialKernel::Exact(q) => Ok(q.value(x)),
            PotentialKernel::Table { fft, radius } => {
                if x.x.abs().max(x.y.abs()) > *radius {
                    return Err(Error::Unsupported(format!("potential kernel at {x} outside the table")));
                }
                Ok(fft.value(x))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Ordinary least squares y = slope·x + intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> KernelFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    KernelFit { slope, intercept, r2, samples: xs.len() }
}

/// Lattice points nearest to 16 equally spaced angles on each radius.
pub fn ring_samples(radii: &[f64]) -> Vec<Point> {
    let mut out = Vec::new();
    for &r in radii {
        for k in 0..16 {
            let p = Point::nearest(r, 2.0 * PI * k as f64 / 16.0);
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

fn check_spread(radii: &[f64]) -> Result<()> {
    let min = radii.iter().copied().fold(f64::INFINITY, f64::min);
    let max = radii.iter().copied().fold(0.0, f64::max);
    if radii.is_empty() || !(min >= 1.0) || max < 8.0 * min {
        return Err(Error::InsufficientSpread { min, max });
    }
    Ok(())
}

/// Least-squares fit of a(x) against log|x| on the partial-sum table.
pub fn fit_kernel_constants(d: &StepDistribution, radii: &[f64]) -> Result<KernelFit> {
    fit_kernel_constants_with(d, radii, DEFAULT_J_MAX)
}

pub fn fit_kernel_constants_with(d: &StepDistribution, radii: &[f64], j_max: u64) -> Result<KernelFit> {
    check_spread(radii)?;
    let pts = ring_samples(radii);
    let radius = pts.iter().map(|p| p.x.abs().max(p.y.abs())).max().unwrap_or(1);
    let k = FftKernel::new(d, j_max, radius)?;
    let xs: Vec<f64> = pts.iter().map(|p| p.norm().ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| k.value(*p)).collect();
    Ok(linear_fit(&xs, &ys))
}

#[derive(Clone, Debug, Serialize)]
pub struct TableMeta {
    pub dist: DistributionSpec,
    pub j_max: u64,
    pub grid: usize,
    pub radius: i64,
    pub fitted: Option<KernelFit>,
}

/// Potential kernel on the box |x|_∞ ≤ radius.
#[derive(Clone, Debug, Serialize)]
pub struct PotentialKernelTable {
    pub meta: TableMeta,
    /// (x, a(x), Cauchy gap), row-major.
    pub values: Vec<(Point, f64, f64)>,
}

pub const TABLE_CSV_HEADER: &str = "x1,x2,a,cauchy_gap";

impl PotentialKernelTable {
    pub fn build(d: &StepDistribution, j_max: u64, radius: i64, fit_radii: Option<&[f64]>) -> Result<Self> {
        let k = FftKernel::new(d, j_max, radius)?;
        let values = (-radius..=radius)
            .flat_map(|x| (-radius..=radius).map(move |y| Point::new(x, y)))
            .map(|p| (p, k.value(p), k.cauchy_gap(p)))
            .collect();
        let fitted = match fit_radii {
            Some(radii) => {
                check_spread(radii)?;
                let pts: Vec<Point> =
                    ring_samples(radii).into_iter().filter(|p| p.x.abs().max(p.y.abs()) <= radius).collect();
                let xs: Vec<f64> = pts.iter().map(|p| p.norm().ln()).collect();
                let ys: Vec<f64> = pts.iter().map(|p| k.value(*p)).collect();
                Some(linear_fit(&xs, &ys))
            }
            None => None,
        };
        Ok(PotentialKernelTable {
            meta: TableMeta { dist: d.spec().clone(), j_max, grid: k.side, radius, fitted },
            values,
        })
    }

    pub fn get(&self, x: Point) -> Option<(f64, f64)> {
        let r = self.meta.radius;
        if x.x.abs() > r || x.y.abs() > r {
            return None;
        }
        let w = 2 * r + 1;
        let (_, a, g) = self.values[((x.x + r) * w + (x.y + r)) as usize];
        Some((a, g))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TABLE_CSV_HEADER}")?;
        for (p, a, g) in &self.values {
            writeln!(w, "{},{},{:.15e},{:.3e}", p.x, p.y, a, g)?;
        }
        Ok(())
    }
}
