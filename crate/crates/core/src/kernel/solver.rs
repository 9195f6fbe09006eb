//! Linear solvers for the symmetric positive definite killed system I − P_B.

use serde::Serialize;

use super::sparse::{dot, norm, Csr, PointIndex};
use crate::error::{Error, Result};
use crate::lattice::{Geometry, Point};

/// Unknown count below which the envelope factorisation is used.
pub const DIRECT_LIMIT: usize = 20_000;
/// Largest envelope (stored entries) the direct path accepts.
pub const ENVELOPE_LIMIT: u128 = 120_000_000;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;
const MAX_PCG_ITERATIONS: usize = 1000;
const COARSEST: usize = 3000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Envelope,
    MultigridPcg,
}

/// Envelope (variable-band) Cholesky factor L with A = L Lᵀ.
#[derive(Debug)]
pub struct Envelope {
    first: Vec<usize>,
    start: Vec<usize>,
    l: Vec<f64>,
}

impl Envelope {
    pub fn storage(a: &Csr) -> u128 {
        (0..a.rows)
            .map(|i| {
                let f = a.row(i).0.first().map_or(i, |&j| (j as usize).min(i));
                (i - f + 1) as u128
            })
            .sum()
    }

    pub fn factor(a: &Csr) -> Result<Self> {
        let n = a.rows;
        let mut first = Vec::with_capacity(n);
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for i in 0..n {
            let f = a.row(i).0.first().map_or(i, |&j| (j as usize).min(i));
            first.push(f);
            start.push(total);
            total += i - f + 1;
        }
        start.push(total);
        let mut l = vec![0.0; total];
        for i in 0..n {
            let (c, v) = a.row(i);
            for (&j, &x) in c.iter().zip(v) {
                let j = j as usize;
                if j <= i {
                    l[start[i] + j - first[i]] = x;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let (before, rest) = l.split_at_mut(start[i]);
            let row_i = &mut rest[..i - fi + 1];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &before[start[j]..start[j] + j - fj + 1];
                let s: f64 = row_i[k0 - fi..j - fi].iter().zip(&row_j[k0 - fj..j - fj]).map(|(a, b)| a * b).sum();
                row_i[j - fi] = (row_i[j - fi] - s) / row_j[j - fj];
            }
            let s: f64 = row_i[..i - fi].iter().map(|x| x * x).sum();
            let pivot = row_i[i - fi] - s;
            if !(pivot > 0.0) {
                return Err(Error::SingularSystem { row: i, pivot });
            }
            row_i[i - fi] = pivot.sqrt();
        }
        Ok(Envelope { first, start, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.first.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.l[self.start[i]..self.start[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.l[self.start[i]..self.start[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yk, lk) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= lk * xi;
            }
        }
        y
    }
}

struct Level {
    a: Csr,
    diag: Vec<f64>,
    /// Prolongation (fine × coarse) and its transpose.
    p: Csr,
    r: Csr,
}

enum Coarsest {
    Direct(Envelope),
    Smooth { a: Csr, diag: Vec<f64> },
}

/// Geometric multigrid V-cycle on lattice point sets with bilinear
/// prolongation and Galerkin coarse operators.
pub struct Multigrid {
    levels: Vec<Level>,
    coarsest: Coarsest,
}

impl Multigrid {
    pub fn build(a: &Csr, points: &[Point], geometry: Geometry) -> Result<Self> {
        let mut levels = Vec::new();
        let mut a = a.clone();
        let mut pts = points.to_vec();
        let mut geom = geometry;
        loop {
            if a.rows <= COARSEST && Envelope::storage(&a) <= ENVELOPE_LIMIT {
                break;
            }
            let Some((p, coarse_pts, coarse_geom)) = prolongation(&pts, geom) else { break };
            if coarse_pts.len() * 10 > a.rows * 7 || coarse_pts.is_empty() {
                break;
            }
            let r = p.transpose();
            let ac = r.multiply(&a.multiply(&p));
            let diag = a.diag();
            levels.push(Level { a, diag, p, r });
            a = ac;
            pts = coarse_pts;
            geom = coarse_geom;
        }
        let coarsest = if a.rows <= DIRECT_LIMIT && Envelope::storage(&a) <= ENVELOPE_LIMIT {
            Coarsest::Direct(Envelope::factor(&a)?)
        } else {
            let diag = a.diag();
            Coarsest::Smooth { a, diag }
        };
        Ok(Multigrid { levels, coarsest })
    }

    pub fn depth(&self) -> usize {
        self.levels.len() + 1
    }

    fn vcycle(&self, level: usize, b: &[f64]) -> Vec<f64> {
        if level == self.levels.len() {
            return match &self.coarsest {
                Coarsest::Direct(f) => f.solve(b),
                Coarsest::Smooth { a, diag } => {
                    let mut x = vec![0.0; b.len()];
                    for _ in 0..20 {
                        gauss_seidel(a, diag, b, &mut x, true);
                        gauss_seidel(a, diag, b, &mut x, false);
                    }
                    x
                }
            };
        }
        let lv = &self.levels[level];
        let mut x = vec![0.0; b.len()];
        for _ in 0..2 {
            gauss_seidel(&lv.a, &lv.diag, b, &mut x, true);
        }
        let mut res = vec![0.0; b.len()];
        lv.a.matvec(&x, &mut res);
        for (ri, bi) in res.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut rc = vec![0.0; lv.r.rows];
        lv.r.matvec(&res, &mut rc);
        let xc = self.vcycle(level + 1, &rc);
        let mut corr = vec![0.0; b.len()];
        lv.p.matvec(&xc, &mut corr);
        for (xi, ci) in x.iter_mut().zip(&corr) {
            *xi += ci;
        }
        for _ in 0..2 {
            gauss_seidel(&lv.a, &lv.diag, b, &mut x, false);
        }
        x
    }

    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        self.vcycle(0, b)
    }
}

fn gauss_seidel(a: &Csr, diag: &[f64], b: &[f64], x: &mut [f64], forward: bool) {
    let mut sweep = |i: usize| {
        let (c, v) = a.row(i);
        let mut s = b[i];
        for (&j, &aij) in c.iter().zip(v) {
            if j as usize != i {
                s -= aij * x[j as usize];
            }
        }
        x[i] = s / diag[i];
    };
    if forward {
        (0..a.rows).for_each(&mut sweep);
    } else {
        (0..a.rows).rev().for_each(&mut sweep);
    }
}

/// Bilinear prolongation from the even-coordinate sublattice. A coarse node
/// exists exactly when its fine counterpart 2X lies in the point set.
fn prolongation(points: &[Point], geometry: Geometry) -> Option<(Csr, Vec<Point>, Geometry)> {
    let index = PointIndex::new(points);
    let canon = |p: Point| geometry.canon(p);
    let even = |p: Point| p.x.rem_euclid(2) == 0 && p.y.rem_euclid(2) == 0;
    let mut coarse_of = vec![u32::MAX; points.len()];
    let mut coarse_pts = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if even(*p) {
            coarse_of[i] = coarse_pts.len() as u32;
            coarse_pts.push(Point::new(p.x.div_euclid(2), p.y.div_euclid(2)));
        }
    }
    if coarse_pts.is_empty() {
        return None;
    }
    let mut b = Csr::builder(coarse_pts.len());
    let mut entries = Vec::new();
    for p in points {
        entries.clear();
        let xs: &[(i64, f64)] = if p.x.rem_euclid(2) == 0 { &[(0, 1.0)] } else { &[(-1, 0.5), (1, 0.5)] };
        let ys: &[(i64, f64)] = if p.y.rem_euclid(2) == 0 { &[(0, 1.0)] } else { &[(-1, 0.5), (1, 0.5)] };
        for &(dx, wx) in xs {
            for &(dy, wy) in ys {
                let q = canon(Point::new(p.x + dx, p.y + dy));
                if let Some(j) = index.get(q) {
                    if coarse_of[j] != u32::MAX {
                        entries.push((coarse_of[j], wx * wy));
                    }
                }
            }
        }
        b.push_unsorted(&mut entries);
    }
    // parity is only preserved by the wrap when K is even
    let coarse_geom = match geometry {
        Geometry::Toral(k) if k % 2 == 0 && (k / 2) % 2 == 0 => Geometry::Toral(k / 2),
        _ => Geometry::Planar,
    };
    let coarse_pts = match geometry {
        Geometry::Toral(k) if k % 2 == 0 && (k / 2) % 2 == 0 => {
            coarse_pts.into_iter().map(|q| coarse_geom.canon(q)).collect()
        }
        _ => coarse_pts,
    };
    Some((b.finish(), coarse_pts, coarse_geom))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

pub enum Solver {
    Direct(Envelope),
    Iterative { mg: Multigrid, tol: f64 },
}

impl Solver {
    pub fn new(a: &Csr, points: &[Point], geometry: Geometry, tol: f64) -> Result<Self> {
        if a.rows < DIRECT_LIMIT && Envelope::storage(a) <= ENVELOPE_LIMIT {
            Ok(Solver::Direct(Envelope::factor(a)?))
        } else {
            Ok(Solver::Iterative { mg: Multigrid::build(a, points, geometry)?, tol })
        }
    }

    pub fn kind(&self) -> SolverKind {
        match self {
            Solver::Direct(_) => SolverKind::Envelope,
            Solver::Iterative { .. } => SolverKind::MultigridPcg,
        }
    }

    pub fn solve(&self, a: &Csr, b: &[f64]) -> Result<(Vec<f64>, SolveStats)> {
        match self {
            Solver::Direct(f) => {
                let x = f.solve(b);
                let mut r = vec![0.0; b.len()];
                a.matvec(&x, &mut r);
                let bn = norm(b);
                let res = r.iter().zip(b).map(|(ri, bi)| (ri - bi).powi(2)).sum::<f64>().sqrt();
                Ok((x, SolveStats { iterations: 0, relative_residual: if bn > 0.0 { res / bn } else { 0.0 } }))
            }
            Solver::Iterative { mg, tol } => pcg(a, b, |r| mg.apply(r), *tol),
        }
    }
}

pub fn pcg(a: &Csr, b: &[f64], precond: impl Fn(&[f64]) -> Vec<f64>, tol: f64) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok((x, SolveStats { iterations: 0, relative_residual: 0.0 }));
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 1..=MAX_PCG_ITERATIONS {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / bn;
        if rel <= tol {
            return Ok((x, SolveStats { iterations: it, relative_residual: rel }));
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDidNotConverge { iterations: MAX_PCG_ITERATIONS, residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 5-point operator I − P for the lazy walk on a square.
    fn lazy_square(n: i64) -> (Csr, Vec<Point>) {
        let pts: Vec<Point> = (0..n).flat_map(|x| (0..n).map(move |y| Point::new(x, y))).collect();
        let idx = PointIndex::new(&pts);
        let mut b = Csr::builder(pts.len());
        for p in &pts {
            let mut e = vec![(idx.get(*p).unwrap() as u32, 0.5)];
            for d in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                if let Some(j) = idx.get(Point::new(p.x + d.0, p.y + d.1)) {
                    e.push((j as u32, -0.125));
                }
            }
            b.push_unsorted(&mut e);
        }
        (b.finish(), pts)
    }

    #[test]
    fn envelope_solves() {
        let (a, _) = lazy_square(12);
        let f = Envelope::factor(&a).unwrap();
        let b: Vec<f64> = (0..a.rows).map(|i| (i % 7) as f64).collect();
        let x = f.solve(&b);
        let mut r = vec![0.0; b.len()];
        a.matvec(&x, &mut r);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }

    #[test]
    fn multigrid_pcg_matches_direct() {
        let (a, pts) = lazy_square(90);
        let b: Vec<f64> = (0..a.rows).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let direct = Envelope::factor(&a).unwrap().solve(&b);
        let mg = Multigrid::build(&a, &pts, Geometry::Planar).unwrap();
        assert!(mg.depth() > 1);
        let (x, stats) = pcg(&a, &b, |r| mg.apply(r), 1e-12).unwrap();
        assert!(stats.iterations < 40, "{stats:?}");
        for (u, v) in x.iter().zip(&direct) {
            assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn indefinite_pivot_reported() {
        let mut b = Csr::builder(2);
        b.push_row(&[0, 1], &[1.0, 2.0]);
        b.push_row(&[0, 1], &[2.0, 1.0]);
        assert!(matches!(Envelope::factor(&b.finish()), Err(Error::SingularSystem { row: 1, .. })));
    }
}
