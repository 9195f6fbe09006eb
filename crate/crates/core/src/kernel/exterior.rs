//! Exterior problems for a disc in the infinite plane, solved through the
//! potential kernel instead of a truncated window.
//!
//! With A' the points of A = D(0,ρ) enterable in one step and
//! M = [[a(z − z')], 1; 1ᵀ, 0] over A',
//!   H_A(x, ·) = first |A'| entries of M⁻¹ v_x,
//!   G_{A^c}(x, y) = v_xᵀ M⁻¹ v_y − a(x − y),
//! where v_x = (a(x − z))_{z ∈ A'} ⊕ 1.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::{HittingKernel, HittingMethod};
use crate::asymptotic::potkern::QuadratureKernel;
use crate::error::{Error, Result};
use crate::lattice::{Geometry, Point, Region};
use crate::stepdist::StepDistribution;

pub struct ExteriorDisc {
    radius: f64,
    entry: Vec<Point>,
    kernel: QuadratureKernel,
    lu: LU<f64, Dyn, Dyn>,
}

impl ExteriorDisc {
    pub fn new(d: &StepDistribution, radius: f64) -> Result<Self> {
        let kernel = QuadratureKernel::new(d)?;
        let disc = Region::disc(Point::ORIGIN, radius, Geometry::Planar)?;
        let entry: Vec<Point> = disc
            .enumerate()?
            .into_iter()
            .filter(|z| d.support().iter().any(|(v, _)| !disc.contains(*z - *v)))
            .collect();
        if entry.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let n = entry.len();
        let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..i {
                let a = kernel.value(entry[i] - entry[j]);
                m[(i, j)] = a;
                m[(j, i)] = a;
            }
            m[(i, n)] = 1.0;
            m[(n, i)] = 1.0;
        }
        Ok(ExteriorDisc { radius, entry, kernel, lu: m.lu() })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Points of the disc reachable in one step from outside.
    pub fn entry_points(&self) -> &[Point] {
        &self.entry
    }

    pub fn potential_kernel(&self, x: Point) -> f64 {
        self.kernel.value(x)
    }

    fn check(&self, x: Point) -> Result<()> {
        if (x.norm2() as f64) < self.radius * self.radius {
            return Err(Error::SourceInsideTarget(x));
        }
        Ok(())
    }

    fn v(&self, x: Point) -> DVector<f64> {
        let n = self.entry.len();
        DVector::from_fn(n + 1, |i, _| if i < n { self.kernel.value(x - self.entry[i]) } else { 1.0 })
    }

    fn solved(&self, x: Point) -> Result<DVector<f64>> {
        self.lu.solve(&self.v(x)).ok_or(Error::SingularSystem { row: 0, pivot: 0.0 })
    }

    pub fn hitting(&self, x: Point) -> Result<HittingKernel> {
        self.check(x)?;
        let c = self.solved(x)?;
        let masses: BTreeMap<Point, f64> = self.entry.iter().enumerate().map(|(i, z)| (*z, c[i])).collect();
        let masses: Vec<(Point, f64)> = masses.into_iter().collect();
        let total = masses.iter().map(|m| m.1).sum();
        Ok(HittingKernel {
            source: x,
            masses,
            total,
            method: HittingMethod::LastExit,
            window: None,
            geometry: Geometry::Planar,
        })
    }

    /// G_{A^c}(x, y) for x, y outside the disc.
    pub fn green(&self, x: Point, y: Point) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        let c = self.solved(x)?;
        Ok(c.dot(&self.v(y)) - self.kernel.value(x - y))
    }

    /// G_{A^c}(x, y) for one x and many y.
    pub fn green_row(&self, x: Point, ys: &[Point]) -> Result<Vec<f64>> {
        self.check(x)?;
        let c = self.solved(x)?;
        ys.iter()
            .map(|&y| {
                self.check(y)?;
                Ok(c.dot(&self.v(y)) - self.kernel.value(x - y))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{HittingProblem, SolverOptions};
    use crate::stepdist::{build_distribution, DistributionSpec};

    #[test]
    fn single_point_classical_formula() {
        let d = build_distribution(&DistributionSpec::LazySrw).unwrap();
        let e = ExteriorDisc::new(&d, 0.5).unwrap();
        let (x, y) = (Point::new(3, 1), Point::new(-2, 5));
        let a = |p| e.potential_kernel(p);
        let expected = a(x) + a(y) - a(x - y);
        assert!((e.green(x, y).unwrap() - expected).abs() < 1e-10);
        assert!((e.hitting(x).unwrap().total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn windowed_hitting_converges_to_exterior() {
        let d = build_distribution(&DistributionSpec::King).unwrap();
        let e = ExteriorDisc::new(&d, 4.0).unwrap();
        let x = Point::new(9, 2);
        let exact = e.hitting(x).unwrap();
        assert!((exact.total - 1.0).abs() < 1e-10);
        let target = Region::disc(Point::ORIGIN, 4.0, Geometry::Planar).unwrap();
        let mut last = f64::INFINITY;
        for n in [20.0, 40.0, 80.0] {
            let amb = Region::disc(Point::ORIGIN, n, Geometry::Planar).unwrap();
            let w =
                HittingProblem::new(&d, &target, Some(&amb), SolverOptions::default()).unwrap().lastexit(x).unwrap();
            let diff = w.sup_diff(&exact);
            assert!(diff < last);
            for (y, m) in &w.masses {
                assert!(*m <= exact.mass(*y) + 1e-12);
            }
            last = diff;
        }
    }
}
