//! Lattice geometry on ℤ² and on the torus ℤ²_K.
//!
//! Discs are open: `D(c, n) = {y : |y − c| < n}`, and the s-annulus is
//! `D(c, n + s) \ D(c, n)`. Toral sets are stored as primary-copy
//! representatives, i.e. points of `[−⌊K/2⌋, K − ⌊K/2⌋)²`.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice point of ℤ².
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Point { x, y }
    }

    pub fn norm2(self) -> i64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    /// Nearest lattice point to the real point `(r cos θ, r sin θ)`.
    pub fn nearest(r: f64, theta: f64) -> Self {
        Point::new((r * theta.cos()).round() as i64, (r * theta.sin()).round() as i64)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl From<(i64, i64)> for Point {
    fn from((x, y): (i64, i64)) -> Self {
        Point::new(x, y)
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y] = <[i64; 2]>::deserialize(d)?;
        Ok(Point::new(x, y))
    }
}

/// Largest coordinate magnitude accepted anywhere in the crate. Keeps squared
/// norms far from `i64` overflow.
pub const COORD_LIMIT: i64 = 1 << 24;

/// `π_K`: coordinatewise `((xᵢ + ⌊K/2⌋) mod K) − ⌊K/2⌋`.
pub fn project_pi(p: Point, k: i64) -> Point {
    debug_assert!(k >= 1);
    let h = k / 2;
    Point::new((p.x + h).rem_euclid(k) - h, (p.y + h).rem_euclid(k) - h)
}

/// Minimum Euclidean distance between two projected points, over the nine
/// neighbouring copies.
pub fn torus_distance(a: Point, b: Point, k: i64) -> f64 {
    let mut best = i64::MAX;
    for i in -1..=1 {
        for j in -1..=1 {
            let d = a - (b + Point::new(i * k, j * k));
            best = best.min(d.norm2());
        }
    }
    (best as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGeometry {
    k: i64,
}

impl TorusGeometry {
    pub fn new(k: i64) -> Result<Self> {
        if k < 8 {
            return Err(Error::TorusTooSmall(k));
        }
        if k > COORD_LIMIT {
            return Err(Error::InvalidRegion(format!("torus side {k} is too large")));
        }
        Ok(TorusGeometry { k })
    }

    pub fn k(self) -> i64 {
        self.k
    }

    pub fn project(self, p: Point) -> Point {
        project_pi(p, self.k)
    }

    pub fn distance(self, a: Point, b: Point) -> f64 {
        torus_distance(self.project(a), self.project(b), self.k)
    }

    /// Lowest primary-copy coordinate, `−⌊K/2⌋`.
    pub fn lo(self) -> i64 {
        -(self.k / 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    #[default]
    Planar,
    Toral(i64),
}

impl Geometry {
    pub fn torus(self) -> Option<TorusGeometry> {
        match self {
            Geometry::Planar => None,
            // validated on construction of every region that carries it
            Geometry::Toral(k) => Some(TorusGeometry { k }),
        }
    }

    pub fn is_toral(self) -> bool {
        matches!(self, Geometry::Toral(_))
    }

    /// Canonical representative of a point under this geometry.
    pub fn canon(self, p: Point) -> Point {
        match self {
            Geometry::Planar => p,
            Geometry::Toral(k) => project_pi(p, k),
        }
    }

    pub fn distance(self, a: Point, b: Point) -> f64 {
        match self {
            Geometry::Planar => (a - b).norm(),
            Geometry::Toral(k) => torus_distance(project_pi(a, k), project_pi(b, k), k),
        }
    }

    fn validate(self) -> Result<()> {
        if let Geometry::Toral(k) = self {
            TorusGeometry::new(k)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Disc { center: Point, n: f64 },
    Annulus { center: Point, n: f64, s: f64 },
    Complement { of: Box<Shape>, within: Option<Box<Shape>> },
    Union(Vec<Shape>),
}

/// A lattice set together with the geometry it lives in.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    shape: Shape,
    geometry: Geometry,
}

impl Region {
    pub fn new(shape: Shape, geometry: Geometry) -> Result<Self> {
        geometry.validate()?;
        validate_shape(&shape, geometry)?;
        Ok(Region { shape, geometry })
    }

    pub fn disc(center: Point, n: f64, geometry: Geometry) -> Result<Self> {
        Region::new(Shape::Disc { center, n }, geometry)
    }

    pub fn annulus(center: Point, n: f64, s: f64, geometry: Geometry) -> Result<Self> {
        Region::new(Shape::Annulus { center, n, s }, geometry)
    }

    /// Complement of `of`, optionally restricted to `within`.
    pub fn complement(of: &Region, within: Option<&Region>) -> Result<Self> {
        if let Some(w) = within {
            if w.geometry != of.geometry {
                return Err(Error::InvalidRegion("complement mixes geometries".into()));
            }
        }
        Region::new(
            Shape::Complement { of: Box::new(of.shape.clone()), within: within.map(|w| Box::new(w.shape.clone())) },
            of.geometry,
        )
    }

    pub fn union(parts: &[Region]) -> Result<Self> {
        let geometry = parts.first().map(|p| p.geometry).unwrap_or_default();
        if parts.iter().any(|p| p.geometry != geometry) {
            return Err(Error::InvalidRegion("union mixes geometries".into()));
        }
        Region::new(Shape::Union(parts.iter().map(|p| p.shape.clone()).collect()), geometry)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn contains(&self, p: Point) -> bool {
        shape_contains(&self.shape, self.geometry, p)
    }

    /// Exact lattice point set in row-major order (first coordinate outer).
    /// Toral points are primary-copy representatives.
    pub fn enumerate(&self) -> Result<Vec<Point>> {
        self.enumerate_with_budget(usize::MAX)
    }

    /// Like [`Region::enumerate`] but refuses to scan more than `budget`
    /// candidate points.
    pub fn enumerate_with_budget(&self, budget: usize) -> Result<Vec<Point>> {
        let (lo, hi) = match (self.geometry, shape_box(&self.shape)) {
            (Geometry::Planar, None) => return Err(Error::UnboundedRegion),
            (Geometry::Planar, Some(b)) => b,
            (Geometry::Toral(k), b) => {
                let t = TorusGeometry { k };
                let full = (Point::new(t.lo(), t.lo()), Point::new(t.lo() + k - 1, t.lo() + k - 1));
                match b {
                    Some((lo, hi)) if hi.x - lo.x < k && hi.y - lo.y < k => (lo, hi),
                    _ => full,
                }
            }
        };
        let w = (hi.x - lo.x + 1).max(0) as u128;
        let h = (hi.y - lo.y + 1).max(0) as u128;
        if w * h > budget as u128 {
            return Err(Error::DomainTooLarge { size: (w * h).min(usize::MAX as u128) as usize, budget });
        }
        let mut out = Vec::new();
        for x in lo.x..=hi.x {
            for y in lo.y..=hi.y {
                let p = Point::new(x, y);
                if self.contains(p) {
                    out.push(p);
                }
            }
        }
        if let Geometry::Toral(k) = self.geometry {
            let set: BTreeSet<Point> = out.into_iter().map(|p| project_pi(p, k)).collect();
            out = set.into_iter().collect();
        }
        Ok(out)
    }
}

fn validate_shape(shape: &Shape, geometry: Geometry) -> Result<()> {
    let check_center = |c: Point| {
        if c.x.abs() > COORD_LIMIT || c.y.abs() > COORD_LIMIT {
            Err(Error::InvalidRegion(format!("center {c} out of range")))
        } else {
            Ok(())
        }
    };
    let check_radius = |outer: f64| -> Result<()> {
        if !outer.is_finite() || outer > COORD_LIMIT as f64 {
            return Err(Error::InvalidRegion(format!("radius {outer} out of range")));
        }
        if let Geometry::Toral(k) = geometry {
            if outer >= k as f64 / 4.0 {
                return Err(Error::RadiusTooLarge { n: outer, k });
            }
        }
        Ok(())
    };
    match shape {
        Shape::Disc { center, n } => {
            check_center(*center)?;
            if !(*n >= 0.0) {
                return Err(Error::InvalidRegion(format!("disc radius {n} must be >= 0")));
            }
            check_radius(*n)
        }
        Shape::Annulus { center, n, s } => {
            check_center(*center)?;
            if !(*n >= 0.0) || !(*s > 0.0) {
                return Err(Error::InvalidRegion(format!("annulus needs n >= 0 and s > 0 (got {n}, {s})")));
            }
            check_radius(n + s)
        }
        Shape::Complement { of, within } => {
            validate_shape(of, geometry)?;
            if let Some(w) = within {
                validate_shape(w, geometry)?;
            }
            Ok(())
        }
        Shape::Union(parts) => parts.iter().try_for_each(|p| validate_shape(p, geometry)),
    }
}

fn in_disc(center: Point, n: f64, geometry: Geometry, p: Point) -> bool {
    match geometry {
        Geometry::Planar => ((p - center).norm2() as f64) < n * n,
        Geometry::Toral(k) => torus_distance(project_pi(p, k), project_pi(center, k), k) < n,
    }
}

fn shape_contains(shape: &Shape, geometry: Geometry, p: Point) -> bool {
    match shape {
        Shape::Disc { center, n } => in_disc(*center, *n, geometry, p),
        Shape::Annulus { center, n, s } => in_disc(*center, n + s, geometry, p) && !in_disc(*center, *n, geometry, p),
        Shape::Complement { of, within } => {
            !shape_contains(of, geometry, p) && within.as_ref().is_none_or(|w| shape_contains(w, geometry, p))
        }
        Shape::Union(parts) => parts.iter().any(|s| shape_contains(s, geometry, p)),
    }
}

/// Planar bounding box, `None` when unbounded.
fn shape_box(shape: &Shape) -> Option<(Point, Point)> {
    let disc_box = |c: Point, r: f64| {
        let e = r.ceil() as i64;
        (Point::new(c.x - e, c.y - e), Point::new(c.x + e, c.y + e))
    };
    match shape {
        Shape::Disc { center, n } => Some(disc_box(*center, *n)),
        Shape::Annulus { center, n, s } => Some(disc_box(*center, n + s)),
        Shape::Complement { within, .. } => within.as_ref().and_then(|w| shape_box(w)),
        Shape::Union(parts) => {
            let mut acc: Option<(Point, Point)> = None;
            for part in parts {
                let (lo, hi) = shape_box(part)?;
                acc = Some(match acc {
                    None => (lo, hi),
                    Some((a, b)) => {
                        (Point::new(a.x.min(lo.x), a.y.min(lo.y)), Point::new(b.x.max(hi.x), b.y.max(hi.y)))
                    }
                });
            }
            Some(acc.unwrap_or((Point::new(0, 0), Point::new(-1, -1))))
        }
    }
}

// JSON form: {"kind":"disc","center":[0,0],"n":10,"geometry":{"toral":64}}.
// Geometry may be repeated on nested nodes but must agree with the root.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RegionRepr {
    Disc {
        center: Point,
        n: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        geometry: Option<Geometry>,
    },
    Annulus {
        center: Point,
        n: f64,
        s: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        geometry: Option<Geometry>,
    },
    Complement {
        of: Box<RegionRepr>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        within: Option<Box<RegionRepr>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        geometry: Option<Geometry>,
    },
    Union {
        parts: Vec<RegionRepr>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        geometry: Option<Geometry>,
    },
}

impl RegionRepr {
    fn geometry(&self) -> Option<Geometry> {
        match self {
            RegionRepr::Disc { geometry, .. }
            | RegionRepr::Annulus { geometry, .. }
            | RegionRepr::Complement { geometry, .. }
            | RegionRepr::Union { geometry, .. } => *geometry,
        }
    }

    fn into_shape(self, root: Geometry, depth: usize) -> Result<Shape> {
        if depth > 32 {
            return Err(Error::InvalidRegion("region nesting too deep".into()));
        }
        if let Some(g) = self.geometry() {
            if g != root {
                return Err(Error::InvalidRegion("nested region geometry differs from root".into()));
            }
        }
        Ok(match self {
            RegionRepr::Disc { center, n, .. } => Shape::Disc { center, n },
            RegionRepr::Annulus { center, n, s, .. } => Shape::Annulus { center, n, s },
            RegionRepr::Complement { of, within, .. } => Shape::Complement {
                of: Box::new(of.into_shape(root, depth + 1)?),
                within: match within {
                    Some(w) => Some(Box::new(w.into_shape(root, depth + 1)?)),
                    None => None,
                },
            },
            RegionRepr::Union { parts, .. } => {
                Shape::Union(parts.into_iter().map(|p| p.into_shape(root, depth + 1)).collect::<Result<_>>()?)
            }
        })
    }

    fn from_shape(shape: &Shape, geometry: Option<Geometry>) -> Self {
        match shape {
            Shape::Disc { center, n } => RegionRepr::Disc { center: *center, n: *n, geometry },
            Shape::Annulus { center, n, s } => RegionRepr::Annulus { center: *center, n: *n, s: *s, geometry },
            Shape::Complement { of, within } => RegionRepr::Complement {
                of: Box::new(RegionRepr::from_shape(of, None)),
                within: within.as_ref().map(|w| Box::new(RegionRepr::from_shape(w, None))),
                geometry,
            },
            Shape::Union(parts) => {
                RegionRepr::Union { parts: parts.iter().map(|p| RegionRepr::from_shape(p, None)).collect(), geometry }
            }
        }
    }
}

impl Region {
    pub fn from_json(text: &str) -> Result<Self> {
        let repr: RegionRepr = serde_json::from_str(text)?;
        let root = repr.geometry().unwrap_or_default();
        let shape = repr.into_shape(root, 0)?;
        Region::new(shape, root)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&RegionRepr::from_shape(&self.shape, Some(self.geometry)))
            .expect("region serialization is infallible")
    }
}

impl Serialize for Region {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RegionRepr::from_shape(&self.shape, Some(self.geometry)).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = RegionRepr::deserialize(d)?;
        let root = repr.geometry().unwrap_or_default();
        let shape = repr.into_shape(root, 0).map_err(serde::de::Error::custom)?;
        Region::new(shape, root).map_err(serde::de::Error::custom)
    }
}

/// Jump labels relative to a disc of radius `n`, an `s`-annulus and a torus
/// of side `K`. The categories overlap; this is a set, not a partition.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpLabels {
    pub baby: bool,
    pub small: bool,
    pub medium: bool,
    pub large: bool,
    /// Every `j ≥ 1` for which the step is a targeted jump.
    pub targeted: Vec<u32>,
}

impl JumpLabels {
    pub fn names(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.baby {
            v.push("baby".to_string());
        }
        if self.small {
            v.push("small".to_string());
        }
        if self.medium {
            v.push("medium".to_string());
        }
        if self.large {
            v.push("large".to_string());
        }
        v.extend(self.targeted.iter().map(|j| format!("targeted({j})")));
        v
    }
}

pub fn classify_jump(step: Point, n: f64, s: f64, k: i64) -> JumpLabels {
    let len = step.norm();
    let kf = k as f64;
    let large = len > kf - 2.0 * n;
    let mut targeted = Vec::new();
    if large {
        let lo_step = kf - 2.0 * n;
        let hi_step = (kf + 2.0 * n) / std::f64::consts::SQRT_2;
        if lo_step > 0.0 {
            let j_max = (len / lo_step).floor() as u32;
            for j in 1..=j_max {
                let jf = j as f64;
                if jf * lo_step <= len && len <= jf * hi_step {
                    targeted.push(j);
                }
            }
        }
    }
    JumpLabels { baby: len < s, small: len < 2.0 * n, medium: s < len && len < kf - 2.0 * n, large, targeted }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: i64, y: i64) -> Point {
        Point::new(x, y)
    }

    #[test]
    fn small_disc_enumeration() {
        let d = Region::disc(Point::ORIGIN, 1.2, Geometry::Planar).unwrap();
        assert_eq!(d.enumerate().unwrap(), vec![p(-1, 0), p(0, -1), p(0, 0), p(0, 1), p(1, 0)]);
    }

    #[test]
    fn toral_disc_matches_planar_when_small() {
        let planar = Region::disc(Point::ORIGIN, 3.0, Geometry::Planar).unwrap().enumerate().unwrap();
        let toral = Region::disc(Point::ORIGIN, 1.9, Geometry::Toral(8)).unwrap().enumerate().unwrap();
        let planar_small: Vec<_> = planar.into_iter().filter(|q| (q.norm2() as f64) < 1.9 * 1.9).collect();
        assert_eq!(toral, planar_small);
        // radius 3 violates n < K/4 on K = 8
        assert!(matches!(Region::disc(Point::ORIGIN, 3.0, Geometry::Toral(8)), Err(Error::RadiusTooLarge { .. })));
        let t = Region::disc(Point::ORIGIN, 3.0, Geometry::Toral(16)).unwrap().enumerate().unwrap();
        let pl = Region::disc(Point::ORIGIN, 3.0, Geometry::Planar).unwrap().enumerate().unwrap();
        assert_eq!(t, pl);
    }

    #[test]
    fn annulus_is_ring() {
        let a = Region::annulus(Point::ORIGIN, 2.0, 1.0, Geometry::Planar).unwrap();
        for q in a.enumerate().unwrap() {
            assert!(q.norm() >= 2.0 && q.norm() < 3.0);
        }
        assert!(a.contains(p(2, 0)));
        assert!(!a.contains(p(3, 0)));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_pi(p(-12, 6), 11), p(-1, -5));
        assert_eq!(project_pi(p(0, 0), 64), p(0, 0));
        assert_eq!(project_pi(p(7, -7), 8), p(-1, 1));
    }

    #[test]
    fn torus_distance_examples() {
        assert_eq!(torus_distance(p(3, 2), p(3, 2), 10), 0.0);
        assert_eq!(torus_distance(p(-5, 0), p(4, 0), 10), 1.0);
        let mut worst: f64 = 0.0;
        for a in -5..5 {
            for b in -5..5 {
                worst = worst.max(torus_distance(p(0, 0), p(a, b), 10));
            }
        }
        assert!(worst <= 10.0 * std::f64::consts::SQRT_2 / 2.0 + 1e-12);
    }

    #[test]
    fn jump_taxonomy_examples() {
        let l = classify_jump(p(0, 3), 10.0, 5.0, 100);
        assert_eq!(l.names(), vec!["baby", "small"]);
        let l = classify_jump(p(82, 0), 10.0, 5.0, 100);
        assert_eq!(l.names(), vec!["large", "targeted(1)"]);
        let l = classify_jump(p(12, 0), 10.0, 5.0, 100);
        assert_eq!(l.names(), vec!["small", "medium"]);
    }

    #[test]
    fn region_json_round_trip() {
        let text = r#"{"kind":"disc","center":[0,0],"n":10,"geometry":{"toral":64}}"#;
        let r = Region::from_json(text).unwrap();
        assert_eq!(r.geometry(), Geometry::Toral(64));
        assert_eq!(Region::from_json(&r.to_json()).unwrap(), r);
        let planar = Region::from_json(r#"{"kind":"annulus","center":[1,2],"n":3,"s":2}"#).unwrap();
        assert_eq!(planar.geometry(), Geometry::Planar);
        assert!(Region::from_json(r#"{"kind":"disc","center":[0,0],"n":1,"extra":1}"#).is_err());
        let unbounded =
            Region::from_json(r#"{"kind":"complement","of":{"kind":"disc","center":[0,0],"n":2}}"#).unwrap();
        assert!(matches!(unbounded.enumerate(), Err(Error::UnboundedRegion)));
    }

    #[test]
    fn toral_complement_is_finite() {
        let disc = Region::disc(Point::ORIGIN, 3.0, Geometry::Toral(16)).unwrap();
        let comp = Region::complement(&disc, None).unwrap();
        let n_disc = disc.enumerate().unwrap().len();
        assert_eq!(comp.enumerate().unwrap().len() + n_disc, 256);
    }
}
