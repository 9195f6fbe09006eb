use proptest::prelude::*;

use rwpt::kernel::{green, HittingProblem, SolverOptions};
use rwpt::lattice::torus_distance;
use rwpt::mc::{estimate, EventSpec, PathSampler, StopSpec};
use rwpt::{build_distribution, DistributionSpec, Geometry, Point, Region};

fn spec() -> impl Strategy<Value = DistributionSpec> {
    prop_oneof![
        Just(DistributionSpec::LazySrw),
        Just(DistributionSpec::King),
        (4.5f64..8.0, 2u32..6).prop_map(|(exponent, cutoff)| DistributionSpec::TruncatedPowerLaw { exponent, cutoff }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn canon_is_idempotent_and_periodic(x in -500i64..500, y in -500i64..500, k in 8i64..200, i in -3i64..3, j in -3i64..3) {
        let g = Geometry::Toral(k);
        let p = Point::new(x, y);
        let c = g.canon(p);
        prop_assert_eq!(g.canon(c), c);
        prop_assert_eq!(g.canon(p + Point::new(i * k, j * k)), c);
        let next = g.canon(p + Point::new(1, 0));
        prop_assert!((torus_distance(c, next, k) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disc_membership_matches_norm(n in 1.0f64..20.0, x in -25i64..25, y in -25i64..25) {
        let d = Region::disc(Point::ORIGIN, n, Geometry::Planar).unwrap();
        let p = Point::new(x, y);
        prop_assert_eq!(d.contains(p), (p.norm2() as f64) < n * n);
    }

    #[test]
    fn step_law_is_symmetric_and_normalised(s in spec()) {
        let d = build_distribution(&s).unwrap();
        let total: f64 = d.support().iter().map(|e| e.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for &(v, p) in d.support() {
            let q = d.support().iter().find(|e| e.0 == Point::new(-v.x, -v.y)).map(|e| e.1);
            prop_assert_eq!(q, Some(p));
        }
        prop_assert!(d.gamma2() > 0.0);
    }

    #[test]
    fn green_is_symmetric_and_positive(s in spec(), n in 3.0f64..9.0, a in 0usize..1000, b in 0usize..1000) {
        let d = build_distribution(&s).unwrap();
        let g = green(&d, &Region::disc(Point::ORIGIN, n, Geometry::Planar).unwrap()).unwrap();
        let pts = g.domain().points();
        let (x, y) = (pts[a % pts.len()], pts[b % pts.len()]);
        let gxy = g.value(x, y).unwrap();
        prop_assert!(gxy > 0.0);
        prop_assert!((gxy - g.value(y, x).unwrap()).abs() <= 1e-9 * gxy.max(1.0));
        prop_assert!(g.value(x, x).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn hitting_kernel_is_a_probability(s in spec(), r in 1.5f64..4.0, x in 5i64..9, y in -3i64..3) {
        let d = build_distribution(&s).unwrap();
        let target = Region::disc(Point::ORIGIN, r, Geometry::Planar).unwrap();
        let ambient = Region::disc(Point::ORIGIN, 12.0, Geometry::Planar).unwrap();
        let prob = HittingProblem::new(&d, &target, Some(&ambient), SolverOptions::default()).unwrap();
        let k = prob.lastexit(Point::new(x, y)).unwrap();
        prop_assert!(k.total > 0.0 && k.total <= 1.0 + 1e-12);
        prop_assert!(k.masses.iter().all(|m| m.1 >= 0.0 && target.contains(m.0)));
        prop_assert!(k.sup_diff(&prob.direct(Point::new(x, y)).unwrap()) <= 1e-8);
    }

    #[test]
    fn mc_estimate_is_seed_deterministic(seed in 0u64..1000) {
        let d = build_distribution(&DistributionSpec::LazySrw).unwrap();
        let stop = StopSpec::Escape(Region::disc(Point::ORIGIN, 4.0, Geometry::Planar).unwrap());
        let event = EventSpec::MeanSteps { stop };
        let a = estimate(&PathSampler::new(&d, seed).unwrap(), Point::ORIGIN, &event, 200, 1_000_000).unwrap();
        let b = estimate(&PathSampler::new(&d, seed).unwrap(), Point::ORIGIN, &event, 200, 1_000_000).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn region_json_round_trips(n in 1.0f64..30.0, cx in -10i64..10, cy in -10i64..10) {
        let r = Region::disc(Point::new(cx, cy), n, Geometry::Planar).unwrap();
        let back: Region = serde_json::from_str(&r.to_json()).unwrap();
        prop_assert_eq!(back, r);
    }
}
