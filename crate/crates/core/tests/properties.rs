use presic_core::{
    check, estimate_constant, iterate, picard, BMetricSpace, BaseMetric, ConditionSpec, ConstantKind, Domain,
    MetricKind, Point, PresicOperator, SamplePlan, StopRule,
};
use proptest::prelude::*;

fn spaces(dim: usize) -> Vec<BMetricSpace> {
    let dom = Domain::cube(dim, -3.0, 3.0).unwrap();
    let kinds = [
        MetricKind::Euclidean,
        MetricKind::SquaredEuclidean,
        MetricKind::Power {
            base: BaseMetric::Manhattan,
            p: 3.0,
        },
        MetricKind::Power {
            base: BaseMetric::Chebyshev,
            p: 1.5,
        },
        MetricKind::LpTruncated { p: 0.5 },
        MetricKind::LpTruncated { p: 2.0 },
    ];
    kinds
        .into_iter()
        .map(|k| BMetricSpace::new(k, dom.clone(), None).unwrap())
        .collect()
}

fn points(dim: usize, min_len: usize, max_len: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), min_len..=max_len)
        .prop_map(|v| v.into_iter().map(|c| Point::new(c).unwrap()).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chain_bound_holds_in_builtin_spaces(pts in points(2, 2, 20)) {
        for s in spaces(2) {
            let c = s.chain_bound(&pts).unwrap();
            prop_assert!(c.holds, "{:?}: lhs {} rhs {}", s.kind(), c.lhs, c.rhs);
        }
    }

    #[test]
    fn triangle_never_beats_declared_b(pts in points(3, 3, 3)) {
        for s in spaces(3) {
            let lhs = s.distance(&pts[0], &pts[1]).unwrap();
            let rhs = s.b() * (s.distance(&pts[0], &pts[2]).unwrap() + s.distance(&pts[2], &pts[1]).unwrap());
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs));
        }
    }

    #[test]
    fn trace_alphas_recompute_and_subchains_hold(
        w in prop::collection::vec(0.0f64..0.3, 1..4),
        c in -1.0f64..1.0,
        seeds in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let op = PresicOperator::affine_scalar(&w, c).unwrap();
        let k = w.len();
        let space = BMetricSpace::squared_euclidean(Domain::cube(1, -10.0, 10.0).unwrap());
        let start: Vec<Point> = seeds[..k].iter().map(|&x| Point::scalar(x)).collect();
        let stop = StopRule { max_iterations: 200, ..StopRule::default() };
        let t = iterate(&op, &space, &start, &stop).unwrap();
        for (i, a) in t.alphas.iter().enumerate() {
            prop_assert_eq!(*a, space.distance(&t.points[i], &t.points[i + 1]).unwrap());
        }
        let n = t.points.len().min(24);
        for lo in 0..n {
            for hi in lo + 2..=n {
                prop_assert!(space.chain_bound(&t.points[lo..hi]).unwrap().holds);
            }
        }
    }

    #[test]
    fn verification_is_monotone_in_the_constant(kappa in 0.05f64..0.9, extra in 0.0f64..0.5, seed in any::<u64>()) {
        let op = PresicOperator::averaging(2, 1).unwrap();
        let space = BMetricSpace::squared_euclidean(Domain::cube(1, 0.0, 2.0).unwrap());
        let plan = SamplePlan::random(300, seed);
        let lo = check(&op, &space, &ConditionSpec::CiricMax { kappa }, &plan).unwrap();
        let hi_kappa = (kappa + extra).min(0.99);
        let hi = check(&op, &space, &ConditionSpec::CiricMax { kappa: hi_kappa }, &plan).unwrap();
        prop_assert!(!lo.passed() || hi.passed());
        prop_assert!(hi.slack_min >= lo.slack_min);
    }

    #[test]
    fn verdict_agrees_with_estimated_constant(seed in any::<u64>()) {
        let op = PresicOperator::affine_scalar(&[0.3, -0.2], 0.5).unwrap();
        let space = BMetricSpace::euclidean(Domain::cube(1, -1.0, 1.0).unwrap());
        let plan = SamplePlan::random(400, seed);
        let est = estimate_constant(&op, &space, ConstantKind::CiricMax, &plan).unwrap();
        let above = check(&op, &space, &ConditionSpec::CiricMax { kappa: est.constant_hat + 1e-6 }, &plan).unwrap();
        prop_assert!(above.passed());
        if est.constant_hat > 1e-3 {
            let below = check(&op, &space, &ConditionSpec::CiricMax { kappa: est.constant_hat - 1e-3 }, &plan).unwrap();
            prop_assert!(!below.passed());
        }
    }
}

#[test]
fn constant_estimates_grow_with_samples() {
    let op = PresicOperator::dsl(2, 1, &["(x1 + x2)/4 + x2^2/20"]).unwrap();
    let space = BMetricSpace::squared_euclidean(Domain::cube(1, 0.0, 2.0).unwrap());
    let mut prev = 0.0;
    for n in [10, 100, 1000, 5000] {
        let e = estimate_constant(&op, &space, ConstantKind::CiricMax, &SamplePlan::random(n, 3)).unwrap();
        assert!(e.constant_hat >= prev);
        prev = e.constant_hat;
    }
}

#[test]
fn parallel_and_sequential_scans_agree() {
    let op = PresicOperator::averaging(3, 2).unwrap();
    let space = BMetricSpace::squared_euclidean(Domain::cube(2, 0.0, 2.0).unwrap());
    for cond in [
        ConditionSpec::CiricMax { kappa: 0.2 },
        ConditionSpec::CiricMax { kappa: 0.3 },
        ConditionSpec::DiagonalStrict,
    ] {
        let plan = SamplePlan::random(5000, 99);
        let par = check(&op, &space, &cond, &plan).unwrap();
        let seq = check(&op, &space, &cond, &plan.sequential()).unwrap();
        assert_eq!(par, seq);
    }
}

#[test]
fn estimate_b_is_sharp_for_power_metrics() {
    for p in [2.0f64, 3.0] {
        let space = BMetricSpace::new(
            MetricKind::Power {
                base: BaseMetric::Euclidean,
                p,
            },
            Domain::cube(1, 0.0, 1.0).unwrap(),
            None,
        )
        .unwrap();
        let est = space.estimate_b(&SamplePlan::grid(100)).unwrap();
        let b = 2f64.powf(p - 1.0);
        assert!(est.b_hat >= b - 0.05 && est.b_hat <= b + 1e-9, "p={p}: {}", est.b_hat);
    }
}

#[test]
fn multi_start_limits_agree_for_diagonally_strict_operators() {
    let op = PresicOperator::affine_scalar(&[0.2, 0.3], 1.0).unwrap();
    let space = BMetricSpace::euclidean(Domain::cube(1, -5.0, 5.0).unwrap());
    let cert = check(
        &op,
        &space,
        &ConditionSpec::DiagonalStrict,
        &SamplePlan::random(2000, 1),
    )
    .unwrap();
    assert!(cert.passed());
    let limits: Vec<Point> = (0..20)
        .map(|i| {
            let x = -4.0 + 0.4 * i as f64;
            let t = iterate(
                &op,
                &space,
                &[Point::scalar(x), Point::scalar(-x)],
                &StopRule::default(),
            )
            .unwrap();
            assert!(t.converged());
            t.limit.unwrap()
        })
        .collect();
    for a in &limits {
        for b in &limits {
            assert!(space.distance(a, b).unwrap() < 1e-6);
        }
    }
    // The diagonal map F(x) = x/2 + 1 fixes 2.
    assert!((limits[0].coords()[0] - 2.0).abs() < 1e-8);
    let p = picard(&op, &space, &Point::scalar(-4.0), &StopRule::default()).unwrap();
    assert!((p.limit.unwrap().coords()[0] - 2.0).abs() < 1e-8);
}
