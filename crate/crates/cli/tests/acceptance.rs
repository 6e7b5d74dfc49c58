//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::time::Instant;

use presic_cli::{bundled_problem, cmd_solve, cmd_verify, probe_uniqueness, RunOptions, BUNDLED_PROBLEMS};
use presic_core::{
    check, estimate_constant, iterate, kannan_bounds, picard, presic_bounds, verify, window_max_nonincreasing,
    witness_reproduces, BMetricSpace, BaseMetric, ConditionSpec, ConstantKind, Domain, MetricKind, PhiFunction, Point,
    PresicOperator, SamplePlan, StartConfig, StopRule,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn line(lo: f64, hi: f64) -> Domain {
    Domain::cube(1, lo, hi).unwrap()
}

fn example_reproduction() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for k in [1, 2, 3, 5] {
        let problem = bundled_problem(&format!("averaging-k{k}"))
            .map_err(err)?
            .build()
            .map_err(err)?;
        // The fixed point is 0: F(0) = 0 for the averaging map.
        ensure(
            problem.operator.diagonal_apply(&Point::scalar(0.0)).map_err(err)? == Point::scalar(0.0),
            "0 is not fixed",
        )?;
        let stop = problem.solve.as_ref().unwrap().stop;
        for run in 0..20 {
            let init = StartConfig::default().resolve(&problem.space, k, 7, run).map_err(err)?;
            ensure(
                init.iter().all(|p| problem.space.domain().contains(p)),
                "start outside [0,2]",
            )?;
            let t = iterate(&problem.operator, &problem.space, &init, &stop).map_err(err)?;
            let u = t.limit.clone().ok_or(format!("k={k} run {run}: {:?}", t.stop_reason))?;
            let res = t.final_residual.unwrap();
            ensure(u.coords()[0].abs() <= 1e-8, format!("k={k} run {run}: limit {u}"))?;
            ensure(res < 1e-10, format!("k={k} run {run}: residual {res}"))?;
            worst = worst.max(u.coords()[0].abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 5.0, format!("took {secs:.2}s"))?;
    Ok(format!("80 runs, max |u| = {worst:.2e}, {secs:.2}s"))
}

fn sharp_constant() -> Outcome {
    let space = BMetricSpace::squared_euclidean(line(0.0, 2.0));
    let one = PresicOperator::averaging(1, 1).map_err(err)?;
    // k = 1: d(x/2, y/2) / d(x, y) = 1/4 for every pair.
    let e1 = estimate_constant(&one, &space, ConstantKind::CiricMax, &SamplePlan::random(10_000, 1)).map_err(err)?;
    ensure(
        (e1.constant_hat - 0.25).abs() <= 1e-6,
        format!("k=1: {}", e1.constant_hat),
    )?;

    let two = PresicOperator::averaging(2, 1).map_err(err)?;
    let g = 101;
    let e2 = estimate_constant(&two, &space, ConstantKind::CiricMax, &SamplePlan::grid(g)).map_err(err)?;
    // Independent grid search over the same nodes.
    let nodes: Vec<f64> = (0..g).map(|i| 2.0 * i as f64 / (g - 1) as f64).collect();
    let mut oracle: f64 = 0.0;
    for &a in &nodes {
        for &b in &nodes {
            for &c in &nodes {
                let base = ((a - b) * (a - b)).max((b - c) * (b - c));
                if base > 0.0 {
                    let diff = (a + b) / 4.0 - (b + c) / 4.0;
                    oracle = oracle.max(diff * diff / base);
                }
            }
        }
    }
    ensure(
        (e2.constant_hat - 0.25).abs() <= 5e-3,
        format!("k=2: {}", e2.constant_hat),
    )?;
    ensure((oracle - 0.25).abs() <= 5e-3, format!("oracle {oracle}"))?;
    ensure(
        (e2.constant_hat - oracle).abs() <= 1e-9,
        format!("estimate {} vs oracle {oracle}", e2.constant_hat),
    )?;
    Ok(format!(
        "k=1: {:.9}, k=2 grid: {:.9} (oracle {oracle:.9})",
        e1.constant_hat, e2.constant_hat
    ))
}

fn b_sharpness() -> Outcome {
    let mut parts = Vec::new();
    for p in [2.0f64, 3.0] {
        let kind = MetricKind::Power {
            base: BaseMetric::Euclidean,
            p,
        };
        let space = BMetricSpace::new(kind, line(0.0, 1.0), None).map_err(err)?;
        let est = space.estimate_b(&SamplePlan::grid(100)).map_err(err)?;
        let b = 2f64.powf(p - 1.0);
        ensure(
            est.b_hat >= b - 0.05 && est.b_hat <= b + 1e-9,
            format!("p={p}: b_hat {}", est.b_hat),
        )?;
        parts.push(format!("p={p}: {:.6}", est.b_hat));
    }
    let lp = BMetricSpace::new(
        MetricKind::LpTruncated { p: 0.5 },
        Domain::cube(4, -1.0, 1.0).unwrap(),
        None,
    )
    .map_err(err)?;
    let est = lp.estimate_b(&SamplePlan::random(20_000, 2)).map_err(err)?;
    ensure(est.b_hat <= 4.0 + 1e-9, format!("l_1/2: b_hat {}", est.b_hat))?;
    parts.push(format!("l_1/2 dim 4: {:.6}", est.b_hat));
    Ok(parts.join(", "))
}

fn builtin_spaces(dim: usize) -> Vec<BMetricSpace> {
    let dom = Domain::cube(dim, -5.0, 5.0).unwrap();
    [
        MetricKind::Euclidean,
        MetricKind::SquaredEuclidean,
        MetricKind::Power {
            base: BaseMetric::Euclidean,
            p: 3.0,
        },
        MetricKind::Power {
            base: BaseMetric::Manhattan,
            p: 2.0,
        },
        MetricKind::LpTruncated { p: 0.5 },
        MetricKind::LpTruncated { p: 3.0 },
    ]
    .into_iter()
    .map(|k| BMetricSpace::new(k, dom.clone(), None).unwrap())
    .collect()
}

fn chain_bound_suite() -> Outcome {
    let spaces = builtin_spaces(3);
    let mut checked = 0;
    for (si, space) in spaces.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + si as u64);
        for case in 0..1000 {
            let len = rng.gen_range(2..=20);
            let pts: Vec<Point> = (0..len)
                .map(|_| Point::new((0..3).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap())
                .collect();
            let c = space.chain_bound(&pts).map_err(err)?;
            ensure(
                c.holds,
                format!("{:?} case {case}: {} > {}", space.kind(), c.lhs, c.rhs),
            )?;
            checked += 1;
        }
    }
    Ok(format!("{checked} sequences in {} spaces, 0 failures", spaces.len()))
}

fn bound_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut verified = 0;
    for case in 0..100 {
        let k = rng.gen_range(1..=3usize);
        let budget = rng.gen_range(0.1..0.8);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm: f64 = raw.iter().map(|a: &f64| a.abs()).sum();
        let weights: Vec<f64> = raw.iter().map(|a| a / norm * budget).collect();
        let offset = rng.gen_range(-1.0..1.0);
        let op = PresicOperator::affine_scalar(&weights, offset).map_err(err)?;
        let space = if case % 2 == 0 {
            BMetricSpace::euclidean(line(-2.0, 2.0))
        } else {
            BMetricSpace::squared_euclidean(line(-2.0, 2.0))
        };
        // Equal steps of size 4/k with any sign pattern lie on these grids.
        let g = [21, 21, 13][k - 1];
        let est = estimate_constant(&op, &space, ConstantKind::CiricMax, &SamplePlan::grid(g)).map_err(err)?;
        let eta = est.constant_hat + 0.01;
        if eta >= 1.0 {
            continue;
        }
        let cert = check(
            &op,
            &space,
            &ConditionSpec::CiricMax { kappa: eta },
            &SamplePlan::random(3000, case),
        )
        .map_err(err)?;
        if !cert.passed() {
            continue;
        }
        verified += 1;
        let init: Vec<Point> = (0..k).map(|_| Point::scalar(rng.gen_range(-2.0..2.0))).collect();
        let t = iterate(&op, &space, &init, &StopRule::default()).map_err(err)?;
        let report = presic_bounds(&t, eta, space.b(), k).map_err(err)?;
        ensure(
            report.all_steps_within,
            format!("case {case}: step {:?} exceeds its bound", report.first_violation),
        )?;
        ensure(
            window_max_nonincreasing(&t, k),
            format!("case {case}: window max increased"),
        )?;
    }
    ensure(verified > 0, "no operator verified")?;
    Ok(format!("{verified}/100 operators verified, all traces within bounds"))
}

fn kannan_scheme() -> Outcome {
    let problem = bundled_problem("kannan-quarter").map_err(err)?.build().map_err(err)?;
    let (op, space) = (&problem.operator, &problem.space);
    let a = 2.0 / 3.0;
    let cert = verify(op, space, &ConditionSpec::Kannan { a }, &SamplePlan::random(20_000, 3)).map_err(err)?;
    ensure(cert.passed(), "kannan verification falsified")?;
    let conv = picard(op, space, &Point::scalar(1.0), &StopRule::default()).map_err(err)?;
    ensure(conv.converged(), "picard did not converge")?;
    ensure(conv.limit.as_ref().unwrap().coords()[0].abs() < 1e-9, "limit is not 0")?;

    let stop = StopRule {
        residual_tol: 1e-300,
        step_tol: 1e-300,
        max_iterations: 50,
        ..StopRule::default()
    };
    let t = picard(op, space, &Point::scalar(1.0), &stop).map_err(err)?;
    ensure(t.points.len() == 51, format!("{} points", t.points.len()))?;
    let d01 = space.distance(&t.points[0], &t.points[1]).map_err(err)?;
    ensure((d01 - 0.75).abs() < 1e-15, format!("d01 = {d01}"))?;
    let mut worst: f64 = f64::INFINITY;
    for n in 0..50 {
        let bound = kannan_bounds(a, 1, 1.0, 0.75, n).map_err(err)?;
        // (b lambda)^n d01 / (1 - b lambda) with lambda = 2/3.
        let closed = a.powi(n as i32) * 0.75 / (1.0 - a);
        ensure(
            (bound - closed).abs() <= 1e-12 * closed,
            format!("n={n}: {bound} vs {closed}"),
        )?;
        for m in n + 1..=50 {
            let d = space.distance(&t.points[n], &t.points[m]).map_err(err)?;
            ensure(d <= bound + 1e-12, format!("d(x_{n}, x_{m}) = {d} > {bound}"))?;
            worst = worst.min(bound - d);
        }
    }
    Ok(format!(
        "verified, limit {:.1e}, min slack {worst:.3e}",
        conv.limit.unwrap().coords()[0]
    ))
}

// The piecewise comparison function on its first two pieces, written out independently.
fn phi_oracle(t: f64) -> f64 {
    if t < 2.5 {
        t / 5.0
    } else {
        assert!(t <= 4.25);
        4.0 * (4.0 * t - 3.0) / 7.0
    }
}

fn phi_anomaly() -> Outcome {
    let op = PresicOperator::averaging(1, 1).map_err(err)?;
    let cond = ConditionSpec::WeakPhi {
        phi: PhiFunction::Piecewise,
    };
    let full = BMetricSpace::squared_euclidean(line(0.0, 2.0));
    let plan = SamplePlan::random(10_000, 7);
    let cert = verify(&op, &full, &cond, &plan).map_err(err)?;
    let w = cert.witness.clone().ok_or("full box passed")?;
    ensure(!cert.passed(), "verdict not falsified")?;
    ensure(
        witness_reproduces(&op, &full, &cond, &w).map_err(err)?,
        "witness does not reproduce",
    )?;
    let (x, y) = (w.window[0].coords()[0], w.window[1].coords()[0]);
    let m = (x - y) * (x - y);
    ensure((2.5..=4.0).contains(&m), format!("M = {m}"))?;
    let lhs = ((x - y) / 2.0).powi(2);
    let rhs = m - phi_oracle(m);
    ensure(lhs > rhs, format!("oracle says lhs {lhs} <= rhs {rhs}"))?;
    let again = verify(&op, &full, &cond, &plan).map_err(err)?;
    ensure(again == cert, "second run differs")?;

    let sub = BMetricSpace::squared_euclidean(line(0.0, 1.5));
    let ok = verify(&op, &sub, &cond, &plan).map_err(err)?;
    ensure(ok.passed(), "sub-box falsified")?;
    Ok(format!("witness ({x:.4}, {y:.4}) with M = {m:.4}; sub-box passed"))
}

fn dominant_eigenvalue() -> f64 {
    // Companion matrix of x_{n+2} = (x_n + x_{n+1}) / 4, by power iteration.
    let (mut u, mut v) = (1.0f64, 1.0f64);
    let mut lambda = 0.0;
    for _ in 0..200 {
        let (nu, nv) = (v, 0.25 * u + 0.25 * v);
        let norm = nu.abs().max(nv.abs());
        lambda = nv / v;
        u = nu / norm;
        v = nv / norm;
    }
    lambda
}

fn rate_estimation() -> Outcome {
    let lambda = dominant_eigenvalue();
    let oracle = lambda * lambda;
    ensure((oracle - 0.4101).abs() < 1e-4, format!("oracle {oracle}"))?;
    let problem = bundled_problem("averaging-k2").map_err(err)?.build().map_err(err)?;
    let eta = 0.25;
    let cert = check(
        &problem.operator,
        &problem.space,
        &ConditionSpec::CiricMax { kappa: eta },
        &SamplePlan::random(10_000, 8),
    )
    .map_err(err)?;
    ensure(cert.passed(), "eta = 0.25 not verified")?;
    let init = vec![Point::scalar(2.0), Point::scalar(0.5)];
    let t = iterate(&problem.operator, &problem.space, &init, &problem.solve.unwrap().stop).map_err(err)?;
    let theta = t.fitted_rate.ok_or("no fitted rate")?;
    ensure((theta - oracle).abs() <= 0.01, format!("theta_hat {theta} vs {oracle}"))?;
    ensure(theta <= eta.sqrt() + 0.01, format!("theta_hat {theta} above eta^(1/2)"))?;
    Ok(format!("theta_hat = {theta:.5}, oracle = {oracle:.5}"))
}

fn uniqueness_probe() -> Outcome {
    let mut probed = Vec::new();
    for (name, _) in BUNDLED_PROBLEMS {
        let problem = bundled_problem(name).map_err(err)?.build().map_err(err)?;
        let cert = check(
            &problem.operator,
            &problem.space,
            &ConditionSpec::DiagonalStrict,
            &SamplePlan::random(5_000, 9),
        )
        .map_err(err)?;
        if !cert.passed() {
            continue;
        }
        let probe = probe_uniqueness(&problem, 20, 11).map_err(err)?;
        ensure(probe.spread < 1e-6, format!("{name}: spread {}", probe.spread))?;
        probed.push(*name);
    }
    ensure(!probed.is_empty(), "no operator passed diagonal_strict")?;
    Ok(format!("{} operators probed: {}", probed.len(), probed.join(", ")))
}

fn determinism() -> Outcome {
    let mut compared = 0;
    for (name, _) in BUNDLED_PROBLEMS {
        let problem = bundled_problem(name).map_err(err)?;
        for parallel in [true, false] {
            let opts = RunOptions {
                seed: Some(42),
                samples: 4000,
                parallel,
                ..RunOptions::default()
            };
            let v1 = cmd_verify(&problem, &opts).map_err(err)?;
            let v2 = cmd_verify(&problem, &opts).map_err(err)?;
            ensure(v1 == v2, format!("{name}: verify output differs"))?;
            let s1 = cmd_solve(&problem, &opts).map_err(err)?;
            let s2 = cmd_solve(&problem, &opts).map_err(err)?;
            ensure(s1 == s2, format!("{name}: solve output differs"))?;
            let seq = RunOptions {
                parallel: false,
                ..opts.clone()
            };
            ensure(
                cmd_verify(&problem, &seq).map_err(err)? == v1,
                format!("{name}: parallel and sequential verify differ"),
            )?;
            compared += 1;
        }
    }
    Ok(format!("{compared} problem/mode pairs byte-identical"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("averaging example converges to 0", example_reproduction),
        ("sharp ciric_max constant", sharp_constant),
        ("b-constant sharpness", b_sharpness),
        ("chain bound property suite", chain_bound_suite),
        ("per-step bound validity", bound_validity),
        ("kannan scheme bounds", kannan_scheme),
        ("phi anomaly detection", phi_anomaly),
        ("rate estimation", rate_estimation),
        ("uniqueness probe", uniqueness_probe),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail} [{secs:.2}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
