//! Bundled reproductions with pass/fail summary tables.

use presic_core::{
    check, witness_reproduces, BMetricSpace, BaseMetric, ConditionSpec, Domain, MetricKind, PhiFunction, Point,
    PresicOperator, SamplePlan, Witness,
};
use serde::Serialize;

use crate::{bundled_problem, csv_text, run_trace, table, to_json, CliError, CliResult, Format, Outcome, RunOptions};

pub const DEMOS: &[&str] = &["paper-example-2-1-2", "paper-bmetric-examples", "paper-phi-anomaly"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRow {
    pub check: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct DemoReport {
    demo: String,
    all_pass: bool,
    rows: Vec<DemoRow>,
    notes: Vec<String>,
}

pub fn cmd_demo(name: &str, opts: &RunOptions) -> CliResult<Outcome> {
    let (rows, notes) = match name {
        "paper-example-2-1-2" => (averaging_example(opts)?, Vec::new()),
        "paper-bmetric-examples" => (bmetric_examples(opts)?, Vec::new()),
        "paper-phi-anomaly" => phi_anomaly(opts)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown demo {other}; choose one of {}",
                DEMOS.join(", ")
            )))
        }
    };
    let report = DemoReport {
        demo: name.to_string(),
        all_pass: rows.iter().all(|r| r.pass),
        rows,
        notes,
    };
    let code = if report.all_pass {
        crate::EXIT_OK
    } else {
        crate::EXIT_FAILED
    };
    let cells: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.check.clone(),
                r.expected.clone(),
                r.observed.clone(),
                if r.pass { "PASS" } else { "FAIL" }.to_string(),
            ]
        })
        .collect();
    let body = match opts.format {
        Some(Format::Json) => to_json(&report)?,
        Some(Format::Csv) => csv_text(&["check", "expected", "observed", "pass"], &cells)?,
        None => {
            let mut s = format!("{name}\n\n");
            s.push_str(&table(&["check", "expected", "observed", "result"], &cells));
            for n in &report.notes {
                s.push('\n');
                s.push_str(n);
                s.push('\n');
            }
            s
        }
    };
    Ok(Outcome { code, body })
}

/// `(x_1 + ... + x_k) / (2k)` on [0,2] under the squared distance, from 20 random starts per arity.
fn averaging_example(opts: &RunOptions) -> CliResult<Vec<DemoRow>> {
    let mut rows = Vec::new();
    for k in [1, 2, 3, 5] {
        let problem = bundled_problem(&format!("averaging-k{k}"))?.build()?;
        let runs = 20;
        let mut converged = 0;
        let mut worst_limit: f64 = 0.0;
        let mut worst_residual: f64 = 0.0;
        for run in 0..runs {
            let t = run_trace(&problem, opts, false, run)?;
            converged += usize::from(t.converged());
            let u = t.limit.as_ref().unwrap_or_else(|| t.last());
            worst_limit = worst_limit.max(u.coords().iter().fold(0.0, |m, c| m.max(c.abs())));
            worst_residual = worst_residual.max(t.final_residual.unwrap_or(f64::INFINITY));
        }
        rows.push(DemoRow {
            check: format!("k = {k}, {runs} random starts in [0,2]"),
            expected: "converged, |u| <= 1e-8, residual < 1e-10".into(),
            observed: format!(
                "{converged}/{runs} converged, max |u| = {worst_limit:.2e}, max residual = {worst_residual:.2e}"
            ),
            pass: converged == runs && worst_limit <= 1e-8 && worst_residual < 1e-10,
        });
    }
    Ok(rows)
}

fn bmetric_examples(opts: &RunOptions) -> CliResult<Vec<DemoRow>> {
    let mut rows = Vec::new();
    for p in [2.0f64, 3.0] {
        let space = BMetricSpace::new(
            MetricKind::Power {
                base: BaseMetric::Euclidean,
                p,
            },
            Domain::cube(1, 0.0, 1.0)?,
            None,
        )?;
        let b = 2f64.powf(p - 1.0);
        let est = space.estimate_b(&SamplePlan::grid(100))?;
        rows.push(DemoRow {
            check: format!("|x - y|^{p} on [0,1], 100-point grid"),
            expected: format!("b_hat in [{:.2}, {b}]", b - 0.05),
            observed: format!("b_hat = {:.6}", est.b_hat),
            pass: est.b_hat >= b - 0.05 && est.b_hat <= b + 1e-9,
        });
    }
    let p = 0.5;
    let space = BMetricSpace::new(MetricKind::LpTruncated { p }, Domain::cube(4, -1.0, 1.0)?, None)?;
    let bound = 2f64.powf(1.0 / p);
    let plan = SamplePlan::random(opts.samples, opts.seed());
    let est = space.estimate_b(&plan)?;
    rows.push(DemoRow {
        check: format!("l_{p} on [-1,1]^4, {} random triples", opts.samples),
        expected: format!("b_hat <= {bound}"),
        observed: format!("b_hat = {:.6}", est.b_hat),
        pass: est.b_hat <= bound + 1e-9,
    });
    Ok(rows)
}

fn window_max(space: &BMetricSpace, w: &[Point]) -> CliResult<f64> {
    w.windows(2)
        .try_fold(0.0f64, |m, pair| Ok(m.max(space.distance(&pair[0], &pair[1])?)))
}

/// The piecewise comparison function exceeds the identity on [5/2, 17/4],
/// so windows whose largest step lies there violate the weak condition.
fn phi_anomaly(opts: &RunOptions) -> CliResult<(Vec<DemoRow>, Vec<String>)> {
    let op = PresicOperator::averaging(1, 1)?;
    let full = BMetricSpace::squared_euclidean(Domain::cube(1, 0.0, 2.0)?);
    let sub = BMetricSpace::squared_euclidean(Domain::cube(1, 0.0, 1.5)?);
    let phi = PhiFunction::Piecewise;
    let cond = ConditionSpec::WeakPhi { phi: phi.clone() };
    let mut rows = Vec::new();

    let window = vec![Point::scalar(0.0), Point::scalar(2.0)];
    let lhs = full.distance(&op.apply(&window[..1])?, &op.apply(&window[1..])?)?;
    let m = window_max(&full, &window)?;
    let rhs = m - phi.eval(m)?;
    let direct = Witness {
        window: window.clone(),
        lhs,
        rhs,
        tie: false,
    };
    rows.push(DemoRow {
        check: "window (0, 2), direct evaluation".into(),
        expected: "rhs < 0 < lhs".into(),
        observed: format!("lhs = {lhs}, M = {m}, phi(M) = {:.6}, rhs = {rhs:.6}", phi.eval(m)?),
        pass: rhs < 0.0 && lhs > 0.0 && witness_reproduces(&op, &full, &cond, &direct)?,
    });

    let plan = opts.plan();
    let cert = check(&op, &full, &cond, &plan)?;
    let (observed, pass) = match &cert.witness {
        Some(w) => {
            let m = window_max(&full, &w.window)?;
            let again = witness_reproduces(&op, &full, &cond, w)?;
            let coords: Vec<String> = w.window.iter().map(|p| p.to_string()).collect();
            (
                format!(
                    "falsified at ({}), M = {m:.6}, lhs = {:.6}, rhs = {:.6}, reproduces = {again}",
                    coords.join(", "),
                    w.lhs,
                    w.rhs
                ),
                !cert.passed() && again && (2.5..=4.0).contains(&m),
            )
        }
        None => ("passed_on_samples".to_string(), false),
    };
    rows.push(DemoRow {
        check: "k = 1 on [0,2], sampled".into(),
        expected: "falsified, witness M in [5/2, 4]".into(),
        observed,
        pass,
    });

    let cert = check(&op, &sub, &cond, &plan)?;
    rows.push(DemoRow {
        check: "k = 1 on [0,1.5] (M <= 9/4), sampled".into(),
        expected: "passed_on_samples".into(),
        observed: format!(
            "{}, slack_min = {:.3e}",
            crate::verdict_name(cert.verdict),
            cert.slack_min
        ),
        pass: cert.passed(),
    });

    let notes = vec![format!(
        "phi(5/2) = {} > 5/2: for M in [5/2, 4] the right side M - phi(M) is negative, so the weak condition \
         cannot hold there. Below 5/2, phi(t) = t/5 and the condition holds with room to spare.",
        phi.eval(2.5)?
    )];
    Ok((rows, notes))
}
