//! k-step iteration `x_{n+k} = f(x_n, ..., x_{n+k-1})`, the diagonal Picard
//! scheme `x_{n+1} = F(x_n)`, and the a priori bounds that accompany them.

use serde::{Deserialize, Serialize};

use crate::bmetric::{BMetricSpace, Point};
use crate::error::{Error, Result};
use crate::operator::PresicOperator;
use crate::tolerance::exceeds;

/// Divergence is declared once a step exceeds this multiple of `1 + alpha_1`.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// Minimum number of nonzero steps needed to fit a rate.
pub const MIN_RATE_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopRule {
    pub residual_tol: f64,
    /// Tolerance on the consecutive-step distance `alpha_n`.
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Look-ahead `P` used by Cauchy profiles of the trace.
    pub cauchy_window: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            residual_tol: 1e-10,
            step_tol: 1e-10,
            max_iterations: 1_000_000,
            cauchy_window: 16,
        }
    }
}

impl StopRule {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.residual_tol > 0.0 && self.step_tol > 0.0) {
            return Err(Error::InvalidParameter("stop tolerances must be positive".into()));
        }
        if self.max_iterations < k + 1 {
            return Err(Error::InvalidParameter(format!(
                "max_iterations must be at least k + 1 = {}",
                k + 1
            )));
        }
        if self.cauchy_window == 0 {
            return Err(Error::InvalidParameter("cauchy_window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Index of `points[0]`: 1 for k-step runs, 0 for Picard runs.
    pub first_index: usize,
    /// Number of arguments each step consumed.
    pub arity: usize,
    pub points: Vec<Point>,
    /// `alphas[i] = d(points[i], points[i + 1])`.
    pub alphas: Vec<f64>,
    pub stop_reason: StopReason,
    pub limit: Option<Point>,
    pub final_residual: Option<f64>,
    pub fitted_rate: Option<f64>,
    /// Number of generated points that left the box.
    pub out_of_domain: usize,
}

impl IterationTrace {
    pub fn converged(&self) -> bool {
        self.stop_reason == StopReason::Converged
    }

    pub fn iterations(&self) -> usize {
        self.points.len() - self.arity
    }

    pub fn last(&self) -> &Point {
        self.points.last().expect("trace is never empty")
    }
}

struct Runner<'a> {
    op: &'a PresicOperator,
    space: &'a BMetricSpace,
    stop: StopRule,
    points: Vec<Point>,
    alphas: Vec<f64>,
    out_of_domain: usize,
}

impl Runner<'_> {
    fn admit(&mut self, p: &Point) -> Result<()> {
        self.space.check_dim(p)?;
        if self.op.check_codomain(self.space.domain(), p)? {
            self.out_of_domain += 1;
        }
        Ok(())
    }

    fn push(&mut self, p: Point) -> Result<f64> {
        let alpha = self.space.distance(self.points.last().unwrap(), &p)?;
        self.points.push(p);
        self.alphas.push(alpha);
        Ok(alpha)
    }

    /// Runs until a stop rule fires; `step` produces the next point and
    /// `recent` is how many trailing steps must be small for convergence.
    fn run<S>(mut self, first_index: usize, arity: usize, recent: usize, step: S) -> Result<IterationTrace>
    where
        S: Fn(&[Point]) -> Result<Point>,
    {
        let mut stop_reason = StopReason::MaxIterations;
        let mut alpha_1: Option<f64> = self.alphas.first().copied();
        for _ in 0..self.stop.max_iterations {
            let next = step(&self.points[self.points.len() - arity..])?;
            self.admit(&next)?;
            let alpha = self.push(next)?;
            let reference = *alpha_1.get_or_insert(alpha);
            if alpha > DIVERGENCE_FACTOR * (1.0 + reference) {
                stop_reason = StopReason::Diverged;
                break;
            }
            let settled = self.alphas.len() >= recent
                && self.alphas[self.alphas.len() - recent..]
                    .iter()
                    .all(|&a| a <= self.stop.step_tol);
            if settled && self.op.residual(self.space, self.points.last().unwrap())? <= self.stop.residual_tol {
                stop_reason = StopReason::Converged;
                break;
            }
        }
        let last = self.points.last().unwrap().clone();
        let final_residual = self.op.residual(self.space, &last).ok();
        let mut trace = IterationTrace {
            first_index,
            arity,
            points: self.points,
            alphas: self.alphas,
            stop_reason,
            limit: (stop_reason == StopReason::Converged).then_some(last),
            final_residual,
            fitted_rate: None,
            out_of_domain: self.out_of_domain,
        };
        trace.fitted_rate = estimate_rate(&trace);
        Ok(trace)
    }
}

fn runner<'a>(op: &'a PresicOperator, space: &'a BMetricSpace, stop: StopRule) -> Result<Runner<'a>> {
    if op.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            found: op.dim(),
        });
    }
    Ok(Runner {
        op,
        space,
        stop,
        points: Vec::new(),
        alphas: Vec::new(),
        out_of_domain: 0,
    })
}

/// Runs `x_{n+k} = f(x_n, ..., x_{n+k-1})` from `k` seed points.
///
/// Convergence requires the last `k` steps below `step_tol` and
/// `d(x, f(x, ..., x)) <= residual_tol` at the newest point.
pub fn iterate(
    op: &PresicOperator,
    space: &BMetricSpace,
    initial: &[Point],
    stop: &StopRule,
) -> Result<IterationTrace> {
    let k = op.arity();
    stop.validate(k)?;
    if initial.len() != k {
        return Err(Error::Usage(format!(
            "iteration of arity {k} needs {k} starting points, got {}",
            initial.len()
        )));
    }
    let mut r = runner(op, space, *stop)?;
    for p in initial {
        r.admit(p)?;
        if r.points.is_empty() {
            r.points.push(p.clone());
        } else {
            r.push(p.clone())?;
        }
    }
    r.run(1, k, k, |window| op.apply(window))
}

/// Runs the diagonal scheme `x_{n+1} = F(x_n)` from `x0`.
pub fn picard(op: &PresicOperator, space: &BMetricSpace, x0: &Point, stop: &StopRule) -> Result<IterationTrace> {
    stop.validate(1)?;
    let mut r = runner(op, space, *stop)?;
    r.admit(x0)?;
    r.points.push(x0.clone());
    r.run(0, 1, 1, |window| op.diagonal_apply(&window[0]))
}

/// Per-step bounds `alpha_n <= b^k K theta^n` for a trace of an operator
/// satisfying the max-condition with constant `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub eta: f64,
    pub b: f64,
    pub k: usize,
    /// `eta^(1/k)`.
    pub theta: f64,
    /// `max(alpha_1 / theta, ..., alpha_k / theta^k)`.
    #[serde(rename = "K")]
    pub big_k: f64,
    /// `b^k K theta^n` for `n = 1, 2, ...`, aligned with the trace's alphas.
    pub per_step_bounds: Vec<f64>,
    pub all_steps_within: bool,
    /// First `n` (1-based) whose step exceeded its bound.
    pub first_violation: Option<usize>,
}

impl BoundReport {
    /// `b^p K theta^n / (1 - theta)`, the bound on `d(x_n, x_{n+p})`.
    pub fn tail_bound(&self, n: usize, p: usize) -> f64 {
        self.b.powi(p as i32) * self.big_k * self.theta.powi(n as i32) / (1.0 - self.theta)
    }

    /// Tail bounds next to the observed `d(x_n, x_{n+p})` along a trace.
    pub fn tail_profile(&self, trace: &IterationTrace, space: &BMetricSpace, p: usize) -> Result<Vec<TailCheck>> {
        let pts = &trace.points;
        (0..pts.len().saturating_sub(p))
            .map(|i| {
                let n = i + 1;
                let bound = self.tail_bound(n, p);
                let observed = space.distance(&pts[i], &pts[i + p])?;
                Ok(TailCheck {
                    n,
                    p,
                    bound,
                    observed,
                    within: !exceeds(observed, bound),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub n: usize,
    pub p: usize,
    pub bound: f64,
    pub observed: f64,
    pub within: bool,
}

pub fn presic_bounds(trace: &IterationTrace, eta: f64, b: f64, k: usize) -> Result<BoundReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Usage(format!("eta must lie in (0, 1), got {eta}")));
    }
    if !(b.is_finite() && b >= 1.0) {
        return Err(Error::Usage(format!("b must be >= 1, got {b}")));
    }
    if k == 0 || trace.points.len() < k + 1 {
        return Err(Error::Usage(format!(
            "bounds for k = {k} need at least {} trace points",
            k + 1
        )));
    }
    let theta = eta.powf(1.0 / k as f64);
    let big_k = (1..=k)
        .map(|i| trace.alphas[i - 1] / theta.powi(i as i32))
        .fold(0.0, f64::max);
    let scale = b.powi(k as i32) * big_k;
    let per_step_bounds: Vec<f64> = (1..=trace.alphas.len()).map(|n| scale * theta.powi(n as i32)).collect();
    let first_violation = trace
        .alphas
        .iter()
        .zip(&per_step_bounds)
        .position(|(&a, &bound)| exceeds(a, bound))
        .map(|i| i + 1);
    Ok(BoundReport {
        eta,
        b,
        k,
        theta,
        big_k,
        per_step_bounds,
        all_steps_within: first_violation.is_none(),
        first_violation,
    })
}

/// `(b lambda)^n / (1 - b lambda) * d01` with `lambda = a k b^k`: a bound on
/// `d(x_n, x_m)`, `m > n`, along the Picard scheme of a Kannan-type operator.
pub fn kannan_bounds(a: f64, k: usize, b: f64, d01: f64, n: usize) -> Result<f64> {
    if k == 0 || a.is_nan() || a < 0.0 || b.is_nan() || b < 1.0 || d01.is_nan() || d01 < 0.0 {
        return Err(Error::Usage(format!(
            "kannan bound needs a >= 0, k >= 1, b >= 1, d01 >= 0 (got a={a}, k={k}, b={b}, d01={d01})"
        )));
    }
    let b_lambda = a * k as f64 * b.powi(k as i32 + 1);
    if b_lambda >= 1.0 {
        return Err(Error::Usage(format!("a k b^(k+1) = {b_lambda} must be below 1")));
    }
    Ok(b_lambda.powi(n as i32) / (1.0 - b_lambda) * d01)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KannanRow {
    pub n: usize,
    pub bound: f64,
    /// `max_{n < m} d(x_n, x_m)` over the trace.
    pub observed: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KannanReport {
    pub a: f64,
    pub k: usize,
    pub b: f64,
    pub lambda: f64,
    pub d01: f64,
    pub rows: Vec<KannanRow>,
    pub all_within: bool,
}

/// Largest trace prefix compared pairwise by [`kannan_report`].
pub const KANNAN_PAIRWISE_LIMIT: usize = 512;

/// Compares a Picard trace against [`kannan_bounds`] for every `n`.
pub fn kannan_report(trace: &IterationTrace, space: &BMetricSpace, a: f64, k: usize) -> Result<KannanReport> {
    let b = space.b();
    let pts = &trace.points[..trace.points.len().min(KANNAN_PAIRWISE_LIMIT)];
    if pts.len() < 2 {
        return Err(Error::Usage("kannan report needs at least 2 trace points".into()));
    }
    let d01 = space.distance(&pts[0], &pts[1])?;
    let mut rows = Vec::with_capacity(pts.len() - 1);
    for n in 0..pts.len() - 1 {
        let bound = kannan_bounds(a, k, b, d01, n)?;
        let mut observed: f64 = 0.0;
        for m in n + 1..pts.len() {
            observed = observed.max(space.distance(&pts[n], &pts[m])?);
        }
        rows.push(KannanRow {
            n,
            bound,
            observed,
            within: !exceeds(observed, bound),
        });
    }
    Ok(KannanReport {
        a,
        k,
        b,
        lambda: a * k as f64 * b.powi(k as i32),
        d01,
        all_within: rows.iter().all(|r| r.within),
        rows,
    })
}

/// Geometric decay rate fitted by least squares to `log alpha_n` over the
/// trailing half of the nonzero steps; `None` with fewer than
/// [`MIN_RATE_POINTS`] nonzero steps.
pub fn estimate_rate(trace: &IterationTrace) -> Option<f64> {
    let nonzero: Vec<(f64, f64)> = trace
        .alphas
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, &a)| (i as f64, a.ln()))
        .collect();
    if nonzero.len() < MIN_RATE_POINTS {
        return None;
    }
    let tail = &nonzero[nonzero.len() / 2..];
    let len = tail.len() as f64;
    let mean_x = tail.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_y = tail.iter().map(|p| p.1).sum::<f64>() / len;
    let (sxy, sxx) = tail.iter().fold((0.0, 0.0), |(sxy, sxx), &(x, y)| {
        (sxy + (x - mean_x) * (y - mean_y), sxx + (x - mean_x) * (x - mean_x))
    });
    let rate = (sxy / sxx).exp();
    rate.is_finite().then_some(rate)
}

/// `s_n = max_{1 <= p <= P} d(x_n, x_{n+p})` for every `n` with `n + P` in the trace.
pub fn cauchy_profile(trace: &IterationTrace, space: &BMetricSpace, p: usize) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::Usage("Cauchy look-ahead must be at least 1".into()));
    }
    let pts = &trace.points;
    (0..pts.len().saturating_sub(p))
        .map(|n| (1..=p).try_fold(0.0f64, |acc, j| Ok(acc.max(space.distance(&pts[n], &pts[n + j])?))))
        .collect()
}

/// True when `max(alpha_{n+1..n+k}) <= max(alpha_{n..n+k-1})` (within
/// tolerance) at every position of the trace.
pub fn window_max_nonincreasing(trace: &IterationTrace, k: usize) -> bool {
    if k == 0 || trace.alphas.len() <= k {
        return true;
    }
    let maxes: Vec<f64> = trace
        .alphas
        .windows(k)
        .map(|w| w.iter().copied().fold(0.0, f64::max))
        .collect();
    maxes.windows(2).all(|w| !exceeds(w[1], w[0]))
}
