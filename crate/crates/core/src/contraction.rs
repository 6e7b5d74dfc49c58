//! Sampled verification and falsification of Prešić-type contraction conditions.
//!
//! Every check draws windows `(x_1, ..., x_{k+1})` from the space's box and
//! compares `lhs = d(f(x_1..x_k), f(x_2..x_{k+1}))` against the condition's
//! right-hand side. A single violating window falsifies the condition; a pass
//! only means no sampled window violated it.
//!
//! Diagonal conditions compare `d(F(x), F(y))` on pairs `x != y` instead.

use serde::{Deserialize, Serialize};

use crate::bmetric::{BMetricSpace, Best, Point};
use crate::dsl::{Context, Expr, Scalar};
use crate::error::{Error, Result};
use crate::operator::PresicOperator;
use crate::sampling::{self, SamplePlan, Summary, TupleSource};
use crate::tolerance::exceeds;

/// Comparison function `phi` of the weak and diagonal phi-conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PhiConfig", into = "PhiConfig")]
pub enum PhiFunction {
    /// `phi(t) = c t` with `0 < c < 1`.
    Linear(f64),
    /// The piecewise function (config tag `paper_piecewise`)
    /// `t/5` on `[0, 5/2)` and `4^n (2^(n+1) t - 3) / (2^(2n+1) - 1)` on
    /// `[(4^n + 1)/2^n, (4^(n+1) + 1)/2^(n+1)]`, `n >= 1`.
    ///
    /// Consecutive branches disagree at shared endpoints (at `t = 17/4` the
    /// `n = 1` branch gives 8 and `n = 2` gives 16); the lower branch wins.
    /// Note `phi(5/2) = 4 > 5/2`.
    Piecewise,
    Dsl(Expr),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum PhiConfig {
    Linear {
        c: f64,
    },
    #[serde(rename = "paper_piecewise")]
    Piecewise,
    Dsl {
        expr: String,
    },
}

impl TryFrom<PhiConfig> for PhiFunction {
    type Error = Error;

    fn try_from(c: PhiConfig) -> Result<Self> {
        let phi = match c {
            PhiConfig::Linear { c } => PhiFunction::Linear(c),
            PhiConfig::Piecewise => PhiFunction::Piecewise,
            PhiConfig::Dsl { expr } => PhiFunction::Dsl(Expr::parse(&expr, Context::Phi)?),
        };
        phi.validate()?;
        Ok(phi)
    }
}

impl From<PhiFunction> for PhiConfig {
    fn from(p: PhiFunction) -> Self {
        match p {
            PhiFunction::Linear(c) => PhiConfig::Linear { c },
            PhiFunction::Piecewise => PhiConfig::Piecewise,
            PhiFunction::Dsl(e) => PhiConfig::Dsl { expr: e.to_string() },
        }
    }
}

impl PhiFunction {
    pub fn dsl(source: &str) -> Result<Self> {
        let phi = PhiFunction::Dsl(Expr::parse(source, Context::Phi)?);
        phi.validate()?;
        Ok(phi)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Usage(format!("phi is defined on t >= 0, got {t}")));
        }
        let v = match self {
            PhiFunction::Linear(c) => c * t,
            PhiFunction::Piecewise => piecewise(t),
            PhiFunction::Dsl(e) => e.eval(&Scalar(t))?,
        };
        if !v.is_finite() {
            return Err(Error::Numeric(format!("phi({t}) is not finite")));
        }
        Ok(v)
    }

    /// Checks `phi(0) = 0` and `phi >= 0` on a fixed set of sample points.
    ///
    /// Lower semicontinuity is not checked.
    pub fn validate(&self) -> Result<()> {
        if let PhiFunction::Linear(c) = self {
            if !(*c > 0.0 && *c < 1.0) {
                return Err(Error::InvalidParameter(format!("linear phi needs 0 < c < 1, got {c}")));
            }
        }
        let at_zero = self.eval(0.0)?;
        if at_zero != 0.0 {
            return Err(Error::InvalidParameter(format!("phi(0) = {at_zero}, expected 0")));
        }
        let probes = (1..=1000)
            .map(|j| j as f64 / 100.0)
            .chain((-20..=20).map(|e| 2f64.powi(e)));
        for t in probes {
            let v = self.eval(t)?;
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!("phi({t}) = {v} is negative")));
            }
        }
        Ok(())
    }
}

// Branch n >= 1 covers [lo_n, hi_n] with hi_n = lo_{n+1}; at a shared
// endpoint the lower branch wins.
fn piecewise(t: f64) -> f64 {
    if t < 2.5 {
        return t / 5.0;
    }
    let mut n = 1;
    loop {
        let upper = (2f64.powi(2 * (n + 1)) + 1.0) / 2f64.powi(n + 1);
        if t <= upper || !upper.is_finite() {
            return 2f64.powi(2 * n) * (2f64.powi(n + 1) * t - 3.0) / (2f64.powi(2 * n + 1) - 1.0);
        }
        n += 1;
    }
}

/// A contraction condition with its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConditionSpec {
    /// `lhs <= sum_j r_j d(x_j, x_{j+1})`.
    PresicSum { r: Vec<f64> },
    /// `lhs <= kappa max_j d(x_j, x_{j+1})`, `0 < kappa < 1`.
    CiricMax { kappa: f64 },
    /// `lhs <= lambda max_j d(x_j, x_{j+1})`, `0 <= lambda < 1`.
    LambdaMax { lambda: f64 },
    /// `lhs <= M - phi(M)` with `M = max_j d(x_j, x_{j+1})`.
    WeakPhi { phi: PhiFunction },
    /// `lhs <= a max_i d(x_i, F(x_i))`, `0 <= a k b^(k+1) < 1`.
    Kannan { a: f64 },
    /// `d(F x, F y) < d(x, y)` for `x != y`.
    DiagonalStrict,
    /// `d(F x, F y) <= d(x, y) - phi(d(x, y))`.
    DiagonalPhi { phi: PhiFunction },
    /// `d(F x, F y) <= eta d(x, y)`, `0 <= eta < 1`.
    Banach { eta: f64 },
}

impl ConditionSpec {
    pub fn is_diagonal(&self) -> bool {
        matches!(
            self,
            ConditionSpec::DiagonalStrict | ConditionSpec::DiagonalPhi { .. } | ConditionSpec::Banach { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConditionSpec::PresicSum { .. } => "presic_sum",
            ConditionSpec::CiricMax { .. } => "ciric_max",
            ConditionSpec::LambdaMax { .. } => "lambda_max",
            ConditionSpec::WeakPhi { .. } => "weak_phi",
            ConditionSpec::Kannan { .. } => "kannan",
            ConditionSpec::DiagonalStrict => "diagonal_strict",
            ConditionSpec::DiagonalPhi { .. } => "diagonal_phi",
            ConditionSpec::Banach { .. } => "banach",
        }
    }

    /// Checks the parameter ranges for an operator of arity `k` on a space with constant `b`.
    pub fn validate(&self, k: usize, b: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            ConditionSpec::PresicSum { r } => {
                if r.len() != k {
                    return bad(format!("presic_sum needs {k} coefficients, got {}", r.len()));
                }
                if r.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return bad("presic_sum coefficients must be >= 0".into());
                }
                let total: f64 = r.iter().sum();
                if total >= 1.0 {
                    return bad(format!("presic_sum coefficients sum to {total}, need < 1"));
                }
            }
            ConditionSpec::CiricMax { kappa } if !(*kappa > 0.0 && *kappa < 1.0) => {
                return bad(format!("ciric_max needs 0 < kappa < 1, got {kappa}"));
            }
            ConditionSpec::LambdaMax { lambda } if !(*lambda >= 0.0 && *lambda < 1.0) => {
                return bad(format!("lambda_max needs 0 <= lambda < 1, got {lambda}"));
            }
            ConditionSpec::Banach { eta } if !(*eta >= 0.0 && *eta < 1.0) => {
                return bad(format!("banach needs 0 <= eta < 1, got {eta}"));
            }
            ConditionSpec::Kannan { a } => {
                let q = a * k as f64 * b.powi(k as i32 + 1);
                if !(*a >= 0.0 && q < 1.0) {
                    return bad(format!("kannan needs 0 <= a k b^(k+1) < 1, got {q}"));
                }
            }
            ConditionSpec::WeakPhi { phi } | ConditionSpec::DiagonalPhi { phi } => phi.validate()?,
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PassedOnSamples,
    Falsified,
}

/// A window at which the checked inequality failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub window: Vec<Point>,
    pub lhs: f64,
    pub rhs: f64,
    /// Strict conditions only: `lhs` matched `rhs` within tolerance.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub condition: ConditionSpec,
    pub verdict: Verdict,
    pub samples: usize,
    pub seed: u64,
    /// Minimum of `rhs - lhs` over evaluated windows.
    pub slack_min: f64,
    /// Largest observed `lhs / comparator` for conditions with a single constant.
    pub estimated_constant: Option<f64>,
    /// First violating window in sample order.
    pub witness: Option<Witness>,
}

impl ContractionCertificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::PassedOnSamples
    }
}

/// Conditions whose constant can be estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantKind {
    CiricMax,
    Banach,
    Kannan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    pub constant_hat: f64,
    pub witness: Vec<Point>,
    pub lhs: f64,
    pub comparator: f64,
}

/// One evaluated window.
struct Evaluation {
    lhs: f64,
    rhs: f64,
    /// Comparator without its constant, when the condition has one.
    base: Option<f64>,
}

#[derive(Debug)]
struct CheckSummary {
    evaluated: usize,
    slack_min: f64,
    violation: Option<(usize, Witness)>,
    ratio: Option<Best<()>>,
}

impl Summary for CheckSummary {
    fn merge(self, other: Self) -> Self {
        let violation = match (self.violation, other.violation) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        let ratio = match (self.ratio, other.ratio) {
            (Some(a), Some(b)) => Some(a.merge(b)),
            (a, b) => a.or(b),
        };
        CheckSummary {
            evaluated: self.evaluated + other.evaluated,
            slack_min: self.slack_min.min(other.slack_min),
            violation,
            ratio,
        }
    }
}

fn ratio(lhs: f64, base: f64) -> Option<f64> {
    if base > 0.0 {
        Some(lhs / base)
    } else if lhs > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

struct Checker<'a> {
    op: &'a PresicOperator,
    space: &'a BMetricSpace,
}

impl Checker<'_> {
    fn image(&self, window: &[Point]) -> Result<Point> {
        let out = self.op.apply(window)?;
        self.op.check_codomain(self.space.domain(), &out)?;
        Ok(out)
    }

    fn diag_image(&self, x: &Point) -> Result<Point> {
        let out = self.op.diagonal_apply(x)?;
        self.op.check_codomain(self.space.domain(), &out)?;
        Ok(out)
    }

    fn window_lhs(&self, w: &[Point]) -> Result<f64> {
        let k = self.op.arity();
        let a = self.image(&w[..k])?;
        let b = self.image(&w[1..])?;
        self.space.distance(&a, &b)
    }

    fn max_step(&self, w: &[Point]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for pair in w.windows(2) {
            m = m.max(self.space.distance(&pair[0], &pair[1])?);
        }
        Ok(m)
    }

    fn max_self_residual(&self, w: &[Point]) -> Result<f64> {
        let mut m: f64 = 0.0;
        for x in w {
            m = m.max(self.space.distance(x, &self.diag_image(x)?)?);
        }
        Ok(m)
    }

    /// `None` for windows outside the condition's scope (pairs with `x = y`).
    fn evaluate(&self, cond: &ConditionSpec, w: &[Point]) -> Result<Option<Evaluation>> {
        if cond.is_diagonal() {
            let (x, y) = (&w[0], &w[1]);
            if x == y {
                return Ok(None);
            }
            let lhs = self.space.distance(&self.diag_image(x)?, &self.diag_image(y)?)?;
            let d = self.space.distance(x, y)?;
            let (rhs, base) = match cond {
                ConditionSpec::DiagonalStrict => (d, Some(d)),
                ConditionSpec::DiagonalPhi { phi } => (d - phi.eval(d)?, None),
                ConditionSpec::Banach { eta } => (eta * d, Some(d)),
                _ => unreachable!(),
            };
            return Ok(Some(Evaluation { lhs, rhs, base }));
        }
        let lhs = self.window_lhs(w)?;
        let (rhs, base) = match cond {
            ConditionSpec::PresicSum { r } => {
                let mut s = 0.0;
                for (rj, pair) in r.iter().zip(w.windows(2)) {
                    s += rj * self.space.distance(&pair[0], &pair[1])?;
                }
                (s, None)
            }
            ConditionSpec::CiricMax { kappa: c } | ConditionSpec::LambdaMax { lambda: c } => {
                let m = self.max_step(w)?;
                (c * m, Some(m))
            }
            ConditionSpec::WeakPhi { phi } => {
                let m = self.max_step(w)?;
                (m - phi.eval(m)?, None)
            }
            ConditionSpec::Kannan { a } => {
                let m = self.max_self_residual(w)?;
                (a * m, Some(m))
            }
            _ => unreachable!(),
        };
        Ok(Some(Evaluation { lhs, rhs, base }))
    }
}

fn tuple_width(op: &PresicOperator, cond: &ConditionSpec) -> usize {
    if cond.is_diagonal() {
        2
    } else {
        op.arity() + 1
    }
}

fn check_inputs(op: &PresicOperator, space: &BMetricSpace, cond: &ConditionSpec) -> Result<()> {
    if op.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            found: op.dim(),
        });
    }
    cond.validate(op.arity(), space.b())
}

fn run(
    op: &PresicOperator,
    space: &BMetricSpace,
    cond: &ConditionSpec,
    plan: &SamplePlan,
) -> Result<ContractionCertificate> {
    check_inputs(op, space, cond)?;
    let source = TupleSource::new(space.domain(), tuple_width(op, cond), plan)?;
    let checker = Checker { op, space };
    let strict = matches!(cond, ConditionSpec::DiagonalStrict);
    let summary = sampling::scan(source.len(), plan.parallel, |i| {
        let w = source.tuple(i);
        let Some(ev) = checker.evaluate(cond, &w)? else {
            return Ok(None);
        };
        let over = exceeds(ev.lhs, ev.rhs);
        let violated = if strict { ev.lhs >= ev.rhs || over } else { over };
        let violation = violated.then_some((
            i,
            Witness {
                window: w,
                lhs: ev.lhs,
                rhs: ev.rhs,
                tie: strict && !over,
            },
        ));
        Ok(Some(CheckSummary {
            evaluated: 1,
            slack_min: ev.rhs - ev.lhs,
            violation,
            ratio: ev.base.and_then(|b| ratio(ev.lhs, b)).map(|r| Best::new(r, i, ())),
        }))
    })?;
    let (evaluated, slack_min, witness, estimated) = match summary {
        Some(s) => (
            s.evaluated,
            s.slack_min,
            s.violation.map(|(_, w)| w),
            s.ratio.map(|b| b.value),
        ),
        None => (0, f64::INFINITY, None, None),
    };
    let estimated_constant = match cond {
        ConditionSpec::PresicSum { .. } | ConditionSpec::WeakPhi { .. } | ConditionSpec::DiagonalPhi { .. } => None,
        _ => Some(estimated.unwrap_or(0.0)),
    };
    Ok(ContractionCertificate {
        condition: cond.clone(),
        verdict: if witness.is_some() {
            Verdict::Falsified
        } else {
            Verdict::PassedOnSamples
        },
        samples: evaluated,
        seed: plan.seed,
        slack_min,
        estimated_constant,
        witness,
    })
}

/// Checks a window condition (`presic_sum`, `ciric_max`, `lambda_max`,
/// `weak_phi`, `kannan`) on sampled windows `(x_1..x_{k+1})`.
pub fn verify(
    op: &PresicOperator,
    space: &BMetricSpace,
    cond: &ConditionSpec,
    plan: &SamplePlan,
) -> Result<ContractionCertificate> {
    if cond.is_diagonal() {
        return Err(Error::Usage(format!(
            "{} is a diagonal condition; use verify_diagonal",
            cond.name()
        )));
    }
    run(op, space, cond, plan)
}

/// Checks a diagonal condition (`diagonal_strict`, `diagonal_phi`, `banach`)
/// on sampled pairs `x != y`.
pub fn verify_diagonal(
    op: &PresicOperator,
    space: &BMetricSpace,
    cond: &ConditionSpec,
    plan: &SamplePlan,
) -> Result<ContractionCertificate> {
    if !cond.is_diagonal() {
        return Err(Error::Usage(format!(
            "{} is a window condition; use verify",
            cond.name()
        )));
    }
    run(op, space, cond, plan)
}

/// Dispatches to [`verify`] or [`verify_diagonal`].
pub fn check(
    op: &PresicOperator,
    space: &BMetricSpace,
    cond: &ConditionSpec,
    plan: &SamplePlan,
) -> Result<ContractionCertificate> {
    run(op, space, cond, plan)
}

/// Re-evaluates a certificate's witness; true when it still violates the condition.
pub fn witness_reproduces(
    op: &PresicOperator,
    space: &BMetricSpace,
    cond: &ConditionSpec,
    witness: &Witness,
) -> Result<bool> {
    let checker = Checker { op, space };
    let Some(ev) = checker.evaluate(cond, &witness.window)? else {
        return Ok(false);
    };
    let over = exceeds(ev.lhs, ev.rhs);
    Ok(if matches!(cond, ConditionSpec::DiagonalStrict) {
        over || ev.lhs >= ev.rhs
    } else {
        over
    })
}

/// Largest observed ratio of `lhs` to the condition's comparator without its constant.
pub fn estimate_constant(
    op: &PresicOperator,
    space: &BMetricSpace,
    kind: ConstantKind,
    plan: &SamplePlan,
) -> Result<ConstantEstimate> {
    // Constant 0 passes every range check; only the comparator is used.
    let cond = match kind {
        ConstantKind::CiricMax => ConditionSpec::LambdaMax { lambda: 0.0 },
        ConstantKind::Banach => ConditionSpec::Banach { eta: 0.0 },
        ConstantKind::Kannan => ConditionSpec::Kannan { a: 0.0 },
    };
    check_inputs(op, space, &cond)?;
    let source = TupleSource::new(space.domain(), tuple_width(op, &cond), plan)?;
    let checker = Checker { op, space };
    let best = sampling::scan(source.len(), plan.parallel, |i| {
        let w = source.tuple(i);
        let Some(ev) = checker.evaluate(&cond, &w)? else {
            return Ok(None);
        };
        let base = ev.base.expect("constant-bearing condition");
        Ok(ratio(ev.lhs, base).map(|r| Best::new(r, i, (w, ev.lhs, base))))
    })?;
    let best = best.ok_or_else(|| Error::DegenerateDomain("every sampled window has a zero comparator".into()))?;
    let (witness, lhs, comparator) = best.payload;
    Ok(ConstantEstimate {
        constant_hat: best.value,
        witness,
        lhs,
        comparator,
    })
}
