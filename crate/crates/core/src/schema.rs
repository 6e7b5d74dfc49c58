//! JSON problem files.
//!
//! ```json
//! {
//!   "space": {"kind": "squared_euclidean", "dim": 1, "box": {"lo": [0], "hi": [2]}},
//!   "operator": {"kind": "averaging", "k": 2},
//!   "condition": {"kind": "ciric_max", "kappa": 0.25},
//!   "solve": {"start": "random", "seed": 7, "stop": {"step_tol": 1e-20}}
//! }
//! ```
//!
//! Space kinds: `euclidean`, `squared_euclidean`, `power` (`p`, optional
//! `base`), `lp_truncated` (`p`), `custom` (`expr` over `u1..um`, `v1..vm`,
//! and a required `b`). Operator kinds: `averaging`, `affine` (`weights`,
//! `offset`), `constant` (`offset` is the constant value), `dsl` (`exprs`).

use serde::{Deserialize, Serialize};

use crate::bmetric::{BMetricSpace, BaseMetric, Domain, MetricKind, Point};
use crate::contraction::ConditionSpec;
use crate::dsl::{Context, Expr};
use crate::error::{Error, Result};
use crate::operator::PresicOperator;
use crate::sampling::{SamplePlan, TupleSource};
use crate::solver::StopRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    Euclidean,
    SquaredEuclidean,
    Power,
    #[serde(alias = "lp")]
    LpTruncated,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kind: SpaceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseMetric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(rename = "box")]
    pub domain: BoxConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<String>,
}

fn broadcast(v: &[f64], dim: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; dim]),
        n if n == dim => Ok(v.to_vec()),
        n => Err(Error::Usage(format!("{what} has {n} entries, expected 1 or {dim}"))),
    }
}

impl SpaceConfig {
    pub fn build(&self) -> Result<BMetricSpace> {
        let dim = self
            .dim
            .unwrap_or_else(|| self.domain.lo.len().max(self.domain.hi.len()));
        if dim == 0 {
            return Err(Error::Usage("space dimension must be positive".into()));
        }
        let domain = Domain::new(
            broadcast(&self.domain.lo, dim, "box.lo")?,
            broadcast(&self.domain.hi, dim, "box.hi")?,
        )?;
        let need_p = || {
            self.p
                .ok_or_else(|| Error::Usage(format!("space kind {:?} needs \"p\"", self.kind)))
        };
        let kind = match self.kind {
            SpaceKind::Euclidean => MetricKind::Euclidean,
            SpaceKind::SquaredEuclidean => MetricKind::SquaredEuclidean,
            SpaceKind::Power => MetricKind::Power {
                base: self.base.unwrap_or(BaseMetric::Euclidean),
                p: need_p()?,
            },
            SpaceKind::LpTruncated => MetricKind::LpTruncated { p: need_p()? },
            SpaceKind::Custom => {
                let src = self
                    .expr
                    .as_deref()
                    .ok_or_else(|| Error::Usage("custom space needs \"expr\"".into()))?;
                MetricKind::Custom(Expr::parse(src, Context::Metric { dim })?)
            }
        };
        BMetricSpace::new(kind, domain, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKindName {
    Averaging,
    Affine,
    Constant,
    Dsl,
}

/// One weight per argument: shared by all coordinates or given per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightRow {
    Shared(f64),
    PerCoordinate(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub kind: OperatorKindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<WeightRow>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exprs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub strict_domain: bool,
}

impl OperatorConfig {
    pub fn build(&self, dim: usize) -> Result<PresicOperator> {
        let missing = |field: &str| Error::Usage(format!("{:?} operator needs \"{field}\"", self.kind));
        let op = match self.kind {
            OperatorKindName::Averaging => PresicOperator::averaging(self.k.ok_or_else(|| missing("k"))?, dim)?,
            OperatorKindName::Affine => {
                let rows = self.weights.as_ref().ok_or_else(|| missing("weights"))?;
                if let Some(k) = self.k {
                    if k != rows.len() {
                        return Err(Error::Usage(format!("k = {k} but {} weight rows given", rows.len())));
                    }
                }
                let offset = match &self.offset {
                    Some(o) => broadcast(o, dim, "offset")?,
                    None => vec![0.0; dim],
                };
                let weights = rows
                    .iter()
                    .map(|r| match r {
                        WeightRow::Shared(a) => vec![*a],
                        WeightRow::PerCoordinate(v) => v.clone(),
                    })
                    .collect();
                PresicOperator::affine(weights, offset)?
            }
            OperatorKindName::Constant => {
                let value = self.offset.as_ref().ok_or_else(|| missing("offset"))?;
                PresicOperator::constant(
                    self.k.ok_or_else(|| missing("k"))?,
                    Point::new(broadcast(value, dim, "offset")?)?,
                )?
            }
            OperatorKindName::Dsl => {
                let exprs = self.exprs.as_ref().ok_or_else(|| missing("exprs"))?;
                PresicOperator::dsl(self.k.ok_or_else(|| missing("k"))?, dim, exprs)?
            }
        };
        if op.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: op.dim(),
            });
        }
        Ok(op.with_strict_domain(self.strict_domain))
    }
}

/// Starting points: explicit coordinates or `"random"` draws from the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartConfig {
    Points(Vec<Vec<f64>>),
    Keyword(String),
}

impl Default for StartConfig {
    fn default() -> Self {
        StartConfig::Keyword("random".into())
    }
}

impl StartConfig {
    /// The `count` starting points of run number `run` (random starts differ per run).
    pub fn resolve(&self, space: &BMetricSpace, count: usize, seed: u64, run: usize) -> Result<Vec<Point>> {
        match self {
            StartConfig::Points(pts) => {
                if pts.len() != count {
                    return Err(Error::Usage(format!(
                        "expected {count} starting point(s), got {}",
                        pts.len()
                    )));
                }
                pts.iter().map(|c| Point::new(c.clone())).collect()
            }
            StartConfig::Keyword(word) if word == "random" => {
                let plan = SamplePlan::random(run + 1, seed);
                Ok(TupleSource::new(space.domain(), count, &plan)?.tuple(run))
            }
            StartConfig::Keyword(word) => Err(Error::Usage(format!(
                "start must be a list of points or \"random\", got \"{word}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub start: StartConfig,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub space: SpaceConfig,
    pub operator: OperatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveConfig>,
}

/// A problem file with every part compiled and cross-checked.
#[derive(Debug, Clone)]
pub struct Problem {
    pub space: BMetricSpace,
    pub operator: PresicOperator,
    pub condition: Option<ConditionSpec>,
    pub solve: Option<SolveConfig>,
}

impl ProblemFile {
    pub fn build(&self) -> Result<Problem> {
        let space = self.space.build()?;
        let operator = self.operator.build(space.dim())?;
        if let Some(c) = &self.condition {
            c.validate(operator.arity(), space.b())?;
        }
        if let Some(s) = &self.solve {
            s.stop.validate(operator.arity())?;
        }
        Ok(Problem {
            space,
            operator,
            condition: self.condition.clone(),
            solve: self.solve.clone(),
        })
    }
}
