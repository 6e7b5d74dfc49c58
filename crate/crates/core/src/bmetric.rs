//! b-metric spaces over boxes in R^m.
//!
//! A b-metric relaxes the triangle inequality to
//! `d(x, y) <= b * (d(x, z) + d(z, y))` for a constant `b >= 1`. The built-in
//! constructions declare the constant they are known to satisfy:
//!
//! | kind                     | distance                         | declared b       |
//! |--------------------------|----------------------------------|------------------|
//! | `Euclidean`              | `sqrt(sum (x_i - y_i)^2)`        | 1                |
//! | `SquaredEuclidean`       | `sum (x_i - y_i)^2`              | 2                |
//! | `Power { base, p }`      | `base(x, y)^p`, `p >= 1`         | `2^(p-1)`        |
//! | `LpTruncated { p }`      | `(sum abs(x_i - y_i)^p)^(1/p)`   | `2^(1/p)` if p<1 |
//! | `Custom(expr)`           | user expression in `u_i`, `v_i`  | must be given    |

use std::fmt;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{Expr, Pair};
use crate::error::{Error, Result};
use crate::sampling::{self, SamplePlan, Summary, TupleSource};
use crate::tolerance::exceeds;

/// A point of R^m with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Point> {
        if coords.is_empty() {
            return Err(Error::Usage("a point needs at least one coordinate".into()));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Numeric(format!(
                "coordinate {} is not finite ({})",
                i + 1,
                coords[i]
            )));
        }
        Ok(Point(coords))
    }

    /// A one-dimensional point.
    pub fn scalar(x: f64) -> Point {
        Point::new(vec![x]).expect("finite scalar")
    }

    pub(crate) fn from_vec_unchecked(coords: Vec<f64>) -> Point {
        debug_assert!(coords.iter().all(|c| c.is_finite()));
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Point> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Vec<f64> {
        p.0
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// Axis-aligned sampling box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Domain> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::Usage(format!(
                "box bounds must be non-empty and of equal length (lo has {}, hi has {})",
                lo.len(),
                hi.len()
            )));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !l.is_finite() || !h.is_finite() || l > h {
                return Err(Error::Usage(format!(
                    "box axis {} has invalid bounds [{l}, {h}]",
                    i + 1
                )));
            }
        }
        Ok(Domain { lo, hi })
    }

    /// The interval `[lo, hi]` repeated over `dim` axes.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Domain> {
        Domain::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim()
            && p.coords()
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(c, (l, h))| l <= c && c <= h)
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        Point::from_vec_unchecked(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(&l, &h)| sampling::uniform(rng, l, h))
                .collect(),
        )
    }

    /// `g` equispaced values per axis, endpoints included.
    pub fn axis_grids(&self, g: usize) -> Vec<Vec<f64>> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                if g == 1 {
                    return vec![l];
                }
                (0..g)
                    .map(|j| {
                        if j == g - 1 {
                            h
                        } else {
                            l + (h - l) * (j as f64) / ((g - 1) as f64)
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Underlying metric of a power construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseMetric {
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl BaseMetric {
    fn eval(self, x: &[f64], y: &[f64]) -> f64 {
        let diffs = x.iter().zip(y).map(|(a, b)| (a - b).abs());
        match self {
            BaseMetric::Euclidean => diffs.map(|t| t * t).sum::<f64>().sqrt(),
            BaseMetric::Manhattan => diffs.sum(),
            BaseMetric::Chebyshev => diffs.fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricKind {
    Euclidean,
    SquaredEuclidean,
    /// `base(x, y)^p` for `p >= 1`.
    Power {
        base: BaseMetric,
        p: f64,
    },
    /// Finite-dimensional `l_p` distance, `p > 0`.
    LpTruncated {
        p: f64,
    },
    /// Expression over `u1..um`, `v1..vm`.
    Custom(Expr),
}

impl MetricKind {
    /// The constant the construction is known to satisfy, if any.
    pub fn natural_b(&self) -> Option<f64> {
        match self {
            MetricKind::Euclidean => Some(1.0),
            MetricKind::SquaredEuclidean => Some(2.0),
            MetricKind::Power { p, .. } => Some(2f64.powf(p - 1.0)),
            MetricKind::LpTruncated { p } if *p < 1.0 => Some(2f64.powf(1.0 / p)),
            MetricKind::LpTruncated { .. } => Some(1.0),
            MetricKind::Custom(_) => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            MetricKind::Power { p, .. } if !(p.is_finite() && *p >= 1.0) => {
                Err(Error::InvalidParameter(format!("power metric needs p >= 1, got {p}")))
            }
            MetricKind::LpTruncated { p } if !(p.is_finite() && *p > 0.0) => {
                Err(Error::InvalidParameter(format!("l_p metric needs p > 0, got {p}")))
            }
            _ => Ok(()),
        }
    }
}

/// A distance on a box together with its declared relaxation constant.
#[derive(Debug, Clone, PartialEq)]
pub struct BMetricSpace {
    kind: MetricKind,
    b: f64,
    domain: Domain,
}

impl BMetricSpace {
    /// Builds a space; `b` overrides the construction's natural constant.
    pub fn new(kind: MetricKind, domain: Domain, b: Option<f64>) -> Result<BMetricSpace> {
        kind.validate()?;
        let b = match (b, kind.natural_b()) {
            (Some(b), _) | (None, Some(b)) => b,
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "a custom metric must declare its constant b".into(),
                ))
            }
        };
        if !(b.is_finite() && b >= 1.0) {
            return Err(Error::InvalidParameter(format!("b must be >= 1, got {b}")));
        }
        Ok(BMetricSpace { kind, b, domain })
    }

    pub fn euclidean(domain: Domain) -> BMetricSpace {
        BMetricSpace::new(MetricKind::Euclidean, domain, None).expect("valid")
    }

    pub fn squared_euclidean(domain: Domain) -> BMetricSpace {
        BMetricSpace::new(MetricKind::SquaredEuclidean, domain, None).expect("valid")
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Same metric and domain with a different declared constant.
    pub fn with_b(&self, b: f64) -> Result<BMetricSpace> {
        BMetricSpace::new(self.kind.clone(), self.domain.clone(), Some(b))
    }

    /// Same metric and constant over another box of the same dimension.
    pub fn with_domain(&self, domain: Domain) -> Result<BMetricSpace> {
        if domain.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: domain.dim(),
            });
        }
        Ok(BMetricSpace { domain, ..self.clone() })
    }

    pub fn check_dim(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: p.dim(),
            });
        }
        Ok(())
    }

    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let (x, y) = (x.coords(), y.coords());
        let d = match &self.kind {
            MetricKind::Euclidean => BaseMetric::Euclidean.eval(x, y),
            MetricKind::SquaredEuclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            MetricKind::Power { base, p } => base.eval(x, y).powf(*p),
            MetricKind::LpTruncated { p } => x
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b).abs().powf(*p))
                .sum::<f64>()
                .powf(1.0 / p),
            MetricKind::Custom(expr) => {
                let d = expr.eval(&Pair { u: x, v: y })?;
                if d < 0.0 {
                    return Err(Error::Numeric(format!("custom distance is negative ({d})")));
                }
                d
            }
        };
        if !d.is_finite() {
            return Err(Error::Numeric(format!("distance overflowed ({d})")));
        }
        Ok(d)
    }

    pub fn check_axioms(&self, plan: &SamplePlan) -> Result<AxiomReport> {
        let source = TupleSource::new(&self.domain, 3, plan)?;
        let summary = sampling::scan(source.len(), plan.parallel, |i| {
            let t = source.tuple(i);
            let (x, y, z) = (&t[0], &t[1], &t[2]);
            let mut s = AxiomSummary {
                points: 1,
                pairs: 1,
                triples: 1,
                ..AxiomSummary::default()
            };
            let dxx = self.distance(x, x)?;
            if exceeds(dxx, 0.0) {
                s.push(i, Axiom::B1, vec![x.clone()], dxx, 0.0);
            }
            let dxy = self.distance(x, y)?;
            let dyx = self.distance(y, x)?;
            let (hi, lo) = if dxy >= dyx { (dxy, dyx) } else { (dyx, dxy) };
            if exceeds(hi, lo) {
                s.push(i, Axiom::B2, vec![x.clone(), y.clone()], hi, lo);
            }
            let rhs = self.b * (self.distance(x, z)? + self.distance(z, y)?);
            if exceeds(dxy, rhs) {
                s.push(i, Axiom::B3, vec![x.clone(), y.clone(), z.clone()], dxy, rhs);
            }
            Ok(Some(s))
        })?
        .unwrap_or_default();
        Ok(AxiomReport {
            checked_points: summary.points,
            checked_pairs: summary.pairs,
            checked_triples: summary.triples,
            violation_count: summary.count,
            violations: summary.violations.into_iter().map(|(_, v)| v).collect(),
        })
    }

    /// Largest observed `d(x, y) / (d(x, z) + d(z, y))` over sampled triples.
    pub fn estimate_b(&self, plan: &SamplePlan) -> Result<BEstimate> {
        let source = TupleSource::new(&self.domain, 3, plan)?;
        let best = sampling::scan(source.len(), plan.parallel, |i| {
            let t = source.tuple(i);
            let denom = self.distance(&t[0], &t[2])? + self.distance(&t[2], &t[1])?;
            if denom == 0.0 {
                return Ok(None);
            }
            let ratio = self.distance(&t[0], &t[1])? / denom;
            Ok(Some(Best::new(ratio, i, t)))
        })?;
        let best = best.ok_or_else(|| Error::DegenerateDomain("every sampled triple has zero denominator".into()))?;
        let mut t = best.payload.into_iter();
        let (x, y, z) = (t.next().unwrap(), t.next().unwrap(), t.next().unwrap());
        Ok(BEstimate {
            b_hat: best.value,
            witness: BWitness { x, y, z },
        })
    }

    /// Both sides of the chain inequality
    /// `d(u_0, u_n) <= sum_{j<n} b^j d(u_{j-1}, u_j) + b^(n-1) d(u_{n-1}, u_n)`.
    pub fn chain_bound(&self, points: &[Point]) -> Result<ChainBound> {
        if points.len() < 2 {
            return Err(Error::Usage("chain bound needs at least 2 points".into()));
        }
        let n = points.len() - 1;
        let lhs = self.distance(&points[0], &points[n])?;
        let mut rhs = 0.0;
        let mut weight = 1.0;
        for j in 1..n {
            weight *= self.b;
            rhs += weight * self.distance(&points[j - 1], &points[j])?;
        }
        rhs += self.b.powi(n as i32 - 1) * self.distance(&points[n - 1], &points[n])?;
        Ok(ChainBound {
            lhs,
            rhs,
            holds: !exceeds(lhs, rhs),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    /// `d(x, x) = 0`.
    B1,
    /// Symmetry.
    B2,
    /// Relaxed triangle inequality with the declared `b`.
    B3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    pub points: Vec<Point>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub checked_points: usize,
    pub checked_pairs: usize,
    pub checked_triples: usize,
    pub violation_count: usize,
    /// The first [`MAX_REPORTED_VIOLATIONS`] violations in sample order.
    pub violations: Vec<AxiomViolation>,
}

pub const MAX_REPORTED_VIOLATIONS: usize = 64;

#[derive(Debug, Default)]
struct AxiomSummary {
    points: usize,
    pairs: usize,
    triples: usize,
    count: usize,
    violations: Vec<(usize, AxiomViolation)>,
}

impl AxiomSummary {
    fn push(&mut self, index: usize, axiom: Axiom, points: Vec<Point>, lhs: f64, rhs: f64) {
        self.count += 1;
        self.violations.push((
            index,
            AxiomViolation {
                axiom,
                points,
                lhs,
                rhs,
            },
        ));
    }
}

impl Summary for AxiomSummary {
    fn merge(mut self, other: Self) -> Self {
        self.points += other.points;
        self.pairs += other.pairs;
        self.triples += other.triples;
        self.count += other.count;
        self.violations.extend(other.violations);
        self.violations.sort_by_key(|(i, v)| (*i, v.axiom as u8));
        self.violations.truncate(MAX_REPORTED_VIOLATIONS);
        self
    }
}

/// Maximum over sampled items, ties resolved to the smallest index.
#[derive(Debug, Clone)]
pub(crate) struct Best<T> {
    pub value: f64,
    pub index: usize,
    pub payload: T,
}

impl<T> Best<T> {
    pub fn new(value: f64, index: usize, payload: T) -> Self {
        Best { value, index, payload }
    }
}

impl<T: Send> Summary for Best<T> {
    fn merge(self, other: Self) -> Self {
        if other.value > self.value || (other.value == self.value && other.index < self.index) {
            other
        } else {
            self
        }
    }
}

/// A triple attaining an estimated constant: ratio `d(x,y) / (d(x,z) + d(z,y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BWitness {
    pub x: Point,
    pub y: Point,
    pub z: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BEstimate {
    pub b_hat: f64,
    pub witness: BWitness,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::Context;

    fn line(lo: f64, hi: f64) -> Domain {
        Domain::cube(1, lo, hi).unwrap()
    }

    fn p(x: f64) -> Point {
        Point::scalar(x)
    }

    #[test]
    fn distances_of_constructions() {
        let sq = BMetricSpace::squared_euclidean(line(0.0, 2.0));
        assert_eq!(sq.distance(&p(0.0), &p(2.0)).unwrap(), 4.0);
        assert_eq!(sq.distance(&p(1.3), &p(1.3)).unwrap(), 0.0);
        assert_eq!(sq.b(), 2.0);

        let lp = BMetricSpace::new(
            MetricKind::LpTruncated { p: 0.5 },
            Domain::cube(2, -1.0, 1.0).unwrap(),
            None,
        )
        .unwrap();
        let x = Point::new(vec![1.0, 0.0]).unwrap();
        let o = Point::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(lp.distance(&x, &o).unwrap(), 1.0);
        assert_eq!(lp.b(), 4.0);
        // (1 + 1)^2 for two unit coordinates
        let y = Point::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(lp.distance(&y, &o).unwrap(), 4.0);

        let cube = BMetricSpace::new(
            MetricKind::Power {
                base: BaseMetric::Euclidean,
                p: 3.0,
            },
            line(0.0, 2.0),
            None,
        )
        .unwrap();
        assert_eq!(cube.b(), 4.0);
        assert_eq!(cube.distance(&p(0.0), &p(2.0)).unwrap(), 8.0);
    }

    #[test]
    fn dimension_mismatch_is_a_usage_error() {
        let sq = BMetricSpace::squared_euclidean(line(0.0, 2.0));
        let two = Point::new(vec![0.0, 0.0]).unwrap();
        let err = sq.distance(&p(0.0), &two).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 1, found: 2 });
        assert!(err.is_usage());
    }

    #[test]
    fn construction_parameters_are_validated() {
        let d = line(0.0, 1.0);
        assert!(BMetricSpace::new(MetricKind::Euclidean, d.clone(), Some(0.5)).is_err());
        assert!(BMetricSpace::new(
            MetricKind::Power {
                base: BaseMetric::Euclidean,
                p: 0.5
            },
            d.clone(),
            None
        )
        .is_err());
        assert!(BMetricSpace::new(MetricKind::LpTruncated { p: 0.0 }, d.clone(), None).is_err());
        let expr = Expr::parse("abs(u1 - v1)", Context::Metric { dim: 1 }).unwrap();
        assert!(BMetricSpace::new(MetricKind::Custom(expr.clone()), d.clone(), None).is_err());
        assert!(BMetricSpace::new(MetricKind::Custom(expr), d, Some(1.0)).is_ok());
        assert!(Domain::new(vec![1.0], vec![0.0]).is_err());
        assert!(Domain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(Point::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn squared_euclidean_axioms_hold_with_b_two() {
        let sq = BMetricSpace::squared_euclidean(line(0.0, 2.0));
        let report = sq.check_axioms(&SamplePlan::grid(21)).unwrap();
        assert_eq!(report.violation_count, 0);
        assert_eq!(report.checked_triples, 21 * 21 * 21);
        let report = sq.check_axioms(&SamplePlan::random(5000, 3)).unwrap();
        assert_eq!(report.violation_count, 0);
    }

    #[test]
    fn squared_euclidean_breaks_the_triangle_inequality() {
        let sq = BMetricSpace::squared_euclidean(line(0.0, 2.0)).with_b(1.0).unwrap();
        let report = sq.check_axioms(&SamplePlan::grid(3)).unwrap();
        assert!(report.violation_count >= 1);
        let w = report
            .violations
            .iter()
            .find(|v| v.points == vec![p(0.0), p(2.0), p(1.0)])
            .expect("witness (0, 2) through 1");
        assert_eq!(w.axiom, Axiom::B3);
        assert_eq!((w.lhs, w.rhs), (4.0, 2.0));
        for v in &report.violations {
            let again = sq.distance(&v.points[0], &v.points[1]).unwrap();
            let rhs =
                sq.distance(&v.points[0], &v.points[2]).unwrap() + sq.distance(&v.points[2], &v.points[1]).unwrap();
            assert!(exceeds(again, rhs));
        }
    }

    #[test]
    fn euclidean_is_a_metric() {
        let e = BMetricSpace::euclidean(Domain::cube(2, -1.0, 1.0).unwrap());
        assert_eq!(e.check_axioms(&SamplePlan::random(5000, 9)).unwrap().violation_count, 0);
        let est = e.estimate_b(&SamplePlan::random(5000, 9)).unwrap();
        assert!(est.b_hat <= 1.0 + 1e-9);
    }

    #[test]
    fn custom_metric_asymmetry_is_reported() {
        let expr = Expr::parse("abs(u1 - v1) + max(u1 - v1, 0)", Context::Metric { dim: 1 }).unwrap();
        let s = BMetricSpace::new(MetricKind::Custom(expr), line(0.0, 1.0), Some(1.0)).unwrap();
        let report = s.check_axioms(&SamplePlan::grid(5)).unwrap();
        assert!(report.violations.iter().any(|v| v.axiom == Axiom::B2));
    }

    #[test]
    fn estimate_b_finds_equispaced_collinear_triple() {
        let sq = BMetricSpace::squared_euclidean(line(0.0, 2.0));
        let est = sq.estimate_b(&SamplePlan::grid(3)).unwrap();
        assert_eq!(est.b_hat, 2.0);
        assert_eq!(est.witness.z, p(1.0));
        assert_eq!(est.witness.x.coords()[0] + est.witness.y.coords()[0], 2.0);
    }

    #[test]
    fn estimate_b_on_a_point_is_degenerate() {
        let s = BMetricSpace::squared_euclidean(line(1.0, 1.0));
        assert!(matches!(
            s.estimate_b(&SamplePlan::random(10, 1)),
            Err(Error::DegenerateDomain(_))
        ));
    }

    #[test]
    fn chain_bound_examples() {
        let sq = BMetricSpace::squared_euclidean(line(0.0, 2.0));
        let c = sq.chain_bound(&[p(0.0), p(1.0), p(2.0)]).unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (4.0, 4.0, true));
        let c = sq.chain_bound(&vec![p(1.0); 5]).unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (0.0, 0.0, true));
        let c = sq.chain_bound(&[p(0.0), p(2.0)]).unwrap();
        assert_eq!((c.lhs, c.rhs), (4.0, 4.0));
        assert!(sq.chain_bound(&[p(0.0)]).is_err());
        // with b = 1 the squared distance breaks the chain
        let c = sq.with_b(1.0).unwrap().chain_bound(&[p(0.0), p(1.0), p(2.0)]).unwrap();
        assert!(!c.holds);
    }
}
