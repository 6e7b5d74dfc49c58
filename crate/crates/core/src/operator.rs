//! Arity-k operators `f: X^k -> X` and their diagonal maps `F(x) = f(x, ..., x)`.

use crate::bmetric::{BMetricSpace, Domain, Point};
use crate::dsl::{Context, Expr, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// `(x_1 + ... + x_k) / (2k)` coordinatewise.
    Averaging,
    /// `sum_j weights[j][c] * x_j[c] + offset[c]` coordinatewise.
    Affine {
        weights: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    Constant(Point),
    /// One expression per output coordinate.
    Dsl(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresicOperator {
    arity: usize,
    dim: usize,
    kind: OperatorKind,
    strict_domain: bool,
}

impl PresicOperator {
    fn build(arity: usize, dim: usize, kind: OperatorKind) -> Result<Self> {
        if arity == 0 || dim == 0 {
            return Err(Error::Usage("operator arity and dimension must be positive".into()));
        }
        Ok(PresicOperator {
            arity,
            dim,
            kind,
            strict_domain: false,
        })
    }

    pub fn averaging(arity: usize, dim: usize) -> Result<Self> {
        Self::build(arity, dim, OperatorKind::Averaging)
    }

    /// Affine operator; each weight row may hold one value (shared by all
    /// coordinates) or one value per coordinate.
    pub fn affine(weights: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let dim = offset.len();
        let arity = weights.len();
        let weights = weights
            .into_iter()
            .enumerate()
            .map(|(j, row)| match row.len() {
                1 => Ok(vec![row[0]; dim]),
                n if n == dim => Ok(row),
                n => Err(Error::Usage(format!(
                    "weight row {} has {n} entries, expected 1 or {dim}",
                    j + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if weights.iter().flatten().chain(&offset).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("affine coefficients must be finite".into()));
        }
        Self::build(arity, dim, OperatorKind::Affine { weights, offset })
    }

    /// Scalar affine operator `sum_j a_j x_j + c` on R.
    pub fn affine_scalar(weights: &[f64], offset: f64) -> Result<Self> {
        Self::affine(weights.iter().map(|&a| vec![a]).collect(), vec![offset])
    }

    pub fn constant(arity: usize, value: Point) -> Result<Self> {
        let dim = value.dim();
        Self::build(arity, dim, OperatorKind::Constant(value))
    }

    /// Operator from source text. A single expression is applied to every
    /// coordinate; otherwise one expression per coordinate is required.
    pub fn dsl<S: AsRef<str>>(arity: usize, dim: usize, sources: &[S]) -> Result<Self> {
        if sources.len() != 1 && sources.len() != dim {
            return Err(Error::Usage(format!(
                "expected 1 or {dim} expressions, got {}",
                sources.len()
            )));
        }
        let context = Context::Operator { arity, dim };
        let exprs = sources
            .iter()
            .map(|s| Expr::parse(s.as_ref(), context))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::build(arity, dim, OperatorKind::Dsl(exprs))
    }

    /// Rejects outputs that leave the space's box when set.
    pub fn with_strict_domain(mut self, strict: bool) -> Self {
        self.strict_domain = strict;
        self
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn strict_domain(&self) -> bool {
        self.strict_domain
    }

    pub fn apply(&self, window: &[Point]) -> Result<Point> {
        if window.len() != self.arity {
            return Err(Error::Usage(format!(
                "operator of arity {} applied to {} points",
                self.arity,
                window.len()
            )));
        }
        for p in window {
            if p.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    found: p.dim(),
                });
            }
        }
        let k = self.arity as f64;
        let out: Vec<f64> = match &self.kind {
            OperatorKind::Averaging => (0..self.dim)
                .map(|c| window.iter().map(|p| p.coords()[c]).sum::<f64>() / (2.0 * k))
                .collect(),
            OperatorKind::Affine { weights, offset } => (0..self.dim)
                .map(|c| {
                    window
                        .iter()
                        .zip(weights)
                        .map(|(p, w)| w[c] * p.coords()[c])
                        .sum::<f64>()
                        + offset[c]
                })
                .collect(),
            OperatorKind::Constant(v) => v.coords().to_vec(),
            OperatorKind::Dsl(exprs) => {
                let args: Vec<&[f64]> = window.iter().map(Point::coords).collect();
                (0..self.dim)
                    .map(|c| {
                        let e = if exprs.len() == 1 { &exprs[0] } else { &exprs[c] };
                        e.eval(&Window { args: &args, coord: c })
                            .map_err(|err| Error::Numeric(format!("output coordinate {}: {err}", c + 1)))
                    })
                    .collect::<Result<_>>()?
            }
        };
        if let Some(c) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "output coordinate {} is not finite ({})",
                c + 1,
                out[c]
            )));
        }
        Ok(Point::from_vec_unchecked(out))
    }

    /// `F(x) = f(x, ..., x)`.
    pub fn diagonal_apply(&self, x: &Point) -> Result<Point> {
        self.apply(&vec![x.clone(); self.arity])
    }

    /// `d(u, F(u))`.
    pub fn residual(&self, space: &BMetricSpace, u: &Point) -> Result<f64> {
        let fu = self.diagonal_apply(u)?;
        space.distance(u, &fu)
    }

    /// Whether `out` left `domain`; an error in strict mode.
    pub fn check_codomain(&self, domain: &Domain, out: &Point) -> Result<bool> {
        if domain.contains(out) {
            Ok(false)
        } else if self.strict_domain {
            Err(Error::OutOfDomain {
                point: out.coords().to_vec(),
            })
        } else {
            Ok(true)
        }
    }

    /// The diagonal companion as a value.
    pub fn diagonal(&self) -> DiagonalOperator<'_> {
        DiagonalOperator { source: self }
    }
}

/// `F(x) = f(x, ..., x)` borrowed from its source operator.
#[derive(Debug, Clone, Copy)]
pub struct DiagonalOperator<'a> {
    pub source: &'a PresicOperator,
}

impl DiagonalOperator<'_> {
    pub fn apply(&self, x: &Point) -> Result<Point> {
        self.source.diagonal_apply(x)
    }
}
