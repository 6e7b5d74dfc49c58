//! Prešić-type fixed-point iteration on b-metric spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`bmetric`]: points, boxes, b-metric constructions, axiom checks and
//!   empirical estimates of the relaxation constant `b`.
//! * [`dsl`]: a small expression language for user-defined operators,
//!   distances and comparison functions.
//! * [`operator`]: arity-k operators and their diagonal maps.
//! * [`contraction`]: sampled verification, falsification and sharp-constant
//!   estimation of contraction conditions.
//! * [`solver`]: k-step and Picard iteration, convergence diagnostics and
//!   a priori bounds.
//! * [`schema`]: the JSON problem-file schema shared with the CLI.

pub mod bmetric;
pub mod contraction;
pub mod dsl;
pub mod error;
pub mod operator;
pub mod sampling;
pub mod schema;
pub mod solver;
pub mod tolerance;

pub use bmetric::{
    Axiom, AxiomReport, AxiomViolation, BEstimate, BMetricSpace, BWitness, BaseMetric, ChainBound, Domain, MetricKind,
    Point,
};
pub use contraction::{
    check, estimate_constant, verify, verify_diagonal, witness_reproduces, ConditionSpec, ConstantEstimate,
    ConstantKind, ContractionCertificate, PhiFunction, Verdict, Witness,
};
pub use dsl::{Context, DslError, EvalError, Expr};
pub use error::{Error, Result};
pub use operator::{DiagonalOperator, OperatorKind, PresicOperator};
pub use sampling::SamplePlan;
pub use schema::{OperatorConfig, Problem, ProblemFile, SolveConfig, SpaceConfig, StartConfig};
pub use solver::{
    cauchy_profile, estimate_rate, iterate, kannan_bounds, kannan_report, picard, presic_bounds,
    window_max_nonincreasing, BoundReport, IterationTrace, KannanReport, StopReason, StopRule,
};
