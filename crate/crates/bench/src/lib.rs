//! Fixtures shared by the criterion benches.

use presic_core::{BMetricSpace, Domain, Point, PresicOperator};

/// `(x_1 + ... + x_k) / (2k)` on `[0, 2]^dim` under the squared distance.
pub fn averaging(k: usize, dim: usize) -> (PresicOperator, BMetricSpace) {
    let op = PresicOperator::averaging(k, dim).expect("valid arity");
    let space = BMetricSpace::squared_euclidean(Domain::cube(dim, 0.0, 2.0).expect("valid box"));
    (op, space)
}

/// A nonlinear two-step recurrence written in the expression language.
pub fn nonlinear() -> PresicOperator {
    PresicOperator::dsl(2, 1, &["(x1 + x2)/4 + 1/(4 + x2^2)"]).expect("expression parses")
}

/// `k` distinct starting points along the diagonal of the box.
pub fn starts(k: usize, dim: usize) -> Vec<Point> {
    (0..k)
        .map(|i| Point::new(vec![2.0 * (i + 1) as f64 / (k + 1) as f64; dim]).expect("finite"))
        .collect()
}
