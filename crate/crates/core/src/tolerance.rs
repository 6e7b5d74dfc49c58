/// Relative slack used by every inequality check in the crate.
pub const REL_TOL: f64 = 1e-9;

/// Scale-aware slack allowed on the right-hand side `rhs`.
#[inline]
pub fn slack(rhs: f64) -> f64 {
    REL_TOL * (1.0 + rhs.abs())
}

/// True when `lhs <= rhs` is violated beyond rounding noise.
#[inline]
pub fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + slack(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_scales_with_rhs() {
        assert!(!exceeds(1.0 + 1e-10, 1.0));
        assert!(exceeds(1.0 + 1e-8, 1.0));
        assert!(!exceeds(1e6 + 1e-4, 1e6));
        assert!(exceeds(1e-8, 0.0));
        assert!(!exceeds(0.0, 0.0));
    }
}
