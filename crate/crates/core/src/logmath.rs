//! Small helpers for probability arithmetic in the natural-log domain.

/// Natural log of zero probability.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// ln(a + b) given ln(a) and ln(b).
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == LOG_ZERO {
        return b;
    }
    if b == LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln(Σ exp(x)) over a slice.
pub fn log_sum(xs: &[f64]) -> f64 {
    let mut acc = LOG_ZERO;
    for &x in xs {
        acc = log_add(acc, x);
    }
    acc
}

/// Convert a base-10 log probability to a natural log probability.
#[inline]
pub fn log10_to_ln(x: f64) -> f64 {
    x * std::f64::consts::LN_10
}

/// Convert a natural log probability to a base-10 log probability.
#[inline]
pub fn ln_to_log10(x: f64) -> f64 {
    x / std::f64::consts::LN_10
}

/// Relative closeness check used by trainer convergence tests.
#[inline]
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= tol * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_matches_linear_domain() {
        let a: f64 = 0.3;
        let b: f64 = 0.45;
        let got = log_add(a.ln(), b.ln()).exp();
        assert!((got - 0.75).abs() < 1e-12);
    }

    #[test]
    fn log_add_handles_zero() {
        assert_eq!(log_add(LOG_ZERO, -1.5), -1.5);
        assert_eq!(log_add(-1.5, LOG_ZERO), -1.5);
        assert_eq!(log_add(LOG_ZERO, LOG_ZERO), LOG_ZERO);
    }

    #[test]
    fn log_sum_of_uniform_eighths() {
        let x = (1.0f64 / 8.0).ln();
        let total = log_sum(&[x; 8]);
        assert!(total.abs() < 1e-12);
    }
}
