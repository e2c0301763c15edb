//! Central finite differences for checking analytic gradients.

/// Step used by every gradient check in this crate.
pub const FD_STEP: f64 = 1e-6;

/// Magnitude, per unit of loss, below which relative error is measured
/// against this floor instead of the (tiny) gradient itself.
///
/// A central difference with `h = 1e-6` carries about `1e-10 · |L|` of
/// rounding noise for a loss of size `|L|`, so entries much smaller than
/// `1e-3 · |L|` cannot be resolved to a relative accuracy of `1e-6` no matter
/// how exact the analytic gradient is.
pub const REL_FLOOR: f64 = 1e-3;

/// `|a − n| / max(|a|, |n|, REL_FLOOR · max(1, |loss|))`.
pub fn rel_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let floor = REL_FLOOR * loss.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// `(f(x + h e_k) − f(x − h e_k)) / 2h` for every coordinate `k`.
///
/// `f` receives the perturbed parameter vector.
pub fn central_difference(params: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = params.to_vec();
    (0..x.len())
        .map(|k| {
            let orig = x[k];
            x[k] = orig + h;
            let plus = f(&x);
            x[k] = orig - h;
            let minus = f(&x);
            x[k] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise relative error between two gradient vectors.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], loss: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_error(*a, *n, loss))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic() {
        let g = central_difference(&[1.0, -2.0], FD_STEP, |x| x[0].powi(3) + x[0] * x[1]);
        assert!(max_rel_error(&g, &[3.0 - 2.0, 1.0], -1.0) < 1e-8);
    }

    #[test]
    fn floor_applies_to_tiny_values() {
        assert!(rel_error(1e-9, 2e-9, 1.0) < 1e-5);
        assert!(rel_error(1e-6, 2e-6, 1.0) < 1e-2);
        assert!(rel_error(1e-6, 2e-6, 1e3) < 1e-5);
        assert!((rel_error(1.0, 1.1, 1.0) - 0.1 / 1.1).abs() < 1e-15);
    }
}
