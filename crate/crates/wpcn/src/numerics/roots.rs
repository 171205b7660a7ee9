//! Scalar root finding.

use crate::error::{Error, Result};

/// Root of a function that changes sign on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `tol` (plus a few ulps of the
/// endpoints) or after `max_iter` halvings. An exact zero is returned as soon
/// as it is hit.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::Domain(format!(
            "bisection needs a sign change on [{lo}, {hi}], got {flo} and {fhi}"
        )));
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The root `(sqrt(b^2 - 4ac) - b) / (2a)` of `a z^2 + b z + c = 0`, required positive.
///
/// Evaluated in the cancellation-free form `2c / (-b - sqrt(disc))` when `b > 0`.
pub fn positive_quadratic_root(a: f64, b: f64, c: f64) -> Result<f64> {
    if a == 0.0 || !a.is_finite() {
        return Err(Error::SolverState(format!("quadratic leading coefficient is {a}")));
    }
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) {
        return Err(Error::SolverState(format!("negative discriminant {disc:.3e}")));
    }
    let sq = disc.sqrt();
    let root = if b > 0.0 { 2.0 * c / (-b - sq) } else { (sq - b) / (2.0 * a) };
    if !(root > 0.0 && root.is_finite()) {
        return Err(Error::SolverState(format!("selected quadratic root {root:.3e} is not positive")));
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factored_quadratics() {
        assert_eq!(positive_quadratic_root(1.0, -3.0, 2.0).unwrap(), 2.0);
        assert_eq!(positive_quadratic_root(1.0, 0.0, -4.0).unwrap(), 2.0);
        // (2z - 1)(z + 3) = 2z^2 + 5z - 3
        assert!((positive_quadratic_root(2.0, 5.0, -3.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_quadratics() {
        assert!(positive_quadratic_root(0.0, 1.0, 1.0).is_err());
        assert!(positive_quadratic_root(1.0, 0.0, 4.0).is_err());
        assert!(positive_quadratic_root(1.0, 3.0, 2.0).is_err());
    }

    #[test]
    fn stable_branch_for_large_b() {
        let z = positive_quadratic_root(1.0, 1e8, -1.0).unwrap();
        assert!((z - 1e-8).abs() < 1e-22);
    }

    #[test]
    fn bisection_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_err());
    }
}
