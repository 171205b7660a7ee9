//! Complementary error function, principal-branch Lambert W, and the
//! SNR-versus-price relation solved through it.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::numerics::roots::bisect;

/// Below this SNR the Lambert-W route loses relative precision and the
/// relation is solved by bisection instead.
const LAMBERT_FLOOR: f64 = 1e-6;

/// Complementary error function.
///
/// For `0 <= x < 2.5` the everywhere-positive series
/// `erf x = (2/sqrt(pi)) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!` is summed
/// and subtracted from one; beyond that a Lentz-evaluated continued fraction
/// is used. Negative arguments use `erfc(-x) = 2 - erfc(x)`. Absolute error
/// stays near machine precision on the whole real line.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.5 {
        1.0 - erf_series(x)
    } else if x > 27.3 {
        0.0
    } else {
        erfc_continued_fraction(x)
    }
}

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * x2 / (2.0 * k + 1.0);
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    2.0 / PI.sqrt() * (-x2).exp() * sum
}

/// `erfc x = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))`.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = 0.5 * k as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// Principal branch `W0` of the Lambert W function: the `w >= -1` solving `w e^w = x`.
///
/// Seeds come from the branch-point expansion in `p = sqrt(2(e x + 1))` near
/// `x = -1/e`, from Winitzki's logarithmic form for moderate `x`, and from the
/// asymptotic `ln x - ln ln x` for large `x`; at most 20 Halley steps follow.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -(-1f64).exp();
    if x.is_nan() || x < branch - 4.0 * f64::EPSILON {
        return Err(Error::Domain(format!("lambert_w0 needs x >= -1/e, got {x}")));
    }
    if x <= branch {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let p = (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
    let mut w = if p < 0.5 {
        -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))
    } else if x < 3.0 {
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..20 {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= 2.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.max(-1.0))
}

/// `g(z) = ln(1+z) - z/(1+z)`, increasing on `z >= 0` with `g(0) = 0`.
///
/// A series replaces the direct form for small `z` where the two terms cancel.
pub fn snr_level(z: f64) -> f64 {
    if z < 1e-3 {
        let mut sum = 0.0;
        let mut pow = z * z;
        for n in 2..12 {
            let n = n as f64;
            let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (n - 1.0) / n * pow;
            pow *= z;
        }
        sum
    } else {
        z.ln_1p() - z / (1.0 + z)
    }
}

/// Inverts [`snr_level`]: the unique `z >= 0` with `g(z) = level`.
///
/// The closed form `z = -1/W0(-exp(-1 - level)) - 1` is refined by Newton
/// steps on `g`; below `z = 1e-6` bisection on `g` takes over.
pub fn snr_from_level(level: f64) -> Result<f64> {
    if !(level >= 0.0) || level.is_infinite() {
        return Err(Error::Domain(format!("level must be finite and nonnegative, got {level}")));
    }
    if level == 0.0 {
        return Ok(0.0);
    }
    let w = lambert_w0(-(-1.0 - level).exp())?;
    let mut z = -1.0 / w - 1.0;
    if !(z.is_finite() && z >= LAMBERT_FLOOR) {
        // g(z) <= z^2/2 on z >= 0, so the root lies below sqrt(2 level) once
        // that bound exceeds the true root; widen until bracketed.
        let mut hi = (2.0 * level).sqrt().max(1e-300) * 2.0;
        while snr_level(hi) < level {
            hi *= 2.0;
        }
        return bisect(|s| snr_level(s) - level, 0.0, hi, 0.0, 400);
    }
    for _ in 0..3 {
        let slope = z / ((1.0 + z) * (1.0 + z));
        let step = (snr_level(z) - level) / slope;
        if !step.is_finite() {
            break;
        }
        z = (z - step).max(0.5 * z);
        if step.abs() <= 4.0 * f64::EPSILON * z {
            break;
        }
    }
    Ok(z)
}

/// Optimal relay SNR for a slot when time is priced at `lam_time` and the
/// slot's rate constraint carries weight `lam_rate`, rates measured in
/// bandwidth `b`: the root of `g(z) = lam_time ln 2 / (lam_rate b)`.
pub fn z_from_lambda(lam_time: f64, lam_rate: f64, b: f64) -> Result<f64> {
    if !(lam_time > 0.0) || !(lam_rate > 0.0) {
        return Err(Error::DegenerateDual(format!(
            "SNR closed form needs positive multipliers, got {lam_time} and {lam_rate}"
        )));
    }
    if !(b > 0.0) {
        return Err(Error::Domain(format!("bandwidth must be positive, got {b}")));
    }
    snr_from_level(lam_time * LN_2 / (lam_rate * b))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson rule on [a, b] with `n` panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    fn erfc_by_quadrature(x: f64) -> f64 {
        let upper = x.max(0.0) + 9.0;
        let tail = simpson(|t| (-t * t).exp(), x, upper, 20_000);
        2.0 / PI.sqrt() * tail
    }

    #[test]
    fn erfc_limits() {
        assert_eq!(erfc(0.0), 1.0);
        assert_eq!(erfc(40.0), 0.0);
        assert_eq!(erfc(-40.0), 2.0);
    }

    #[test]
    fn erfc_against_quadrature() {
        let at_one = erfc_by_quadrature(1.0);
        assert!((at_one - 0.157_299_207_050_285_1).abs() < 1e-13);
        assert!((erfc(1.0) - at_one).abs() < 1e-13);
        for i in -60..=60 {
            let x = i as f64 * 0.1;
            let q = if x >= 0.0 { erfc_by_quadrature(x) } else { 2.0 - erfc_by_quadrature(-x) };
            assert!((erfc(x) - q).abs() < 1e-12, "x = {x}: {} vs {q}", erfc(x));
        }
    }

    #[test]
    fn erfc_is_continuous_at_method_switch() {
        let below = erfc(2.5 - 1e-12);
        let above = erfc(2.5);
        assert!((below - above).abs() < 1e-14);
    }

    #[test]
    fn lambert_fixed_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_eq!(lambert_w0(-(-1f64).exp()).unwrap(), -1.0);
        assert!((lambert_w0(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!(lambert_w0(-0.4).is_err());
    }

    #[test]
    fn lambert_against_bisection() {
        let target = -0.2;
        let oracle = bisect(|w| w * w.exp() - target, -1.0, 0.0, 1e-15, 200).unwrap();
        assert!((oracle - (-0.259_171_101_819_073_7)).abs() < 1e-14);
        assert!((lambert_w0(target).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn level_series_matches_direct_form() {
        for z in [2e-4f64, 5e-4, 9.9e-4] {
            let direct = z.ln_1p() - z / (1.0 + z);
            assert!((snr_level(z) - direct).abs() < 1e-15 * 1e3 * z * z);
        }
    }

    #[test]
    fn level_one_against_bisection() {
        let oracle = bisect(|z| (1.0 + z).ln() - z / (1.0 + z) - 1.0, 0.0, 100.0, 1e-14, 300).unwrap();
        assert!((oracle - 5.305_395_279_271_691).abs() < 1e-12);
        let z = z_from_lambda(1.0, 1.0, LN_2).unwrap();
        assert!((z - oracle).abs() < 1e-12);
    }

    #[test]
    fn level_near_zero_uses_bisection_path() {
        for level in [1e-30, 1e-20, 1e-14, 1e-13] {
            let z = snr_from_level(level).unwrap();
            assert!(z < 1e-6);
            assert!((snr_level(z) - level).abs() <= 1e-10 * level.max(1e-300) + 1e-300);
        }
        assert!(snr_from_level(1e-30).unwrap() < 1e-14);
    }

    #[test]
    fn degenerate_multipliers_rejected() {
        assert!(matches!(z_from_lambda(0.0, 1.0, 1.0), Err(Error::DegenerateDual(_))));
        assert!(matches!(z_from_lambda(1.0, 0.0, 1.0), Err(Error::DegenerateDual(_))));
    }
}
