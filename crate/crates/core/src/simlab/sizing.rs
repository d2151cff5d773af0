//! Fixed-sample designs used to size the simulated trials.

use crate::error::{Error, Result};
use crate::stats::{pnorm, pnt, qnorm, qt};

fn check_power_alpha(power: f64, alpha: f64) -> Result<()> {
    if !(power > 0.0 && power < 1.0) {
        return Err(Error::Config(format!("power {power} must lie in (0, 1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

/// Per-arm size of the two-sided two-proportion z-test (unrounded).
pub fn per_arm_two_proportion(p1: f64, p2: f64, power: f64, alpha: f64) -> Result<f64> {
    check_power_alpha(power, alpha)?;
    if !(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0) || p1 == p2 {
        return Err(Error::Config(format!(
            "two-proportion design needs distinct rates in (0, 1), got {p1} and {p2}"
        )));
    }
    let (q1, q2) = (1.0 - p1, 1.0 - p2);
    let z_alpha = qnorm(1.0 - alpha / 2.0);
    let z_beta = qnorm(power);
    let pooled = ((p1 + p2) * (q1 + q2) / 2.0).sqrt();
    let unpooled = (p1 * q1 + p2 * q2).sqrt();
    let root_n = (z_alpha * pooled + z_beta * unpooled) / (p1 - p2).abs();
    Ok(root_n * root_n)
}

/// Power of the two-proportion z-test with `n` per arm.
pub fn power_two_proportion(p1: f64, p2: f64, n: f64, alpha: f64) -> f64 {
    let (q1, q2) = (1.0 - p1, 1.0 - p2);
    let z_alpha = qnorm(1.0 - alpha / 2.0);
    let num = n.sqrt() * (p1 - p2).abs() - z_alpha * ((p1 + p2) * (q1 + q2) / 2.0).sqrt();
    pnorm(num / (p1 * q1 + p2 * q2).sqrt())
}

/// Total size (both arms) of the two-proportion design.
pub fn size_two_proportion(p1: f64, p2: f64, power: f64, alpha: f64) -> Result<u64> {
    Ok(2 * per_arm_two_proportion(p1, p2, power, alpha)?.ceil() as u64)
}

/// Power of the two-sided two-sample t-test with `n` per arm and
/// standardized effect `d`.
pub fn power_t_test(d: f64, n: f64, alpha: f64) -> f64 {
    let df = 2.0 * (n - 1.0);
    let critical = qt(1.0 - alpha / 2.0, df);
    1.0 - pnt(critical, df, (n / 2.0).sqrt() * d)
}

/// Per-arm size of the two-sample t-test (unrounded), by bisection on
/// the noncentral-t power curve.
pub fn per_arm_t_test(d: f64, power: f64, alpha: f64) -> Result<f64> {
    check_power_alpha(power, alpha)?;
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Config(format!("effect size {d} must be positive")));
    }
    let gap = |n: f64| power_t_test(d, n, alpha) - power;
    let mut lo = 2.0;
    if gap(lo) >= 0.0 {
        return Ok(lo);
    }
    // the z-test size undershoots slightly; widen from there
    let z = qnorm(1.0 - alpha / 2.0) + qnorm(power);
    let mut hi = (2.0 * (z / d).powi(2)).max(lo) + 2.0;
    while gap(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e7 {
            return Err(Error::Config(format!("effect size {d} too small to size")));
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Total size (both arms) of the two-sample t-test design.
pub fn size_t_test(d: f64, power: f64, alpha: f64) -> Result<u64> {
    Ok(2 * per_arm_t_test(d, power, alpha)?.ceil() as u64)
}

/// Required events for the log-rank test: `ceil(4 ((z_{α/2} + z_β) / ln HR)²)`.
pub fn size_logrank(hr: f64, power: f64, alpha: f64) -> Result<u64> {
    check_power_alpha(power, alpha)?;
    if !(hr > 0.0 && hr.is_finite()) || hr == 1.0 {
        return Err(Error::Config(format!("hazard ratio {hr} must be positive and not 1")));
    }
    let z = qnorm(1.0 - alpha / 2.0) + qnorm(power);
    Ok((4.0 * (z / hr.ln()).powi(2)).ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_proportion_sizes() {
        assert_eq!(size_two_proportion(0.40, 0.35, 0.80, 0.05).unwrap(), 2942);
        assert_eq!(size_two_proportion(0.40, 0.30, 0.80, 0.05).unwrap(), 712);
        assert_eq!(size_two_proportion(0.40, 0.35, 0.90, 0.05).unwrap(), 3938);
        assert_eq!(size_two_proportion(0.40, 0.30, 0.90, 0.05).unwrap(), 954);
        assert!(size_two_proportion(0.4, 0.4, 0.8, 0.05).is_err());
        assert!(size_two_proportion(0.0, 0.4, 0.8, 0.05).is_err());
    }

    #[test]
    fn two_proportion_inverts_power() {
        let n = per_arm_two_proportion(0.25, 0.20, 0.8, 0.05).unwrap();
        let gap = power_two_proportion(0.25, 0.20, n, 0.05) - 0.8;
        assert!(gap.abs() < 1e-9, "{gap}");
    }

    #[test]
    fn t_test_sizes() {
        for (d, power, total) in [
            (0.20, 0.80, 788),
            (0.40, 0.80, 200),
            (0.60, 0.80, 90),
            (0.20, 0.90, 1054),
            (0.40, 0.90, 266),
            (0.60, 0.90, 120),
            (0.50, 0.80, 128),
            (0.30, 0.80, 352),
        ] {
            assert_eq!(size_t_test(d, power, 0.05).unwrap(), total, "d = {d}, power = {power}");
        }
        assert!(size_t_test(0.0, 0.8, 0.05).is_err());
        assert!(size_t_test(-0.3, 0.8, 0.05).is_err());
    }

    #[test]
    fn logrank_sizes() {
        assert_eq!(size_logrank(0.80, 0.80, 0.05).unwrap(), 631);
        let z: f64 = 1.959963984540054 + 0.8416212335729143;
        let direct = 4.0 * (z / 0.8f64.ln()).powi(2);
        assert!((direct - 630.5).abs() < 0.1);
        assert!(size_logrank(1.0, 0.8, 0.05).is_err());
        assert_eq!(size_logrank(1.25, 0.8, 0.05).unwrap(), 631);
    }
}
