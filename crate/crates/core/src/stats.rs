//! Distribution functions used by the sample-size calculators, plus the
//! summary statistics of the Monte Carlo engine.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::{beta::beta_reg, gamma::ln_gamma};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn pnorm(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn qnorm(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Central t CDF.
pub fn pt(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).expect("df > 0").cdf(t)
}

/// Central t quantile, refined by Newton steps on the CDF.
pub fn qt(p: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let mut t = dist.inverse_cdf(p);
    for _ in 0..3 {
        let density = statrs::distribution::Continuous::pdf(&dist, t);
        if density <= 0.0 {
            break;
        }
        let next = t - (dist.cdf(t) - p) / density;
        if !next.is_finite() {
            break;
        }
        t = next;
    }
    t
}

/// Lower-tail CDF of the noncentral t distribution, `P(T ≤ t)` with
/// `df` degrees of freedom and noncentrality `ncp` (Lenth's AS 243 series).
pub fn pnt(t: f64, df: f64, ncp: f64) -> f64 {
    const ITRMAX: usize = 1000;
    const ERRMAX: f64 = 1e-12;

    if ncp == 0.0 {
        return pt(t, df);
    }
    let (negdel, tt, del) = if t >= 0.0 { (false, t, ncp) } else { (true, -t, -ncp) };

    if df > 4e5 || del * del > 2.0 * std::f64::consts::LN_2 * 1021.0 {
        // normal approximation for huge df or noncentrality
        let s = 1.0 / (4.0 * df);
        let z = (tt * (1.0 - s) - del) / (1.0 + tt * tt * 2.0 * s).sqrt();
        let upper = 1.0 - pnorm(z);
        return if negdel { upper } else { 1.0 - upper };
    }

    let x = t * t / (t * t + df);
    let mut tnc = 0.0;
    if x > 0.0 {
        let lambda = del * del;
        let mut p = 0.5 * (-0.5 * lambda).exp();
        let mut q = (2.0 / std::f64::consts::PI).sqrt() * p * del;
        let mut s = 0.5 - p;
        if s < 1e-7 {
            s = -0.5 * (-0.5 * lambda).exp_m1();
        }
        let mut a = 0.5;
        let b = 0.5 * df;
        let rxb = (1.0 - x).powf(b);
        let albeta = 0.5 * std::f64::consts::PI.ln() + ln_gamma(b) - ln_gamma(0.5 + b);
        let mut xodd = beta_reg(a, b, x);
        let mut godd = 2.0 * rxb * (a * x.ln() - albeta).exp();
        let bx = b * x;
        let mut xeven = if bx < f64::EPSILON { bx } else { 1.0 - rxb };
        let mut geven = bx * rxb;
        tnc = p * xodd + q * xeven;
        for it in 1..=ITRMAX {
            a += 1.0;
            xodd -= godd;
            xeven -= geven;
            godd *= x * (a + b - 1.0) / a;
            geven *= x * (a + b - 0.5) / (a + 0.5);
            p *= lambda / (2 * it) as f64;
            q *= lambda / (2 * it + 1) as f64;
            tnc += p * xodd + q * xeven;
            s -= p;
            if s < -1e-10 || (s <= 0.0 && it > 1) {
                break;
            }
            let errbd = 2.0 * s * (xodd - godd);
            if errbd.abs() < ERRMAX && it > 1 {
                break;
            }
        }
    }
    tnc += pnorm(-del);
    let lower = !negdel;
    if lower {
        tnc.min(1.0)
    } else {
        1.0 - tnc
    }
}

/// Median with the two middle values averaged; `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Sample quantile by linear interpolation between order statistics
/// (the "type 7" definition).
pub fn quantile(values: &[f64], prob: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted_quantile(&sorted, prob))
}

pub fn sorted_quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `P(T ≤ t)` by integrating `Φ(t·sqrt(v/df) − ncp)` against the
    /// chi-square density of `v` (midpoint rule in `sqrt(v)`).
    fn pnt_quadrature(t: f64, df: f64, ncp: f64) -> f64 {
        // v = w², dv = 2w dw; chi-square pdf of v
        let ln_norm = -(df / 2.0) * std::f64::consts::LN_2 - ln_gamma(df / 2.0);
        let upper = (df + 40.0 * (2.0 * df).sqrt() + 100.0).sqrt();
        let steps = 200_000;
        let h = upper / steps as f64;
        let mut total = 0.0;
        for k in 0..steps {
            let w = (k as f64 + 0.5) * h;
            let v = w * w;
            let density = (ln_norm + (df / 2.0 - 1.0) * v.ln() - v / 2.0).exp() * 2.0 * w;
            total += pnorm(t * (v / df).sqrt() - ncp) * density * h;
        }
        total
    }

    #[test]
    fn noncentral_t_matches_quadrature() {
        for &(t, df, ncp) in &[
            (1.97, 198.0, 2.0),
            (1.96, 786.0, 2.8),
            (-1.0, 10.0, 0.5),
            (2.5, 5.0, -1.0),
            (0.3, 30.0, 1.7),
            (1.99, 88.0, 2.85),
        ] {
            let a = pnt(t, df, ncp);
            let b = pnt_quadrature(t, df, ncp);
            assert!((a - b).abs() < 1e-8, "pnt({t},{df},{ncp}) = {a} vs {b}");
        }
    }

    #[test]
    fn noncentral_t_reduces_to_central() {
        assert!((pnt(1.3, 12.0, 0.0) - pt(1.3, 12.0)).abs() < 1e-15);
    }

    #[test]
    fn t_quantile_round_trips() {
        for &(p, df) in &[(0.975, 198.0), (0.975, 10.0), (0.025, 3.0), (0.9, 1000.0)] {
            let q = qt(p, df);
            assert!((pt(q, df) - p).abs() < 1e-13, "qt({p},{df})");
        }
        assert!((qnorm(0.975) - 1.959963984540054).abs() < 1e-12);
    }

    #[test]
    fn quantile_type7() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[7.0]), Some(7.0));
    }
}
