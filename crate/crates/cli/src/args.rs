//! Parsers for compact command-line values.

use anyhow::{anyhow, bail, Context};

use ert_core::simlab::BettingStrategy;

/// `half-kelly`, `full-kelly`, `doubly-adaptive`, `fixed:<λ>` or `sign-only:<c>`.
pub fn parse_strategy(s: &str) -> anyhow::Result<BettingStrategy> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let value = || -> anyhow::Result<f64> {
        arg.ok_or_else(|| anyhow!("strategy {name} needs a value, as in {name}:0.25"))?
            .parse::<f64>()
            .with_context(|| format!("bad value in strategy {s:?}"))
    };
    let strategy = match name.trim().to_ascii_lowercase().as_str() {
        "half-kelly" | "adaptive-half-kelly" => BettingStrategy::AdaptiveHalfKelly,
        "full-kelly" | "adaptive-full-kelly" => BettingStrategy::AdaptiveFullKelly,
        "doubly-adaptive" => BettingStrategy::DoublyAdaptive,
        "fixed" => BettingStrategy::Fixed { lambda: value()? },
        "sign-only" => BettingStrategy::SignOnly { c: value()? },
        other => bail!("unknown strategy {other:?}"),
    };
    if arg.is_some() && !matches!(strategy, BettingStrategy::Fixed { .. } | BettingStrategy::SignOnly { .. }) {
        bail!("strategy {name} takes no value");
    }
    Ok(strategy)
}

pub fn parse_strategies(s: &str) -> anyhow::Result<Vec<BettingStrategy>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse_strategy(p.trim())).collect()
}

/// A comma list (`0.1,0.2`) or an inclusive range `lo..hi` stepped by `step`.
pub fn parse_grid(s: &str, step: f64) -> anyhow::Result<Vec<f64>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: f64 = lo.trim().parse().with_context(|| format!("bad range start in {s:?}"))?;
        let hi: f64 = hi.trim().parse().with_context(|| format!("bad range end in {s:?}"))?;
        if !(step > 0.0) || hi < lo {
            bail!("range {s:?} needs lo <= hi and a positive step");
        }
        let n = ((hi - lo) / step + 1e-9).floor() as u64;
        // rounding keeps 0.1 + k·0.05 printable as the decimals users typed
        return Ok((0..=n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect());
    }
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad number {p:?}")))
        .collect()
}
