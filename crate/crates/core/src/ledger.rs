//! Variant-agnostic wealth bookkeeping shared by every sequential test.
//!
//! Wealth starts at 1 and is multiplied by one factor per observation. It is
//! kept as a running log-wealth so that thousands of small multipliers cannot
//! underflow; [`WealthLedger::wealth`] exponentiates on demand. The null is
//! rejected the first time wealth reaches `1/alpha`, and that flag is sticky.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp for two-sided wagers.
pub const LAMBDA_MIN: f64 = 0.001;
/// Upper clamp for two-sided wagers.
pub const LAMBDA_MAX: f64 = 0.999;
/// Default significance level; the rejection threshold is `1/alpha = 20`.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Randomization arm of a patient, death, record or transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn from_label(label: u8) -> Result<Self> {
        match label {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treatment),
            other => Err(Error::InvalidArm(other)),
        }
    }

    pub fn label(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1,
        }
    }

    pub fn is_treatment(self) -> bool {
        self == Arm::Treatment
    }

    pub fn flipped(self) -> Self {
        match self {
            Arm::Control => Arm::Treatment,
            Arm::Treatment => Arm::Control,
        }
    }
}

impl TryFrom<u8> for Arm {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        Arm::from_label(value)
    }
}

impl From<Arm> for u8 {
    fn from(arm: Arm) -> u8 {
        arm.label()
    }
}

/// Burn-in and linear ramp for the betting strength `c_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub burn_in: u64,
    pub ramp: u64,
}

impl RampSchedule {
    pub fn new(burn_in: u64, ramp: u64) -> Result<Self> {
        if ramp == 0 {
            return Err(Error::Config("ramp must be at least 1".into()));
        }
        Ok(RampSchedule { burn_in, ramp })
    }

    /// Betting strength at 1-based observation `i`:
    /// `min(1, max(0, (i - burn_in) / ramp))`.
    pub fn coefficient(&self, i: u64) -> f64 {
        ramp_coefficient(i, self)
    }

    /// True once `i` is past the burn-in window.
    pub fn past_burn_in(&self, i: u64) -> bool {
        i > self.burn_in
    }
}

pub fn ramp_coefficient(i: u64, sched: &RampSchedule) -> f64 {
    let raw = (i as f64 - sched.burn_in as f64) / sched.ramp as f64;
    raw.clamp(0.0, 1.0)
}

/// Clamp a raw wager into `[0.001, 0.999]`.
pub fn clamp_lambda(raw: f64) -> Result<f64> {
    clamp_lambda_to(raw, LAMBDA_MIN, LAMBDA_MAX)
}

pub fn clamp_lambda_to(raw: f64, lo: f64, hi: f64) -> Result<f64> {
    if !raw.is_finite() {
        return Err(Error::InvalidWager(raw));
    }
    Ok(raw.clamp(lo, hi))
}

/// Expected multiplier of a two-sided wager under the null:
/// `p * (lambda / p) + (1 - p) * ((1 - lambda) / (1 - p))`.
///
/// Equal to one for every `lambda` in `[0, 1]`; kept as a self-test.
pub fn martingale_audit(lambda: f64, p: f64) -> f64 {
    p * (lambda / p) + (1.0 - p) * ((1.0 - lambda) / (1.0 - p))
}

/// Payout of a two-sided wager once the arm is revealed.
pub fn two_sided_multiplier(lambda: f64, arm: Arm, p: f64) -> f64 {
    match arm {
        Arm::Treatment => lambda / p,
        Arm::Control => (1.0 - lambda) / (1.0 - p),
    }
}

pub(crate) fn check_allocation(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "allocation probability {p} must lie strictly inside (0, 1)"
        )))
    }
}

/// One row of the wealth ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthStep {
    /// 1-based observation counter.
    pub index: u64,
    /// Wager on the treatment side, or the signed bet for score-based variants.
    pub lambda: f64,
    pub multiplier: f64,
    pub wealth: f64,
    pub crossed: bool,
}

/// Running wealth process with sticky threshold detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthLedger {
    alpha: f64,
    log_threshold: f64,
    log_wealth: f64,
    max_log_wealth: f64,
    count: u64,
    crossed_at: Option<u64>,
    last: Option<WealthStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<WealthStep>>,
}

impl Default for WealthLedger {
    fn default() -> Self {
        WealthLedger::new(DEFAULT_ALPHA).expect("default alpha is valid")
    }
}

impl WealthLedger {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("alpha {alpha} must lie in (0, 1)")));
        }
        Ok(WealthLedger {
            alpha,
            log_threshold: (1.0 / alpha).ln(),
            log_wealth: 0.0,
            max_log_wealth: 0.0,
            count: 0,
            crossed_at: None,
            last: None,
            trace: None,
        })
    }

    /// Keep every step in memory, e.g. for trajectory export.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn threshold(&self) -> f64 {
        1.0 / self.alpha
    }

    pub fn log_threshold(&self) -> f64 {
        self.log_threshold
    }

    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn wealth(&self) -> f64 {
        self.log_wealth.exp()
    }

    /// Largest wealth seen so far (including the starting value 1).
    pub fn max_wealth(&self) -> f64 {
        self.max_log_wealth.exp()
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn crossed(&self) -> bool {
        self.crossed_at.is_some()
    }

    /// Index of the first observation at which wealth reached `1/alpha`.
    pub fn crossed_at(&self) -> Option<u64> {
        self.crossed_at
    }

    pub fn last_step(&self) -> Option<&WealthStep> {
        self.last.as_ref()
    }

    /// Recorded steps; empty unless the ledger was built [`with_trace`](Self::with_trace).
    pub fn steps(&self) -> &[WealthStep] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Apply a two-sided wager `lambda` on treatment at allocation `p`.
    pub fn apply_bet(&mut self, lambda: f64, arm: Arm, p: f64) -> Result<WealthStep> {
        check_allocation(p)?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidWager(lambda));
        }
        Ok(self.apply_multiplier(lambda, two_sided_multiplier(lambda, arm, p)))
    }

    /// Record a step with an already computed positive multiplier.
    pub fn apply_multiplier(&mut self, lambda: f64, multiplier: f64) -> WealthStep {
        debug_assert!(multiplier > 0.0, "multiplier must be positive");
        self.count += 1;
        self.log_wealth += multiplier.ln();
        if self.log_wealth > self.max_log_wealth {
            self.max_log_wealth = self.log_wealth;
        }
        if self.crossed_at.is_none() && self.log_wealth >= self.log_threshold {
            self.crossed_at = Some(self.count);
        }
        let step = WealthStep {
            index: self.count,
            lambda,
            multiplier,
            wealth: self.log_wealth.exp(),
            crossed: self.crossed_at.is_some(),
        };
        self.last = Some(step);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(step);
        }
        step
    }
}
