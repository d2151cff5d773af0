//! Continuous-outcome test. Each new outcome is standardized against the
//! median and raw MAD of earlier outcomes, squashed into (−1, 1), and
//! multiplied by the running Cohen's d to give direction and size.

use serde::{Deserialize, Serialize};

use crate::binary::sign;
use crate::error::{Error, Result};
use crate::ledger::{check_allocation, clamp_lambda, Arm, RampSchedule, WealthLedger, WealthStep};
use crate::SequentialTest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ContinuousPolicy {
    /// `λ = 0.5 + c_i · c_max · g_i · d̂`
    DoublyAdaptive,
    /// `λ = 0.5 + c_i · c · g_i · sign(d̂)`
    SignOnly { c: f64 },
}

impl Default for ContinuousPolicy {
    fn default() -> Self {
        ContinuousPolicy::DoublyAdaptive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousConfig {
    pub schedule: RampSchedule,
    pub c_max: f64,
    pub p: f64,
    pub alpha: f64,
    #[serde(default)]
    pub policy: ContinuousPolicy,
}

impl Default for ContinuousConfig {
    fn default() -> Self {
        ContinuousConfig {
            schedule: RampSchedule { burn_in: 50, ramp: 100 },
            c_max: 0.6,
            p: 0.5,
            alpha: crate::ledger::DEFAULT_ALPHA,
            policy: ContinuousPolicy::DoublyAdaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousObservation {
    pub y: f64,
    pub arm: Arm,
}

/// Welford accumulator for one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, y: f64) {
        self.n += 1;
        let delta = y - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (y - self.mean);
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then_some(self.mean)
    }

    /// Sample standard deviation (`n − 1` denominator).
    pub fn sd(&self) -> Option<f64> {
        (self.n > 1).then(|| (self.m2 / (self.n - 1) as f64).max(0.0).sqrt())
    }
}

/// Median and raw MAD (scale constant 1) of `values`. A zero or non-finite
/// MAD is replaced by 1.
pub fn robust_center_scale(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InsufficientHistory("median needs at least one value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted_center_scale(&sorted))
}

fn sorted_center_scale(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let mad = sorted_mad(sorted, median);
    let scale = if mad.is_finite() && mad > 0.0 { mad } else { 1.0 };
    (median, scale)
}

/// Median of `|x − center|` for a sorted slice, without materializing the
/// deviations: values at or below the center give one ascending run of
/// deviations (read right to left), values above it give another.
fn sorted_mad(sorted: &[f64], center: f64) -> f64 {
    let n = sorted.len();
    let split = sorted.partition_point(|&x| x <= center);
    let below = |k: usize| center - sorted[split - 1 - k];
    let above = |k: usize| sorted[split + k] - center;
    let kth = |k: usize| kth_of_two(split, &below, n - split, &above, k);
    if n % 2 == 1 {
        kth(n / 2)
    } else {
        0.5 * (kth(n / 2 - 1) + kth(n / 2))
    }
}

/// `k`-th smallest (0-based) element of the union of two ascending sequences
/// given by accessors.
fn kth_of_two(
    len_a: usize,
    a: &dyn Fn(usize) -> f64,
    len_b: usize,
    b: &dyn Fn(usize) -> f64,
    k: usize,
) -> f64 {
    debug_assert!(k < len_a + len_b);
    // Binary search on how many elements come from `a`.
    let mut lo = k.saturating_sub(len_b);
    let mut hi = k.min(len_a);
    loop {
        let take_a = (lo + hi) / 2;
        let take_b = k - take_a;
        if take_a < len_a && take_b > 0 && b(take_b - 1) > a(take_a) {
            lo = take_a + 1;
        } else if take_a > 0 && take_b < len_b && a(take_a - 1) > b(take_b) {
            hi = take_a - 1;
        } else {
            let next_a = if take_a < len_a { a(take_a) } else { f64::INFINITY };
            let next_b = if take_b < len_b { b(take_b) } else { f64::INFINITY };
            return next_a.min(next_b);
        }
    }
}

/// `r / (1 + |r|)`
pub fn squash(r: f64) -> f64 {
    r / (1.0 + r.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousState {
    config: ContinuousConfig,
    /// Past outcomes in ascending order.
    sorted: Vec<f64>,
    trt: RunningMoments,
    ctrl: RunningMoments,
    ledger: WealthLedger,
}

impl ContinuousState {
    pub fn new(config: ContinuousConfig) -> Result<Self> {
        check_allocation(config.p)?;
        RampSchedule::new(config.schedule.burn_in, config.schedule.ramp)?;
        if !(config.c_max > 0.0 && config.c_max < 1.0) {
            return Err(Error::Config(format!("c_max {} must lie in (0, 1)", config.c_max)));
        }
        if let ContinuousPolicy::SignOnly { c } = config.policy {
            if !(c > 0.0 && c <= 1.0) {
                return Err(Error::Config(format!("sign-only strength {c} must lie in (0, 1]")));
            }
        }
        Ok(ContinuousState {
            ledger: WealthLedger::new(config.alpha)?,
            config,
            sorted: Vec::new(),
            trt: RunningMoments::default(),
            ctrl: RunningMoments::default(),
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.ledger = self.ledger.with_trace();
        self
    }

    pub fn config(&self) -> &ContinuousConfig {
        &self.config
    }

    pub fn count(&self) -> u64 {
        self.sorted.len() as u64
    }

    /// Median and scale of the outcomes seen so far.
    pub fn center_scale(&self) -> Result<(f64, f64)> {
        if self.sorted.is_empty() {
            return Err(Error::InsufficientHistory("median needs at least one value"));
        }
        Ok(sorted_center_scale(&self.sorted))
    }

    /// Squashed standardized residual of `y` against past outcomes.
    pub fn informativeness(&self, y: f64) -> Result<f64> {
        let (median, scale) = self.center_scale()?;
        Ok(squash((y - median) / scale))
    }

    /// Running Cohen's d (treatment minus control), clamped to `[−1, 1]`.
    pub fn cohens_d(&self) -> f64 {
        let (Some(mean_trt), Some(mean_ctrl)) = (self.trt.mean(), self.ctrl.mean()) else {
            return 0.0;
        };
        let sd = |m: &RunningMoments| match m.sd() {
            Some(s) if s > 0.0 => s,
            _ => 1.0,
        };
        let (sd_trt, sd_ctrl) = (sd(&self.trt), sd(&self.ctrl));
        let pooled = ((sd_trt * sd_trt + sd_ctrl * sd_ctrl) / 2.0).sqrt();
        ((mean_trt - mean_ctrl) / pooled).clamp(-1.0, 1.0)
    }

    /// Wager on treatment for the next patient with outcome `y`.
    pub fn wager(&self, y: f64) -> Result<f64> {
        let history = self.count();
        let i = history + 1;
        if i == 1 || history < self.config.schedule.burn_in {
            return Ok(0.5);
        }
        let g = self.informativeness(y)?;
        let c = self.config.schedule.coefficient(i);
        let d = self.cohens_d();
        let raw = match self.config.policy {
            ContinuousPolicy::DoublyAdaptive => 0.5 + c * self.config.c_max * g * d,
            ContinuousPolicy::SignOnly { c: strength } => 0.5 + c * strength * g * sign(d),
        };
        clamp_lambda(raw)
    }

    pub fn step(&mut self, y: f64, arm: Arm) -> Result<WealthStep> {
        if !y.is_finite() {
            return Err(Error::InvalidObservation(format!("outcome {y} is not finite")));
        }
        let history = self.count();
        let step = if history == 0 || history < self.config.schedule.burn_in {
            self.ledger.apply_multiplier(self.config.p, 1.0)
        } else {
            self.ledger.apply_bet(self.wager(y)?, arm, self.config.p)?
        };
        let at = self.sorted.partition_point(|&x| x <= y);
        self.sorted.insert(at, y);
        match arm {
            Arm::Treatment => self.trt.push(y),
            Arm::Control => self.ctrl.push(y),
        }
        Ok(step)
    }
}

impl SequentialTest for ContinuousState {
    type Observation = ContinuousObservation;

    fn observe(&mut self, obs: &ContinuousObservation) -> Result<WealthStep> {
        self.step(obs.y, obs.arm)
    }

    fn ledger(&self) -> &WealthLedger {
        &self.ledger
    }
}
