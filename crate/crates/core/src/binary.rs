//! Binary-outcome test: bet on the arm of each patient after seeing whether
//! they had the event, with the wager tilted by the running difference in
//! event rates between arms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{check_allocation, clamp_lambda, Arm, RampSchedule, WealthLedger, WealthStep};
use crate::SequentialTest;

/// How the running risk difference is turned into a wager.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BinaryPolicy {
    /// `0.5 ± 0.5 · c_i · δ̂`
    HalfKelly,
    /// `0.5 ± c_i · δ̂`
    FullKelly,
    /// `0.5 ± c_i · λ · sign(δ̂)`: fixed magnitude, learned direction.
    Fixed { lambda: f64 },
}

impl Default for BinaryPolicy {
    fn default() -> Self {
        BinaryPolicy::HalfKelly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryConfig {
    pub schedule: RampSchedule,
    /// Allocation probability to treatment.
    pub p: f64,
    pub alpha: f64,
    #[serde(default)]
    pub policy: BinaryPolicy,
}

impl Default for BinaryConfig {
    fn default() -> Self {
        BinaryConfig {
            schedule: RampSchedule { burn_in: 50, ramp: 100 },
            p: 0.5,
            alpha: crate::ledger::DEFAULT_ALPHA,
            policy: BinaryPolicy::HalfKelly,
        }
    }
}

impl BinaryConfig {
    pub fn validate(&self) -> Result<()> {
        check_allocation(self.p)?;
        RampSchedule::new(self.schedule.burn_in, self.schedule.ramp)?;
        if let BinaryPolicy::Fixed { lambda } = self.policy {
            if !(lambda > 0.0 && lambda < 1.0) {
                return Err(Error::Config(format!("fixed wager {lambda} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryObservation {
    pub outcome: bool,
    pub arm: Arm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryState {
    config: BinaryConfig,
    pub n_trt: u64,
    pub n_ctrl: u64,
    pub e_trt: u64,
    pub e_ctrl: u64,
    ledger: WealthLedger,
}

impl BinaryState {
    pub fn new(config: BinaryConfig) -> Result<Self> {
        config.validate()?;
        Ok(BinaryState {
            ledger: WealthLedger::new(config.alpha)?,
            config,
            n_trt: 0,
            n_ctrl: 0,
            e_trt: 0,
            e_ctrl: 0,
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.ledger = self.ledger.with_trace();
        self
    }

    pub fn config(&self) -> &BinaryConfig {
        &self.config
    }

    /// Patients seen so far.
    pub fn count(&self) -> u64 {
        self.n_trt + self.n_ctrl
    }

    /// Event rate in treatment minus event rate in control; an empty arm
    /// counts as rate 0.5.
    pub fn delta(&self) -> f64 {
        let rate = |e: u64, n: u64| if n == 0 { 0.5 } else { e as f64 / n as f64 };
        rate(self.e_trt, self.n_trt) - rate(self.e_ctrl, self.n_ctrl)
    }

    /// Wager on treatment for the next patient, given their outcome.
    pub fn wager(&self, outcome: bool) -> f64 {
        let i = self.count() + 1;
        if i == 1 {
            return 0.5;
        }
        let c = self.config.schedule.coefficient(i);
        let delta = self.delta();
        let tilt = match self.config.policy {
            BinaryPolicy::HalfKelly => 0.5 * c * delta,
            BinaryPolicy::FullKelly => c * delta,
            BinaryPolicy::Fixed { lambda } => c * lambda * sign(delta),
        };
        let raw = if outcome { 0.5 + tilt } else { 0.5 - tilt };
        clamp_lambda(raw).expect("wager is finite")
    }

    /// Bet on the patient, then reveal the arm and update the counts.
    pub fn step(&mut self, outcome: bool, arm: Arm) -> Result<WealthStep> {
        // the first patient is never bet on; λ = p is the neutral wager
        let step = if self.count() == 0 {
            self.ledger.apply_multiplier(self.config.p, 1.0)
        } else {
            self.ledger.apply_bet(self.wager(outcome), arm, self.config.p)?
        };
        match arm {
            Arm::Treatment => {
                self.n_trt += 1;
                self.e_trt += u64::from(outcome);
            }
            Arm::Control => {
                self.n_ctrl += 1;
                self.e_ctrl += u64::from(outcome);
            }
        }
        Ok(step)
    }
}

impl SequentialTest for BinaryState {
    type Observation = BinaryObservation;

    fn observe(&mut self, obs: &BinaryObservation) -> Result<WealthStep> {
        self.step(obs.outcome, obs.arm)
    }

    fn ledger(&self) -> &WealthLedger {
        &self.ledger
    }
}

pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
