//! Deaths-only monitoring. Each death is a coin flip between arms under the
//! null (1:1 allocation, equal mortality); the wager is the running fraction
//! of deaths that came from treatment.

use serde::{Deserialize, Serialize};

use crate::binary::sign;
use crate::error::{Error, Result};
use crate::ledger::{clamp_lambda, Arm, RampSchedule, WealthLedger, WealthStep};
use crate::SequentialTest;

/// Sample-size inflation over the frequentist design for deaths-only monitoring.
pub const DESIGN_INFLATION: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum DeathsPolicy {
    /// `λ = 0.5 + c_i (p̂ − 0.5)`; equals `p̂` at full ramp.
    FullKelly,
    HalfKelly,
    /// `λ = 0.5 + c_i · λ · sign(p̂ − 0.5)`
    Fixed { lambda: f64 },
}

impl Default for DeathsPolicy {
    fn default() -> Self {
        DeathsPolicy::FullKelly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeathsConfig {
    pub schedule: RampSchedule,
    pub alpha: f64,
    #[serde(default)]
    pub policy: DeathsPolicy,
}

impl Default for DeathsConfig {
    fn default() -> Self {
        DeathsConfig {
            schedule: RampSchedule { burn_in: 30, ramp: 50 },
            alpha: crate::ledger::DEFAULT_ALPHA,
            policy: DeathsPolicy::FullKelly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathsState {
    config: DeathsConfig,
    pub d_trt: u64,
    pub d_ctrl: u64,
    ledger: WealthLedger,
}

impl DeathsState {
    pub fn new(config: DeathsConfig) -> Result<Self> {
        RampSchedule::new(config.schedule.burn_in, config.schedule.ramp)?;
        if let DeathsPolicy::Fixed { lambda } = config.policy {
            if !(lambda > 0.0 && lambda < 0.5) {
                return Err(Error::Config(format!("fixed wager {lambda} must lie in (0, 0.5)")));
            }
        }
        Ok(DeathsState {
            ledger: WealthLedger::new(config.alpha)?,
            config,
            d_trt: 0,
            d_ctrl: 0,
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.ledger = self.ledger.with_trace();
        self
    }

    pub fn config(&self) -> &DeathsConfig {
        &self.config
    }

    pub fn count(&self) -> u64 {
        self.d_trt + self.d_ctrl
    }

    /// Fraction of deaths so far from the treatment arm (0.5 before any death).
    pub fn p_hat(&self) -> f64 {
        let total = self.count();
        if total == 0 {
            0.5
        } else {
            self.d_trt as f64 / total as f64
        }
    }

    /// Odds of a death coming from treatment, `p̂ / (1 − p̂)`, with the
    /// extreme proportions mapped to 0 and infinity.
    pub fn relative_risk(&self) -> f64 {
        let p = self.p_hat();
        if p <= 0.001 {
            0.0
        } else if p >= 0.999 {
            f64::INFINITY
        } else {
            p / (1.0 - p)
        }
    }

    pub fn wager(&self) -> f64 {
        let i = self.count() + 1;
        if !self.config.schedule.past_burn_in(i) || self.count() == 0 {
            return 0.5;
        }
        let c = self.config.schedule.coefficient(i);
        let lean = self.p_hat() - 0.5;
        let raw = match self.config.policy {
            DeathsPolicy::FullKelly => 0.5 + c * lean,
            DeathsPolicy::HalfKelly => 0.5 + 0.5 * c * lean,
            DeathsPolicy::Fixed { lambda } => 0.5 + c * lambda * sign(lean),
        };
        clamp_lambda(raw).expect("wager is finite")
    }

    pub fn step(&mut self, arm: Arm) -> Result<WealthStep> {
        let lambda = self.wager();
        let step = self.ledger.apply_bet(lambda, arm, 0.5)?;
        match arm {
            Arm::Treatment => self.d_trt += 1,
            Arm::Control => self.d_ctrl += 1,
        }
        Ok(step)
    }
}

impl SequentialTest for DeathsState {
    type Observation = Arm;

    fn observe(&mut self, arm: &Arm) -> Result<WealthStep> {
        self.step(*arm)
    }

    fn ledger(&self) -> &WealthLedger {
        &self.ledger
    }
}

/// Probability that a death came from treatment: `p_trt / (p_trt + p_ctrl)`.
pub fn death_coin(p_ctrl: f64, p_trt: f64) -> Result<f64> {
    for rate in [p_ctrl, p_trt] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::Config(format!("mortality rate {rate} outside [0, 1]")));
        }
    }
    if p_ctrl + p_trt <= 0.0 {
        return Err(Error::NoDeathsPossible);
    }
    Ok(p_trt / (p_trt + p_ctrl))
}

/// Expected deaths in a 1:1 trial of `n_patients`: `ceil(n/2 · (p_ctrl + p_trt))`.
pub fn expected_deaths(n_patients: u64, p_ctrl: f64, p_trt: f64) -> u64 {
    (n_patients as f64 / 2.0 * (p_ctrl + p_trt)).ceil() as u64
}

/// Deaths-only design size from the frequentist total.
pub fn design_sample_size(n_frequentist: u64) -> u64 {
    (n_frequentist as f64 * DESIGN_INFLATION).ceil() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalRow {
    pub baseline: f64,
    pub treatment_rate: f64,
    pub coin: f64,
    /// `|coin − 0.5|`
    pub tilt: f64,
    /// Tilt divided by the absolute risk reduction; `None` when `arr == 0`.
    pub tilt_over_arr: Option<f64>,
}

/// Death-coin tilt for each baseline mortality under a fixed risk reduction.
pub fn signal_concentration_table(baselines: &[f64], arr: f64) -> Result<Vec<SignalRow>> {
    baselines
        .iter()
        .map(|&baseline| {
            let treatment_rate = baseline - arr;
            if treatment_rate < 0.0 {
                return Err(Error::Config(format!(
                    "baseline {baseline} minus risk reduction {arr} is negative"
                )));
            }
            let coin = death_coin(baseline, treatment_rate)?;
            let tilt = (coin - 0.5).abs();
            Ok(SignalRow {
                baseline,
                treatment_rate,
                coin,
                tilt,
                tilt_over_arr: (arr != 0.0).then(|| tilt / arr.abs()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coin_examples() {
        assert_eq!(format!("{:.3}", death_coin(0.25, 0.20).unwrap()), "0.444");
        assert_eq!(format!("{:.3}", death_coin(0.10, 0.05).unwrap()), "0.333");
        assert_eq!(death_coin(0.3, 0.3).unwrap(), 0.5);
        assert_eq!(death_coin(0.0, 0.0), Err(Error::NoDeathsPossible));
        assert!(death_coin(-0.1, 0.2).is_err());
    }

    #[test]
    fn expected_death_counts() {
        assert_eq!(expected_deaths(2188, 0.25, 0.20), 493);
        assert_eq!(expected_deaths(0, 0.25, 0.20), 0);
        assert_eq!(expected_deaths(1372, 0.15, 0.10), 172);
        assert_eq!(design_sample_size(500), 1250);
        assert_eq!(design_sample_size(1372), 3430);
    }

    #[test]
    fn wager_examples() {
        let mut s = DeathsState::new(DeathsConfig::default()).unwrap();
        s.d_trt = 33;
        s.d_ctrl = 47;
        assert!((s.p_hat() - 0.4125).abs() < 1e-15);
        assert!((s.wager() - 0.4125).abs() < 1e-15);
        s.d_trt = 100;
        s.d_ctrl = 100;
        assert_eq!(s.wager(), 0.5);
        s.d_trt = 20;
        s.d_ctrl = 5;
        assert_eq!(s.wager(), 0.5);
    }

    #[test]
    fn step_multipliers() {
        let mut s = DeathsState::new(DeathsConfig::default()).unwrap();
        s.d_trt = 33;
        s.d_ctrl = 47;
        let mut alt = s.clone();
        let step = s.step(Arm::Control).unwrap();
        assert!((step.multiplier - 1.175).abs() < 1e-12);
        assert_eq!(s.d_ctrl, 48);
        assert_eq!(format!("{:.3}", s.p_hat()), "0.407");
        let step = alt.step(Arm::Treatment).unwrap();
        assert!((step.multiplier - 0.825).abs() < 1e-12);
    }

    #[test]
    fn relative_risk_guards() {
        let mut s = DeathsState::new(DeathsConfig::default()).unwrap();
        s.d_ctrl = 10;
        assert_eq!(s.relative_risk(), 0.0);
        s.d_trt = 10;
        assert!((s.relative_risk() - 1.0).abs() < 1e-15);
        s.d_ctrl = 0;
        assert_eq!(s.relative_risk(), f64::INFINITY);
    }

    #[test]
    fn concentration_rows() {
        let rows = signal_concentration_table(&[0.15, 0.40], 0.05).unwrap();
        assert_eq!(format!("{:.3}", rows[0].coin), "0.400");
        assert!((rows[0].tilt - 0.1).abs() < 1e-12);
        assert!((rows[0].tilt_over_arr.unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(format!("{:.3}", rows[1].coin), "0.467");
        assert_eq!(format!("{:.1}", rows[1].tilt * 100.0), "3.3");
        assert_eq!(format!("{:.2}", rows[1].tilt_over_arr.unwrap()), "0.67");
        let flat = signal_concentration_table(&[0.2], 0.0).unwrap();
        assert_eq!(flat[0].coin, 0.5);
        assert_eq!(flat[0].tilt, 0.0);
        assert_eq!(flat[0].tilt_over_arr, None);
        assert!(signal_concentration_table(&[0.03], 0.05).is_err());
    }
}
