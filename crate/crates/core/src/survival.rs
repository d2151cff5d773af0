//! Time-to-event test on the log-rank score. Records are consumed in
//! time-on-study order; at each event the score increment `U = X − p` is the
//! treated-event indicator minus the treated share of the risk set, and the
//! wealth is multiplied by `1 + b·U` for a bet `b` chosen from past data.

use serde::{Deserialize, Serialize};

use crate::binary::sign;
use crate::error::{Error, Result};
use crate::ledger::{Arm, RampSchedule, WealthLedger, WealthStep};
use crate::SequentialTest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SurvivalPolicy {
    /// `b = c_j · λ_max · sign(Z_{j−1})`
    FixedMagnitude { lambda_max: f64 },
    /// `b = c_j · fraction · Ẑ/V`, the plug-in log hazard ratio scaled by a
    /// Kelly fraction and capped at `±cap`.
    AdaptiveKelly { fraction: f64, cap: f64 },
}

impl Default for SurvivalPolicy {
    fn default() -> Self {
        SurvivalPolicy::FixedMagnitude { lambda_max: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalConfig {
    pub schedule: RampSchedule,
    pub alpha: f64,
    #[serde(default)]
    pub policy: SurvivalPolicy,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        SurvivalConfig {
            schedule: RampSchedule { burn_in: 30, ramp: 50 },
            alpha: crate::ledger::DEFAULT_ALPHA,
            policy: SurvivalPolicy::default(),
        }
    }
}

/// One subject's follow-up: time on study, event indicator and arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    pub event: bool,
    pub arm: Arm,
}

/// Treated share of the risk set, 0.5 when it is empty.
pub fn risk_proportion(risk_trt: u64, risk_ctrl: u64) -> f64 {
    let total = risk_trt + risk_ctrl;
    if total == 0 {
        0.5
    } else {
        risk_trt as f64 / total as f64
    }
}

/// `X − p` for an event on `arm` when the treated share at risk is `p`.
pub fn score_increment(arm: Arm, p: f64) -> f64 {
    let x = if arm.is_treatment() { 1.0 } else { 0.0 };
    x - p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalState {
    config: SurvivalConfig,
    pub risk_trt: u64,
    pub risk_ctrl: u64,
    /// Cumulative log-rank score `Z`.
    pub cum_z: f64,
    /// Cumulative null variance of the score, `Σ p(1 − p)` over events.
    pub cum_var: f64,
    last_time: Option<f64>,
    count: u64,
    ledger: WealthLedger,
}

impl SurvivalState {
    /// Start monitoring a cohort of `n_trt` treated and `n_ctrl` control subjects.
    pub fn new(config: SurvivalConfig, n_trt: u64, n_ctrl: u64) -> Result<Self> {
        RampSchedule::new(config.schedule.burn_in, config.schedule.ramp)?;
        match config.policy {
            SurvivalPolicy::FixedMagnitude { lambda_max } if !(lambda_max > 0.0 && lambda_max < 1.0) => {
                return Err(Error::Config(format!("lambda_max {lambda_max} must lie in (0, 1)")));
            }
            SurvivalPolicy::AdaptiveKelly { fraction, cap }
                if !(fraction > 0.0 && cap > 0.0 && cap < 1.0) =>
            {
                return Err(Error::Config(format!(
                    "adaptive bet needs fraction > 0 and cap in (0, 1), got {fraction} and {cap}"
                )));
            }
            _ => {}
        }
        Ok(SurvivalState {
            ledger: WealthLedger::new(config.alpha)?,
            config,
            risk_trt: n_trt,
            risk_ctrl: n_ctrl,
            cum_z: 0.0,
            cum_var: 0.0,
            last_time: None,
            count: 0,
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.ledger = self.ledger.with_trace();
        self
    }

    pub fn config(&self) -> &SurvivalConfig {
        &self.config
    }

    /// Records processed so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn risk_proportion(&self) -> f64 {
        risk_proportion(self.risk_trt, self.risk_ctrl)
    }

    /// Signed bet for the next record. The ramp runs on the record index.
    pub fn bet(&self) -> f64 {
        let j = self.count + 1;
        if !self.config.schedule.past_burn_in(j) {
            return 0.0;
        }
        let c = self.config.schedule.coefficient(j);
        match self.config.policy {
            SurvivalPolicy::FixedMagnitude { lambda_max } => c * lambda_max * sign(self.cum_z),
            SurvivalPolicy::AdaptiveKelly { fraction, cap } => {
                if self.cum_var <= 0.0 {
                    return 0.0;
                }
                let log_hr = self.cum_z / self.cum_var;
                (c * fraction * log_hr).clamp(-cap, cap)
            }
        }
    }

    pub fn step(&mut self, record: &SurvivalRecord) -> Result<WealthStep> {
        if !(record.time.is_finite() && record.time >= 0.0) {
            return Err(Error::NegativeStudyTime(record.time));
        }
        if let Some(previous) = self.last_time {
            if record.time < previous {
                return Err(Error::StreamNotSorted { previous, time: record.time });
            }
        }
        let at_risk = match record.arm {
            Arm::Treatment => self.risk_trt,
            Arm::Control => self.risk_ctrl,
        };
        if at_risk == 0 {
            return Err(Error::RiskSetExhausted(record.arm.label()));
        }

        let step = if record.event {
            let b = self.bet();
            let p = self.risk_proportion();
            let u = score_increment(record.arm, p);
            let step = self.ledger.apply_multiplier(b, 1.0 + b * u);
            self.cum_z += u;
            self.cum_var += p * (1.0 - p);
            step
        } else {
            self.ledger.apply_multiplier(0.0, 1.0)
        };

        match record.arm {
            Arm::Treatment => self.risk_trt -= 1,
            Arm::Control => self.risk_ctrl -= 1,
        }
        self.last_time = Some(record.time);
        self.count += 1;
        Ok(step)
    }
}

impl SequentialTest for SurvivalState {
    type Observation = SurvivalRecord;

    fn observe(&mut self, record: &SurvivalRecord) -> Result<WealthStep> {
        self.step(record)
    }

    fn ledger(&self) -> &WealthLedger {
        &self.ledger
    }
}

/// Stable sort by time on study. With `entry_times`, each record's `time`
/// is a calendar time and the study time is `time − entry`.
pub fn order_records(
    records: &[SurvivalRecord],
    entry_times: Option<&[f64]>,
) -> Result<Vec<SurvivalRecord>> {
    let mut out: Vec<SurvivalRecord> = match entry_times {
        Some(entries) => {
            if entries.len() != records.len() {
                return Err(Error::Config(format!(
                    "{} entry times for {} records",
                    entries.len(),
                    records.len()
                )));
            }
            records
                .iter()
                .zip(entries)
                .map(|(r, &entry)| SurvivalRecord { time: r.time - entry, ..*r })
                .collect()
        }
        None => records.to_vec(),
    };
    if let Some(bad) = out.iter().find(|r| !(r.time >= 0.0)) {
        return Err(Error::NegativeStudyTime(bad.time));
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(time: f64, event: bool, arm: u8) -> SurvivalRecord {
        SurvivalRecord { time, event, arm: Arm::from_label(arm).unwrap() }
    }

    #[test]
    fn risk_proportion_examples() {
        assert_eq!(risk_proportion(100, 100), 0.5);
        assert_eq!(risk_proportion(30, 70), 0.3);
        assert_eq!(risk_proportion(0, 0), 0.5);
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_increment(Arm::Treatment, 0.5), 0.5);
        assert!((score_increment(Arm::Control, 0.3) + 0.3).abs() < 1e-15);
        assert_eq!(score_increment(Arm::Treatment, 1.0), 0.0);
    }

    #[test]
    fn bet_examples() {
        let mut s = SurvivalState::new(SurvivalConfig::default(), 100, 100).unwrap();
        assert_eq!(s.bet(), 0.0, "burn-in");
        s.count = 200;
        assert_eq!(s.bet(), 0.0, "sign(0) = 0");
        s.cum_z = 1.3;
        assert_eq!(s.bet(), 0.25);
        s.cum_z = -0.2;
        assert_eq!(s.bet(), -0.25);
    }

    #[test]
    fn event_multiplier() {
        let mut s = SurvivalState::new(SurvivalConfig::default(), 100, 100).unwrap();
        s.count = 200;
        s.cum_z = 2.0;
        let step = s.step(&rec(1.0, true, 0)).unwrap();
        assert!((step.multiplier - 0.875).abs() < 1e-15);
        assert!((s.cum_z - 1.5).abs() < 1e-15);
        assert_eq!((s.risk_trt, s.risk_ctrl), (100, 99));
    }

    #[test]
    fn censored_record_only_shrinks_risk_set() {
        let mut s = SurvivalState::new(SurvivalConfig::default(), 3, 3).unwrap();
        let step = s.step(&rec(0.5, false, 1)).unwrap();
        assert_eq!(step.multiplier, 1.0);
        assert_eq!(s.ledger().wealth(), 1.0);
        assert_eq!((s.risk_trt, s.risk_ctrl), (2, 3));
        assert_eq!(s.cum_z, 0.0);
    }

    #[test]
    fn unsorted_stream_rejected() {
        let mut s = SurvivalState::new(SurvivalConfig::default(), 3, 3).unwrap();
        s.step(&rec(2.0, true, 1)).unwrap();
        assert!(matches!(
            s.step(&rec(1.0, true, 0)),
            Err(Error::StreamNotSorted { .. })
        ));
        assert!(matches!(s.step(&rec(-1.0, true, 0)), Err(Error::NegativeStudyTime(_))));
    }

    #[test]
    fn exhausted_risk_set_rejected() {
        let mut s = SurvivalState::new(SurvivalConfig::default(), 1, 1).unwrap();
        s.step(&rec(1.0, true, 1)).unwrap();
        assert_eq!(s.step(&rec(2.0, true, 1)), Err(Error::RiskSetExhausted(1)));
    }

    #[test]
    fn ordering_examples() {
        let sorted = vec![rec(1.0, true, 0), rec(2.0, false, 1), rec(3.0, true, 1)];
        assert_eq!(order_records(&sorted, None).unwrap(), sorted);
        let ties = vec![rec(2.0, true, 1), rec(1.0, true, 0), rec(2.0, true, 0)];
        let out = order_records(&ties, None).unwrap();
        assert_eq!(out, vec![ties[1], ties[0], ties[2]]);
        let staggered = order_records(&[rec(5.0, true, 1), rec(4.0, true, 0)], Some(&[4.0, 1.0])).unwrap();
        assert_eq!(staggered[0].time, 1.0);
        assert_eq!(staggered[1].time, 3.0);
        assert!(matches!(
            order_records(&[rec(1.0, true, 0)], Some(&[2.0])),
            Err(Error::NegativeStudyTime(_))
        ));
    }

    #[test]
    fn fairness_identity_grid() {
        for pi in 1..100 {
            let p = pi as f64 / 100.0;
            for bi in -25..=25 {
                let b = bi as f64 / 100.0;
                let e = p * (1.0 + b * (1.0 - p)) + (1.0 - p) * (1.0 + b * (0.0 - p));
                assert!((e - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adaptive_bet_tracks_log_hazard_ratio() {
        let config = SurvivalConfig {
            policy: SurvivalPolicy::AdaptiveKelly { fraction: 0.5, cap: 0.5 },
            ..SurvivalConfig::default()
        };
        let mut s = SurvivalState::new(config, 500, 500).unwrap();
        s.count = 200;
        s.cum_z = -10.0;
        s.cum_var = 40.0;
        assert!((s.bet() + 0.125).abs() < 1e-15);
    }
}
