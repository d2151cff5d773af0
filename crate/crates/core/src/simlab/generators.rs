//! Trial generators for each outcome type.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::binary::BinaryObservation;
use crate::continuous::ContinuousObservation;
use crate::error::{Error, Result};
use crate::ledger::Arm;
use crate::multistate::{simulate_patient_path, StateId, StateModel, TransitionMatrix, TransitionObservation};
use crate::survival::{order_records, SurvivalRecord};

fn draw_arm<R: Rng + ?Sized>(rng: &mut R, p_trt: f64) -> Arm {
    if rng.random_bool(p_trt) {
        Arm::Treatment
    } else {
        Arm::Control
    }
}

fn check_rate(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} {p} must lie in [0, 1]")))
    }
}

/// 1:1 Bernoulli allocation, then a Bernoulli outcome at the arm's rate.
pub fn binary_trial<R: Rng + ?Sized>(
    rng: &mut R,
    n: u64,
    p_ctrl: f64,
    p_trt: f64,
) -> Result<Vec<BinaryObservation>> {
    check_rate("control rate", p_ctrl)?;
    check_rate("treatment rate", p_trt)?;
    Ok((0..n)
        .map(|_| {
            let arm = draw_arm(rng, 0.5);
            let rate = if arm.is_treatment() { p_trt } else { p_ctrl };
            BinaryObservation { outcome: rng.random_bool(rate), arm }
        })
        .collect())
}

/// Arms of the patients with an event, in enrollment order.
pub fn death_stream_of(trial: &[BinaryObservation]) -> Vec<Arm> {
    trial.iter().filter(|o| o.outcome).map(|o| o.arm).collect()
}

/// `n` deaths, each from treatment with probability `coin`.
pub fn death_coin_stream<R: Rng + ?Sized>(rng: &mut R, n: u64, coin: f64) -> Result<Vec<Arm>> {
    check_rate("death coin", coin)?;
    Ok((0..n).map(|_| draw_arm(rng, coin)).collect())
}

pub fn continuous_trial<R: Rng + ?Sized>(
    rng: &mut R,
    n: u64,
    mu_ctrl: f64,
    mu_trt: f64,
    sd: f64,
) -> Result<Vec<ContinuousObservation>> {
    let ctrl = Normal::new(mu_ctrl, sd).map_err(|e| Error::Config(e.to_string()))?;
    let trt = Normal::new(mu_trt, sd).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..n)
        .map(|_| {
            let arm = draw_arm(rng, 0.5);
            let y = if arm.is_treatment() { trt.sample(rng) } else { ctrl.sample(rng) };
            ContinuousObservation { y, arm }
        })
        .collect())
}

/// Weibull event times with proportional hazards between arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullModel {
    pub shape: f64,
    pub scale: f64,
}

impl Default for WeibullModel {
    fn default() -> Self {
        WeibullModel { shape: 1.2, scale: 10.0 }
    }
}

impl WeibullModel {
    /// Exponential times are the shape-1 case.
    pub fn exponential(scale: f64) -> Self {
        WeibullModel { shape: 1.0, scale }
    }

    /// Treatment-arm scale giving hazard ratio `hr` against control.
    pub fn treatment_scale(&self, hr: f64) -> f64 {
        self.scale / hr.powf(1.0 / self.shape)
    }

    fn validate(&self, hr: f64) -> Result<()> {
        if !(self.shape > 0.0 && self.scale > 0.0 && hr > 0.0 && hr.is_finite()) {
            return Err(Error::Config(format!(
                "survival model needs positive shape, scale and hazard ratio (got {}, {}, {hr})",
                self.shape, self.scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SurvivalDesign {
    pub model: WeibullModel,
    pub hr: f64,
    /// Uniform censoring on `[0, censor_upper]`; none when absent.
    pub censor_upper: Option<f64>,
    /// Uniform staggered entry on `[0, recruitment]`.
    pub recruitment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTrial {
    /// Sorted by time on study.
    pub records: Vec<SurvivalRecord>,
    pub n_trt: u64,
    pub n_ctrl: u64,
}

/// Simulates `n` subjects and returns them in time-on-study order. Under
/// staggered entry the calendar time of each outcome is `entry + time`, and
/// ordering uses calendar time minus entry.
pub fn survival_trial<R: Rng + ?Sized>(rng: &mut R, n: u64, design: &SurvivalDesign) -> Result<SurvivalTrial> {
    design.model.validate(design.hr)?;
    let shape_inv = 1.0 / design.model.shape;
    let scale_trt = design.model.treatment_scale(design.hr);
    let mut records = Vec::with_capacity(n as usize);
    let (mut n_trt, mut n_ctrl) = (0, 0);
    for _ in 0..n {
        let arm = draw_arm(rng, 0.5);
        let scale = if arm.is_treatment() {
            n_trt += 1;
            scale_trt
        } else {
            n_ctrl += 1;
            design.model.scale
        };
        // 1 - u lies in (0, 1], keeping the log finite
        let u: f64 = 1.0 - rng.random::<f64>();
        let event_time = scale * (-u.ln()).powf(shape_inv);
        let (time, event) = match design.censor_upper {
            Some(upper) => {
                let c = rng.random_range(0.0..upper);
                (event_time.min(c), event_time <= c)
            }
            None => (event_time, true),
        };
        records.push(SurvivalRecord { time, event, arm });
    }
    let records = match design.recruitment {
        Some(period) => {
            let entry = Uniform::new(0.0, period).map_err(|e| Error::Config(e.to_string()))?;
            let entries: Vec<f64> = (0..n).map(|_| entry.sample(rng)).collect();
            let calendar: Vec<SurvivalRecord> = records
                .iter()
                .zip(&entries)
                .map(|(r, e)| SurvivalRecord { time: r.time + e, ..*r })
                .collect();
            order_records(&calendar, Some(&entries))?
        }
        None => order_records(&records, None)?,
    };
    Ok(SurvivalTrial { records, n_trt, n_ctrl })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultistateTrial {
    /// Pooled transitions in patient order.
    pub transitions: Vec<TransitionObservation>,
    pub final_states: Vec<(Arm, StateId)>,
}

pub fn multistate_trial<R: Rng + ?Sized>(
    rng: &mut R,
    n_patients: u64,
    control: &TransitionMatrix,
    treatment: &TransitionMatrix,
    model: &StateModel,
    start: StateId,
    horizon: u32,
) -> Result<MultistateTrial> {
    let mut transitions = Vec::new();
    let mut final_states = Vec::with_capacity(n_patients as usize);
    for _ in 0..n_patients {
        let arm = draw_arm(rng, 0.5);
        let matrix = if arm.is_treatment() { treatment } else { control };
        let path = simulate_patient_path(matrix, model, start, horizon, rng)?;
        transitions.extend(path.transitions.iter().map(|t| TransitionObservation {
            from: t.from,
            to: t.to,
            arm,
            day: Some(t.day),
        }));
        final_states.push((arm, path.final_state));
    }
    Ok(MultistateTrial { transitions, final_states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::exec::replication_rng;

    #[test]
    fn binary_rates_roughly_right() {
        let mut rng = replication_rng(3, 0);
        let trial = binary_trial(&mut rng, 40_000, 0.4, 0.3).unwrap();
        let (mut nt, mut et, mut nc, mut ec) = (0.0, 0.0, 0.0, 0.0);
        for o in &trial {
            let e = o.outcome as u8 as f64;
            if o.arm.is_treatment() {
                nt += 1.0;
                et += e;
            } else {
                nc += 1.0;
                ec += e;
            }
        }
        assert!((et / nt - 0.3).abs() < 0.015);
        assert!((ec / nc - 0.4).abs() < 0.015);
        assert!((nt / 40_000.0 - 0.5).abs() < 0.01);
        assert!(binary_trial(&mut rng, 1, 1.2, 0.3).is_err());
    }

    #[test]
    fn survival_sorted_and_hazard_scaled() {
        let design = SurvivalDesign { hr: 0.8, ..Default::default() };
        let mut rng = replication_rng(4, 0);
        let trial = survival_trial(&mut rng, 20_000, &design).unwrap();
        assert!(trial.records.windows(2).all(|w| w[0].time <= w[1].time));
        assert_eq!(trial.n_trt + trial.n_ctrl, 20_000);
        assert!(trial.records.iter().all(|r| r.event));
        // Weibull median: scale · ln2^(1/shape)
        let mut ctrl: Vec<f64> = trial.records.iter().filter(|r| !r.arm.is_treatment()).map(|r| r.time).collect();
        ctrl.sort_by(f64::total_cmp);
        let median = ctrl[ctrl.len() / 2];
        let expect = 10.0 * 2f64.ln().powf(1.0 / 1.2);
        assert!((median / expect - 1.0).abs() < 0.03, "{median} vs {expect}");
        assert!((design.model.treatment_scale(0.8) - 10.0 / 0.8f64.powf(1.0 / 1.2)).abs() < 1e-12);
    }

    #[test]
    fn censoring_marks_some_records() {
        let design = SurvivalDesign { hr: 1.0, censor_upper: Some(20.0), ..Default::default() };
        let mut rng = replication_rng(5, 0);
        let trial = survival_trial(&mut rng, 2000, &design).unwrap();
        let censored = trial.records.iter().filter(|r| !r.event).count();
        assert!(censored > 200 && censored < 1200);
    }

    #[test]
    fn staggered_entry_preserves_time_on_study() {
        let plain = SurvivalDesign { hr: 0.8, ..Default::default() };
        let staggered = SurvivalDesign { recruitment: Some(12.0), ..plain };
        let a = survival_trial(&mut replication_rng(6, 0), 500, &plain).unwrap();
        let b = survival_trial(&mut replication_rng(6, 0), 500, &staggered).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.arm, y.arm);
            assert!((x.time - y.time).abs() < 1e-9);
        }
    }

    #[test]
    fn multistate_trial_pools_in_patient_order() {
        let model = StateModel::default();
        let mut rng = replication_rng(7, 0);
        let trial = multistate_trial(
            &mut rng,
            50,
            &TransitionMatrix::icu_control(),
            &TransitionMatrix::icu_treatment(),
            &model,
            crate::multistate::ICU,
            28,
        )
        .unwrap();
        assert_eq!(trial.final_states.len(), 50);
        assert!(!trial.transitions.is_empty());
        for t in &trial.transitions {
            assert_ne!(t.from, t.to);
        }
    }
}
