//! NDJSON wire records, one object per line. Field names are fixed and
//! unknown fields are rejected.

use serde::{Deserialize, Deserializer};

use ert_core::binary::BinaryObservation;
use ert_core::continuous::ContinuousObservation;
use ert_core::multistate::{StateModel, TransitionObservation};
use ert_core::survival::SurvivalRecord;
use ert_core::Arm;

#[derive(Debug, thiserror::Error)]
pub enum EventError {
    #[error("malformed record")]
    Malformed(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

/// A 0/1 indicator.
fn indicator<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    match u8::deserialize(d)? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(serde::de::Error::custom(format!("expected 0 or 1, got {other}"))),
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryRecord {
    pub arm: Arm,
    #[serde(deserialize_with = "indicator")]
    pub outcome: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeathRecord {
    pub arm: Arm,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousRecord {
    pub arm: Arm,
    pub y: f64,
}

/// `time` is time on study, or calendar time when `entry_time` is given.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurvivalWire {
    pub time: f64,
    #[serde(deserialize_with = "indicator")]
    pub status: bool,
    pub arm: Arm,
    #[serde(default)]
    pub entry_time: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionWire {
    pub from: String,
    pub to: String,
    pub arm: Arm,
    #[serde(default)]
    pub day: Option<u32>,
}

pub fn parse_binary(line: &str) -> Result<BinaryObservation, EventError> {
    let r: BinaryRecord = serde_json::from_str(line)?;
    Ok(BinaryObservation { outcome: r.outcome, arm: r.arm })
}

pub fn parse_death(line: &str) -> Result<Arm, EventError> {
    let r: DeathRecord = serde_json::from_str(line)?;
    Ok(r.arm)
}

pub fn parse_continuous(line: &str) -> Result<ContinuousObservation, EventError> {
    let r: ContinuousRecord = serde_json::from_str(line)?;
    if !r.y.is_finite() {
        return Err(EventError::Invalid(format!("y = {} is not finite", r.y)));
    }
    Ok(ContinuousObservation { y: r.y, arm: r.arm })
}

pub fn parse_survival(line: &str) -> Result<SurvivalRecord, EventError> {
    let r: SurvivalWire = serde_json::from_str(line)?;
    let time = match r.entry_time {
        Some(entry) => r.time - entry,
        None => r.time,
    };
    if !(time >= 0.0 && time.is_finite()) {
        return Err(EventError::Invalid(format!("time on study {time} must be finite and nonnegative")));
    }
    Ok(SurvivalRecord { time, event: r.status, arm: r.arm })
}

pub fn parse_transition(line: &str, model: &StateModel) -> Result<TransitionObservation, EventError> {
    let r: TransitionWire = serde_json::from_str(line)?;
    let state = |name: &str| model.state(name).ok_or_else(|| EventError::Invalid(format!("unknown state {name:?}")));
    Ok(TransitionObservation { from: state(&r.from)?, to: state(&r.to)?, arm: r.arm, day: r.day })
}
