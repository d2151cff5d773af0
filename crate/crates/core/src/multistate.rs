//! Multi-state test: every state change is classified as good (recovery) or
//! bad, and one binary-style bet on the arm is placed per transition.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ledger::{clamp_lambda_to, Arm, RampSchedule, WealthLedger, WealthStep};
use crate::SequentialTest;

/// Index of a state within a [`StateModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub usize);

pub const WARD: StateId = StateId(0);
pub const ICU: StateId = StateId(1);
pub const HOME: StateId = StateId(2);
pub const DEAD: StateId = StateId(3);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionClass {
    Good,
    Bad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateModel {
    names: Vec<String>,
    absorbing: Vec<bool>,
    good: BTreeSet<(StateId, StateId)>,
}

impl Default for StateModel {
    /// Ward, ICU, Home (absorbing), Dead (absorbing); ICU→Ward and
    /// Ward→Home are good.
    fn default() -> Self {
        StateModel::new(
            &["ward", "icu", "home", "dead"],
            &[HOME, DEAD],
            &[(ICU, WARD), (WARD, HOME)],
        )
        .expect("default model is valid")
    }
}

impl StateModel {
    pub fn new(
        names: &[&str],
        absorbing: &[StateId],
        good: &[(StateId, StateId)],
    ) -> Result<Self> {
        let n = names.len();
        let in_range = |s: StateId| s.0 < n;
        let mut flags = vec![false; n];
        for &s in absorbing {
            if !in_range(s) {
                return Err(Error::Config(format!("absorbing state {} out of range", s.0)));
            }
            flags[s.0] = true;
        }
        let mut set = BTreeSet::new();
        for &(from, to) in good {
            if !in_range(from) || !in_range(to) {
                return Err(Error::Config("good transition references unknown state".into()));
            }
            if from == to {
                return Err(Error::Config("good transitions cannot be self-loops".into()));
            }
            if flags[from.0] {
                return Err(Error::Config("absorbing states have no outgoing transitions".into()));
            }
            set.insert((from, to));
        }
        Ok(StateModel {
            names: names.iter().map(|s| s.to_string()).collect(),
            absorbing: flags,
            good: set,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, s: StateId) -> &str {
        &self.names[s.0]
    }

    /// Look a state up by name, ignoring ASCII case.
    pub fn state(&self, name: &str) -> Option<StateId> {
        self.names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .map(StateId)
    }

    pub fn is_absorbing(&self, s: StateId) -> bool {
        self.absorbing[s.0]
    }

    pub fn classify(&self, from: StateId, to: StateId) -> Result<TransitionClass> {
        let label = |s: StateId| {
            self.names.get(s.0).cloned().unwrap_or_else(|| format!("#{}", s.0))
        };
        if from == to || from.0 >= self.len() || to.0 >= self.len() {
            return Err(Error::NotATransition { from: label(from), to: label(to) });
        }
        if self.is_absorbing(from) {
            return Err(Error::NotATransition { from: label(from), to: label(to) });
        }
        Ok(if self.good.contains(&(from, to)) {
            TransitionClass::Good
        } else {
            TransitionClass::Bad
        })
    }
}

/// Daily transition probabilities, one row per origin state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>, model: &StateModel) -> Result<Self> {
        let n = model.len();
        if rows.len() != n {
            return Err(Error::InvalidMatrix(format!("expected {n} rows, got {}", rows.len())));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidMatrix(format!("row {i} has {} entries", row.len())));
            }
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::InvalidMatrix(format!("row {i} has an entry outside [0, 1]")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMatrix(format!("row {i} sums to {total}")));
            }
            if model.is_absorbing(StateId(i)) && row[i] != 1.0 {
                return Err(Error::InvalidMatrix(format!("absorbing row {i} is not identity")));
            }
        }
        Ok(TransitionMatrix { rows })
    }

    /// Control-arm daily probabilities of the four-state ICU model.
    pub fn icu_control() -> Self {
        TransitionMatrix {
            rows: vec![
                vec![0.880, 0.070, 0.030, 0.020],
                vec![0.070, 0.915, 0.000, 0.015],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
        }
    }

    /// Treatment-arm daily probabilities of the four-state ICU model.
    pub fn icu_treatment() -> Self {
        TransitionMatrix {
            rows: vec![
                vec![0.870, 0.050, 0.050, 0.030],
                vec![0.090, 0.900, 0.000, 0.010],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0],
            ],
        }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn draw<R: Rng + ?Sized>(&self, from: StateId, rng: &mut R) -> StateId {
        let row = &self.rows[from.0];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return StateId(j);
            }
        }
        // rounding left `u` above the cumulative total: take the last reachable state
        StateId(row.iter().rposition(|&p| p > 0.0).unwrap_or(from.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub day: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientPath {
    pub final_state: StateId,
    pub transitions: Vec<Transition>,
}

/// Daily Markov walk from `start` for up to `horizon` days, stopping early
/// in an absorbing state. Only actual state changes are recorded.
pub fn simulate_patient_path<R: Rng + ?Sized>(
    matrix: &TransitionMatrix,
    model: &StateModel,
    start: StateId,
    horizon: u32,
    rng: &mut R,
) -> Result<PatientPath> {
    if matrix.len() != model.len() || start.0 >= model.len() {
        return Err(Error::InvalidMatrix("matrix does not match the state model".into()));
    }
    let mut state = start;
    let mut transitions = Vec::new();
    for day in 1..=horizon {
        if model.is_absorbing(state) {
            break;
        }
        let next = matrix.draw(state, rng);
        if next != state {
            transitions.push(Transition { from: state, to: next, day });
        }
        state = next;
    }
    Ok(PatientPath { final_state: state, transitions })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultistateConfig {
    pub schedule: RampSchedule,
    pub alpha: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for MultistateConfig {
    fn default() -> Self {
        MultistateConfig {
            schedule: RampSchedule { burn_in: 30, ramp: 50 },
            alpha: crate::ledger::DEFAULT_ALPHA,
            lambda_min: 0.01,
            lambda_max: 0.99,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionObservation {
    pub from: StateId,
    pub to: StateId,
    pub arm: Arm,
    pub day: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistateState {
    config: MultistateConfig,
    model: StateModel,
    pub good_trt: u64,
    pub total_trt: u64,
    pub good_ctrl: u64,
    pub total_ctrl: u64,
    last_day: Option<u32>,
    ledger: WealthLedger,
}

impl MultistateState {
    pub fn new(config: MultistateConfig, model: StateModel) -> Result<Self> {
        RampSchedule::new(config.schedule.burn_in, config.schedule.ramp)?;
        if !(0.0 < config.lambda_min && config.lambda_min < 0.5 && config.lambda_max < 1.0 && config.lambda_max > 0.5) {
            return Err(Error::Config("wager clamp must satisfy 0 < min < 0.5 < max < 1".into()));
        }
        Ok(MultistateState {
            ledger: WealthLedger::new(config.alpha)?,
            config,
            model,
            good_trt: 0,
            total_trt: 0,
            good_ctrl: 0,
            total_ctrl: 0,
            last_day: None,
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.ledger = self.ledger.with_trace();
        self
    }

    pub fn model(&self) -> &StateModel {
        &self.model
    }

    pub fn config(&self) -> &MultistateConfig {
        &self.config
    }

    pub fn count(&self) -> u64 {
        self.total_trt + self.total_ctrl
    }

    /// Good-transition rate in treatment minus that in control, or `None`
    /// while either arm has no transitions.
    pub fn delta(&self) -> Option<f64> {
        (self.total_trt > 0 && self.total_ctrl > 0).then(|| {
            self.good_trt as f64 / self.total_trt as f64 - self.good_ctrl as f64 / self.total_ctrl as f64
        })
    }

    pub fn wager(&self, class: TransitionClass) -> f64 {
        let i = self.count() + 1;
        let raw = match self.delta() {
            Some(delta) if self.config.schedule.past_burn_in(i) => {
                let tilt = 0.5 * self.config.schedule.coefficient(i) * delta;
                match class {
                    TransitionClass::Good => 0.5 + tilt,
                    TransitionClass::Bad => 0.5 - tilt,
                }
            }
            _ => 0.5,
        };
        clamp_lambda_to(raw, self.config.lambda_min, self.config.lambda_max).expect("wager is finite")
    }

    pub fn step(&mut self, from: StateId, to: StateId, arm: Arm) -> Result<WealthStep> {
        let class = self.model.classify(from, to)?;
        let lambda = self.wager(class);
        let step = self.ledger.apply_bet(lambda, arm, 0.5)?;
        let good = u64::from(class == TransitionClass::Good);
        match arm {
            Arm::Treatment => {
                self.total_trt += 1;
                self.good_trt += good;
            }
            Arm::Control => {
                self.total_ctrl += 1;
                self.good_ctrl += good;
            }
        }
        Ok(step)
    }
}

impl SequentialTest for MultistateState {
    type Observation = TransitionObservation;

    /// Transitions carrying a day must arrive in nondecreasing day order.
    fn observe(&mut self, obs: &TransitionObservation) -> Result<WealthStep> {
        if let (Some(day), Some(previous)) = (obs.day, self.last_day) {
            if day < previous {
                return Err(Error::StreamNotSorted { previous: previous as f64, time: day as f64 });
            }
        }
        let step = self.step(obs.from, obs.to, obs.arm)?;
        if obs.day.is_some() {
            self.last_day = obs.day;
        }
        Ok(step)
    }

    fn ledger(&self) -> &WealthLedger {
        &self.ledger
    }
}

/// Stable sort of pooled transitions by day, keeping arrival order within a day.
pub fn order_transitions(transitions: &mut [TransitionObservation]) {
    transitions.sort_by_key(|t| t.day.unwrap_or(0));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn classify_examples() {
        let m = StateModel::default();
        assert_eq!(m.classify(ICU, WARD).unwrap(), TransitionClass::Good);
        assert_eq!(m.classify(WARD, HOME).unwrap(), TransitionClass::Good);
        assert_eq!(m.classify(WARD, ICU).unwrap(), TransitionClass::Bad);
        assert_eq!(m.classify(ICU, DEAD).unwrap(), TransitionClass::Bad);
        assert_eq!(m.classify(WARD, DEAD).unwrap(), TransitionClass::Bad);
        assert!(matches!(m.classify(ICU, ICU), Err(Error::NotATransition { .. })));
        assert!(m.classify(HOME, WARD).is_err());
        assert_eq!(m.state("ICU"), Some(ICU));
    }

    #[test]
    fn model_validation() {
        assert!(StateModel::new(&["a", "b"], &[], &[(StateId(0), StateId(0))]).is_err());
        assert!(StateModel::new(&["a", "b"], &[StateId(0)], &[(StateId(0), StateId(1))]).is_err());
    }

    #[test]
    fn matrices_validate() {
        let m = StateModel::default();
        TransitionMatrix::new(TransitionMatrix::icu_control().rows, &m).unwrap();
        TransitionMatrix::new(TransitionMatrix::icu_treatment().rows, &m).unwrap();
        let mut rows = TransitionMatrix::icu_control().rows;
        rows[0][0] = 0.9;
        assert!(TransitionMatrix::new(rows, &m).is_err());
        let mut rows = TransitionMatrix::icu_control().rows;
        rows[2] = vec![0.5, 0.0, 0.5, 0.0];
        assert!(TransitionMatrix::new(rows, &m).is_err());
    }

    #[test]
    fn identity_matrix_never_moves() {
        let m = StateModel::default();
        let identity = TransitionMatrix::new(
            (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
            &m,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = simulate_patient_path(&identity, &m, ICU, 28, &mut rng).unwrap();
        assert_eq!(path.final_state, ICU);
        assert!(path.transitions.is_empty());
    }

    #[test]
    fn path_stops_at_absorbing_state() {
        let m = StateModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let path = simulate_patient_path(&TransitionMatrix::icu_control(), &m, ICU, 28, &mut rng).unwrap();
            for pair in path.transitions.windows(2) {
                assert_eq!(pair[0].to, pair[1].from);
                assert!(pair[0].day < pair[1].day);
                assert!(!m.is_absorbing(pair[0].to));
            }
            if let Some(last) = path.transitions.last() {
                assert_eq!(last.to, path.final_state);
            }
        }
    }

    #[test]
    fn burn_in_transition_is_neutral() {
        let mut s = MultistateState::new(MultistateConfig::default(), StateModel::default()).unwrap();
        let step = s.step(ICU, WARD, Arm::Treatment).unwrap();
        assert_eq!(step.lambda, 0.5);
        assert_eq!(step.multiplier, 1.0);
    }

    #[test]
    fn good_transition_bet() {
        let mut s = MultistateState::new(MultistateConfig::default(), StateModel::default()).unwrap();
        // 200 transitions seen: trt 60/100 good, ctrl 50/100 good -> delta 0.1
        s.good_trt = 60;
        s.total_trt = 100;
        s.good_ctrl = 50;
        s.total_ctrl = 100;
        let step = s.step(ICU, WARD, Arm::Treatment).unwrap();
        assert!((step.lambda - 0.55).abs() < 1e-12);
        assert!((step.multiplier - 1.10).abs() < 1e-12);
    }

    #[test]
    fn needs_both_arms_before_betting() {
        let mut s = MultistateState::new(MultistateConfig::default(), StateModel::default()).unwrap();
        s.good_trt = 100;
        s.total_trt = 200;
        assert_eq!(s.wager(TransitionClass::Good), 0.5);
    }

    #[test]
    fn wager_clamped_to_one_percent() {
        let mut s = MultistateState::new(MultistateConfig::default(), StateModel::default()).unwrap();
        s.good_trt = 100;
        s.total_trt = 100;
        s.total_ctrl = 100;
        assert_eq!(s.wager(TransitionClass::Good), 0.99);
        assert_eq!(s.wager(TransitionClass::Bad), 0.01);
    }

    #[test]
    fn day_order_enforced() {
        let mut s = MultistateState::new(MultistateConfig::default(), StateModel::default()).unwrap();
        let obs = |day| TransitionObservation { from: ICU, to: WARD, arm: Arm::Control, day: Some(day) };
        s.observe(&obs(3)).unwrap();
        s.observe(&obs(3)).unwrap();
        assert!(matches!(s.observe(&obs(2)), Err(Error::StreamNotSorted { .. })));
    }

    #[test]
    fn transitions_sorted_by_day_stably() {
        let t = |day, arm| TransitionObservation { from: ICU, to: WARD, arm, day: Some(day) };
        let mut v = vec![t(2, Arm::Control), t(1, Arm::Treatment), t(2, Arm::Treatment)];
        order_transitions(&mut v);
        assert_eq!(v, vec![t(1, Arm::Treatment), t(2, Arm::Control), t(2, Arm::Treatment)]);
    }
}
