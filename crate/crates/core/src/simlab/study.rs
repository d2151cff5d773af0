//! Multi-scenario studies: deaths-only vs binary on shared trials, the
//! betting-strategy grid, and staggered vs simultaneous entry.

use serde::{Deserialize, Serialize};

use crate::binary::{BinaryConfig, BinaryState};
use crate::deaths::{death_coin, expected_deaths, DeathsConfig, DeathsState};
use crate::error::{Error, Result};
use crate::ledger::DEFAULT_ALPHA;
use crate::multistate::{simulate_patient_path, StateId, StateModel, TransitionMatrix};
use crate::simlab::engine::{
    run_operating_characteristics_with, BettingStrategy, Design, OperatingCharacteristics, SimScenario,
};
use crate::simlab::exec::{derive_seed, replicate, Execution};
use crate::simlab::generators::{binary_trial, death_stream_of, WeibullModel};
use crate::simlab::sizing::size_two_proportion;
use crate::SequentialTest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadToHeadRow {
    pub baseline: f64,
    pub death_coin: f64,
    pub n_patients: u64,
    pub expected_deaths: u64,
    pub binary_power: f64,
    pub deaths_power: f64,
    /// Deaths-only minus binary, percentage points.
    pub delta_pp: f64,
    pub winner: String,
}

/// Powers within this many points are reported as a tie.
pub const TIE_MARGIN_PP: f64 = 1.0;

/// Runs the binary test on every patient and the deaths-only test on the
/// event stream of the same simulated trials, one row per baseline rate.
pub fn head_to_head(
    baselines: &[f64],
    arr: f64,
    power: f64,
    n_sims: u64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<HeadToHeadRow>> {
    if n_sims == 0 {
        return Err(Error::Config("n_sims must be at least 1".into()));
    }
    baselines
        .iter()
        .enumerate()
        .map(|(cell, &baseline)| {
            let p_trt = baseline - arr;
            let n = size_two_proportion(baseline, p_trt, power, DEFAULT_ALPHA)?;
            let hits = replicate(n_sims, derive_seed(seed, cell as u64), exec, |_, rng| -> Result<(bool, bool)> {
                let trial = binary_trial(rng, n, baseline, p_trt)?;
                let mut binary = BinaryState::new(BinaryConfig::default())?;
                binary.observe_all(&trial)?;
                let mut deaths = DeathsState::new(DeathsConfig::default())?;
                deaths.observe_all(&death_stream_of(&trial))?;
                Ok((binary.ledger().crossed(), deaths.ledger().crossed()))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let rate = |pick: fn(&(bool, bool)) -> bool| hits.iter().filter(|h| pick(h)).count() as f64 / n_sims as f64;
            let binary_power = rate(|h| h.0);
            let deaths_power = rate(|h| h.1);
            let delta_pp = 100.0 * (deaths_power - binary_power);
            let winner = if delta_pp.abs() < TIE_MARGIN_PP {
                "tied"
            } else if delta_pp > 0.0 {
                "deaths"
            } else {
                "binary"
            };
            Ok(HeadToHeadRow {
                baseline,
                death_coin: death_coin(baseline, p_trt)?,
                n_patients: n,
                expected_deaths: expected_deaths(n, baseline, p_trt),
                binary_power,
                deaths_power,
                delta_pp,
                winner: winner.into(),
            })
        })
        .collect()
}

/// Which test the strategy grid runs, and how an effect maps onto a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum WageVariant {
    /// Effect = absolute risk reduction from `p_ctrl`.
    Binary { p_ctrl: f64 },
    /// Effect = absolute mortality reduction from `p_ctrl`.
    Deaths { p_ctrl: f64 },
    /// Effect = standardized mean difference.
    Continuous,
    /// Effect = hazard ratio.
    Survival,
}

impl WageVariant {
    fn design(&self, effect: f64, n_patients: Option<u64>, power: f64) -> Design {
        match *self {
            WageVariant::Binary { p_ctrl } => Design::Binary {
                p_ctrl,
                p_trt: p_ctrl - effect,
                n_patients,
                design_arr: None,
                target_power: power,
            },
            WageVariant::Deaths { p_ctrl } => Design::Deaths {
                p_ctrl,
                p_trt: p_ctrl - effect,
                n_patients,
                design_p_trt: None,
                target_power: power,
            },
            WageVariant::Continuous => Design::Continuous {
                mu_ctrl: 0.0,
                mu_trt: effect,
                sd: 1.0,
                n_patients,
                design_d: None,
                target_power: power,
            },
            WageVariant::Survival => Design::Survival {
                hr: effect,
                n_patients,
                target_hr: None,
                target_power: power,
                model: WeibullModel::default(),
                censor_upper: None,
                recruitment: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WageCell {
    pub effect: f64,
    pub strategy: String,
    pub design_size: u64,
    pub power: f64,
    pub standard_error: f64,
    pub median_final_e: f64,
    pub median_first_crossing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WageStudy {
    pub variant: WageVariant,
    pub strategies: Vec<BettingStrategy>,
    pub effects: Vec<f64>,
    pub n_sims: u64,
    pub seed: u64,
    /// Fixed size for every cell; otherwise each effect is sized for
    /// `target_power` against itself.
    #[serde(default)]
    pub n_patients: Option<u64>,
    pub target_power: f64,
}

/// Every strategy in an effect row sees the same simulated trials.
pub fn wage_study(study: &WageStudy, exec: Execution) -> Result<Vec<WageCell>> {
    let mut cells = Vec::with_capacity(study.effects.len() * study.strategies.len());
    for (row, &effect) in study.effects.iter().enumerate() {
        let design = study.variant.design(effect, study.n_patients, study.target_power);
        for strategy in &study.strategies {
            let scenario =
                SimScenario::new(design.clone(), study.n_sims, derive_seed(study.seed, row as u64)).with_strategy(*strategy);
            let oc = run_operating_characteristics_with(&scenario, exec)?;
            cells.push(WageCell {
                effect,
                strategy: strategy.label(),
                design_size: oc.design_size,
                power: oc.rejection_rate,
                standard_error: oc.standard_error,
                median_final_e: oc.final_e.q50,
                median_first_crossing: oc.median_first_crossing,
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryComparison {
    pub simultaneous: OperatingCharacteristics,
    pub staggered: OperatingCharacteristics,
}

/// Survival trials with everyone entering at time zero against trials with
/// uniform entry over `recruitment`, on the same simulated patients.
pub fn staggered_entry_comparison(
    n_patients: u64,
    hr: f64,
    recruitment: f64,
    n_sims: u64,
    seed: u64,
    exec: Execution,
) -> Result<EntryComparison> {
    let design = |recruitment| Design::Survival {
        hr,
        n_patients: Some(n_patients),
        target_hr: None,
        target_power: 0.8,
        model: WeibullModel::default(),
        censor_upper: None,
        recruitment,
    };
    // both arms see the same patients; only their entry times differ
    Ok(EntryComparison {
        simultaneous: run_operating_characteristics_with(&SimScenario::new(design(None), n_sims, seed), exec)?,
        staggered: run_operating_characteristics_with(&SimScenario::new(design(Some(recruitment)), n_sims, seed), exec)?,
    })
}

/// Empirical distribution over states after `horizon` days.
pub fn final_state_distribution(
    matrix: &TransitionMatrix,
    model: &StateModel,
    start: StateId,
    horizon: u32,
    n_patients: u64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let finals = replicate(n_patients, seed, exec, |_, rng| {
        simulate_patient_path(matrix, model, start, horizon, rng).map(|p| p.final_state)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![0u64; model.len()];
    for s in finals {
        counts[s.0] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / n_patients.max(1) as f64).collect())
}
