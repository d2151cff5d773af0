//! Monte Carlo operating characteristics for any variant.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binary::{BinaryConfig, BinaryPolicy, BinaryState};
use crate::continuous::{ContinuousConfig, ContinuousPolicy, ContinuousState};
use crate::deaths::{death_coin, expected_deaths, design_sample_size, DeathsConfig, DeathsPolicy, DeathsState};
use crate::error::{Error, Result};
use crate::ledger::{RampSchedule, WealthStep, DEFAULT_ALPHA};
use crate::multistate::{MultistateConfig, MultistateState, StateId, StateModel, TransitionMatrix};
use crate::simlab::exec::{replicate, Execution};
use crate::simlab::generators::{
    binary_trial, continuous_trial, death_coin_stream, multistate_trial, survival_trial, SurvivalDesign,
    WeibullModel,
};
use crate::simlab::sizing::{size_logrank, size_t_test, size_two_proportion};
use crate::stats::sorted_quantile;
use crate::survival::{SurvivalConfig, SurvivalPolicy, SurvivalState};
use crate::SequentialTest;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn default_power() -> f64 {
    0.8
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_sd() -> f64 {
    1.0
}

fn default_horizon() -> u32 {
    28
}

fn default_start() -> String {
    "icu".into()
}

/// Data-generating process plus the alternative used to size the trial.
/// Rates are event (or death) probabilities; sizes left out are computed
/// from the design alternative at `target_power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    Binary {
        p_ctrl: f64,
        p_trt: f64,
        #[serde(default)]
        n_patients: Option<u64>,
        /// Risk reduction to size for; defaults to `p_ctrl − p_trt`.
        #[serde(default)]
        design_arr: Option<f64>,
        #[serde(default = "default_power")]
        target_power: f64,
    },
    Deaths {
        p_ctrl: f64,
        p_trt: f64,
        /// Enrolled patients; defaults to the inflated frequentist design.
        #[serde(default)]
        n_patients: Option<u64>,
        #[serde(default)]
        design_p_trt: Option<f64>,
        #[serde(default = "default_power")]
        target_power: f64,
    },
    Continuous {
        #[serde(default)]
        mu_ctrl: f64,
        mu_trt: f64,
        #[serde(default = "default_sd")]
        sd: f64,
        #[serde(default)]
        n_patients: Option<u64>,
        #[serde(default)]
        design_d: Option<f64>,
        #[serde(default = "default_power")]
        target_power: f64,
    },
    Survival {
        hr: f64,
        #[serde(default)]
        n_patients: Option<u64>,
        #[serde(default)]
        target_hr: Option<f64>,
        #[serde(default = "default_power")]
        target_power: f64,
        #[serde(default)]
        model: WeibullModel,
        #[serde(default)]
        censor_upper: Option<f64>,
        #[serde(default)]
        recruitment: Option<f64>,
    },
    Multistate {
        n_patients: u64,
        #[serde(default)]
        control: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        treatment: Option<Vec<Vec<f64>>>,
        #[serde(default = "default_horizon")]
        horizon: u32,
        #[serde(default = "default_start")]
        start: String,
    },
}

impl Design {
    pub fn variant(&self) -> &'static str {
        match self {
            Design::Binary { .. } => "binary",
            Design::Deaths { .. } => "deaths",
            Design::Continuous { .. } => "continuous",
            Design::Survival { .. } => "survival",
            Design::Multistate { .. } => "multistate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BettingStrategy {
    AdaptiveHalfKelly,
    AdaptiveFullKelly,
    DoublyAdaptive,
    Fixed { lambda: f64 },
    SignOnly { c: f64 },
}

impl BettingStrategy {
    pub fn label(&self) -> String {
        match self {
            BettingStrategy::AdaptiveHalfKelly => "adaptive-half-kelly".into(),
            BettingStrategy::AdaptiveFullKelly => "adaptive-full-kelly".into(),
            BettingStrategy::DoublyAdaptive => "doubly-adaptive".into(),
            BettingStrategy::Fixed { lambda } => format!("fixed({lambda})"),
            BettingStrategy::SignOnly { c } => format!("sign-only({c})"),
        }
    }
}

/// Largest survival bet under the adaptive Kelly policies.
pub const SURVIVAL_KELLY_CAP: f64 = 0.5;

impl BettingStrategy {
    pub fn binary_policy(&self) -> Result<BinaryPolicy> {
        match *self {
            BettingStrategy::AdaptiveHalfKelly => Ok(BinaryPolicy::HalfKelly),
            BettingStrategy::AdaptiveFullKelly => Ok(BinaryPolicy::FullKelly),
            BettingStrategy::Fixed { lambda } => Ok(BinaryPolicy::Fixed { lambda }),
            other => Err(unsupported(&other, "binary")),
        }
    }

    pub fn deaths_policy(&self) -> Result<DeathsPolicy> {
        match *self {
            BettingStrategy::AdaptiveFullKelly => Ok(DeathsPolicy::FullKelly),
            BettingStrategy::AdaptiveHalfKelly => Ok(DeathsPolicy::HalfKelly),
            BettingStrategy::Fixed { lambda } => Ok(DeathsPolicy::Fixed { lambda }),
            other => Err(unsupported(&other, "deaths")),
        }
    }

    pub fn continuous_policy(&self) -> Result<ContinuousPolicy> {
        match *self {
            BettingStrategy::DoublyAdaptive => Ok(ContinuousPolicy::DoublyAdaptive),
            BettingStrategy::SignOnly { c } => Ok(ContinuousPolicy::SignOnly { c }),
            other => Err(unsupported(&other, "continuous")),
        }
    }

    /// `Fixed { lambda }` is the fixed-magnitude bet with `λ_max = lambda`.
    pub fn survival_policy(&self) -> Result<SurvivalPolicy> {
        match *self {
            BettingStrategy::Fixed { lambda } => Ok(SurvivalPolicy::FixedMagnitude { lambda_max: lambda }),
            BettingStrategy::AdaptiveHalfKelly => {
                Ok(SurvivalPolicy::AdaptiveKelly { fraction: 0.5, cap: SURVIVAL_KELLY_CAP })
            }
            BettingStrategy::AdaptiveFullKelly => {
                Ok(SurvivalPolicy::AdaptiveKelly { fraction: 1.0, cap: SURVIVAL_KELLY_CAP })
            }
            other => Err(unsupported(&other, "survival")),
        }
    }

    /// The multistate test has a single (half-Kelly) wager.
    pub fn check_multistate(&self) -> Result<()> {
        match self {
            BettingStrategy::AdaptiveHalfKelly => Ok(()),
            other => Err(unsupported(other, "multistate")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub design: Design,
    pub n_sims: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Per-variant defaults when absent.
    #[serde(default)]
    pub schedule: Option<RampSchedule>,
    #[serde(default)]
    pub strategy: Option<BettingStrategy>,
    /// Continuous variant only.
    #[serde(default)]
    pub c_max: Option<f64>,
}

impl SimScenario {
    pub fn new(design: Design, n_sims: u64, seed: u64) -> Self {
        SimScenario { design, n_sims, alpha: DEFAULT_ALPHA, seed, schedule: None, strategy: None, c_max: None }
    }

    pub fn with_strategy(mut self, strategy: BettingStrategy) -> Self {
        self.strategy = Some(strategy);
        self
    }
}

fn unsupported(strategy: &BettingStrategy, variant: &str) -> Error {
    Error::Config(format!("strategy {} is not available for the {variant} test", strategy.label()))
}

fn resolve_matrix(rows: &Option<Vec<Vec<f64>>>, fallback: TransitionMatrix, model: &StateModel) -> Result<TransitionMatrix> {
    match rows {
        Some(rows) => TransitionMatrix::new(rows.clone(), model),
        None => Ok(fallback),
    }
}

/// A scenario with sizes resolved and configs built, ready to replicate.
#[derive(Debug, Clone)]
pub enum PreparedScenario {
    Binary { config: BinaryConfig, n: u64, p_ctrl: f64, p_trt: f64 },
    Deaths { config: DeathsConfig, n_patients: u64, n_deaths: u64, coin: f64 },
    Continuous { config: ContinuousConfig, n: u64, mu_ctrl: f64, mu_trt: f64, sd: f64 },
    Survival { config: SurvivalConfig, n: u64, design: SurvivalDesign },
    Multistate {
        config: MultistateConfig,
        model: StateModel,
        control: TransitionMatrix,
        treatment: TransitionMatrix,
        n: u64,
        start: StateId,
        horizon: u32,
    },
}

impl PreparedScenario {
    pub fn new(scenario: &SimScenario) -> Result<Self> {
        if scenario.n_sims == 0 {
            return Err(Error::Config("n_sims must be at least 1".into()));
        }
        let alpha = scenario.alpha;
        let sched = |default: RampSchedule| -> Result<RampSchedule> {
            let s = scenario.schedule.unwrap_or(default);
            RampSchedule::new(s.burn_in, s.ramp)
        };
        if scenario.c_max.is_some() && scenario.design.variant() != "continuous" {
            return Err(Error::Config("c_max applies only to the continuous test".into()));
        }
        let prepared = match &scenario.design {
            &Design::Binary { p_ctrl, p_trt, n_patients, design_arr, target_power } => {
                let policy = scenario.strategy.unwrap_or(BettingStrategy::AdaptiveHalfKelly).binary_policy()?;
                let config = BinaryConfig { schedule: sched(BinaryConfig::default().schedule)?, alpha, policy, p: 0.5 };
                config.validate()?;
                let n = match n_patients {
                    Some(n) => n,
                    None => {
                        let arr = design_arr.unwrap_or(p_ctrl - p_trt);
                        size_two_proportion(p_ctrl, p_ctrl - arr, target_power, alpha)?
                    }
                };
                PreparedScenario::Binary { config, n, p_ctrl, p_trt }
            }
            &Design::Deaths { p_ctrl, p_trt, n_patients, design_p_trt, target_power } => {
                let policy = scenario.strategy.unwrap_or(BettingStrategy::AdaptiveFullKelly).deaths_policy()?;
                let config = DeathsConfig { schedule: sched(DeathsConfig::default().schedule)?, alpha, policy };
                DeathsState::new(config)?;
                let n_patients = match n_patients {
                    Some(n) => n,
                    None => {
                        let design = design_p_trt.unwrap_or(p_trt);
                        design_sample_size(size_two_proportion(p_ctrl, design, target_power, alpha)?)
                    }
                };
                PreparedScenario::Deaths {
                    config,
                    n_patients,
                    n_deaths: expected_deaths(n_patients, p_ctrl, p_trt),
                    coin: death_coin(p_ctrl, p_trt)?,
                }
            }
            &Design::Continuous { mu_ctrl, mu_trt, sd, n_patients, design_d, target_power } => {
                let policy = scenario.strategy.unwrap_or(BettingStrategy::DoublyAdaptive).continuous_policy()?;
                let config = ContinuousConfig {
                    schedule: sched(ContinuousConfig::default().schedule)?,
                    c_max: scenario.c_max.unwrap_or(ContinuousConfig::default().c_max),
                    p: 0.5,
                    alpha,
                    policy,
                };
                ContinuousState::new(config)?;
                if !(sd > 0.0 && sd.is_finite()) {
                    return Err(Error::Config(format!("sd {sd} must be positive")));
                }
                let n = match n_patients {
                    Some(n) => n,
                    None => size_t_test(design_d.unwrap_or((mu_trt - mu_ctrl).abs() / sd), target_power, alpha)?,
                };
                PreparedScenario::Continuous { config, n, mu_ctrl, mu_trt, sd }
            }
            &Design::Survival { hr, n_patients, target_hr, target_power, model, censor_upper, recruitment } => {
                let policy = scenario.strategy.unwrap_or(BettingStrategy::Fixed { lambda: 0.25 }).survival_policy()?;
                let config = SurvivalConfig { schedule: sched(SurvivalConfig::default().schedule)?, alpha, policy };
                SurvivalState::new(config, 0, 0)?;
                let n = match n_patients {
                    Some(n) => n,
                    None => size_logrank(target_hr.unwrap_or(hr), target_power, alpha)?,
                };
                PreparedScenario::Survival { config, n, design: SurvivalDesign { model, hr, censor_upper, recruitment } }
            }
            Design::Multistate { n_patients, control, treatment, horizon, start } => {
                if let Some(s) = scenario.strategy {
                    s.check_multistate()?;
                }
                let model = StateModel::default();
                let config = MultistateConfig { schedule: sched(MultistateConfig::default().schedule)?, alpha, ..Default::default() };
                let start = model
                    .state(start)
                    .ok_or_else(|| Error::Config(format!("unknown start state {start:?}")))?;
                PreparedScenario::Multistate {
                    control: resolve_matrix(control, TransitionMatrix::icu_control(), &model)?,
                    treatment: resolve_matrix(treatment, TransitionMatrix::icu_treatment(), &model)?,
                    config,
                    model,
                    n: *n_patients,
                    start,
                    horizon: *horizon,
                }
            }
        };
        Ok(prepared)
    }

    /// Enrolled patients (or deaths, for the deaths-only test).
    pub fn design_size(&self) -> u64 {
        match self {
            PreparedScenario::Binary { n, .. }
            | PreparedScenario::Continuous { n, .. }
            | PreparedScenario::Survival { n, .. }
            | PreparedScenario::Multistate { n, .. } => *n,
            PreparedScenario::Deaths { n_deaths, .. } => *n_deaths,
        }
    }

    /// Simulates one trial and runs the test over it.
    pub fn run_one(&self, rng: &mut ChaCha8Rng, trace: bool) -> Result<Replication> {
        fn finish<T: SequentialTest>(test: &T, trace: bool) -> Replication {
            let ledger = test.ledger();
            Replication {
                crossed_at: ledger.crossed_at(),
                log_final: ledger.log_wealth(),
                length: ledger.len(),
                trace: trace.then(|| ledger.steps().to_vec()),
            }
        }
        Ok(match self {
            PreparedScenario::Binary { config, n, p_ctrl, p_trt } => {
                let trial = binary_trial(rng, *n, *p_ctrl, *p_trt)?;
                let mut test = BinaryState::new(*config)?;
                if trace {
                    test = test.with_trace();
                }
                test.observe_all(&trial)?;
                finish(&test, trace)
            }
            PreparedScenario::Deaths { config, n_deaths, coin, .. } => {
                let stream = death_coin_stream(rng, *n_deaths, *coin)?;
                let mut test = DeathsState::new(*config)?;
                if trace {
                    test = test.with_trace();
                }
                test.observe_all(&stream)?;
                finish(&test, trace)
            }
            PreparedScenario::Continuous { config, n, mu_ctrl, mu_trt, sd } => {
                let trial = continuous_trial(rng, *n, *mu_ctrl, *mu_trt, *sd)?;
                let mut test = ContinuousState::new(*config)?;
                if trace {
                    test = test.with_trace();
                }
                test.observe_all(&trial)?;
                finish(&test, trace)
            }
            PreparedScenario::Survival { config, n, design } => {
                let trial = survival_trial(rng, *n, design)?;
                let mut test = SurvivalState::new(*config, trial.n_trt, trial.n_ctrl)?;
                if trace {
                    test = test.with_trace();
                }
                test.observe_all(&trial.records)?;
                finish(&test, trace)
            }
            PreparedScenario::Multistate { config, model, control, treatment, n, start, horizon } => {
                let trial = multistate_trial(rng, *n, control, treatment, model, *start, *horizon)?;
                if (trial.transitions.len() as u64) < config.schedule.burn_in {
                    return Ok(Replication { crossed_at: None, log_final: 0.0, length: 0, trace: trace.then(Vec::new) });
                }
                let mut test = MultistateState::new(*config, model.clone())?;
                if trace {
                    test = test.with_trace();
                }
                // patient order, not day order
                for t in &trial.transitions {
                    test.step(t.from, t.to, t.arm)?;
                }
                finish(&test, trace)
            }
        })
    }
}

/// One simulated trial's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub crossed_at: Option<u64>,
    pub log_final: f64,
    pub length: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<WealthStep>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Quantiles {
    /// Type-7 quantiles of unsorted data.
    pub fn of(values: &[f64]) -> Quantiles {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Quantiles {
            q05: sorted_quantile(&v, 0.05),
            q25: sorted_quantile(&v, 0.25),
            q50: sorted_quantile(&v, 0.50),
            q75: sorted_quantile(&v, 0.75),
            q95: sorted_quantile(&v, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub schema_version: u32,
    pub variant: String,
    pub strategy: String,
    pub n_sims: u64,
    pub seed: u64,
    pub alpha: f64,
    /// Patients, or deaths for the deaths-only test.
    pub design_size: u64,
    pub rejections: u64,
    pub rejection_rate: f64,
    pub standard_error: f64,
    pub median_first_crossing: Option<f64>,
    /// Median crossing over median stream length.
    pub median_crossing_fraction: Option<f64>,
    pub median_stream_length: f64,
    pub final_e: Quantiles,
}

fn strategy_label(scenario: &SimScenario) -> String {
    match (scenario.strategy, &scenario.design) {
        (Some(s), _) => s.label(),
        (None, Design::Deaths { .. }) => BettingStrategy::AdaptiveFullKelly.label(),
        (None, Design::Continuous { .. }) => BettingStrategy::DoublyAdaptive.label(),
        (None, Design::Survival { .. }) => BettingStrategy::Fixed { lambda: 0.25 }.label(),
        (None, _) => BettingStrategy::AdaptiveHalfKelly.label(),
    }
}

pub fn simulate_replications(scenario: &SimScenario, exec: Execution, trace: bool) -> Result<Vec<Replication>> {
    let prepared = PreparedScenario::new(scenario)?;
    replicate(scenario.n_sims, scenario.seed, exec, |_, rng| prepared.run_one(rng, trace))
        .into_iter()
        .collect()
}

pub fn summarize(scenario: &SimScenario, design_size: u64, reps: &[Replication]) -> OperatingCharacteristics {
    let n = reps.len() as u64;
    let mut crossings: Vec<f64> = reps.iter().filter_map(|r| r.crossed_at.map(|c| c as f64)).collect();
    crossings.sort_by(f64::total_cmp);
    let rejections = crossings.len() as u64;
    let rate = rejections as f64 / n.max(1) as f64;
    let mut lengths: Vec<f64> = reps.iter().map(|r| r.length as f64).collect();
    lengths.sort_by(f64::total_cmp);
    let median_length = if lengths.is_empty() { 0.0 } else { sorted_quantile(&lengths, 0.5) };
    let median_crossing = (!crossings.is_empty()).then(|| sorted_quantile(&crossings, 0.5));
    let finals: Vec<f64> = reps.iter().map(|r| r.log_final.exp()).collect();
    OperatingCharacteristics {
        schema_version: REPORT_SCHEMA_VERSION,
        variant: scenario.design.variant().into(),
        strategy: strategy_label(scenario),
        n_sims: n,
        seed: scenario.seed,
        alpha: scenario.alpha,
        design_size,
        rejections,
        rejection_rate: rate,
        standard_error: (rate * (1.0 - rate) / n.max(1) as f64).sqrt(),
        median_first_crossing: median_crossing,
        median_crossing_fraction: median_crossing.filter(|_| median_length > 0.0).map(|m| m / median_length),
        median_stream_length: median_length,
        final_e: if finals.is_empty() { Quantiles::of(&[1.0]) } else { Quantiles::of(&finals) },
    }
}

pub fn run_operating_characteristics_with(scenario: &SimScenario, exec: Execution) -> Result<OperatingCharacteristics> {
    let prepared = PreparedScenario::new(scenario)?;
    let reps: Vec<Replication> = replicate(scenario.n_sims, scenario.seed, exec, |_, rng| prepared.run_one(rng, false))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(summarize(scenario, prepared.design_size(), &reps))
}

pub fn run_operating_characteristics(scenario: &SimScenario) -> Result<OperatingCharacteristics> {
    run_operating_characteristics_with(scenario, Execution::default())
}

/// Full wealth paths of the first `n_trials` replications of `scenario`
/// (the same trials its operating characteristics are computed from).
pub fn simulate_trajectories(scenario: &SimScenario, n_trials: u64, exec: Execution) -> Result<Vec<Vec<WealthStep>>> {
    let prepared = PreparedScenario::new(&SimScenario { n_sims: scenario.n_sims.max(1), ..scenario.clone() })?;
    replicate(n_trials, scenario.seed, exec, |_, rng| {
        prepared.run_one(rng, true).map(|r| r.trace.unwrap_or_default())
    })
    .into_iter()
    .collect()
}
