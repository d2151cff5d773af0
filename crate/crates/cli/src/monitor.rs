//! Streaming monitor over NDJSON events with resumable checkpoints.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{bail, ensure, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ert_core::binary::{BinaryConfig, BinaryState};
use ert_core::continuous::{ContinuousConfig, ContinuousState};
use ert_core::deaths::{DeathsConfig, DeathsState};
use ert_core::multistate::{MultistateConfig, MultistateState, StateModel};
use ert_core::survival::{SurvivalConfig, SurvivalState};
use ert_core::{SequentialTest, WealthLedger, WealthStep};

use crate::events::{self, EventError};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Everything that fixes the meaning of a monitored stream. Its hash is
/// stored in checkpoints so a resume with different settings is refused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum MonitorConfig {
    Binary(BinaryConfig),
    Deaths(DeathsConfig),
    Continuous(ContinuousConfig),
    Survival { config: SurvivalConfig, n_trt: u64, n_ctrl: u64 },
    Multistate { config: MultistateConfig, model: StateModel },
}

impl MonitorConfig {
    pub fn variant(&self) -> &'static str {
        match self {
            MonitorConfig::Binary(_) => "binary",
            MonitorConfig::Deaths(_) => "deaths",
            MonitorConfig::Continuous(_) => "continuous",
            MonitorConfig::Survival { .. } => "survival",
            MonitorConfig::Multistate { .. } => "multistate",
        }
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "state", rename_all = "snake_case")]
pub enum MonitorState {
    Binary(BinaryState),
    Deaths(DeathsState),
    Continuous(ContinuousState),
    Survival(SurvivalState),
    Multistate(MultistateState),
}

impl MonitorState {
    pub fn new(config: &MonitorConfig) -> ert_core::Result<Self> {
        Ok(match config {
            MonitorConfig::Binary(c) => MonitorState::Binary(BinaryState::new(*c)?),
            MonitorConfig::Deaths(c) => MonitorState::Deaths(DeathsState::new(*c)?),
            MonitorConfig::Continuous(c) => MonitorState::Continuous(ContinuousState::new(*c)?),
            MonitorConfig::Survival { config, n_trt, n_ctrl } => {
                MonitorState::Survival(SurvivalState::new(*config, *n_trt, *n_ctrl)?)
            }
            MonitorConfig::Multistate { config, model } => {
                MonitorState::Multistate(MultistateState::new(*config, model.clone())?)
            }
        })
    }

    pub fn variant(&self) -> &'static str {
        match self {
            MonitorState::Binary(_) => "binary",
            MonitorState::Deaths(_) => "deaths",
            MonitorState::Continuous(_) => "continuous",
            MonitorState::Survival(_) => "survival",
            MonitorState::Multistate(_) => "multistate",
        }
    }

    pub fn ledger(&self) -> &WealthLedger {
        match self {
            MonitorState::Binary(s) => s.ledger(),
            MonitorState::Deaths(s) => s.ledger(),
            MonitorState::Continuous(s) => s.ledger(),
            MonitorState::Survival(s) => s.ledger(),
            MonitorState::Multistate(s) => s.ledger(),
        }
    }

    /// Parses one NDJSON line and feeds it. On error the state is unchanged.
    pub fn feed_line(&mut self, line: &str) -> Result<WealthStep, EventError> {
        let core = |e: ert_core::Error| EventError::Invalid(e.to_string());
        match self {
            MonitorState::Binary(s) => s.observe(&events::parse_binary(line)?).map_err(core),
            MonitorState::Deaths(s) => s.observe(&events::parse_death(line)?).map_err(core),
            MonitorState::Continuous(s) => s.observe(&events::parse_continuous(line)?).map_err(core),
            MonitorState::Survival(s) => s.observe(&events::parse_survival(line)?).map_err(core),
            MonitorState::Multistate(s) => {
                let t = events::parse_transition(line, s.model())?;
                s.observe(&t).map_err(core)
            }
        }
    }

    /// Variant-specific running statistics for reports.
    pub fn statistics(&self) -> serde_json::Value {
        match self {
            MonitorState::Binary(s) => serde_json::json!({
                "delta": s.delta(),
                "n_trt": s.n_trt, "n_ctrl": s.n_ctrl, "events_trt": s.e_trt, "events_ctrl": s.e_ctrl,
            }),
            MonitorState::Deaths(s) => serde_json::json!({
                "p_hat": s.p_hat(),
                // non-finite ratios serialize as null
                "relative_risk": s.relative_risk(),
                "deaths_trt": s.d_trt, "deaths_ctrl": s.d_ctrl,
            }),
            MonitorState::Continuous(s) => serde_json::json!({ "cohens_d": s.cohens_d() }),
            MonitorState::Survival(s) => serde_json::json!({
                "score": s.cum_z, "risk_trt": s.risk_trt, "risk_ctrl": s.risk_ctrl,
            }),
            MonitorState::Multistate(s) => serde_json::json!({
                "delta": s.delta(),
                "good_trt": s.good_trt, "total_trt": s.total_trt,
                "good_ctrl": s.good_ctrl, "total_ctrl": s.total_ctrl,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub variant: String,
    pub config_hash: String,
    pub events: u64,
    pub log_wealth: f64,
    pub crossed_at: Option<u64>,
    pub crossed_at_time: Option<String>,
    pub last_step: Option<WealthStep>,
    pub state: MonitorState,
}

impl Checkpoint {
    pub fn capture(config: &MonitorConfig, state: &MonitorState, crossed_at_time: Option<String>) -> Self {
        let ledger = state.ledger();
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            variant: state.variant().into(),
            config_hash: config.hash(),
            events: ledger.len(),
            log_wealth: ledger.log_wealth(),
            crossed_at: ledger.crossed_at(),
            crossed_at_time,
            last_step: ledger.last_step().copied(),
            state: state.clone(),
        }
    }

    pub fn load(path: &Path, config: &MonitorConfig) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        let cp: Checkpoint =
            serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
        ensure!(
            cp.schema_version == CHECKPOINT_SCHEMA_VERSION,
            "checkpoint schema version {} is not supported (expected {CHECKPOINT_SCHEMA_VERSION})",
            cp.schema_version
        );
        ensure!(
            cp.variant == config.variant() && cp.state.variant() == config.variant(),
            "checkpoint is for the {} test, not {}",
            cp.variant,
            config.variant()
        );
        let expected = config.hash();
        if cp.config_hash != expected {
            bail!("checkpoint config hash {} does not match current settings ({expected})", cp.config_hash);
        }
        let ledger = cp.state.ledger();
        ensure!(
            ledger.len() == cp.events
                && ledger.log_wealth().to_bits() == cp.log_wealth.to_bits()
                && ledger.crossed_at() == cp.crossed_at,
            "checkpoint ledger summary disagrees with its state"
        );
        Ok(cp)
    }

    /// Write-then-rename so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
            serde_json::to_writer(&mut f, self)?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path).with_context(|| format!("replacing checkpoint {}", path.display()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub schema_version: u32,
    pub variant: String,
    pub events: u64,
    pub e_value: f64,
    pub log_e_value: f64,
    pub max_e_value: f64,
    pub threshold: f64,
    pub crossed: bool,
    pub crossed_at: Option<u64>,
    pub crossed_at_time: Option<String>,
    pub statistics: serde_json::Value,
}

impl MonitorSummary {
    pub fn of(state: &MonitorState, crossed_at_time: Option<String>) -> Self {
        let l = state.ledger();
        MonitorSummary {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            variant: state.variant().into(),
            events: l.len(),
            e_value: l.wealth(),
            log_e_value: l.log_wealth(),
            max_e_value: l.max_wealth(),
            threshold: l.threshold(),
            crossed: l.crossed(),
            crossed_at: l.crossed_at(),
            crossed_at_time,
            statistics: state.statistics(),
        }
    }
}

/// Reacts to monitor progress; the CLI prints, tests collect.
pub trait MonitorSink {
    fn step(&mut self, _step: &WealthStep) -> anyhow::Result<()> {
        Ok(())
    }
    fn crossed(&mut self, _step: &WealthStep, _timestamp: &str) -> anyhow::Result<()> {
        Ok(())
    }
}

impl MonitorSink for () {}

pub struct MonitorRun {
    pub config: MonitorConfig,
    pub state: MonitorState,
    pub crossed_at_time: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("line {line}")]
pub struct LineError {
    pub line: u64,
    #[source]
    pub source: EventError,
}

impl MonitorRun {
    pub fn fresh(config: MonitorConfig) -> anyhow::Result<Self> {
        let state = MonitorState::new(&config)?;
        Ok(MonitorRun { config, state, crossed_at_time: None })
    }

    pub fn resume(config: MonitorConfig, checkpoint: &Path) -> anyhow::Result<Self> {
        let cp = Checkpoint::load(checkpoint, &config)?;
        Ok(MonitorRun { config, state: cp.state, crossed_at_time: cp.crossed_at_time })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(&self.config, &self.state, self.crossed_at_time.clone())
    }

    /// Feeds every nonblank line of `input` after the first `skip` records.
    /// With a checkpoint path the state is saved every `every` events, at the
    /// end, and before returning a record error, so a fixed stream can resume
    /// from the last good event.
    pub fn run<R: BufRead, S: MonitorSink>(
        &mut self,
        input: R,
        skip: u64,
        checkpoint: Option<&Path>,
        every: u64,
        sink: &mut S,
    ) -> anyhow::Result<()> {
        let mut since_save = 0u64;
        let mut skipped = 0u64;
        for (n, line) in input.lines().enumerate() {
            let line_no = n as u64 + 1;
            let line = line.with_context(|| format!("reading line {line_no}"))?;
            if line.trim().is_empty() {
                continue;
            }
            if skipped < skip {
                skipped += 1;
                continue;
            }
            let was_crossed = self.state.ledger().crossed();
            let step = match self.state.feed_line(&line) {
                Ok(step) => step,
                Err(source) => {
                    if let Some(path) = checkpoint {
                        self.checkpoint().save(path)?;
                    }
                    return Err(LineError { line: line_no, source }.into());
                }
            };
            sink.step(&step)?;
            if step.crossed && !was_crossed {
                let now = chrono::Utc::now().to_rfc3339();
                sink.crossed(&step, &now)?;
                self.crossed_at_time = Some(now);
            }
            since_save += 1;
            if let Some(path) = checkpoint {
                if every > 0 && since_save >= every {
                    self.checkpoint().save(path)?;
                    since_save = 0;
                }
            }
        }
        ensure!(skipped == skip, "input has {skipped} records but the checkpoint covers {skip}");
        if let Some(path) = checkpoint {
            self.checkpoint().save(path)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> MonitorSummary {
        MonitorSummary::of(&self.state, self.crossed_at_time.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config() {
        let a = MonitorConfig::Binary(BinaryConfig::default());
        let b = MonitorConfig::Binary(BinaryConfig { alpha: 0.01, ..BinaryConfig::default() });
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn bad_line_leaves_state_alone() {
        let mut run = MonitorRun::fresh(MonitorConfig::Deaths(DeathsConfig::default())).unwrap();
        let input = "{\"arm\":1}\n\n{\"arm\":0}\n{\"arm\":7}\n";
        let err = run.run(input.as_bytes(), 0, None, 0, &mut ()).unwrap_err();
        assert!(format!("{err:#}").starts_with("line 4: "), "{err:#}");
        assert_eq!(run.state.ledger().len(), 2);
    }
}
