//! Anytime-valid sequential randomization tests built as betting martingales.
//!
//! Each test watches a stream of randomized observations, wagers on the arm
//! of the next one using only the past, and multiplies its wealth by the
//! payout. Under the null the expected multiplier is exactly one, so by
//! Ville's inequality the chance wealth ever reaches `1/alpha` is at most
//! `alpha`, whenever one chooses to stop.
//!
//! Variants: [`binary`], [`deaths`], [`continuous`], [`survival`] and
//! [`multistate`]. The [`simlab`] module runs Monte Carlo studies over them.

pub mod binary;
pub mod continuous;
pub mod deaths;
pub mod error;
pub mod ledger;
pub mod multistate;
pub mod simlab;
pub mod stats;
pub mod survival;

pub use error::{Error, Result};
pub use ledger::{Arm, RampSchedule, WealthLedger, WealthStep};

/// A streaming test that bets on each observation before its arm is revealed.
pub trait SequentialTest {
    type Observation;

    fn observe(&mut self, obs: &Self::Observation) -> Result<WealthStep>;

    fn ledger(&self) -> &WealthLedger;

    /// Feed a batch of observations in order.
    fn observe_all<'a, I>(&mut self, observations: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a Self::Observation>,
        Self::Observation: 'a,
    {
        for obs in observations {
            self.observe(obs)?;
        }
        Ok(())
    }
}
