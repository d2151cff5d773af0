//! Monte Carlo laboratory: generators, fixed-design sizing, the
//! operating-characteristics engine and multi-scenario studies.

pub mod engine;
pub mod exec;
pub mod generators;
pub mod sizing;
pub mod study;

pub use engine::{
    run_operating_characteristics, run_operating_characteristics_with, simulate_replications,
    simulate_trajectories, BettingStrategy, Design, OperatingCharacteristics, PreparedScenario, Quantiles,
    Replication, SimScenario,
};
pub use exec::{derive_seed, replicate, replication_rng, Execution};
