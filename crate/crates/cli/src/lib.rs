//! Library side of the `ert` command: wire formats, the resumable monitor
//! and report writers.

pub mod args;
pub mod events;
pub mod monitor;
pub mod output;
