//! Contact process on stars and truncated periodic trees.
//!
//! * [`topology`] builds the trees.
//! * [`engine`] simulates the process, directly or over a recorded event log,
//!   with pins, frozen boundaries and duals.
//! * [`starchain`] holds the one-dimensional star machinery: the loss
//!   variable, the reduced chain, its supermartingale and ignition runs.
//! * [`bounds`] evaluates the closed-form bounds and constants.
//! * [`oracle`] solves small state spaces exactly.
//! * [`harness`] runs seeded, parallel experiments and writes reports.

pub mod bounds;
pub mod engine;
pub mod harness;
pub mod oracle;
pub mod seed;
pub mod starchain;
pub mod stats;
pub mod topology;
