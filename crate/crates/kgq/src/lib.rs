//! Standard-library side of kgq: on-disk model stores, language-model
//! transports, task configuration, the command pipeline and the `kgq` CLI.
//!
//! The algorithms live in [`kgq_core`]; this crate adds files, threads,
//! clocks and the network.

pub mod cli;
pub mod config;
pub mod disk;
pub mod pipeline;
pub mod synth;
pub mod transport;

pub use kgq_core as core;
