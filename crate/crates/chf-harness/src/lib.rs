//! Reproducible experiment harness for the chf-core library.
//!
//! Experiments are named, seeded, parameterized runs. Each run writes CSV
//! series plus a `summary.json` into its output directory and reports
//! pass/fail verdicts against the registered acceptance criteria. The
//! whole pipeline is deterministic: one counter-based generator is seeded
//! from the spec and split into per-use streams, containers with observable
//! order are sorted maps, and floats are printed through a single shared
//! formatter, so the same spec and seed always produce byte-identical
//! artifacts.

pub mod criteria;
pub mod error;
pub mod experiments;
pub mod io;
pub mod plantspec;
pub mod rng;
pub mod spec;
