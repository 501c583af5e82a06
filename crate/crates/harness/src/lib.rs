//! Terrain-aided navigation experiments comparing point-mass filters with a
//! bootstrap particle filter: configuration, terrain IO, scenarios, the
//! Monte-Carlo runner, metrics and scaling benchmarks.

pub mod bench;
pub mod config;
pub mod estimators;
pub mod experiment;
pub mod scenario;
pub mod terrain;
