//! Search for sensitive, directionally faithful proxy metrics in A/B test
//! panels.

pub mod cli;
pub mod data_model;
pub mod pareto;
pub mod proxy;
pub mod rng;
pub mod scoring;
pub mod simulator;
pub mod stats;

#[cfg(test)]
mod testutil;
