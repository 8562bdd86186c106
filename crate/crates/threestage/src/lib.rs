//! Networked endpoints, Eve proxy, file formats and the command-line driver
//! for the three-stage protocol simulator.
//!
//! The wire carries the exact simulated polarization state of every pulse.
//! Anyone reading frames off the socket learns that state outright; attacks
//! are meaningful only through the adversary strategies the simulator models.

pub mod formats;
pub mod net;
pub mod proxy;
pub mod strategy;
pub mod verify;

use rayon::prelude::*;
use threestage_core::adversary::{
    check_experiment, run_attack_trial, AdversaryError, AttackConfig, AttackCounts, AttackReport, EveStrategy,
};

/// [`threestage_core::adversary::run_attack_experiment`] spread over the rayon
/// pool. Trials are seeded from `(seed, trial)`, so the report is identical to
/// the serial one.
pub fn run_attack_parallel(
    strategy: &EveStrategy,
    config: &AttackConfig,
    trials: u64,
    seed: u64,
) -> Result<AttackReport, AdversaryError> {
    check_experiment(strategy, config, trials)?;
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| run_attack_trial(strategy, config, seed, t))
        .try_reduce(AttackCounts::default, |a, b| Ok(a + b))?;
    Ok(AttackReport::from_counts(strategy, config, seed, counts))
}
