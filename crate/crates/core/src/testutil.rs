//! Fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data_model::{Experiment, ExperimentPanel, MetricEntry, MetricRegistry, MetricRole, Sign};

/// Panel with `m` auxiliaries whose effects are uniform in (-1, 1); the
/// north star shares the first auxiliary's effect.
pub fn random_panel(seed: u64, j: usize, n: usize, m: usize) -> ExperimentPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries: Vec<MetricEntry> = (0..m)
        .map(|k| MetricEntry::new(format!("m{k}"), MetricRole::Auxiliary, Sign::Positive))
        .collect();
    entries.push(MetricEntry::new("ns", MetricRole::NorthStarLong, Sign::Positive));
    let registry = MetricRegistry::new(entries).unwrap();
    let experiments = (0..j)
        .map(|e| {
            let effects: Vec<f64> = (0..=m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = (0..n * m)
                .map(|c| effects[c % m] + rng.random_range(-2.0..2.0))
                .collect();
            let y = (0..n).map(|_| effects[m] + effects[0] + rng.random_range(-2.0..2.0)).collect();
            Experiment::new(format!("e{e}"), (0..n).map(|i| i.to_string()).collect(), x, y)
        })
        .collect();
    ExperimentPanel::new(registry, experiments).unwrap()
}
