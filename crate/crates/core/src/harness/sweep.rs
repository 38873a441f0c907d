use rayon::prelude::*;

use super::{run_or_load, ExperimentConfig, ExperimentRecord, HarnessError, Result, Store};

/// Run (or load) every `(condition, seed)` job on `workers` threads.
/// Records come back in job order: conditions in order, seeds in order.
pub fn run_sweep(configs: &[ExperimentConfig], store: &Store, workers: usize) -> Result<Vec<ExperimentRecord>> {
    for c in configs {
        c.validate()?;
    }
    let jobs: Vec<(&ExperimentConfig, u64)> = configs.iter().flat_map(|c| c.seeds.iter().map(move |s| (c, *s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(|(c, s)| run_or_load(c, *s, store)).collect())
}
