//! WEL training on a rayon pool.

use annobias_core::wel::{self, WelEnsemble, WelPlan, WelSettings};
use annobias_core::{AnnotatedDataset, Error, Result};
use rayon::prelude::*;

/// Trains members on `threads` workers. Members are collected in index
/// order and each depends only on its own seed, so the result is identical
/// for every thread count.
pub fn train_wel_parallel(dataset: &AnnotatedDataset, settings: &WelSettings, threads: usize) -> Result<(WelPlan, WelEnsemble)> {
    let plan = wel::plan_wel(dataset, settings)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let members = pool.install(|| {
        (0..plan.variants.len()).into_par_iter().map(|i| wel::train_member(dataset, &plan, i)).collect::<Result<Vec<_>>>()
    })?;
    let ensemble = wel::assemble_wel(dataset, &plan, members)?;
    Ok((plan, ensemble))
}
