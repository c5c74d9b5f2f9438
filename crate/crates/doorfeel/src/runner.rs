//! Worker-pool LOOCV driver.
//!
//! Folds are independent by construction — each fold's training seed is
//! derived from the master seed and the fold index — so running them on
//! any number of workers yields bit-identical reports.

use anyhow::{Context, Result};
use doorfeel_core::eval::{self, Dataset, LoocvReport, CAR_LABELS};
use doorfeel_core::model::ModelConfig;
use rayon::prelude::*;

/// Run the six folds on a pool of `workers` threads (`0` = one thread per
/// core). Results are assembled in car-label order regardless of which
/// worker finishes first.
pub fn run_loocv_parallel(
    dataset: &Dataset,
    config: &ModelConfig,
    sigma: f64,
    workers: usize,
) -> Result<LoocvReport> {
    dataset.validate().map_err(|e| anyhow::anyhow!("loocv: {e}"))?;
    let labels: Vec<String> = CAR_LABELS.iter().map(|s| s.to_string()).collect();
    let folds = eval::make_folds(&labels).map_err(|e| anyhow::anyhow!("loocv: {e}"))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("loocv: building worker pool")?;
    let results = pool.install(|| {
        folds
            .par_iter()
            .enumerate()
            .map(|(i, fold)| {
                log::info!("fold {i}: training with {} held out", fold.test_car);
                eval::run_fold(dataset, fold, i, config)
                    .map_err(|e| anyhow::anyhow!("loocv fold {} ({}): {e}", i, fold.test_car))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    eval::assemble_report(results, sigma).map_err(|e| anyhow::anyhow!("loocv: {e}"))
}
