//! Leave-one-out evaluation with the K3 exclusion protocol, the MAE grid
//! and the standard-deviation band analysis.
//!
//! Six cars, six folds. K3 never appears in any training set; when K3 is
//! itself the test car, Santafe is dropped so every fold trains on
//! exactly four cars.

use crate::error::{CoreError, Result};
use crate::model::{self, ModelConfig};
use crate::ratings::NUM_PAIRS;
use crate::rng::SplitMix64;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const NUM_CARS: usize = 6;
pub const CAR_LABELS: [&str; NUM_CARS] = ["Genesis", "Grandeur", "K3", "K5", "Santafe", "Sorento"];
/// Never trained on; only ever a test car.
pub const HELD_OUT_CAR: &str = "K3";
/// Dropped from the K3 fold's training set to keep four training cars.
pub const K3_FOLD_EXCLUDED: &str = "Santafe";
/// Human rating dispersion used for the band analysis.
pub const DEFAULT_SIGMA: f64 = 20.96;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FoldSpec {
    pub test_car: String,
    pub train_cars: Vec<String>,
}

/// One car's recordings with its averaged rating target (0-100).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CarData {
    pub car_id: String,
    pub profiles: Vec<Vec<f64>>,
    pub rating: [f64; NUM_PAIRS],
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Dataset {
    pub cars: Vec<CarData>,
}

impl Dataset {
    pub fn car(&self, id: &str) -> Option<&CarData> {
        self.cars.iter().find(|c| c.car_id == id)
    }

    pub fn validate(&self) -> Result<()> {
        for want in CAR_LABELS {
            let car = self
                .car(want)
                .ok_or_else(|| CoreError::Validation(format!("dataset is missing car {want}")))?;
            if car.profiles.is_empty() {
                return Err(CoreError::Validation(format!("car {want} has no recordings")));
            }
        }
        if self.cars.len() != NUM_CARS {
            return Err(CoreError::Validation(format!(
                "dataset has {} cars, expected {NUM_CARS}",
                self.cars.len()
            )));
        }
        Ok(())
    }
}

/// Build the six folds. Every fold trains on exactly four cars: the test
/// car and K3 are always excluded, and the K3 fold drops Santafe instead.
pub fn make_folds(cars: &[String]) -> Result<Vec<FoldSpec>> {
    if cars.len() != NUM_CARS {
        return Err(CoreError::Validation(format!(
            "expected {NUM_CARS} car labels, got {}",
            cars.len()
        )));
    }
    for want in CAR_LABELS {
        if !cars.iter().any(|c| c == want) {
            return Err(CoreError::Validation(format!("missing car label {want}")));
        }
    }
    // the two checks above also rule out duplicates (6 slots, 6 distinct hits)
    let folds = cars
        .iter()
        .map(|test| {
            let drop_also = if test == HELD_OUT_CAR { K3_FOLD_EXCLUDED } else { HELD_OUT_CAR };
            FoldSpec {
                test_car: test.clone(),
                train_cars: cars
                    .iter()
                    .filter(|c| *c != test && c.as_str() != drop_also)
                    .cloned()
                    .collect(),
            }
        })
        .collect();
    Ok(folds)
}

/// Per-pair absolute errors and their mean. Both vectors on 0-100.
pub fn mae(pred: &[f64; NUM_PAIRS], target: &[f64; NUM_PAIRS]) -> ([f64; NUM_PAIRS], f64) {
    let mut errs = [0.0; NUM_PAIRS];
    let mut sum = 0.0;
    for i in 0..NUM_PAIRS {
        errs[i] = (pred[i] - target[i]).abs();
        sum += errs[i];
    }
    (errs, sum / NUM_PAIRS as f64)
}

/// Fractions of points with `|pred - target| <= sigma/2` and `<= sigma`.
pub fn band_analysis(preds: &[f64], targets: &[f64], sigma: f64) -> Result<(f64, f64)> {
    if preds.len() != targets.len() {
        return Err(CoreError::Shape(format!(
            "band analysis: {} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(CoreError::Validation(format!("sigma must be positive, got {sigma}")));
    }
    if preds.is_empty() {
        return Err(CoreError::Validation("band analysis of empty set".into()));
    }
    let mut half = 0usize;
    let mut full = 0usize;
    for (p, t) in preds.iter().zip(targets) {
        let e = (p - t).abs();
        if e <= sigma / 2.0 {
            half += 1;
        }
        if e <= sigma {
            full += 1;
        }
    }
    let n = preds.len() as f64;
    Ok((half as f64 / n, full as f64 / n))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FoldResult {
    pub test_car: String,
    /// Mean of the per-recording predictions, 0-100.
    pub predicted: [f64; NUM_PAIRS],
    pub target: [f64; NUM_PAIRS],
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LoocvReport {
    pub folds: Vec<FoldResult>,
    /// Absolute-error grid, rows in [`CAR_LABELS`] order, columns in
    /// adjective-pair order.
    pub grid: Vec<[f64; NUM_PAIRS]>,
    pub per_car: Vec<f64>,
    pub per_pair: [f64; NUM_PAIRS],
    pub overall: f64,
    pub sigma: f64,
    pub band_half_sigma: f64,
    pub band_one_sigma: f64,
}

/// Per-fold training seed, derived so folds are independent of execution
/// order and worker count.
pub fn fold_seed(master: u64, fold_idx: usize) -> u64 {
    SplitMix64::derive(master, 0xF01D_0000 + fold_idx as u64).next_u64()
}

/// Train on the fold's four cars and predict the test car. Exposed so
/// callers can run folds in parallel; `fold_idx` fixes the derived seed.
pub fn run_fold(
    dataset: &Dataset,
    fold: &FoldSpec,
    fold_idx: usize,
    config: &ModelConfig,
) -> Result<FoldResult> {
    let mut profiles = Vec::new();
    let mut targets = Vec::new();
    for car_id in &fold.train_cars {
        let car = dataset
            .car(car_id)
            .ok_or_else(|| CoreError::Validation(format!("dataset is missing car {car_id}")))?;
        for p in &car.profiles {
            profiles.push(p.clone());
            targets.push(car.rating.to_vec());
        }
    }
    let mut cfg = config.clone();
    cfg.seed = fold_seed(config.seed, fold_idx);
    let (trained, _) = model::fit(&cfg, &profiles, &targets)?;

    let test = dataset
        .car(&fold.test_car)
        .ok_or_else(|| CoreError::Validation(format!("dataset is missing car {}", fold.test_car)))?;
    let preds = model::predict_batch(&trained, test.profiles.iter().map(|p| p.as_slice()))?;
    let mut predicted = [0.0; NUM_PAIRS];
    for p in &preds {
        for (acc, &v) in predicted.iter_mut().zip(p) {
            *acc += v;
        }
    }
    for v in predicted.iter_mut() {
        *v /= preds.len() as f64;
    }
    Ok(FoldResult {
        test_car: fold.test_car.clone(),
        predicted,
        target: test.rating,
    })
}

/// Build the per-car x per-pair MAE grid report from all six fold results.
pub fn assemble_report(results: Vec<FoldResult>, sigma: f64) -> Result<LoocvReport> {
    if results.len() != NUM_CARS {
        return Err(CoreError::Validation(format!(
            "need {NUM_CARS} fold results, got {}",
            results.len()
        )));
    }
    let mut grid = Vec::with_capacity(NUM_CARS);
    let mut per_car = Vec::with_capacity(NUM_CARS);
    let mut preds_flat = Vec::with_capacity(NUM_CARS * NUM_PAIRS);
    let mut targets_flat = Vec::with_capacity(NUM_CARS * NUM_PAIRS);
    let mut ordered = Vec::with_capacity(NUM_CARS);
    for label in CAR_LABELS {
        let r = results
            .iter()
            .find(|r| r.test_car == label)
            .ok_or_else(|| CoreError::Validation(format!("no fold result for {label}")))?;
        let (errs, row_mean) = mae(&r.predicted, &r.target);
        grid.push(errs);
        per_car.push(row_mean);
        preds_flat.extend_from_slice(&r.predicted);
        targets_flat.extend_from_slice(&r.target);
        ordered.push(r.clone());
    }
    let mut per_pair = [0.0; NUM_PAIRS];
    for row in &grid {
        for (acc, &e) in per_pair.iter_mut().zip(row) {
            *acc += e;
        }
    }
    for v in per_pair.iter_mut() {
        *v /= NUM_CARS as f64;
    }
    let overall = per_car.iter().sum::<f64>() / NUM_CARS as f64;
    let (band_half_sigma, band_one_sigma) = band_analysis(&preds_flat, &targets_flat, sigma)?;
    Ok(LoocvReport {
        folds: ordered,
        grid,
        per_car,
        per_pair,
        overall,
        sigma,
        band_half_sigma,
        band_one_sigma,
    })
}

/// Sequential LOOCV driver: six folds, train and predict each, assemble.
pub fn run_loocv(dataset: &Dataset, config: &ModelConfig, sigma: f64) -> Result<LoocvReport> {
    dataset.validate()?;
    let labels: Vec<String> = CAR_LABELS.iter().map(|s| s.to_string()).collect();
    let folds = make_folds(&labels)?;
    let mut results = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        results.push(run_fold(dataset, fold, i, config)?);
    }
    assemble_report(results, sigma)
}

/// LOOCV with predictions forced equal to targets — exercises fold and
/// report plumbing without any training.
pub fn run_loocv_oracle(dataset: &Dataset, sigma: f64) -> Result<LoocvReport> {
    dataset.validate()?;
    let labels: Vec<String> = CAR_LABELS.iter().map(|s| s.to_string()).collect();
    let folds = make_folds(&labels)?;
    let results = folds
        .iter()
        .map(|f| {
            let car = dataset.car(&f.test_car).unwrap();
            FoldResult {
                test_car: f.test_car.clone(),
                predicted: car.rating,
                target: car.rating,
            }
        })
        .collect();
    assemble_report(results, sigma)
}
