//! Command-line interface: six subcommands wiring the pipeline together.
//!
//! Every command is deterministic given identical inputs and seed, and
//! every artifact carries a provenance header (command, seed, config
//! hash). Exit codes: 0 success, 1 gradient-check failure, 2 input or
//! validation error. Log verbosity comes from the `DOORFEEL_LOG` env var
//! (`error`..`trace`).

use crate::{checkpoint, csv_io, formats, runner};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use doorfeel_core::eval::DEFAULT_SIGMA;
use doorfeel_core::model::{self, ModelConfig};
use doorfeel_core::ratings::{self, NUM_PAIRS};
use doorfeel_core::rng::SplitMix64;
use doorfeel_core::{profile, series, synth};
use formats::Provenance;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Parser, Debug)]
#[command(
    name = "doorfeel",
    version,
    about = "Door-opening force profiles to affective ratings: ingestion, synthesis, training, LOOCV evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert one recorded trial (force CSV + position CSV + hinge
    /// reference) into a 630-sample normalized profile JSON.
    Ingest {
        /// Force CSV with header `t,fx,fy,fz`.
        #[arg(long)]
        force: PathBuf,
        /// Position CSV with header `t,px,py,pz` (meters).
        #[arg(long)]
        position: PathBuf,
        /// Hinge reference JSON (`hinge`, `initial_marker`, `up_axis`).
        #[arg(long)]
        hinge: PathBuf,
        /// Output profile JSON path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "unknown-car")]
        car_id: String,
        #[arg(long, default_value = "trial-1")]
        trial_id: String,
        /// Echoed into the provenance header (ingestion itself is
        /// deterministic).
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Generate a synthetic dataset directory: profiles plus a manifest
    /// with oracle ratings.
    Synth {
        /// Output dataset directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON array of car specs; defaults to the six shipped
        /// specs derived from the seed.
        #[arg(long)]
        specs: Option<PathBuf>,
        /// Trials (profiles) per car.
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Train one model on every recording in a dataset and write a
    /// checkpoint plus an `epoch,loss` log.
    Train {
        /// Dataset directory (from `synth` or hand-assembled).
        #[arg(long)]
        dataset: PathBuf,
        /// Optional raw 7-point rating sheets CSV; overrides the manifest
        /// ratings with per-car participant averages.
        #[arg(long)]
        ratings: Option<PathBuf>,
        /// Model config JSON; defaults to the reference architecture.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output checkpoint path; the loss log lands next to it.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed when given.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Leave-one-out cross-validation over the six cars; writes report
    /// JSON, a MAE-grid CSV and a scatter CSV.
    Loocv {
        #[arg(long)]
        dataset: PathBuf,
        /// Optional raw rating sheets CSV overriding manifest ratings.
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Rating dispersion for the band analysis.
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        /// Worker threads for fold parallelism; 0 = one per core. The
        /// report is identical for any value.
        #[arg(long, default_value_t = 0)]
        workers: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Skip training and inject targets as predictions — exercises
        /// the fold/report plumbing (all-zero error grid).
        #[arg(long)]
        oracle: bool,
    },
    /// Check reverse-mode gradients against central finite differences.
    /// Exit code 1 if any trial fails.
    Gradcheck {
        /// Model config JSON; defaults to a small architecture sized for
        /// finite differencing.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Number of independent seeds to check.
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Deliberately corrupt one gradient entry to prove the check
        /// can fail.
        #[arg(long)]
        corrupt: bool,
        /// Optional JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the standard-deviation band summary from a LOOCV report
    /// and emit a plot-ready scatter CSV.
    Report {
        /// `report.json` produced by `loocv`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
}

/// Dispatch; returns the process exit code for non-error outcomes.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Ingest { force, position, hinge, out, car_id, trial_id, seed } => {
            cmd_ingest(&force, &position, &hinge, &out, &car_id, &trial_id, seed)?;
            Ok(0)
        }
        Command::Synth { out, specs, trials, seed } => {
            cmd_synth(&out, specs.as_deref(), trials, seed)?;
            Ok(0)
        }
        Command::Train { dataset, ratings, config, out, seed } => {
            cmd_train(&dataset, ratings.as_deref(), config.as_deref(), &out, seed)?;
            Ok(0)
        }
        Command::Loocv { dataset, ratings, config, out, sigma, workers, seed, oracle } => {
            cmd_loocv(
                &dataset,
                ratings.as_deref(),
                config.as_deref(),
                &out,
                sigma,
                workers,
                seed,
                oracle,
            )?;
            Ok(0)
        }
        Command::Gradcheck { config, seed, trials, eps, tol, corrupt, out } => {
            cmd_gradcheck(config.as_deref(), seed, trials, eps, tol, corrupt, out.as_deref())
        }
        Command::Report { input, sigma, out } => {
            cmd_report(&input, sigma, &out)?;
            Ok(0)
        }
    }
}

fn cmd_ingest(
    force: &Path,
    position: &Path,
    hinge: &Path,
    out: &Path,
    car_id: &str,
    trial_id: &str,
    seed: u64,
) -> Result<()> {
    let force = csv_io::parse_force_csv(force)?;
    let position = csv_io::parse_position_csv(position)?;
    let reference = formats::load_hinge(hinge)?;
    let trial = series::synchronize(&force, &position, &reference)
        .map_err(|e| anyhow::anyhow!("synchronize: {e}"))?;
    let profile = profile::build_profile(&trial, car_id, trial_id)
        .map_err(|e| anyhow::anyhow!("build_profile: {e}"))?;
    let prov = Provenance::new("ingest", seed, &ModelConfig::default());
    formats::write_profile(out, &profile, &prov)?;
    println!("ingest: wrote {} ({} samples, seed {seed})", out.display(), profile.values.len());
    Ok(())
}

fn load_specs(path: Option<&Path>, seed: u64) -> Result<Vec<synth::SyntheticCarSpec>> {
    let specs: Vec<synth::SyntheticCarSpec> = match path {
        None => synth::default_car_specs(seed),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("specs: reading {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("specs: parsing {}", p.display()))?
        }
    };
    for s in &specs {
        s.validate()
            .map_err(|e| anyhow::anyhow!("specs: car {}: {e}", s.car_id))?;
    }
    Ok(specs)
}

fn cmd_synth(out: &Path, specs_path: Option<&Path>, trials: usize, seed: u64) -> Result<()> {
    if trials == 0 {
        anyhow::bail!("synth: trials must be >= 1");
    }
    let specs = load_specs(specs_path, seed)?;
    fs::create_dir_all(out).with_context(|| format!("synth: creating {}", out.display()))?;
    let prov = Provenance::with_hash("synth", seed, formats::json_sha256(&specs));

    let mut cars = Vec::with_capacity(specs.len());
    for spec in &specs {
        let rating = synth::synth_ratings(spec)
            .map_err(|e| anyhow::anyhow!("synth: car {}: {e}", spec.car_id))?;
        let mut profile_files = Vec::with_capacity(trials);
        for trial in 0..trials {
            let p = synth::synth_profile(spec, trial as u64 + 1)
                .map_err(|e| anyhow::anyhow!("synth: car {}: {e}", spec.car_id))?;
            let name = format!("{}-trial-{:02}.json", spec.car_id, trial + 1);
            formats::write_profile(&out.join(&name), &p, &prov)?;
            profile_files.push(name);
        }
        cars.push(formats::ManifestCar {
            car_id: spec.car_id.clone(),
            profile_files,
            rating: rating.values,
        });
    }
    let manifest = formats::Manifest { provenance: prov, cars };
    formats::write_manifest(out, &manifest)?;
    println!(
        "synth: wrote {} cars x {trials} trials to {} (seed {seed})",
        manifest.cars.len(),
        out.display()
    );
    Ok(())
}

/// Parse raw rating sheets and reduce them to per-car 0-100 averages.
fn ratings_override(path: &Path) -> Result<Vec<(String, [f64; NUM_PAIRS])>> {
    let sheets = csv_io::parse_ratings_csv(path)?;
    let mut out = Vec::new();
    for (car_id, group) in ratings::group_by_car(&sheets) {
        let avg = ratings::average_ratings(&group)
            .map_err(|e| anyhow::anyhow!("ratings: car {car_id}: {e}"))?;
        out.push((car_id, avg.values));
    }
    Ok(out)
}

fn load_dataset_with_ratings(
    dataset: &Path,
    ratings: Option<&Path>,
) -> Result<doorfeel_core::eval::Dataset> {
    let table = ratings.map(ratings_override).transpose()?;
    formats::load_dataset(dataset, table.as_deref())
}

fn cmd_train(
    dataset_dir: &Path,
    ratings: Option<&Path>,
    config_path: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let mut config = formats::load_config(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let dataset = load_dataset_with_ratings(dataset_dir, ratings)?;
    if dataset.cars.is_empty() {
        anyhow::bail!("train: dataset has no cars");
    }
    let mut profiles = Vec::new();
    let mut targets = Vec::new();
    for car in &dataset.cars {
        for p in &car.profiles {
            profiles.push(p.clone());
            targets.push(car.rating.to_vec());
        }
    }
    log::info!("train: {} recordings, {} epochs", profiles.len(), config.epochs);
    let (model, report) =
        model::fit(&config, &profiles, &targets).map_err(|e| anyhow::anyhow!("train: {e}"))?;

    let prov = Provenance::new("train", config.seed, &config);
    checkpoint::save(out, &model)?;
    let loss_path = out.with_extension("loss.csv");
    formats::write_loss_csv(&loss_path, &report.loss_history, &prov)?;
    let meta_path = out.with_extension("provenance.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&prov)?)
        .with_context(|| format!("train: writing {}", meta_path.display()))?;
    println!(
        "train: wrote {} and {} ({} epochs, final loss {:.6}, seed {})",
        out.display(),
        loss_path.display(),
        report.loss_history.len(),
        report.loss_history.last().copied().unwrap_or(f64::NAN),
        config.seed
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_loocv(
    dataset_dir: &Path,
    ratings: Option<&Path>,
    config_path: Option<&Path>,
    out: &Path,
    sigma: f64,
    workers: usize,
    seed: Option<u64>,
    oracle: bool,
) -> Result<()> {
    let mut config = formats::load_config(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let dataset = load_dataset_with_ratings(dataset_dir, ratings)?;
    let report = if oracle {
        doorfeel_core::eval::run_loocv_oracle(&dataset, sigma)
            .map_err(|e| anyhow::anyhow!("loocv: {e}"))?
    } else {
        runner::run_loocv_parallel(&dataset, &config, sigma, workers)?
    };

    fs::create_dir_all(out).with_context(|| format!("loocv: creating {}", out.display()))?;
    let prov = Provenance::new("loocv", config.seed, &config);
    let file = formats::ReportFile { provenance: prov.clone(), config, report };
    formats::write_report_json(&out.join("report.json"), &file)?;
    formats::write_grid_csv(&out.join("mae_grid.csv"), &file.report, &prov)?;
    formats::write_scatter_csv(&out.join("scatter.csv"), &file.report, &prov)?;
    println!(
        "loocv: overall MAE {:.4}, band coverage {:.3}/{:.3} (sigma {:.2}, seed {}) -> {}",
        file.report.overall,
        file.report.band_half_sigma,
        file.report.band_one_sigma,
        sigma,
        prov.seed,
        out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct GradCheckFile {
    provenance: Provenance,
    trials: Vec<doorfeel_core::model::GradCheckReport>,
    pass: bool,
}

fn cmd_gradcheck(
    config_path: Option<&Path>,
    seed: u64,
    trials: usize,
    eps: f64,
    tol: f64,
    corrupt: bool,
    out: Option<&Path>,
) -> Result<i32> {
    let config = match config_path {
        Some(p) => formats::load_config(Some(p))?,
        None => ModelConfig::shrunken_test_config(),
    };
    if trials == 0 {
        anyhow::bail!("gradcheck: trials must be >= 1");
    }
    let mut reports = Vec::with_capacity(trials);
    let mut all_pass = true;
    for i in 0..trials {
        let trial_seed = SplitMix64::derive(seed, i as u64).next_u64();
        let r = model::gradient_check(&config, trial_seed, eps, tol, corrupt)
            .map_err(|e| anyhow::anyhow!("gradcheck: {e}"))?;
        println!(
            "gradcheck trial {i}: max rel err {:.3e} (tol {:.0e}, {} params) -> {}",
            r.max_rel_err,
            r.tol,
            r.n_params,
            if r.pass { "pass" } else { "FAIL" }
        );
        all_pass &= r.pass;
        reports.push(r);
    }
    if let Some(p) = out {
        let file = GradCheckFile {
            provenance: Provenance::new("gradcheck", seed, &config),
            trials: reports,
            pass: all_pass,
        };
        fs::write(p, serde_json::to_string_pretty(&file)?)
            .with_context(|| format!("gradcheck: writing {}", p.display()))?;
    }
    println!("gradcheck: {}", if all_pass { "pass" } else { "FAIL" });
    Ok(if all_pass { 0 } else { 1 })
}

#[derive(Debug, Serialize)]
struct BandSummary {
    provenance: Provenance,
    sigma: f64,
    points: usize,
    band_half_sigma: f64,
    band_one_sigma: f64,
    overall_mae: f64,
}

fn cmd_report(input: &Path, sigma: f64, out: &Path) -> Result<()> {
    let file = formats::load_report_json(input)?;
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for fold in &file.report.folds {
        preds.extend_from_slice(&fold.predicted);
        targets.extend_from_slice(&fold.target);
    }
    let (half, full) = doorfeel_core::eval::band_analysis(&preds, &targets, sigma)
        .map_err(|e| anyhow::anyhow!("report: {e}"))?;
    fs::create_dir_all(out).with_context(|| format!("report: creating {}", out.display()))?;
    let prov = Provenance::with_hash("report", file.provenance.seed, file.provenance.config_sha256.clone());
    let summary = BandSummary {
        provenance: prov.clone(),
        sigma,
        points: preds.len(),
        band_half_sigma: half,
        band_one_sigma: full,
        overall_mae: file.report.overall,
    };
    fs::write(
        out.join("band_summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )
    .with_context(|| format!("report: writing in {}", out.display()))?;
    formats::write_scatter_csv(&out.join("scatter.csv"), &file.report, &prov)?;
    println!(
        "report: {} points, within half sigma {:.3}, within one sigma {:.3} (sigma {:.2})",
        summary.points, half, full, sigma
    );
    Ok(())
}
