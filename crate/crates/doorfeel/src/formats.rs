//! On-disk formats: profile JSON, hinge reference, dataset manifest,
//! model config, LOOCV report (JSON + MAE-grid CSV + scatter CSV)
//! and the provenance header every artifact carries.

use anyhow::{bail, Context, Result};
use doorfeel_core::eval::{CarData, Dataset, LoocvReport, CAR_LABELS};
use doorfeel_core::geometry::{HingeReference, Vec3};
use doorfeel_core::model::ModelConfig;
use doorfeel_core::profile::{NormalizedProfile, PROFILE_LEN};
use doorfeel_core::ratings::{ADJECTIVE_PAIRS, NUM_PAIRS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

/// Stamped into every output so a result can be traced to the exact
/// command, seed and configuration that produced it. No timestamps —
/// outputs must be byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: &ModelConfig) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config_sha256: config_hash(config),
        }
    }

    /// For commands whose effective configuration is not a `ModelConfig`
    /// (e.g. synthesis specs), hash that value instead.
    pub fn with_hash(command: &str, seed: u64, config_sha256: String) -> Self {
        Self { command: command.to_string(), seed, config_sha256 }
    }

    /// One-line comment form used atop CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!(
            "# provenance: command={} seed={} config_sha256={}\n",
            self.command, self.seed, self.config_sha256
        )
    }
}

/// SHA-256 of a value's canonical (serde_json) encoding.
pub fn json_sha256<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    let mut h = Sha256::new();
    h.update(&bytes);
    hex(&h.finalize())
}

/// SHA-256 of the canonical (serde_json) config encoding.
pub fn config_hash(config: &ModelConfig) -> String {
    json_sha256(config)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_config(path: Option<&Path>) -> Result<ModelConfig> {
    let config = match path {
        None => ModelConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("config: reading {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("config: parsing {}", p.display()))?
        }
    };
    config
        .validate()
        .map_err(|e| anyhow::anyhow!("config: {e}"))?;
    Ok(config)
}

#[derive(Debug, Serialize, Deserialize)]
struct HingeFile {
    hinge: [f64; 3],
    initial_marker: [f64; 3],
    up_axis: [f64; 3],
}

pub fn load_hinge(path: &Path) -> Result<HingeReference> {
    let text =
        fs::read_to_string(path).with_context(|| format!("hinge: reading {}", path.display()))?;
    let f: HingeFile =
        serde_json::from_str(&text).with_context(|| format!("hinge: parsing {}", path.display()))?;
    let v = |a: [f64; 3]| Vec3::new(a[0], a[1], a[2]);
    let reference = HingeReference {
        hinge: v(f.hinge),
        initial_marker: v(f.initial_marker),
        up_axis: v(f.up_axis),
    };
    reference.validate().map_err(|e| anyhow::anyhow!("hinge: {e}"))?;
    Ok(reference)
}

/// Profile file: the profile fields plus a provenance header at the top
/// level. `load_profile` reads it back as a plain [`NormalizedProfile`]
/// (the provenance field is simply ignored on load).
#[derive(Serialize)]
struct ProfileFile<'a> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    profile: &'a NormalizedProfile,
}

pub fn write_profile(path: &Path, profile: &NormalizedProfile, prov: &Provenance) -> Result<()> {
    let text = serde_json::to_string_pretty(&ProfileFile { provenance: prov, profile })?;
    fs::write(path, text).with_context(|| format!("profile: writing {}", path.display()))?;
    Ok(())
}

pub fn load_profile(path: &Path) -> Result<NormalizedProfile> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("profile: reading {}", path.display()))?;
    let p: NormalizedProfile = serde_json::from_str(&text)
        .with_context(|| format!("profile: parsing {}", path.display()))?;
    if p.values.len() != PROFILE_LEN {
        bail!(
            "profile: {} has {} values, expected {PROFILE_LEN}",
            path.display(),
            p.values.len()
        );
    }
    Ok(p)
}

/// Dataset directory layout: `manifest.json` listing, per car, the
/// profile file paths (relative to the directory) and the 0-100 target
/// rating.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestCar {
    pub car_id: String,
    pub profile_files: Vec<String>,
    pub rating: [f64; NUM_PAIRS],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: Provenance,
    pub cars: Vec<ManifestCar>,
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(dir.join("manifest.json"), text)
        .with_context(|| format!("manifest: writing in {}", dir.display()))?;
    Ok(())
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("manifest: reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("manifest: parsing {}", path.display()))
}

/// Load a whole dataset directory into memory, optionally overriding the
/// manifest ratings with externally supplied per-car vectors.
pub fn load_dataset(
    dir: &Path,
    rating_override: Option<&[(String, [f64; NUM_PAIRS])]>,
) -> Result<Dataset> {
    let manifest = load_manifest(dir)?;
    let mut cars = Vec::with_capacity(manifest.cars.len());
    for mc in &manifest.cars {
        let mut profiles = Vec::with_capacity(mc.profile_files.len());
        for rel in &mc.profile_files {
            profiles.push(load_profile(&dir.join(rel))?.values);
        }
        let rating = match rating_override {
            None => mc.rating,
            Some(table) => table
                .iter()
                .find(|(id, _)| *id == mc.car_id)
                .map(|(_, r)| *r)
                .ok_or_else(|| {
                    anyhow::anyhow!("ratings: no entry for car {} in override table", mc.car_id)
                })?,
        };
        cars.push(CarData { car_id: mc.car_id.clone(), profiles, rating });
    }
    Ok(Dataset { cars })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub provenance: Provenance,
    pub config: ModelConfig,
    pub report: LoocvReport,
}

pub fn write_report_json(path: &Path, report: &ReportFile) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text).with_context(|| format!("report: writing {}", path.display()))?;
    Ok(())
}

pub fn load_report_json(path: &Path) -> Result<ReportFile> {
    let text =
        fs::read_to_string(path).with_context(|| format!("report: reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("report: parsing {}", path.display()))
}

/// Write CSV body bytes under a one-line provenance comment.
fn write_csv_file(path: &Path, prov: &Provenance, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let body = w.into_inner().context("csv: flushing")?;
    let mut out = prov.csv_comment().into_bytes();
    out.extend_from_slice(&body);
    fs::write(path, out).with_context(|| format!("csv: writing {}", path.display()))?;
    Ok(())
}

/// MAE-grid CSV: one row per car with its 10 per-pair absolute
/// errors and row MAE, a per-pair mean row, and the overall MAE.
pub fn write_grid_csv(path: &Path, report: &LoocvReport, prov: &Provenance) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["car".to_string()];
    header.extend(
        ADJECTIVE_PAIRS
            .iter()
            .map(|(a, b)| format!("{a}/{b}")),
    );
    header.push("mae".into());
    w.write_record(&header)?;
    for (car, (row, car_mae)) in CAR_LABELS
        .iter()
        .zip(report.grid.iter().zip(report.per_car.iter()))
    {
        let mut rec = vec![car.to_string()];
        rec.extend(row.iter().map(|v| format!("{v:.4}")));
        rec.push(format!("{car_mae:.4}"));
        w.write_record(&rec)?;
    }
    let mut rec = vec!["All cars".to_string()];
    rec.extend(report.per_pair.iter().map(|v| format!("{v:.4}")));
    rec.push(format!("{:.4}", report.overall));
    w.write_record(&rec)?;
    write_csv_file(path, prov, w)
}

/// Plot-ready scatter CSV: one `(car, pair, target, pred)` row per grid
/// point, for band charts.
pub fn write_scatter_csv(path: &Path, report: &LoocvReport, prov: &Provenance) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["car", "pair", "target", "pred"])?;
    for fold in &report.folds {
        for (i, (a, b)) in ADJECTIVE_PAIRS.iter().enumerate() {
            w.write_record([
                fold.test_car.as_str(),
                &format!("{a}/{b}"),
                &format!("{:.6}", fold.target[i]),
                &format!("{:.6}", fold.predicted[i]),
            ])?;
        }
    }
    write_csv_file(path, prov, w)
}

/// Training log CSV: `epoch,loss`.
pub fn write_loss_csv(path: &Path, losses: &[f64], prov: &Provenance) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([format!("{}", i + 1), format!("{l:.12}")])?;
    }
    write_csv_file(path, prov, w)
}
