//! CSV parsers for the sensor streams and the raw rating sheets.
//!
//! All parse failures carry the 1-based line number of the offending row.

use anyhow::{bail, Context, Result};
use doorfeel_core::geometry::Vec3;
use doorfeel_core::ratings::{RawLikertSheet, NUM_PAIRS};
use doorfeel_core::series::{RawForceSeries, RawPositionSeries};
use std::path::Path;

fn parse_vec_rows(
    path: &Path,
    expected_header: [&str; 4],
    what: &str,
) -> Result<Vec<(f64, Vec3)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("{what}: opening {}", path.display()))?;
    let header = rdr
        .headers()
        .with_context(|| format!("{what}: reading header of {}", path.display()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected_header {
        bail!(
            "{what}: {} has header {:?}, expected {:?}",
            path.display(),
            got,
            expected_header
        );
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("{what}: reading {}", path.display()))?;
        // +1 for the header row, +1 for 1-based numbering.
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            bail!(
                "{what}: {} line {line}: expected 4 columns, got {}",
                path.display(),
                rec.len()
            );
        }
        let mut vals = [0.0f64; 4];
        for (i, field) in rec.iter().enumerate() {
            vals[i] = field.parse::<f64>().with_context(|| {
                format!(
                    "{what}: {} line {line}: column {} ({:?}) is not a number",
                    path.display(),
                    expected_header[i],
                    field
                )
            })?;
        }
        samples.push((vals[0], Vec3::new(vals[1], vals[2], vals[3])));
    }
    if samples.is_empty() {
        bail!("{what}: {} has a header but no data rows", path.display());
    }
    Ok(samples)
}

/// Nominal sampling rate recovered from the span of the timestamps.
fn infer_rate(samples: &[(f64, Vec3)]) -> f64 {
    if samples.len() < 2 {
        return 1.0;
    }
    let span = samples[samples.len() - 1].0 - samples[0].0;
    if span > 0.0 {
        (samples.len() - 1) as f64 / span
    } else {
        1.0
    }
}

/// Parse `t,fx,fy,fz` rows into a force series. Row order and count are
/// preserved; timestamp monotonicity is enforced by the series constructor.
pub fn parse_force_csv(path: &Path) -> Result<RawForceSeries> {
    let samples = parse_vec_rows(path, ["t", "fx", "fy", "fz"], "force csv")?;
    let rate = infer_rate(&samples);
    RawForceSeries::new(samples, rate).map_err(|e| anyhow::anyhow!("force csv: {e}"))
}

/// Parse `t,px,py,pz` rows (meters) into a position series.
pub fn parse_position_csv(path: &Path) -> Result<RawPositionSeries> {
    let samples = parse_vec_rows(path, ["t", "px", "py", "pz"], "position csv")?;
    let rate = infer_rate(&samples);
    RawPositionSeries::new(samples, rate).map_err(|e| anyhow::anyhow!("position csv: {e}"))
}

/// Parse rating sheets: header `car_id,participant_id,p1..p10`, one row per
/// (car, participant) with integer 1-7 scores.
pub fn parse_ratings_csv(path: &Path) -> Result<Vec<RawLikertSheet>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("ratings csv: opening {}", path.display()))?;
    let header = rdr
        .headers()
        .with_context(|| format!("ratings csv: reading header of {}", path.display()))?;
    let mut expected = vec!["car_id".to_string(), "participant_id".to_string()];
    expected.extend((1..=NUM_PAIRS).map(|i| format!("p{i}")));
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        bail!(
            "ratings csv: {} has header {:?}, expected {:?}",
            path.display(),
            got,
            expected
        );
    }
    let mut sheets = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("ratings csv: reading {}", path.display()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 + NUM_PAIRS {
            bail!(
                "ratings csv: {} line {line}: expected {} columns, got {}",
                path.display(),
                2 + NUM_PAIRS,
                rec.len()
            );
        }
        let mut scores = [0u8; NUM_PAIRS];
        for (i, s) in scores.iter_mut().enumerate() {
            let field = &rec[2 + i];
            *s = field.parse::<u8>().with_context(|| {
                format!(
                    "ratings csv: {} line {line}: p{} ({:?}) is not an integer score",
                    path.display(),
                    i + 1,
                    field
                )
            })?;
        }
        let sheet = RawLikertSheet::new(rec[0].to_string(), rec[1].to_string(), scores)
            .map_err(|e| anyhow::anyhow!("ratings csv: {} line {line}: {e}", path.display()))?;
        sheets.push(sheet);
    }
    if sheets.is_empty() {
        bail!("ratings csv: {} has a header but no rows", path.display());
    }
    Ok(sheets)
}
