//! Melody evaluation: Raw Pitch Accuracy, Raw Chroma Accuracy, Overall
//! Accuracy over frame sequences (f0 in Hz, 0 = unvoiced).

use crate::error::{Error, Result};
use std::path::Path;

/// Community-default pitch tolerance.
pub const DEFAULT_TOLERANCE_CENTS: f64 = 50.0;

fn check_lengths(reference: &[f64], estimate: &[f64]) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(Error::shape(format!(
            "length mismatch: {} reference vs {} estimate frames",
            reference.len(),
            estimate.len()
        )));
    }
    Ok(())
}

fn cents_diff(est: f64, reference: f64) -> f64 {
    1200.0 * (est / reference).log2()
}

/// Raw Pitch Accuracy over reference-voiced frames.
///
/// A hit needs the estimate voiced and within `tolerance_cents`. Returns 1.0
/// when the reference has no voiced frames.
pub fn rpa(reference: &[f64], estimate: &[f64], tolerance_cents: f64) -> Result<f64> {
    check_lengths(reference, estimate)?;
    let mut voiced = 0usize;
    let mut hits = 0usize;
    for (&r, &e) in reference.iter().zip(estimate) {
        if r <= 0.0 {
            continue;
        }
        voiced += 1;
        if e > 0.0 && cents_diff(e, r).abs() <= tolerance_cents {
            hits += 1;
        }
    }
    Ok(if voiced == 0 { 1.0 } else { hits as f64 / voiced as f64 })
}

/// Raw Chroma Accuracy: as RPA but pitch distance is taken modulo octaves.
pub fn rca(reference: &[f64], estimate: &[f64], tolerance_cents: f64) -> Result<f64> {
    check_lengths(reference, estimate)?;
    let mut voiced = 0usize;
    let mut hits = 0usize;
    for (&r, &e) in reference.iter().zip(estimate) {
        if r <= 0.0 {
            continue;
        }
        voiced += 1;
        if e > 0.0 {
            let d = cents_diff(e, r);
            let chroma = d - 1200.0 * (d / 1200.0).round();
            if chroma.abs() <= tolerance_cents {
                hits += 1;
            }
        }
    }
    Ok(if voiced == 0 { 1.0 } else { hits as f64 / voiced as f64 })
}

/// Overall Accuracy over all frames: correct means matching voicing, and a
/// pitch within tolerance when both sides are voiced.
pub fn oa(reference: &[f64], estimate: &[f64], tolerance_cents: f64) -> Result<f64> {
    check_lengths(reference, estimate)?;
    if reference.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0usize;
    for (&r, &e) in reference.iter().zip(estimate) {
        let ok = if r <= 0.0 {
            e <= 0.0
        } else {
            e > 0.0 && cents_diff(e, r).abs() <= tolerance_cents
        };
        if ok {
            correct += 1;
        }
    }
    Ok(correct as f64 / reference.len() as f64)
}

/// All three metrics at once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackMetrics {
    pub rpa: f64,
    pub rca: f64,
    pub oa: f64,
}

pub fn evaluate(reference: &[f64], estimate: &[f64], tolerance_cents: f64) -> Result<TrackMetrics> {
    Ok(TrackMetrics {
        rpa: rpa(reference, estimate, tolerance_cents)?,
        rca: rca(reference, estimate, tolerance_cents)?,
        oa: oa(reference, estimate, tolerance_cents)?,
    })
}

/// Read a frame sequence from `time,f0` CSV (times ignored beyond ordering).
pub fn read_frames_csv(path: &Path) -> Result<Vec<f64>> {
    let series = crate::dataio::parse_label_file(path, crate::dataio::LabelFormat::TimeHzCsv)?;
    Ok(series.into_iter().map(|(_, f0)| f0).collect())
}

/// Write a frame sequence as `time,f0` CSV at a fixed hop.
pub fn write_frames_csv(path: &Path, frames: &[f64], hop_seconds: f64) -> Result<()> {
    let series: crate::dataio::LabelSeries = frames
        .iter()
        .enumerate()
        .map(|(i, &f0)| (i as f64 * hop_seconds, f0))
        .collect();
    crate::dataio::write_label_csv(path, &series)
}
