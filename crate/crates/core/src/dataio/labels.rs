//! Frame-level f0 label files and label-to-frame alignment.

use crate::error::{Error, Result};
use crate::pitchgrid::{FrameTarget, PitchGrid, TargetMode};
use std::path::Path;

/// Label file layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelFormat {
    /// CSV rows `time_seconds,f0_hz`.
    TimeHzCsv,
    /// One f0 per line at a fixed hop; timestamps are `index * hop`.
    FixedHopHz { hop_seconds: f64 },
}

/// A time series of (seconds, f0 Hz) label samples; f0 = 0 means unvoiced.
pub type LabelSeries = Vec<(f64, f64)>;

/// Frames farther than this from the nearest label sample are unvoiced.
pub const ALIGN_TOLERANCE_SECONDS: f64 = 0.05;

/// Parse a label file into a monotone time series.
pub fn parse_label_file(path: &Path, format: LabelFormat) -> Result<LabelSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_label_text(&text, format)
}

pub fn parse_label_text(text: &str, format: LabelFormat) -> Result<LabelSeries> {
    let mut series = Vec::new();
    let mut index = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (time, f0) = match format {
            LabelFormat::TimeHzCsv => {
                let mut parts = line.split(',');
                let t = parts
                    .next()
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: format!("bad time field in {line:?}"),
                    })?;
                let f = parts
                    .next()
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        msg: format!("bad f0 field in {line:?}"),
                    })?;
                (t, f)
            }
            LabelFormat::FixedHopHz { hop_seconds } => {
                let f = line.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("bad f0 value {line:?}"),
                })?;
                let t = index as f64 * hop_seconds;
                index += 1;
                (t, f)
            }
        };
        if !f0.is_finite() || f0 < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("negative or non-finite f0 {f0}"),
            });
        }
        if let Some(&(prev, _)) = series.last() {
            if time <= prev {
                return Err(Error::format(format!(
                    "non-monotone timestamps: {time} after {prev} (line {line_no})"
                )));
            }
        }
        series.push((time, f0));
    }
    Ok(series)
}

/// Write a label series in `time_hz_csv` format.
pub fn write_label_csv(path: &Path, series: &LabelSeries) -> Result<()> {
    let mut out = String::new();
    for (t, f0) in series {
        out.push_str(&format!("{t:.6},{f0:.6}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Align a label series to `n_frames` STFT frames.
///
/// Frame `t` sits at `clip_start + t * hop`; it takes the nearest label
/// sample (ties to the earlier one). Frames farther than
/// [`ALIGN_TOLERANCE_SECONDS`] from any sample become unvoiced, as does
/// everything when the series is empty.
pub fn align_labels(
    series: &LabelSeries,
    grid: &PitchGrid,
    mode: TargetMode,
    n_frames: usize,
    hop_seconds: f64,
    clip_start: f64,
) -> Result<Vec<FrameTarget>> {
    let mut targets = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let time = clip_start + t as f64 * hop_seconds;
        let f0 = nearest_label(series, time);
        targets.push(grid.make_frame_target(f0, mode)?);
    }
    Ok(targets)
}

fn nearest_label(series: &LabelSeries, time: f64) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    // binary search on the sorted timestamps
    let idx = series.partition_point(|&(t, _)| t < time);
    let mut best = None::<(f64, f64)>;
    if idx < series.len() {
        best = Some((series[idx].0 - time, series[idx].1));
    }
    if idx > 0 {
        let d = time - series[idx - 1].0;
        // `<=` keeps the earlier sample on exact ties
        if best.is_none_or(|(bd, _)| d <= bd) {
            best = Some((d, series[idx - 1].1));
        }
    }
    match best {
        Some((d, f0)) if d <= ALIGN_TOLERANCE_SECONDS => f0,
        _ => 0.0,
    }
}
