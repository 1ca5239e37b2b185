//! Labeled corpora: manifests, splits, ingestion, and synthetic generation.

pub mod labels;
pub mod synth;

pub use labels::{align_labels, parse_label_file, parse_label_text, write_label_csv, LabelFormat, LabelSeries};
pub use synth::{generate_synthetic_clip, SyntheticSpec};

use crate::dsp::{self, FeatureClip};
use crate::error::{Error, Result};
use crate::pitchgrid::{FrameTarget, PitchGrid, TargetMode};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One featurized clip with frame-aligned ground truth.
#[derive(Debug, Clone)]
pub struct LabeledClip {
    pub features: FeatureClip,
    pub targets: Vec<FrameTarget>,
    pub source_id: String,
    pub domain_tag: String,
}

impl LabeledClip {
    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.features.n_frames {
            return Err(Error::shape(format!(
                "clip {}: {} targets for {} frames",
                self.source_id,
                self.targets.len(),
                self.features.n_frames
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub audio: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub domain_tag: String,
}

/// JSON corpus manifest: file pairs plus the split seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Entry indices per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic shuffled split.
///
/// Ratios must sum to 1 (±1e-9). Sizes are `floor(n * ratio)` for train and
/// validation; test takes the remainder.
pub fn build_splits(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if manifest.entries.is_empty() {
        return Err(Error::config("empty manifest"));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("split ratios sum to {sum}, expected 1")));
    }
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(Error::config("split ratios must be in [0, 1]"));
    }
    let n = manifest.entries.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng: rand_chacha::ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let n_train = (n as f64 * ratios[0]).floor() as usize;
    let n_val = (n as f64 * ratios[1]).floor() as usize;
    let train = order[..n_train].to_vec();
    let validation = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    Ok(SplitAssignment { train, validation, test })
}

/// Grouped split keyed on `domain_tag` (e.g. one singer in train, the other
/// in test). Tags not listed anywhere are an error.
pub fn build_grouped_splits(
    manifest: &DatasetManifest,
    train_tags: &[&str],
    validation_tags: &[&str],
    test_tags: &[&str],
) -> Result<SplitAssignment> {
    if manifest.entries.is_empty() {
        return Err(Error::config("empty manifest"));
    }
    let mut split = SplitAssignment {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (i, e) in manifest.entries.iter().enumerate() {
        let tag = e.domain_tag.as_str();
        if train_tags.contains(&tag) {
            split.train.push(i);
        } else if validation_tags.contains(&tag) {
            split.validation.push(i);
        } else if test_tags.contains(&tag) {
            split.test.push(i);
        } else {
            return Err(Error::config(format!("domain_tag {tag:?} not assigned to any split")));
        }
    }
    Ok(split)
}

/// Feature frontend selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FrontendConfig {
    /// Project onto this many mel bands (default: off, linear spectrum).
    pub n_mel: Option<usize>,
    /// Keep only the first N frequency bins (desk-scale configs use 257).
    pub truncate_freq: Option<usize>,
}

impl FrontendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mel.is_some() && self.truncate_freq.is_some() {
            return Err(Error::config("n_mel and truncate_freq are mutually exclusive"));
        }
        Ok(())
    }

    pub fn apply(&self, clip: &FeatureClip) -> Result<FeatureClip> {
        self.validate()?;
        if let Some(n_mel) = self.n_mel {
            dsp::mel_project(clip, n_mel)
        } else if let Some(f) = self.truncate_freq {
            if f == 0 || f > clip.n_freq {
                return Err(Error::config(format!("truncate_freq {f} out of range")));
            }
            Ok(clip.truncate_freq(f))
        } else {
            Ok(clip.clone())
        }
    }

    /// Output feature width for a full-spectrum input of `n_freq` bins.
    pub fn output_freq(&self, n_freq: usize) -> usize {
        if let Some(m) = self.n_mel {
            m
        } else if let Some(f) = self.truncate_freq {
            f.min(n_freq)
        } else {
            n_freq
        }
    }
}

/// Load one manifest entry: read, standardize, segment, featurize, align.
pub fn load_entry(
    entry: &ManifestEntry,
    grid: &PitchGrid,
    mode: TargetMode,
    frontend: &FrontendConfig,
) -> Result<Vec<LabeledClip>> {
    let audio = dsp::read_wav(&entry.audio)?;
    let audio = dsp::standardize(&audio)?;
    let clips = dsp::segment(&audio, dsp::CLIP_SECONDS)?;
    let series = labels::parse_label_file(&entry.labels, LabelFormat::TimeHzCsv)?;
    let mut out = Vec::with_capacity(clips.len());
    for (c, clip) in clips.iter().enumerate() {
        let feats = frontend.apply(&dsp::log_magnitude_stft(clip)?)?;
        let targets = align_labels(
            &series,
            grid,
            mode,
            feats.n_frames,
            feats.hop_seconds,
            c as f64 * dsp::CLIP_SECONDS,
        )?;
        let clip = LabeledClip {
            features: feats,
            targets,
            source_id: format!(
                "{}#{c}",
                entry.audio.file_stem().and_then(|s| s.to_str()).unwrap_or("clip")
            ),
            domain_tag: entry.domain_tag.clone(),
        };
        clip.validate()?;
        out.push(clip);
    }
    Ok(out)
}

/// Load the clips of the selected manifest entries (parallel across entries).
pub fn load_corpus(
    manifest: &DatasetManifest,
    indices: &[usize],
    grid: &PitchGrid,
    mode: TargetMode,
    frontend: &FrontendConfig,
) -> Result<Vec<LabeledClip>> {
    let loaded = crate::par::map_slice(indices, |&i| {
        manifest
            .entries
            .get(i)
            .ok_or_else(|| Error::config(format!("manifest index {i} out of range")))
            .and_then(|e| load_entry(e, grid, mode, frontend))
    });
    let mut out = Vec::new();
    for clips in loaded {
        out.extend(clips?);
    }
    Ok(out)
}

/// Generate `count` synthetic labeled clips directly in memory
/// (parallel across clips; clip i uses seed `base_seed + i`).
pub fn synthetic_corpus(
    spec: &SyntheticSpec,
    grid: &PitchGrid,
    mode: TargetMode,
    frontend: &FrontendConfig,
    count: usize,
    base_seed: u64,
    domain_tag: &str,
) -> Result<Vec<LabeledClip>> {
    spec.validate(grid)?;
    frontend.validate()?;
    crate::par::map_indexed(count, |i| {
        let seed = base_seed + i as u64;
        let (audio, series) = generate_synthetic_clip(spec, grid, seed)?;
        let feats = frontend.apply(&dsp::log_magnitude_stft(&audio)?)?;
        let targets = align_labels(&series, grid, mode, feats.n_frames, feats.hop_seconds, 0.0)?;
        let clip = LabeledClip {
            features: feats,
            targets,
            source_id: format!("{domain_tag}-{seed:08}"),
            domain_tag: domain_tag.to_string(),
        };
        clip.validate()?;
        Ok(clip)
    })
    .into_iter()
    .collect()
}
