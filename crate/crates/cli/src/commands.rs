//! Subcommand implementations.

use crate::config::{ActiveSection, DataSection, ExperimentConfig};
use evipitch::active::{
    self, adaptation_curve_cell_order, base_curve_point, run_curve_cell, CurveConfig, CurvePoint,
};
use evipitch::dataio::{
    generate_synthetic_clip, load_entry, write_label_csv, DatasetManifest, LabeledClip,
    ManifestEntry, SyntheticSpec,
};
use evipitch::dsp::write_wav_mono16;
use evipitch::error::{Error, Result};
use evipitch::network::{train, Checkpoint, TrainParams, TrainStatus};
use evipitch::pitchgrid::PitchGrid;
use std::path::{Path, PathBuf};

/// Seed offsets separating the synthetic sub-corpora.
const POOL_SEED_OFFSET: u64 = 1_000_000;
const TEST_SEED_OFFSET: u64 = 2_000_000;

/// `synth`: write `count` WAV+CSV clip pairs and a manifest.
pub fn cmd_synth(spec_path: &Path, count: usize, seed: u64, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec: SyntheticSpec =
        serde_json::from_str(&text).map_err(|e| Error::config(format!("spec schema violation: {e}")))?;
    let grid = PitchGrid::default();
    spec.validate(&grid)?;
    if count == 0 {
        return Err(Error::config("count must be positive"));
    }
    std::fs::create_dir_all(out)?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let clip_seed = seed + i as u64;
        let (audio, labels) = generate_synthetic_clip(&spec, &grid, clip_seed)?;
        let wav = out.join(format!("clip_{i:04}.wav"));
        let csv = out.join(format!("clip_{i:04}.csv"));
        write_wav_mono16(&wav, &audio)?;
        write_label_csv(&csv, &labels)?;
        entries.push(ManifestEntry {
            audio: wav,
            labels: csv,
            domain_tag: "synthetic".into(),
        });
    }
    let manifest = DatasetManifest { entries, seed };
    manifest.save(&out.join("manifest.json"))?;
    println!("wrote {count} clips and manifest.json to {}", out.display());
    Ok(())
}

fn split_indices(n: usize, ratios: [f64; 3]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let n_train = (n as f64 * ratios[0]).floor() as usize;
    let n_val = (n as f64 * ratios[1]).floor() as usize;
    let all: Vec<usize> = (0..n).collect();
    (
        all[..n_train].to_vec(),
        all[n_train..n_train + n_val].to_vec(),
        all[n_train + n_val..].to_vec(),
    )
}

struct LoadedData {
    train: Vec<LabeledClip>,
    validation: Vec<LabeledClip>,
    /// Target-domain pool for active learning (synthetic mode) or the test
    /// split (manifest mode).
    pool: Vec<LabeledClip>,
    test: Vec<LabeledClip>,
}

fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let mode = cfg.task.target_mode();
    match &cfg.data {
        DataSection::Manifest {
            path,
            ratios,
            split_seed,
        } => {
            let manifest = DatasetManifest::load(path)?;
            let splits = evipitch::dataio::build_splits(&manifest, *ratios, *split_seed)?;
            let load = |idx: &[usize]| -> Result<Vec<LabeledClip>> {
                evipitch::dataio::load_corpus(&manifest, idx, &cfg.grid, mode, &cfg.frontend)
            };
            let train = load(&splits.train)?;
            let validation = load(&splits.validation)?;
            let test = load(&splits.test)?;
            Ok(LoadedData {
                train,
                validation,
                pool: test.clone(),
                test,
            })
        }
        DataSection::Synthetic {
            source,
            target,
            source_count,
            target_pool_count,
            target_test_count,
            seed,
        } => {
            let src = evipitch::dataio::synthetic_corpus(
                source,
                &cfg.grid,
                mode,
                &cfg.frontend,
                *source_count,
                *seed,
                "source",
            )?;
            let (tr, va, _te) = split_indices(src.len(), [0.7, 0.15, 0.15]);
            let train: Vec<LabeledClip> = tr.into_iter().map(|i| src[i].clone()).collect();
            let validation: Vec<LabeledClip> = va.into_iter().map(|i| src[i].clone()).collect();
            let pool = evipitch::dataio::synthetic_corpus(
                target,
                &cfg.grid,
                mode,
                &cfg.frontend,
                *target_pool_count,
                seed + POOL_SEED_OFFSET,
                "target-pool",
            )?;
            let test = evipitch::dataio::synthetic_corpus(
                target,
                &cfg.grid,
                mode,
                &cfg.frontend,
                *target_test_count,
                seed + TEST_SEED_OFFSET,
                "target-test",
            )?;
            Ok(LoadedData {
                train,
                validation,
                pool,
                test,
            })
        }
    }
}

fn write_train_log(path: &Path, log: &[evipitch::network::EpochLog], digest: &str) -> Result<()> {
    let mut out = format!("# config_digest={digest}\nepoch,train_loss,val_loss,val_oa,lambda_t\n");
    for l in log {
        let vl = l.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
        let vo = l.val_oa.map(|v| format!("{v:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.6},{},{},{:.6}\n",
            l.epoch, l.train_loss, vl, vo, l.lambda_t
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `train`: fit on the configured source corpus, write the best-validation
/// checkpoint and the per-epoch log.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    cfg.echo_into(&out_dir)?;
    let digest = cfg.digest();
    let data = load_data(cfg)?;
    let params = TrainParams {
        ..cfg.training.clone()
    };
    let result = train(
        cfg.model_config(),
        &data.train,
        &data.validation,
        &params,
        &cfg.grid,
        &digest,
    )?;
    write_train_log(&out_dir.join("train_log.csv"), &result.log, &digest)?;
    result.best.save(&out_dir.join("checkpoint.ckpt"))?;
    match result.status {
        TrainStatus::Completed => {
            let last = result.log.last();
            println!(
                "training complete: {} epochs, final train loss {:.4}, checkpoint at {}",
                result.log.len(),
                last.map(|l| l.train_loss).unwrap_or(f64::NAN),
                out_dir.join("checkpoint.ckpt").display()
            );
            Ok(())
        }
        TrainStatus::Diverged { epoch } => Err(Error::numeric(format!(
            "training diverged at epoch {epoch}; last good checkpoint and partial log kept in {}",
            out_dir.display()
        ))),
    }
}

/// `eval`: metrics per track plus the aggregate row.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint_path: &Path,
    manifest_path: &Path,
    out_override: Option<PathBuf>,
) -> Result<()> {
    let out_dir = out_override.unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&out_dir)?;
    let ckpt = Checkpoint::load(checkpoint_path)?;
    if ckpt.config != cfg.model_config() {
        return Err(Error::config(
            "checkpoint model configuration does not match the experiment config (task/grid/frontend)",
        ));
    }
    let (model, _) = ckpt.restore()?;
    let manifest = DatasetManifest::load(manifest_path)?;
    if manifest.entries.is_empty() {
        return Err(Error::config("empty test manifest"));
    }
    let mode = cfg.task.target_mode();
    let mut rows = Vec::new();
    let mut sums = (0.0, 0.0, 0.0);
    for entry in &manifest.entries {
        let clips = load_entry(entry, &cfg.grid, mode, &cfg.frontend)?;
        let mut reference = Vec::new();
        let mut estimate = Vec::new();
        for clip in &clips {
            let preds = evipitch::network::predict(&model, &clip.features, &cfg.grid)?;
            reference.extend(clip.targets.iter().map(|t| t.f0_hz(&cfg.grid)));
            estimate.extend(preds.iter().map(|p| p.f0_hz));
        }
        let m = evipitch::metrics::evaluate(
            &reference,
            &estimate,
            evipitch::metrics::DEFAULT_TOLERANCE_CENTS,
        )?;
        let track = entry
            .audio
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("track")
            .to_string();
        sums = (sums.0 + m.rpa, sums.1 + m.rca, sums.2 + m.oa);
        rows.push((track, m));
    }
    let n = rows.len() as f64;
    let digest = cfg.digest();
    let mut csv = format!("# config_digest={digest}\ntrack,rpa,rca,oa\n");
    for (track, m) in &rows {
        csv.push_str(&format!("{track},{:.6},{:.6},{:.6}\n", m.rpa, m.rca, m.oa));
    }
    csv.push_str(&format!(
        "mean,{:.6},{:.6},{:.6}\n",
        sums.0 / n,
        sums.1 / n,
        sums.2 / n
    ));
    let path = out_dir.join("metrics.csv");
    std::fs::write(&path, &csv)?;
    println!(
        "evaluated {} tracks; mean RPA/RCA/OA = {:.3}/{:.3}/{:.3}; wrote {}",
        rows.len(),
        sums.0 / n,
        sums.1 / n,
        sums.2 / n,
        path.display()
    );
    Ok(())
}

fn cell_path(dir: &Path, criterion: &str, budget: usize, seed: u64) -> PathBuf {
    dir.join(format!("{criterion}_{budget:05}_{seed}.json"))
}

/// `curve`: run the adaptation grid with a per-cell job cache.
pub fn cmd_curve(cfg: &ExperimentConfig, resume: bool) -> Result<()> {
    let active: &ActiveSection = cfg
        .active
        .as_ref()
        .ok_or_else(|| Error::config("config has no active-learning block"))?;
    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    cfg.echo_into(&out_dir)?;
    let digest = cfg.digest();

    let cells_dir = out_dir.join("cells");
    std::fs::create_dir_all(&cells_dir)?;
    let digest_file = cells_dir.join("config_digest.txt");
    if digest_file.exists() {
        let existing = std::fs::read_to_string(&digest_file)?;
        if existing.trim() != digest {
            return Err(Error::config(format!(
                "job cache in {} belongs to a different config digest; refusing to resume",
                cells_dir.display()
            )));
        }
        if !resume {
            // a fresh run overwrites the cache
            for entry in std::fs::read_dir(&cells_dir)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "json") {
                    std::fs::remove_file(p)?;
                }
            }
        }
    }
    std::fs::write(&digest_file, &digest)?;

    let base = Checkpoint::load(&active.base_checkpoint)?;
    if base.config != cfg.model_config() {
        return Err(Error::config(
            "base checkpoint model configuration does not match the experiment config",
        ));
    }
    let data = load_data(cfg)?;
    let curve_cfg = CurveConfig {
        criteria: active.criteria.clone(),
        budgets: active.budgets.clone(),
        seeds: active.seeds.clone(),
        finetune: TrainParams {
            epochs: active.finetune_epochs,
            lr: active.finetune_lr,
            batch_size: active.finetune_batch_size,
            ..cfg.training.clone()
        },
        voiced_only_scoring: active.voiced_only_scoring,
    };

    let mut rows: Vec<CurvePoint> = Vec::new();
    for (criterion, budget, seed) in adaptation_curve_cell_order(&curve_cfg) {
        let path = if budget == 0 {
            cells_dir.join(format!("base_{}.json", criterion.name()))
        } else {
            cell_path(&cells_dir, criterion.name(), budget, seed)
        };
        let point: CurvePoint = if resume && path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&path)?)?
        } else {
            let p = if budget == 0 {
                base_curve_point(&base, &data.test, criterion, &cfg.grid)?
            } else {
                run_curve_cell(
                    &base, &data.pool, &data.test, criterion, budget, seed, &curve_cfg, &cfg.grid,
                )?
            };
            std::fs::write(&path, serde_json::to_string_pretty(&p)?)?;
            p
        };
        println!(
            "cell {} budget={} seed={}: OA {:.3}",
            criterion.name(),
            budget,
            seed,
            point.oa
        );
        rows.push(point);
    }

    active::write_curve_csv(&out_dir.join("curve.csv"), &rows, &digest)?;
    write_plot_data(&out_dir.join("plot_data.txt"), &rows, &digest)?;
    println!("wrote {} rows to {}", rows.len(), out_dir.join("curve.csv").display());
    Ok(())
}

/// Plain-text plot data: one series per criterion, `budget median_oa` rows.
fn write_plot_data(path: &Path, rows: &[CurvePoint], digest: &str) -> Result<()> {
    let mut out = format!("# config_digest={digest}\n");
    let mut criteria: Vec<&'static str> = Vec::new();
    for r in rows {
        if !criteria.contains(&r.criterion.name()) {
            criteria.push(r.criterion.name());
        }
    }
    for name in criteria {
        out.push_str(&format!("# series {name}\n"));
        let mut budgets: Vec<usize> = rows
            .iter()
            .filter(|r| r.criterion.name() == name)
            .map(|r| r.budget)
            .collect();
        budgets.sort_unstable();
        budgets.dedup();
        for b in budgets {
            let mut oas: Vec<f64> = rows
                .iter()
                .filter(|r| r.criterion.name() == name && r.budget == b)
                .map(|r| r.oa)
                .collect();
            oas.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let median = oas[oas.len() / 2];
            out.push_str(&format!("{b} {median:.6}\n"));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}
