//! Uncertainty-driven active learning: sample scoring, top-K selection,
//! fine-tuning, and adaptation curves.

use crate::dataio::LabeledClip;
use crate::dsp::FeatureClip;
use crate::error::{Error, Result};
use crate::network::{
    predict, train_loop, Checkpoint, FramePrediction, Model, PredictUncertainty, Task, TrainOutput,
    TrainParams, TrainStatus,
};
use crate::pitchgrid::PitchGrid;
use serde::{Deserialize, Serialize};

/// Acquisition criterion for sample selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Epistemic,
    Aleatoric,
    /// Least TCP confidence first (selection key is `1 - confidence`).
    TcpConfidence,
    /// Highest predicted variance first (β-NLL baseline).
    PredictedVariance,
    Random,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Epistemic => "epistemic",
            Criterion::Aleatoric => "aleatoric",
            Criterion::TcpConfidence => "tcp_confidence",
            Criterion::PredictedVariance => "predicted_variance",
            Criterion::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "epistemic" => Ok(Criterion::Epistemic),
            "aleatoric" => Ok(Criterion::Aleatoric),
            "tcp_confidence" => Ok(Criterion::TcpConfidence),
            "predicted_variance" => Ok(Criterion::PredictedVariance),
            "random" => Ok(Criterion::Random),
            other => Err(Error::config(format!("unknown criterion {other:?}"))),
        }
    }

    fn compatible_with(&self, task: Task) -> bool {
        match self {
            Criterion::Epistemic | Criterion::Aleatoric => {
                matches!(task, Task::M1 | Task::M2 | Task::R1 | Task::R2)
            }
            Criterion::TcpConfidence => task == Task::Tcp,
            Criterion::PredictedVariance => task == Task::BetaNll,
            Criterion::Random => true,
        }
    }
}

/// Read access to an unlabeled scoring pool. Scoring may only touch
/// [`SamplePool::features`]; labels are consumed by fine-tuning alone.
pub trait SamplePool: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sample_id(&self, i: usize) -> &str;
    fn features(&self, i: usize) -> &FeatureClip;
    /// Full labeled clip; only selected samples should ever be fetched.
    fn labeled(&self, i: usize) -> &LabeledClip;
}

impl SamplePool for [LabeledClip] {
    fn len(&self) -> usize {
        <[LabeledClip]>::len(self)
    }
    fn sample_id(&self, i: usize) -> &str {
        &self[i].source_id
    }
    fn features(&self, i: usize) -> &FeatureClip {
        &self[i].features
    }
    fn labeled(&self, i: usize) -> &LabeledClip {
        &self[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub criterion: Criterion,
    pub score: f64,
}

/// Scoring options: frame aggregation and the seed for the random criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    /// Average over predicted-voiced frames only instead of all frames.
    pub voiced_only: bool,
    pub seed: u64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            voiced_only: false,
            seed: 0,
        }
    }
}

fn frame_score(p: &FramePrediction, criterion: Criterion) -> f64 {
    match (criterion, &p.uncertainty) {
        (Criterion::Epistemic, PredictUncertainty::Evidential(u)) => u.epistemic,
        (Criterion::Aleatoric, PredictUncertainty::Evidential(u)) => u.aleatoric,
        (Criterion::TcpConfidence, PredictUncertainty::Confidence(c)) => 1.0 - c,
        (Criterion::PredictedVariance, PredictUncertainty::Variance(v)) => *v,
        _ => f64::NAN,
    }
}

/// Stable per-sample pseudo-random score in [0, 1).
fn random_score(seed: u64, sample_id: &str) -> f64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

/// Mean per-frame uncertainty per sample, ordered (score desc, id asc).
///
/// Labels are never read: only features go through the model.
pub fn score_samples<P: SamplePool + ?Sized>(
    model: &Model,
    pool: &P,
    criterion: Criterion,
    grid: &PitchGrid,
    cfg: &ScoreConfig,
) -> Result<Vec<SampleScore>> {
    if pool.is_empty() {
        return Err(Error::config("empty scoring pool"));
    }
    if !criterion.compatible_with(model.config.task) {
        return Err(Error::config(format!(
            "criterion {} incompatible with task {}",
            criterion.name(),
            model.config.task.name()
        )));
    }
    let scores: Vec<Result<SampleScore>> = crate::par::map_indexed(pool.len(), |i| {
        let id = pool.sample_id(i).to_string();
        let score = if criterion == Criterion::Random {
            random_score(cfg.seed, &id)
        } else {
            let preds = predict(model, pool.features(i), grid)?;
            let vals: Vec<f64> = if cfg.voiced_only {
                let voiced: Vec<f64> = preds
                    .iter()
                    .filter(|p| p.voicing_prob >= 0.5)
                    .map(|p| frame_score(p, criterion))
                    .collect();
                if voiced.is_empty() {
                    preds.iter().map(|p| frame_score(p, criterion)).collect()
                } else {
                    voiced
                }
            } else {
                preds.iter().map(|p| frame_score(p, criterion)).collect()
            };
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if !mean.is_finite() {
                return Err(Error::numeric(format!("non-finite score for sample {id}")));
            }
            mean
        };
        Ok(SampleScore {
            sample_id: id,
            criterion,
            score,
        })
    });
    let mut out = Vec::with_capacity(pool.len());
    for s in scores {
        out.push(s?);
    }
    sort_scores(&mut out);
    Ok(out)
}

fn sort_scores(scores: &mut [SampleScore]) {
    scores.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.sample_id.cmp(&b.sample_id))
    });
}

/// The k highest-scoring sample ids (ties go to the lexicographically
/// smaller id), in selection order.
pub fn select_top_k(scores: &[SampleScore], k: usize) -> Result<Vec<String>> {
    if k > scores.len() {
        return Err(Error::config(format!(
            "cannot select {k} samples from a pool of {}",
            scores.len()
        )));
    }
    let mut sorted = scores.to_vec();
    sort_scores(&mut sorted);
    Ok(sorted.into_iter().take(k).map(|s| s.sample_id).collect())
}

/// Resume from `base`, train only on `selected` with a fresh optimizer.
pub fn finetune(
    base: &Checkpoint,
    selected: &[LabeledClip],
    params: &TrainParams,
    grid: &PitchGrid,
) -> Result<TrainOutput> {
    if selected.is_empty() {
        return Err(Error::config("empty fine-tuning selection"));
    }
    let (mut model, _) = base.restore()?;
    let (log, best, status) = train_loop(&mut model, selected, &[], params, grid, &base.config_digest)?;
    Ok(TrainOutput {
        model,
        best,
        log,
        status,
    })
}

/// One adaptation-curve measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub criterion: Criterion,
    pub budget: usize,
    pub seed: u64,
    pub rpa: f64,
    pub rca: f64,
    pub oa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub criteria: Vec<Criterion>,
    /// Sample budgets, ascending.
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub finetune: TrainParams,
    pub voiced_only_scoring: bool,
}

/// Run one (criterion, budget, seed) cell: score, select, fine-tune from the
/// base checkpoint, evaluate on the target test set.
pub fn run_curve_cell(
    base: &Checkpoint,
    pool: &[LabeledClip],
    test_set: &[LabeledClip],
    criterion: Criterion,
    budget: usize,
    seed: u64,
    cfg: &CurveConfig,
    grid: &PitchGrid,
) -> Result<CurvePoint> {
    let (model, _) = base.restore()?;
    let scores = score_samples(
        &model,
        pool,
        criterion,
        grid,
        &ScoreConfig {
            voiced_only: cfg.voiced_only_scoring,
            seed,
        },
    )?;
    let ids = select_top_k(&scores, budget)?;
    let by_id: std::collections::BTreeMap<&str, usize> = (0..pool.len())
        .map(|i| (SamplePool::sample_id(pool, i), i))
        .collect();
    let mut selected = Vec::with_capacity(ids.len());
    for id in &ids {
        let &i = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::config(format!("selected id {id} not in pool")))?;
        selected.push(pool.labeled(i).clone());
    }
    let ft_params = TrainParams {
        seed,
        ..cfg.finetune.clone()
    };
    let out = finetune(base, &selected, &ft_params, grid)?;
    if let TrainStatus::Diverged { epoch } = out.status {
        return Err(Error::numeric(format!(
            "fine-tune diverged at epoch {epoch} ({} budget {budget} seed {seed})",
            criterion.name()
        )));
    }
    let (_, mean) = crate::network::evaluate_model(&out.model, test_set, grid)?;
    Ok(CurvePoint {
        criterion,
        budget,
        seed,
        rpa: mean.rpa,
        rca: mean.rca,
        oa: mean.oa,
    })
}

/// Base-model metrics as the shared budget-0 row for a criterion.
pub fn base_curve_point(
    base: &Checkpoint,
    test_set: &[LabeledClip],
    criterion: Criterion,
    grid: &PitchGrid,
) -> Result<CurvePoint> {
    let (model, _) = base.restore()?;
    let (_, mean) = crate::network::evaluate_model(&model, test_set, grid)?;
    Ok(CurvePoint {
        criterion,
        budget: 0,
        seed: 0,
        rpa: mean.rpa,
        rca: mean.rca,
        oa: mean.oa,
    })
}

/// Deterministic cell order for a curve run: per criterion, the budget-0
/// base cell (seed 0) then every (budget, seed) pair.
pub fn adaptation_curve_cell_order(cfg: &CurveConfig) -> Vec<(Criterion, usize, u64)> {
    let mut cells = Vec::new();
    for &c in &cfg.criteria {
        cells.push((c, 0, 0));
        for &b in &cfg.budgets {
            for &s in &cfg.seeds {
                cells.push((c, b, s));
            }
        }
    }
    cells
}

/// Full curve table: one budget-0 row per criterion plus every
/// (criterion, budget, seed) cell, selections independent per budget.
pub fn adaptation_curve(
    base: &Checkpoint,
    pool: &[LabeledClip],
    test_set: &[LabeledClip],
    cfg: &CurveConfig,
    grid: &PitchGrid,
) -> Result<Vec<CurvePoint>> {
    if !cfg.budgets.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::config("budgets must be strictly ascending"));
    }
    let mut rows = Vec::new();
    for (criterion, budget, seed) in adaptation_curve_cell_order(cfg) {
        if budget == 0 {
            rows.push(base_curve_point(base, test_set, criterion, grid)?);
        } else {
            rows.push(run_curve_cell(base, pool, test_set, criterion, budget, seed, cfg, grid)?);
        }
    }
    Ok(rows)
}

/// Curve CSV: `criterion,budget,seed,rpa,rca,oa` with a digest comment line.
pub fn write_curve_csv(path: &std::path::Path, rows: &[CurvePoint], digest: &str) -> Result<()> {
    let mut out = format!("# config_digest={digest}\ncriterion,budget,seed,rpa,rca,oa\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6}\n",
            r.criterion.name(),
            r.budget,
            r.seed,
            r.rpa,
            r.rca,
            r.oa
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
