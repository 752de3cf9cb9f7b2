//! Training loop, balanced accuracy, the ROI × model sweep and normalized-difference ranking.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::path::Path;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, class_weights, mix_seed, roi_slice, stratified_kfold, FoldSplit, Sample, SubjectRecord};
use crate::error::{Error, Result};
use crate::model::{self, ModelKind, ModelParams, ModelSpec};
use crate::nn::{weighted_softmax_xent, Adam};
use crate::stats::min_max_normalize;

pub const DEFAULT_LR: f64 = 1e-4;
pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub kind: ModelKind,
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: DEFAULT_LR,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            kind: ModelKind::Baseline,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// `(TP/(TP+FN) + TN/(TN+FP)) / 2`.
pub fn balanced_accuracy(tp: usize, fn_: usize, tn: usize, fp: usize) -> Result<f64> {
    if tp + fn_ == 0 || tn + fp == 0 {
        return Err(Error::Metric("balanced accuracy needs both classes in the labels".into()));
    }
    let tpr = tp as f64 / (tp + fn_) as f64;
    let tnr = tn as f64 / (tn + fp) as f64;
    Ok(0.5 * (tpr + tnr))
}

/// Balanced accuracy of predicted vs true labels (1 is positive).
pub fn balanced_accuracy_of(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let (mut tp, mut fn_, mut tn, mut fp) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (t, p) {
            (1, 1) => tp += 1,
            (1, _) => fn_ += 1,
            (_, 1) => fp += 1,
            _ => tn += 1,
        }
    }
    balanced_accuracy(tp, fn_, tn, fp)
}

/// Argmax of the two logits; ties go to class 0.
pub fn predict(logits: &[f64; 2]) -> usize {
    usize::from(logits[1] > logits[0])
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub test_balanced_accuracy: f64,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
    pub test_predictions: Vec<usize>,
}

/// Trains one model on `fold.train` and scores it on `fold.test`.
///
/// Batch size 1, training order reshuffled every epoch, Adam updates. All
/// randomness (init, shuffling, dropout) flows from `config.seed`.
pub fn train_one(config: &TrainConfig, fold: &FoldSplit, samples: &[Sample]) -> Result<TrainOutcome> {
    config.validate()?;
    if fold.train.is_empty() || fold.test.is_empty() {
        return Err(Error::Data("fold has an empty train or test set".into()));
    }
    if let Some(&bad) = fold.train.iter().chain(&fold.test).find(|&&i| i >= samples.len()) {
        return Err(Error::Data(format!("fold index {bad} out of range")));
    }
    let spec = ModelSpec::new(config.kind);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(&spec, &mut rng);
    let mut adam = Adam::new(params.values.len(), config.lr);

    let train_labels: Vec<usize> = fold.train.iter().map(|&i| samples[i].label).collect();
    let weights = if config.class_weighting { class_weights(&train_labels)? } else { [1.0, 1.0] };

    let mut order = fold.train.clone();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let s = &samples[i];
            let trace = model::forward(&spec, &params, &s.series, true, &mut rng)?;
            let (loss, dlogits) = weighted_softmax_xent(&trace.logits, s.label, &weights)?;
            if !loss.is_finite() {
                return Err(Error::Numerics(format!("loss diverged in epoch {epoch}")));
            }
            total += loss;
            let grad = model::backward(&spec, &params, &trace, dlogits)?;
            adam.step(&mut params.values, &grad)?;
        }
        let mean = total / order.len() as f64;
        log::debug!("{} epoch {epoch}: loss {mean:.6}", config.kind);
        loss_history.push(mean);
    }

    let (test_predictions, truth) = evaluate(&spec, &params, samples, &fold.test)?;
    let test_balanced_accuracy = balanced_accuracy_of(&test_predictions, &truth)?;
    Ok(TrainOutcome { params, test_balanced_accuracy, loss_history, test_predictions })
}

/// Inference-mode predictions and labels for the given sample indices.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ModelParams,
    samples: &[Sample],
    idx: &[usize],
) -> Result<(Vec<usize>, Vec<usize>)> {
    // Dropout is inactive at inference, so this generator is never drawn from.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut pred = Vec::with_capacity(idx.len());
    for &i in idx {
        pred.push(predict(&model::forward(spec, params, &samples[i].series, false, &mut rng)?.logits));
    }
    Ok((pred, idx.iter().map(|&i| samples[i].label).collect()))
}

/// Seed for one sweep cell, independent of execution order.
pub fn cell_seed(global: u64, roi: usize, kind: ModelKind, fold: usize) -> u64 {
    let s = mix_seed(global, roi as u64);
    let s = mix_seed(s, kind.qcnn_count() as u64 + 100);
    mix_seed(s, fold as u64 + 1000)
}

/// Fold assignment shared by every ROI and model of a sweep.
pub fn sweep_folds(records: &[SubjectRecord], folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let labels: Vec<usize> = records.iter().map(|r| r.label).collect();
    stratified_kfold(&labels, folds, mix_seed(seed, u64::MAX))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub class_weighting: bool,
    pub folds: usize,
    pub workers: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lr: DEFAULT_LR,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            class_weighting: true,
            folds: DEFAULT_FOLDS,
            workers: 1,
        }
    }
}

/// One trained (roi, spec, fold) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub roi: usize,
    pub spec: ModelKind,
    pub fold: usize,
    pub balanced_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub roi: usize,
    pub spec: ModelKind,
    pub fold: usize,
    pub error: String,
}

/// Per-ROI aggregate: fold values and their mean for every completed spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub roi: usize,
    pub per_fold: BTreeMap<ModelKind, Vec<f64>>,
    pub mean: BTreeMap<ModelKind, f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub experiments: Vec<ExperimentResult>,
    /// Cells taken from an existing results file instead of retrained.
    pub resumed: usize,
}

/// Trains a single sweep cell exactly as [`run_sweep`] would.
pub fn run_cell(
    records: &[SubjectRecord],
    roi: usize,
    kind: ModelKind,
    fold: usize,
    cfg: &SweepConfig,
) -> Result<f64> {
    let folds = sweep_folds(records, cfg.folds, cfg.seed)?;
    let split = folds.get(fold).ok_or_else(|| Error::Data(format!("fold {fold} out of range")))?;
    let samples = roi_slice(records, roi)?;
    train_cell(&samples, split, roi, kind, cfg)
}

fn train_cell(samples: &[Sample], split: &FoldSplit, roi: usize, kind: ModelKind, cfg: &SweepConfig) -> Result<f64> {
    let tc = TrainConfig {
        lr: cfg.lr,
        epochs: cfg.epochs,
        seed: cell_seed(cfg.seed, roi, kind, split.fold),
        kind,
        class_weighting: cfg.class_weighting,
    };
    Ok(train_one(&tc, split, samples)?.test_balanced_accuracy)
}

const RESULTS_HEADER: [&str; 4] = ["roi", "spec", "fold", "balanced_accuracy"];

/// Reads a `roi,spec,fold,balanced_accuracy` file.
pub fn read_results(path: &Path) -> Result<Vec<CellResult>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_results(cells: &[CellResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every (roi, spec, fold) cell on a pool of `cfg.workers` threads.
///
/// With `results_path`, finished cells are appended as they complete, cells
/// already present are skipped, and the file is rewritten in sorted order at
/// the end. Failed cells are reported, not retried, and never abort the sweep.
pub fn run_sweep(
    records: &[SubjectRecord],
    rois: &[usize],
    specs: &[ModelKind],
    cfg: &SweepConfig,
    results_path: Option<&Path>,
) -> Result<SweepReport> {
    if cfg.workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    for &roi in rois {
        data::check_roi(roi)?;
    }
    let folds = sweep_folds(records, cfg.folds, cfg.seed)?;

    let mut done: Vec<CellResult> = match results_path {
        Some(p) if p.exists() => read_results(p)?,
        _ => Vec::new(),
    };
    let finished: BTreeSet<(usize, ModelKind, usize)> =
        done.iter().map(|c| (c.roi, c.spec, c.fold)).collect();
    let resumed = done.len();

    let todo: Vec<(usize, ModelKind, usize)> = rois
        .iter()
        .flat_map(|&r| specs.iter().flat_map(move |&s| (0..cfg.folds).map(move |f| (r, s, f))))
        .filter(|c| !finished.contains(c))
        .collect();

    let sink = match results_path {
        Some(p) => {
            let fresh = !p.exists() || fs::metadata(p)?.len() == 0;
            let file = OpenOptions::new().create(true).append(true).open(p)?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            if fresh {
                w.write_record(RESULTS_HEADER)?;
                w.flush()?;
            }
            Some(Mutex::new(w))
        }
        None => None,
    };

    let samples: BTreeMap<usize, Vec<Sample>> = rois
        .iter()
        .map(|&r| Ok((r, roi_slice(records, r)?)))
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<std::result::Result<CellResult, CellFailure>> = pool.install(|| {
        todo.par_iter()
            .map(|&(roi, spec, fold)| {
                let res = train_cell(&samples[&roi], &folds[fold], roi, spec, cfg);
                match res {
                    Ok(ba) => {
                        let cell = CellResult { roi, spec, fold, balanced_accuracy: ba };
                        log::info!("roi {roi} {spec} fold {fold}: BA {ba:.4}");
                        if let Some(sink) = &sink {
                            let mut w = sink.lock().expect("results writer poisoned");
                            if let Err(e) = w.serialize(&cell).and_then(|_| w.flush().map_err(csv::Error::from)) {
                                log::warn!("could not persist cell: {e}");
                            }
                        }
                        Ok(cell)
                    }
                    Err(e) => {
                        log::warn!("roi {roi} {spec} fold {fold} failed: {e}");
                        Err(CellFailure { roi, spec, fold, error: e.to_string() })
                    }
                }
            })
            .collect()
    });
    drop(sink);

    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => done.push(c),
            Err(f) => failures.push(f),
        }
    }
    done.sort_by_key(|c| (c.roi, c.spec, c.fold));
    if let Some(p) = results_path {
        write_results(&done, p)?;
    }
    let experiments = aggregate(&done, cfg.folds);
    Ok(SweepReport { cells: done, failures, experiments, resumed })
}

/// Groups cells per ROI; a spec gets a mean only when all its folds are present.
pub fn aggregate(cells: &[CellResult], folds: usize) -> Vec<ExperimentResult> {
    let mut by_roi: BTreeMap<usize, BTreeMap<ModelKind, Vec<(usize, f64)>>> = BTreeMap::new();
    for c in cells {
        by_roi.entry(c.roi).or_default().entry(c.spec).or_default().push((c.fold, c.balanced_accuracy));
    }
    by_roi
        .into_iter()
        .map(|(roi, specs)| {
            let mut per_fold = BTreeMap::new();
            let mut mean = BTreeMap::new();
            for (kind, mut v) in specs {
                v.sort_by_key(|(f, _)| *f);
                let vals: Vec<f64> = v.into_iter().map(|(_, b)| b).collect();
                if vals.len() == folds {
                    mean.insert(kind, vals.iter().sum::<f64>() / folds as f64);
                }
                per_fold.insert(kind, vals);
            }
            ExperimentResult { roi, per_fold, mean }
        })
        .collect()
}

/// One row of the summary table: mean BA per model and the normalized
/// differences of each hybrid against the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub roi: usize,
    pub baseline: Option<f64>,
    pub hybrid1: Option<f64>,
    pub hybrid2: Option<f64>,
    pub hybrid4: Option<f64>,
    pub norm_diff_1: Option<f64>,
    pub norm_diff_2: Option<f64>,
    pub norm_diff_3: Option<f64>,
}

impl SummaryRow {
    fn accuracies(&self) -> Option<[f64; 4]> {
        Some([self.baseline?, self.hybrid1?, self.hybrid2?, self.hybrid4?])
    }

    fn stored_norm(&self) -> Option<[f64; 3]> {
        Some([self.norm_diff_1?, self.norm_diff_2?, self.norm_diff_3?])
    }
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<SummaryRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    for row in &rows {
        data::check_roi(row.roi)?;
        let vals = row.accuracies().into_iter().flatten();
        if let Some(bad) = vals.into_iter().find(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!("ROI {}: balanced accuracy {bad} outside [0, 1]", row.roi)));
        }
    }
    Ok(rows)
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary rows from sweep aggregates, normalized columns filled when possible.
pub fn summarize(experiments: &[ExperimentResult]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = experiments
        .iter()
        .map(|e| SummaryRow {
            roi: e.roi,
            baseline: e.mean.get(&ModelKind::Baseline).copied(),
            hybrid1: e.mean.get(&ModelKind::Hybrid1).copied(),
            hybrid2: e.mean.get(&ModelKind::Hybrid2).copied(),
            hybrid4: e.mean.get(&ModelKind::Hybrid4).copied(),
            norm_diff_1: None,
            norm_diff_2: None,
            norm_diff_3: None,
        })
        .collect();
    if let Ok(ranked) = normalized_differences(&rows) {
        let by_roi: BTreeMap<usize, [f64; 3]> = ranked.iter().map(|r| (r.roi, r.normalized)).collect();
        for row in &mut rows {
            let n = by_roi[&row.roi];
            row.norm_diff_1 = Some(n[0]);
            row.norm_diff_2 = Some(n[1]);
            row.norm_diff_3 = Some(n[2]);
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRoi {
    pub rank: usize,
    pub roi: usize,
    /// Min-max normalized `hybrid - baseline` for hybrid1, hybrid2 and hybrid4.
    pub normalized: [f64; 3],
    pub average: f64,
}

fn rank_rows(mut scored: Vec<(usize, [f64; 3])>) -> Vec<RankedRoi> {
    scored.sort_by(|a, b| {
        let (ma, mb) = (a.1.iter().sum::<f64>() / 3.0, b.1.iter().sum::<f64>() / 3.0);
        mb.total_cmp(&ma).then(a.0.cmp(&b.0))
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (roi, normalized))| RankedRoi {
            rank: i + 1,
            roi,
            normalized,
            average: normalized.iter().sum::<f64>() / 3.0,
        })
        .collect()
}

/// Min-max normalizes each hybrid's difference from the baseline across ROIs,
/// averages the three columns and ranks ROIs by that average (descending,
/// ties by ROI ascending).
pub fn normalized_differences(rows: &[SummaryRow]) -> Result<Vec<RankedRoi>> {
    if rows.len() < 2 {
        return Err(Error::Degenerate("ranking needs at least 2 ROIs".into()));
    }
    let acc: Vec<[f64; 4]> = rows
        .iter()
        .map(|r| r.accuracies().ok_or_else(|| Error::Data(format!("ROI {} lacks a model mean", r.roi))))
        .collect::<Result<_>>()?;
    let mut cols = Vec::with_capacity(3);
    for h in 1..4 {
        let d: Vec<f64> = acc.iter().map(|a| a[h] - a[0]).collect();
        cols.push(min_max_normalize(&d)?);
    }
    Ok(rank_rows(rows.iter().enumerate().map(|(i, r)| (r.roi, [cols[0][i], cols[1][i], cols[2][i]])).collect()))
}

/// Ranking for ingested summaries: the stored normalized columns are used
/// when every row has them, otherwise they are recomputed from the means.
pub fn rank_summary(rows: &[SummaryRow]) -> Result<Vec<RankedRoi>> {
    let stored: Option<Vec<(usize, [f64; 3])>> =
        rows.iter().map(|r| r.stored_norm().map(|n| (r.roi, n))).collect();
    match stored {
        Some(s) if rows.len() >= 2 => Ok(rank_rows(s)),
        _ => normalized_differences(rows),
    }
}
