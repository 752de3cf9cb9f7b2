//! ROI time-series datasets: CSV ingestion, synthetic generation, folds and class weights.
//!
//! Canonical CSV layout, one row per subject and ROI:
//!
//! ```text
//! subject_id,group,roi,t0,t1,...,t139
//! sub-0001,0,1,0.1234,...
//! ```
//!
//! `group` is 0 (healthy) or 1 (EMCI); `roi` runs 1..=116.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::model::SERIES_LEN;

pub const NUM_ROIS: usize = 116;
pub const HEALTHY: usize = 0;
pub const EMCI: usize = 1;

/// One labeled series for a single (subject, ROI).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub series: Vec<f64>,
    pub label: usize,
    pub subject_id: String,
    pub roi: usize,
}

/// All ROI series of one subject; `matrix[roi - 1]` holds 140 points.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub label: usize,
    pub matrix: Vec<Vec<f64>>,
}

impl SubjectRecord {
    pub fn roi(&self, roi: usize) -> Result<&[f64]> {
        check_roi(roi)?;
        Ok(&self.matrix[roi - 1])
    }
}

pub fn check_roi(roi: usize) -> Result<()> {
    if !(1..=NUM_ROIS).contains(&roi) {
        return Err(Error::Data(format!("ROI {roi} outside 1..={NUM_ROIS}")));
    }
    Ok(())
}

fn header() -> Vec<String> {
    let mut h = vec!["subject_id".to_string(), "group".into(), "roi".into()];
    h.extend((0..SERIES_LEN).map(|t| format!("t{t}")));
    h
}

/// Reads and validates a dataset CSV. Values are returned exactly as stored.
pub fn load_dataset(path: &Path) -> Result<Vec<SubjectRecord>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let got: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if got != header() {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header subject_id,group,roi,t0..t{}", SERIES_LEN - 1),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_subject: HashMap<String, (usize, Vec<Option<Vec<f64>>>)> = HashMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        if row.len() < 3 {
            return Err(parse_err("row has fewer than 3 fields".into()));
        }
        let subject = row[0].trim().to_string();
        let label: usize = match row[1].trim() {
            "0" => HEALTHY,
            "1" => EMCI,
            other => return Err(parse_err(format!("group '{other}' is not 0 or 1"))),
        };
        let roi: usize =
            row[2].trim().parse().map_err(|_| parse_err(format!("bad roi '{}'", &row[2])))?;
        if !(1..=NUM_ROIS).contains(&roi) {
            return Err(parse_err(format!("roi {roi} outside 1..={NUM_ROIS}")));
        }
        let n_points = row.len() - 3;
        if n_points != SERIES_LEN {
            return Err(shape(format!(
                "line {line} (subject {subject}, roi {roi}) has {n_points} points, expected {SERIES_LEN}"
            )));
        }
        let series = row
            .iter()
            .skip(3)
            .map(|v| v.trim().parse::<f64>().map_err(|_| parse_err(format!("bad value '{v}'"))))
            .collect::<Result<Vec<f64>>>()?;

        let entry = by_subject.entry(subject.clone()).or_insert_with(|| {
            order.push(subject.clone());
            (label, vec![None; NUM_ROIS])
        });
        if entry.0 != label {
            return Err(parse_err(format!("subject {subject} appears with both groups")));
        }
        if entry.1[roi - 1].replace(series).is_some() {
            return Err(parse_err(format!("subject {subject} roi {roi} appears twice")));
        }
    }

    order
        .into_iter()
        .map(|id| {
            let (label, rows) = by_subject.remove(&id).expect("subject recorded");
            let missing: Vec<usize> =
                rows.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i + 1).collect();
            if !missing.is_empty() {
                return Err(Error::Data(format!("subject {id} is missing ROIs {missing:?}")));
            }
            Ok(SubjectRecord { subject_id: id, label, matrix: rows.into_iter().flatten().collect() })
        })
        .collect()
}

/// Writes records in the canonical CSV layout with round-trip float formatting.
pub fn save_dataset(records: &[SubjectRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header())?;
    for rec in records {
        for (i, series) in rec.matrix.iter().enumerate() {
            let mut row = vec![rec.subject_id.clone(), rec.label.to_string(), (i + 1).to_string()];
            row.extend(series.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shifts and scales to mean 0 and (population) standard deviation 1.
/// A constant series becomes all zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - m) / sd).collect()
}

/// One standardized sample per subject for the given ROI.
pub fn roi_slice(records: &[SubjectRecord], roi: usize) -> Result<Vec<Sample>> {
    check_roi(roi)?;
    records
        .iter()
        .map(|r| {
            Ok(Sample {
                series: standardize(r.roi(roi)?),
                label: r.label,
                subject_id: r.subject_id.clone(),
                roi,
            })
        })
        .collect()
}

/// Seed-ROI to target-ROI coupling planted in the EMCI group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub seed_roi: usize,
    pub target_rois: Vec<usize>,
    /// Multiple of the seed series added to each target (scaled by `separation`).
    pub strength: f64,
}

/// Parameters of the synthetic generator. Readable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_healthy: usize,
    pub n_emci: usize,
    /// 0 gives identically distributed groups.
    pub separation: f64,
    pub seed: u64,
    /// ROIs carrying the EMCI oscillation; empty means all.
    pub affected_rois: Vec<usize>,
    /// Oscillation amplitude at `separation = 1`, relative to unit-variance innovations.
    pub signal_amplitude: f64,
    pub ar_coefficient: f64,
    pub tr_seconds: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub coupling: Option<CouplingConfig>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_healthy: 200,
            n_emci: 200,
            separation: 1.0,
            seed: 0,
            affected_rois: Vec::new(),
            signal_amplitude: 1.5,
            ar_coefficient: 0.5,
            tr_seconds: 3.0,
            band_low_hz: 0.01,
            band_high_hz: 0.1,
            coupling: None,
        }
    }
}

impl SyntheticConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn validate(&self) -> Result<()> {
        if self.n_healthy == 0 || self.n_emci == 0 {
            return Err(Error::Config("both groups need at least one subject".into()));
        }
        if !(0.0..=1.0).contains(&self.separation) {
            return Err(Error::Config(format!("separation {} outside [0, 1]", self.separation)));
        }
        if self.ar_coefficient.abs() >= 1.0 {
            return Err(Error::Config("AR coefficient must lie in (-1, 1)".into()));
        }
        if !(self.tr_seconds > 0.0 && 0.0 < self.band_low_hz && self.band_low_hz < self.band_high_hz)
        {
            return Err(Error::Config("invalid TR or frequency band".into()));
        }
        if self.band_high_hz > 0.5 / self.tr_seconds {
            return Err(Error::Config("frequency band exceeds the Nyquist limit".into()));
        }
        for &roi in &self.affected_rois {
            check_roi(roi)?;
        }
        if let Some(c) = &self.coupling {
            check_roi(c.seed_roi)?;
            for &t in &c.target_rois {
                check_roi(t)?;
                if t == c.seed_roi {
                    return Err(Error::Config("coupling target equals its seed".into()));
                }
            }
        }
        Ok(())
    }
}

/// Per-subject stream seed, so subjects can be generated independently.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn ar1_series(rng: &mut ChaCha8Rng, phi: f64, len: usize) -> Vec<f64> {
    let innov = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Vec::with_capacity(len);
    let mut prev = innov.sample(rng) / (1.0 - phi * phi).sqrt();
    x.push(prev);
    for _ in 1..len {
        prev = phi * prev + innov.sample(rng);
        x.push(prev);
    }
    x
}

/// Synthetic cohort: AR(1) noise everywhere, plus for EMCI subjects a sinusoid
/// on the affected ROIs and an optional seed-to-target coupling. Each ROI gets
/// one frequency from the configured band for the whole cohort; the phase is
/// drawn per subject. Every series is standardized.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<SubjectRecord>> {
    cfg.validate()?;
    let affected: Vec<bool> = (1..=NUM_ROIS)
        .map(|r| cfg.affected_rois.is_empty() || cfg.affected_rois.contains(&r))
        .collect();
    let total = cfg.n_healthy + cfg.n_emci;
    let amplitude = cfg.signal_amplitude * cfg.separation;
    let mut freq_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::MAX));
    let freqs: Vec<f64> =
        (0..NUM_ROIS).map(|_| freq_rng.random_range(cfg.band_low_hz..cfg.band_high_hz)).collect();
    let records = (0..total)
        .map(|s| {
            let label = if s < cfg.n_healthy { HEALTHY } else { EMCI };
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, s as u64));
            let mut matrix: Vec<Vec<f64>> = (0..NUM_ROIS)
                .map(|_| ar1_series(&mut rng, cfg.ar_coefficient, SERIES_LEN))
                .collect();
            if label == EMCI {
                for ((series, _), &f) in
                    matrix.iter_mut().zip(&affected).zip(&freqs).filter(|((_, a), _)| **a)
                {
                    let phase = rng.random_range(0.0..2.0 * PI);
                    for (t, v) in series.iter_mut().enumerate() {
                        *v += amplitude * (2.0 * PI * f * cfg.tr_seconds * t as f64 + phase).sin();
                    }
                }
                if let Some(c) = &cfg.coupling {
                    let seed_series = matrix[c.seed_roi - 1].clone();
                    let k = c.strength * cfg.separation;
                    for &t in &c.target_rois {
                        for (v, s) in matrix[t - 1].iter_mut().zip(&seed_series) {
                            *v += k * s;
                        }
                    }
                }
            }
            SubjectRecord {
                subject_id: format!("sub-{:04}", s + 1),
                label,
                matrix: matrix.iter().map(|x| standardize(x)).collect(),
            }
        })
        .collect();
    Ok(records)
}

/// Train/test index split for one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldSplit {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split over sample labels.
///
/// Each class is shuffled and dealt round-robin across folds; the dealing
/// position carries over from one class to the next, so fold sizes differ by
/// at most one overall as well as within each class.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 || labels.len() < k {
        return Err(Error::Data(format!("cannot split {} samples into {k} folds", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; labels.len()];
    let mut next = 0;
    for class in [HEALTHY, EMCI] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    if labels.iter().any(|&l| l > EMCI) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    Ok((0..k)
        .map(|fold| {
            let (test, train) = (0..labels.len()).partition(|&i| assignment[i] == fold);
            FoldSplit { fold, train, test }
        })
        .collect())
}

/// `w_c = N / (2 N_c)`.
pub fn class_weights(labels: &[usize]) -> Result<[f64; 2]> {
    let n1 = labels.iter().filter(|&&l| l == EMCI).count();
    let n0 = labels.iter().filter(|&&l| l == HEALTHY).count();
    if n0 == 0 || n1 == 0 {
        return Err(Error::Data("class weights need both classes present".into()));
    }
    let n = (n0 + n1) as f64;
    Ok([n / (2.0 * n0 as f64), n / (2.0 * n1 as f64)])
}
