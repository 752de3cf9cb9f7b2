//! Seed-based functional connectivity: seed correlation maps, group tests and lobe summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_roi, SubjectRecord, EMCI, HEALTHY, NUM_ROIS};
use crate::error::{Error, Result};
use crate::stats::{pearson, welch_ttest};

/// Largest |r| fed to the Fisher transform.
pub const R_CLAMP: f64 = 1.0 - 1e-12;
pub const T_THRESHOLD: f64 = 2.0;
pub const P_THRESHOLD: f64 = 0.05;

const DEFAULT_LOBE_MAP: &str = include_str!("../data/aal116_lobes.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lobe {
    Frontal,
    Temporal,
    Occipital,
    Parietal,
    PosteriorFossa,
}

impl Lobe {
    pub const ALL: [Lobe; 5] =
        [Lobe::Frontal, Lobe::Temporal, Lobe::Occipital, Lobe::Parietal, Lobe::PosteriorFossa];

    pub fn name(self) -> &'static str {
        match self {
            Lobe::Frontal => "frontal",
            Lobe::Temporal => "temporal",
            Lobe::Occipital => "occipital",
            Lobe::Parietal => "parietal",
            Lobe::PosteriorFossa => "posterior_fossa",
        }
    }
}

impl fmt::Display for Lobe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lobe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lobe::ALL
            .into_iter()
            .find(|l| l.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown lobe '{s}'")))
    }
}

/// ROI to lobe assignment read from a `roi,lobe` CSV (`#` starts a comment line).
#[derive(Debug, Clone, PartialEq)]
pub struct LobeMap {
    lobes: BTreeMap<usize, Lobe>,
}

#[derive(Deserialize)]
struct LobeRow {
    roi: usize,
    lobe: String,
}

impl LobeMap {
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut lobes = BTreeMap::new();
        for row in r.deserialize::<LobeRow>() {
            let row = row?;
            check_roi(row.roi).map_err(|e| Error::Config(e.to_string()))?;
            if lobes.insert(row.roi, row.lobe.parse()?).is_some() {
                return Err(Error::Config(format!("ROI {} mapped twice", row.roi)));
            }
        }
        Ok(LobeMap { lobes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    /// The shipped AAL-116 assignment.
    pub fn aal116() -> Self {
        Self::from_csv_str(DEFAULT_LOBE_MAP).expect("bundled lobe map is valid")
    }

    pub fn get(&self, roi: usize) -> Result<Lobe> {
        self.lobes.get(&roi).copied().ok_or_else(|| Error::Config(format!("ROI {roi} has no lobe")))
    }

    pub fn len(&self) -> usize {
        self.lobes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lobes.is_empty()
    }
}

pub fn fisher_z(r: f64) -> f64 {
    r.clamp(-R_CLAMP, R_CLAMP).atanh()
}

/// Correlation of one subject's seed series with every ROI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityMap {
    pub subject_id: String,
    pub seed: usize,
    /// `r[roi - 1]`; the seed itself is 1.
    pub r: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn seed_map(record: &SubjectRecord, seed: usize) -> Result<ConnectivityMap> {
    let s = record.roi(seed)?;
    let mut r = record.matrix.iter().map(|x| pearson(s, x)).collect::<Result<Vec<f64>>>()?;
    r[seed - 1] = 1.0;
    let z = r.iter().map(|&v| fisher_z(v)).collect();
    Ok(ConnectivityMap { subject_id: record.subject_id.clone(), seed, r, z })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetTest {
    pub target: usize,
    /// Welch t of EMCI minus healthy Fisher-z.
    pub t: f64,
    pub df: f64,
    pub p_two_tail: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDiffResult {
    pub seed: usize,
    pub tests: Vec<TargetTest>,
    /// Targets passing `|t| > 2` and `p < 0.05`, ascending.
    pub significant: Vec<usize>,
}

/// Welch test per target ROI on Fisher-z connectivity, EMCI against healthy.
pub fn group_difference(records: &[SubjectRecord], seed: usize) -> Result<GroupDiffResult> {
    check_roi(seed)?;
    for (label, name) in [(HEALTHY, "healthy"), (EMCI, "EMCI")] {
        let n = records.iter().filter(|r| r.label == label).count();
        if n < 2 {
            return Err(Error::Data(format!("{name} group has {n} subjects, need at least 2")));
        }
    }
    let maps: Vec<(usize, ConnectivityMap)> = records
        .par_iter()
        .map(|r| Ok((r.label, seed_map(r, seed)?)))
        .collect::<Result<_>>()?;

    let mut tests = Vec::with_capacity(NUM_ROIS - 1);
    for target in (1..=NUM_ROIS).filter(|&t| t != seed) {
        let pick = |label| -> Vec<f64> {
            maps.iter().filter(|(l, _)| *l == label).map(|(_, m)| m.z[target - 1]).collect()
        };
        let res = welch_ttest(&pick(EMCI), &pick(HEALTHY))?;
        tests.push(TargetTest {
            target,
            t: res.t,
            df: res.df,
            p_two_tail: res.p_two_tail,
            significant: res.t.abs() > T_THRESHOLD && res.p_two_tail < P_THRESHOLD,
        });
    }
    let significant = tests.iter().filter(|t| t.significant).map(|t| t.target).collect();
    Ok(GroupDiffResult { seed, tests, significant })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LobeEdge {
    pub seed_lobe: Lobe,
    pub target_lobe: Lobe,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LobeSummary {
    /// Nonzero lobe pairs in lobe order.
    pub edges: Vec<LobeEdge>,
    pub total: usize,
}

/// Counts significant seed-target edges per (seed lobe, target lobe).
pub fn summarize_lobes(diffs: &[GroupDiffResult], map: &LobeMap) -> Result<LobeSummary> {
    let mut counts: BTreeMap<(Lobe, Lobe), usize> = BTreeMap::new();
    for d in diffs {
        let seed_lobe = map.get(d.seed)?;
        for &t in &d.significant {
            *counts.entry((seed_lobe, map.get(t)?)).or_default() += 1;
        }
    }
    let edges: Vec<LobeEdge> = counts
        .into_iter()
        .map(|((seed_lobe, target_lobe), count)| LobeEdge { seed_lobe, target_lobe, count })
        .collect();
    let total = edges.iter().map(|e| e.count).sum();
    Ok(LobeSummary { edges, total })
}

/// `seed,target,t,df,p_two_tail,significant` for every tested pair.
pub fn write_group_diffs(diffs: &[GroupDiffResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "target", "t", "df", "p_two_tail", "significant"])?;
    for d in diffs {
        for t in &d.tests {
            w.write_record([
                d.seed.to_string(),
                t.target.to_string(),
                t.t.to_string(),
                t.df.to_string(),
                t.p_two_tail.to_string(),
                t.significant.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Circos-ready `seed_lobe,target_lobe,count` list.
pub fn write_lobe_edges(summary: &LobeSummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in &summary.edges {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, CouplingConfig, SyntheticConfig};
    use proptest::prelude::*;

    fn record(seed: u64) -> SubjectRecord {
        let cfg = SyntheticConfig { n_healthy: 1, n_emci: 1, seed, ..Default::default() };
        generate_synthetic(&cfg).unwrap().remove(0)
    }

    #[test]
    fn bundled_map_covers_all_rois() {
        let m = LobeMap::aal116();
        assert_eq!(m.len(), NUM_ROIS);
        assert_eq!(m.get(1).unwrap(), Lobe::Frontal);
        assert_eq!(m.get(84).unwrap(), Lobe::Temporal);
        assert_eq!(m.get(92).unwrap(), Lobe::PosteriorFossa);
        assert_eq!(m.get(110).unwrap(), Lobe::PosteriorFossa);
        assert_eq!(m.get(38).unwrap(), Lobe::Temporal);
    }

    #[test]
    fn seed_map_special_cases() {
        let mut rec = record(1);
        rec.matrix[1] = rec.matrix[0].iter().map(|v| -v).collect();
        let m = seed_map(&rec, 1).unwrap();
        assert_eq!(m.r[0], 1.0);
        assert!(m.z[0].is_finite());
        assert!((m.r[1] + 1.0).abs() < 1e-12);
        assert!(m.z[1].is_finite() && m.z[1] < -10.0);
    }

    #[test]
    fn seed_map_matches_covariance_oracle_and_is_symmetric() {
        let rec = record(2);
        let m = seed_map(&rec, 5).unwrap();
        let s = &rec.matrix[4];
        for (i, x) in rec.matrix.iter().enumerate() {
            let n = s.len() as f64;
            let (ms, mx) = (s.iter().sum::<f64>() / n, x.iter().sum::<f64>() / n);
            let cov: f64 = s.iter().zip(x).map(|(a, b)| (a - ms) * (b - mx)).sum();
            let vs: f64 = s.iter().map(|a| (a - ms).powi(2)).sum();
            let vx: f64 = x.iter().map(|b| (b - mx).powi(2)).sum();
            let want = if i == 4 { 1.0 } else { cov / (vs * vx).sqrt() };
            assert!((m.r[i] - want).abs() < 1e-12);
            assert_eq!(m.r[i], seed_map(&rec, i + 1).unwrap().r[4]);
        }
    }

    proptest! {
        #[test]
        fn fisher_z_is_monotone(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            prop_assume!(a < b);
            prop_assert!(fisher_z(a) < fisher_z(b));
        }
    }

    #[test]
    fn flat_series_and_small_groups_error() {
        let mut rec = record(3);
        rec.matrix[7] = vec![0.0; rec.matrix[7].len()];
        assert!(matches!(seed_map(&rec, 1), Err(Error::Degenerate(_))));
        let cfg = SyntheticConfig { n_healthy: 1, n_emci: 5, ..Default::default() };
        let recs = generate_synthetic(&cfg).unwrap();
        assert!(matches!(group_difference(&recs, 1), Err(Error::Data(_))));
    }

    #[test]
    fn planted_coupling_is_recovered() {
        let targets: Vec<usize> = (40..50).collect();
        let cfg = SyntheticConfig {
            n_healthy: 60,
            n_emci: 60,
            separation: 1.0,
            seed: 4,
            affected_rois: vec![1],
            coupling: Some(CouplingConfig { seed_roi: 1, target_rois: targets.clone(), strength: 0.5 }),
            ..Default::default()
        };
        let recs = generate_synthetic(&cfg).unwrap();
        let d = group_difference(&recs, 1).unwrap();
        let hits = targets.iter().filter(|t| d.significant.contains(t)).count();
        assert!(hits >= 8, "recall {hits}/10");
        assert!(!d.significant.contains(&1));
        assert_eq!(d.tests.len(), NUM_ROIS - 1);
    }

    #[test]
    fn lobe_summary_conserves_edges() {
        let map = LobeMap::aal116();
        let empty = GroupDiffResult { seed: 1, tests: vec![], significant: vec![] };
        assert_eq!(summarize_lobes(&[empty], &map).unwrap().total, 0);

        let one = GroupDiffResult { seed: 1, tests: vec![], significant: vec![84] };
        let s = summarize_lobes(&[one], &map).unwrap();
        assert_eq!(s.edges, vec![LobeEdge { seed_lobe: Lobe::Frontal, target_lobe: Lobe::Temporal, count: 1 }]);

        let diffs = vec![
            GroupDiffResult { seed: 18, tests: vec![], significant: vec![2, 3, 50, 100] },
            GroupDiffResult { seed: 92, tests: vec![], significant: vec![1, 91, 110] },
        ];
        assert_eq!(summarize_lobes(&diffs, &map).unwrap().total, 7);

        let partial = LobeMap::from_csv_str("roi,lobe\n1,frontal\n").unwrap();
        assert!(matches!(summarize_lobes(&diffs, &partial), Err(Error::Config(_))));
        assert!(LobeMap::from_csv_str("roi,lobe\n1,limbic\n").is_err());
    }
}
