//! Command-line surface: argument types, command implementations and run manifests.
//!
//! Every command writes its artifacts under `--out-dir` plus a
//! `manifest-<command>.json` describing the run. Values given on the command
//! line win over the `--config` TOML file, which wins over built-in defaults.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{self, generate_synthetic, load_dataset, roi_slice, save_dataset, SyntheticConfig, NUM_ROIS};
use crate::error::{Error, Result};
use crate::model::{count_parameters, save_checkpoint, ModelKind, ModelSpec};
use crate::sbfc::{group_difference, summarize_lobes, write_group_diffs, write_lobe_edges, LobeMap};
use crate::stats::{paired_ttest, TTestResult};
use crate::train::{
    self, cell_seed, read_summary, run_sweep, summarize, sweep_folds, train_one, write_summary, RankedRoi,
    SweepConfig, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "hybrid-qcnn", version, about = "Hybrid QCNN + CNN ROI time-series classifier")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Global seed for data generation, initialization, folds and shuffling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and SBFC.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Directory for all artifacts.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ROI time-series dataset.
    GenData(GenDataArgs),
    /// Train one (ROI, model, fold) cell.
    Train(TrainArgs),
    /// Train every ROI × model × fold cell; resumable.
    Sweep(SweepArgs),
    /// Rank ROIs by averaged normalized hybrid-minus-baseline differences.
    Rank(RankArgs),
    /// Paired t-tests between every pair of model columns of a summary.
    Ttest(TtestArgs),
    /// Seed-based functional connectivity group comparison.
    Sbfc(SbfcArgs),
    /// Print the trainable parameter count of a model.
    ParamCount(ParamCountArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output CSV path (default: <out-dir>/dataset.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_healthy: Option<usize>,
    #[arg(long)]
    pub n_emci: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    /// Comma-separated ROIs carrying the class signal (default: all).
    #[arg(long, value_delimiter = ',')]
    pub affected_rois: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub spec: ModelKind,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub roi: usize,
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Disable inverse-frequency class weighting of the loss.
    #[arg(long)]
    pub no_class_weights: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated ROIs (default: all 116).
    #[arg(long, value_delimiter = ',')]
    pub rois: Option<Vec<usize>>,
    /// Comma-separated models (default: all four).
    #[arg(long, value_delimiter = ',')]
    pub specs: Option<Vec<ModelKind>>,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Summary CSV: roi,baseline,hybrid1,hybrid2,hybrid4[,norm_diff_1,norm_diff_2,norm_diff_3].
    #[arg(long)]
    pub summary: PathBuf,
    #[arg(long, default_value_t = 9)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct TtestArgs {
    #[arg(long)]
    pub summary: PathBuf,
}

#[derive(Debug, Args)]
pub struct SbfcArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated seed ROIs.
    #[arg(long, value_delimiter = ',', default_value = "1,84,18,17,39,38,23,92,110")]
    pub seeds: Vec<usize>,
    /// `roi,lobe` CSV (default: bundled AAL-116 map).
    #[arg(long)]
    pub lobe_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ParamCountArgs {
    /// Model to count (default: all).
    pub spec: Option<ModelKind>,
}

/// Optional TOML configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    pub train: Option<TrainSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub folds: Option<usize>,
    pub class_weighting: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Settings after merging flags, config file and defaults.
#[derive(Debug, Clone, Serialize)]
pub struct Context {
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Whether the seed came from a flag or the config file rather than the default.
    seed_given: bool,
    #[serde(skip)]
    file: FileConfig,
}

impl Context {
    pub fn resolve(global: &GlobalArgs) -> Result<Self> {
        let file = match &global.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let workers = global.workers.or(file.workers).unwrap_or(1);
        if workers == 0 {
            return Err(Error::Config("--workers must be at least 1".into()));
        }
        Ok(Context {
            seed: global.seed.or(file.seed).unwrap_or(0),
            seed_given: global.seed.is_some() || file.seed.is_some(),
            workers,
            out_dir: global.out_dir.clone().or(file.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
            file,
        })
    }

    fn sweep_config(&self, h: &HyperArgs) -> SweepConfig {
        let t = self.file.train.clone().unwrap_or_default();
        let d = SweepConfig::default();
        SweepConfig {
            lr: h.lr.or(t.lr).unwrap_or(d.lr),
            epochs: h.epochs.or(t.epochs).unwrap_or(d.epochs),
            seed: self.seed,
            class_weighting: !h.no_class_weights && t.class_weighting.unwrap_or(d.class_weighting),
            folds: h.folds.or(t.folds).unwrap_or(d.folds),
            workers: self.workers,
        }
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(self.out_dir.join(name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one command invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub workers: usize,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Writes via a temporary sibling and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// What a command produced: files to hash and text for standard output.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    pub stdout: String,
    pub config: serde_json::Value,
}

/// Runs a parsed command line and returns its standard-output text.
pub fn run(cli: &Cli) -> Result<String> {
    let ctx = Context::resolve(&cli.global)?;
    let start = Instant::now();
    let (name, outcome) = match &cli.command {
        Command::GenData(a) => ("gen-data", cmd_gen_data(&ctx, a)?),
        Command::Train(a) => ("train", cmd_train(&ctx, a)?),
        Command::Sweep(a) => ("sweep", cmd_sweep(&ctx, a)?),
        Command::Rank(a) => ("rank", cmd_rank(&ctx, a)?),
        Command::Ttest(a) => ("ttest", cmd_ttest(&ctx, a)?),
        Command::Sbfc(a) => ("sbfc", cmd_sbfc(&ctx, a)?),
        Command::ParamCount(a) => ("param-count", cmd_param_count(&ctx, a)?),
    };
    let artifacts = outcome
        .artifacts
        .iter()
        .map(|p| Ok(Artifact { path: p.clone(), sha256: sha256_file(p)? }))
        .collect::<Result<Vec<_>>>()?;
    let manifest = RunManifest {
        command: name.to_string(),
        config: outcome.config,
        seed: ctx.seed,
        workers: ctx.workers,
        artifacts,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let path = ctx.out(&format!("manifest-{name}.json"))?;
    write_atomic(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(outcome.stdout)
}

pub fn cmd_gen_data(ctx: &Context, a: &GenDataArgs) -> Result<Outcome> {
    let mut cfg = ctx.file.synthetic.clone().unwrap_or_default();
    if ctx.seed_given || ctx.file.synthetic.is_none() {
        cfg.seed = ctx.seed;
    }
    cfg.n_healthy = a.n_healthy.unwrap_or(cfg.n_healthy);
    cfg.n_emci = a.n_emci.unwrap_or(cfg.n_emci);
    cfg.separation = a.separation.unwrap_or(cfg.separation);
    if let Some(r) = &a.affected_rois {
        cfg.affected_rois = r.clone();
    }
    let records = generate_synthetic(&cfg)?;
    let out = match &a.out {
        Some(p) => p.clone(),
        None => ctx.out("dataset.csv")?,
    };
    save_dataset(&records, &out)?;
    log::info!("wrote {} subjects to {}", records.len(), out.display());
    Ok(Outcome {
        stdout: format!("{}\n", out.display()),
        artifacts: vec![out],
        config: serde_json::to_value(&cfg)?,
    })
}

pub fn cmd_train(ctx: &Context, a: &TrainArgs) -> Result<Outcome> {
    let sweep = ctx.sweep_config(&a.hyper);
    let records = load_dataset(&a.dataset)?;
    let samples = roi_slice(&records, a.roi)?;
    let folds = sweep_folds(&records, sweep.folds, sweep.seed)?;
    let split = folds
        .get(a.fold)
        .ok_or_else(|| Error::Config(format!("fold {} out of range 0..{}", a.fold, sweep.folds)))?;
    let tc = TrainConfig {
        lr: sweep.lr,
        epochs: sweep.epochs,
        seed: cell_seed(sweep.seed, a.roi, a.spec, a.fold),
        kind: a.spec,
        class_weighting: sweep.class_weighting,
    };
    let out = train_one(&tc, split, &samples)?;

    let stem = format!("train-{}-roi{}-fold{}", a.spec, a.roi, a.fold);
    let metrics = ctx.out(&format!("{stem}-metrics.csv"))?;
    let mut w = csv::Writer::from_path(&metrics)?;
    w.write_record(["epoch", "mean_loss"])?;
    for (e, l) in out.loss_history.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush()?;
    let ckpt = ctx.out(&format!("{stem}.ckpt"))?;
    save_checkpoint(&out.params, &ckpt)?;
    let mut sidecar = ckpt.clone().into_os_string();
    sidecar.push(".json");

    Ok(Outcome {
        stdout: format!(
            "roi {} {} fold {}: balanced accuracy {}\n",
            a.roi, a.spec, a.fold, out.test_balanced_accuracy
        ),
        artifacts: vec![metrics, ckpt, PathBuf::from(sidecar)],
        config: serde_json::json!({ "train": tc, "folds": sweep.folds, "dataset": a.dataset }),
    })
}

pub fn cmd_sweep(ctx: &Context, a: &SweepArgs) -> Result<Outcome> {
    let cfg = ctx.sweep_config(&a.hyper);
    let records = load_dataset(&a.dataset)?;
    let rois = a.rois.clone().unwrap_or_else(|| (1..=NUM_ROIS).collect());
    let specs = a.specs.clone().unwrap_or_else(|| ModelKind::ALL.to_vec());
    let results = ctx.out("results.csv")?;
    let report = run_sweep(&records, &rois, &specs, &cfg, Some(&results))?;

    let summary = ctx.out("summary.csv")?;
    write_summary(&summarize(&report.experiments), &summary)?;
    let failures = ctx.out("failures.csv")?;
    let mut w = csv::Writer::from_path(&failures)?;
    w.write_record(["roi", "spec", "fold", "error"])?;
    for f in &report.failures {
        w.write_record([f.roi.to_string(), f.spec.to_string(), f.fold.to_string(), f.error.clone()])?;
    }
    w.flush()?;

    Ok(Outcome {
        stdout: format!(
            "{} cells ({} resumed), {} failed\n",
            report.cells.len(),
            report.resumed,
            report.failures.len()
        ),
        artifacts: vec![results, summary, failures],
        config: serde_json::json!({ "sweep": cfg, "rois": rois, "specs": specs, "dataset": a.dataset }),
    })
}

/// Ranking of an ingested or computed summary CSV.
pub fn rank_file(path: &Path) -> Result<Vec<RankedRoi>> {
    train::rank_summary(&read_summary(path)?)
}

pub fn cmd_rank(ctx: &Context, a: &RankArgs) -> Result<Outcome> {
    let ranked = rank_file(&a.summary)?;
    let path = ctx.out("ranking.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["rank", "roi", "norm_diff_1", "norm_diff_2", "norm_diff_3", "average"])?;
    for r in &ranked {
        w.write_record([
            r.rank.to_string(),
            r.roi.to_string(),
            r.normalized[0].to_string(),
            r.normalized[1].to_string(),
            r.normalized[2].to_string(),
            r.average.to_string(),
        ])?;
    }
    w.flush()?;
    let stdout = ranked
        .iter()
        .take(a.top)
        .map(|r| format!("{:>2}  ROI {}, {:.3}\n", r.rank, r.roi, r.average))
        .collect();
    Ok(Outcome { stdout, artifacts: vec![path], config: serde_json::json!({ "summary": a.summary, "top": a.top }) })
}

/// The six column pairings: each hybrid against the baseline, then hybrid against hybrid.
pub const TTEST_PAIRS: [(ModelKind, ModelKind); 6] = [
    (ModelKind::Baseline, ModelKind::Hybrid1),
    (ModelKind::Baseline, ModelKind::Hybrid2),
    (ModelKind::Baseline, ModelKind::Hybrid4),
    (ModelKind::Hybrid1, ModelKind::Hybrid2),
    (ModelKind::Hybrid1, ModelKind::Hybrid4),
    (ModelKind::Hybrid2, ModelKind::Hybrid4),
];

/// Paired t-tests over the model columns of a summary CSV, in [`TTEST_PAIRS`] order.
pub fn ttest_file(path: &Path) -> Result<Vec<(ModelKind, ModelKind, TTestResult)>> {
    let rows = read_summary(path)?;
    let column = |k: ModelKind| -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| {
                match k {
                    ModelKind::Baseline => r.baseline,
                    ModelKind::Hybrid1 => r.hybrid1,
                    ModelKind::Hybrid2 => r.hybrid2,
                    ModelKind::Hybrid4 => r.hybrid4,
                }
                .ok_or_else(|| Error::Data(format!("ROI {} has no {k} value", r.roi)))
            })
            .collect()
    };
    TTEST_PAIRS.iter().map(|&(a, b)| Ok((a, b, paired_ttest(&column(a)?, &column(b)?)?))).collect()
}

pub fn cmd_ttest(ctx: &Context, a: &TtestArgs) -> Result<Outcome> {
    let tests = ttest_file(&a.summary)?;
    let path = ctx.out("ttest.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["a", "b", "t", "df", "p_one_tail", "p_two_tail", "mean_a", "mean_b", "var_a", "var_b", "pearson"])?;
    let mut stdout = String::new();
    for (ka, kb, r) in &tests {
        let pr = r.pearson.map_or(String::new(), |v| v.to_string());
        w.write_record([
            ka.to_string(),
            kb.to_string(),
            r.t.to_string(),
            r.df.to_string(),
            r.p_one_tail.to_string(),
            r.p_two_tail.to_string(),
            r.mean_a.to_string(),
            r.mean_b.to_string(),
            r.var_a.to_string(),
            r.var_b.to_string(),
            pr,
        ])?;
        stdout += &format!(
            "{ka}/{kb}: t {:.3}, df {}, p(two-tail) {:.3e}, r {:.4}\n",
            r.t,
            r.df,
            r.p_two_tail,
            r.pearson.unwrap_or(f64::NAN)
        );
    }
    w.flush()?;
    Ok(Outcome { stdout, artifacts: vec![path], config: serde_json::json!({ "summary": a.summary }) })
}

pub fn cmd_sbfc(ctx: &Context, a: &SbfcArgs) -> Result<Outcome> {
    let records = load_dataset(&a.dataset)?;
    let map = match &a.lobe_map {
        Some(p) => LobeMap::load(p)?,
        None => LobeMap::aal116(),
    };
    for &s in &a.seeds {
        data::check_roi(s)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let diffs = pool.install(|| a.seeds.iter().map(|&s| group_difference(&records, s)).collect::<Result<Vec<_>>>())?;
    let summary = summarize_lobes(&diffs, &map)?;

    let tests = ctx.out("sbfc-tests.csv")?;
    write_group_diffs(&diffs, &tests)?;
    let edges = ctx.out("sbfc-lobe-edges.csv")?;
    write_lobe_edges(&summary, &edges)?;
    let mut stdout: String = diffs
        .iter()
        .map(|d| format!("seed {}: {} significant targets\n", d.seed, d.significant.len()))
        .collect();
    stdout += &format!("{} edges across {} lobe pairs\n", summary.total, summary.edges.len());
    Ok(Outcome {
        stdout,
        artifacts: vec![tests, edges],
        config: serde_json::json!({ "dataset": a.dataset, "seeds": a.seeds, "lobe_map": a.lobe_map }),
    })
}

pub fn cmd_param_count(_ctx: &Context, a: &ParamCountArgs) -> Result<Outcome> {
    let stdout = match a.spec {
        Some(k) => format!("{}\n", count_parameters(&ModelSpec::new(k))),
        None => ModelKind::ALL
            .iter()
            .map(|&k| format!("{k}\t{}\n", count_parameters(&ModelSpec::new(k))))
            .collect(),
    };
    Ok(Outcome { stdout, artifacts: Vec::new(), config: serde_json::json!({ "spec": a.spec }) })
}

/// Process exit code for an error: 2 for configuration and usage problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

/// One-line JSON error report for standard error.
pub fn error_json(e: &Error) -> String {
    let kind = match e {
        Error::Shape(_) => "shape",
        Error::Encoding(_) => "encoding",
        Error::Numerics(_) => "numerics",
        Error::Parse { .. } => "parse",
        Error::Data(_) => "data",
        Error::Metric(_) => "metric",
        Error::Degenerate(_) => "degenerate",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    };
    serde_json::json!({ "error": kind, "message": e.to_string() }).to_string()
}
