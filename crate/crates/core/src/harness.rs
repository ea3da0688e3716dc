//! Repeated-trial estimation of power and type-I error, and CSV grid sweeps.
//!
//! Each trial draws fresh HDGM samples, trains the method's classifier on the
//! labeled half and runs a permutation test on the other half. Trial `i` of a
//! cell uses seed `derive_seed(master, i)`, so a cell's value never depends on
//! where it sits in a grid or how trials are scheduled.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdgm::{build_dataset, sample_hdgm, shuffle_split, HdgmSpec, Level, SplitDataset};
use crate::pipeline::{train_c2st, train_ssl_c2st, FeatureLayer, TrainConfig, TrainedTest};
use crate::rng::{derive_seed, substream, Stream};
use crate::stats::{
    embedding_statistic, permutation_test, permutation_test_by, two_sample_accuracy, EmbeddingNorm, PermutationConfig,
    TestOutcome, TieRule,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    C2st,
    SslC2st,
    C2stM,
    SslC2stM,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::C2st => "c2st",
            Method::SslC2st => "ssl-c2st",
            Method::C2stM => "c2st-m",
            Method::SslC2stM => "ssl-c2st-m",
        }
    }

    pub fn pretrains(self) -> bool {
        matches!(self, Method::SslC2st | Method::SslC2stM)
    }

    pub fn uses_embedding(self) -> bool {
        matches!(self, Method::C2stM | Method::SslC2stM)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Hypothesis {
    /// `P = Q` (HDGM-S).
    #[value(name = "H0", alias = "h0")]
    H0,
    /// `Q` perturbed (HDGM-D at the chosen level).
    #[value(name = "H1", alias = "h1")]
    H1,
}

impl Hypothesis {
    pub fn name(self) -> &'static str {
        match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        }
    }
}

/// One cell of an experiment: data family, method, training and test settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub level: Level,
    pub d: usize,
    pub hypothesis: Hypothesis,
    /// Total points `N` over both samples; `N / 4` are drawn per cluster per sample.
    pub n_total: usize,
    pub method: Method,
    /// Features and norm for the `-M` methods.
    pub feature: FeatureLayer,
    pub norm: EmbeddingNorm,
    pub train: TrainConfig,
    pub n_perm: usize,
    pub alpha: f64,
    pub tie_rule: TieRule,
    pub trials: u64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            level: Level::Hard,
            d: 10,
            hypothesis: Hypothesis::H1,
            n_total: 4000,
            method: Method::SslC2st,
            feature: FeatureLayer::P0Scalar,
            norm: EmbeddingNorm::Abs1d,
            train: TrainConfig::default(),
            n_perm: 100,
            alpha: 0.05,
            tie_rule: TieRule::PlusOne,
            trials: 100,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if self.n_total < 8 || !self.n_total.is_multiple_of(4) {
            return Err(Error::InvalidInput(format!(
                "N = {} must be a positive multiple of 4 (2 samples x 2 clusters), at least 8",
                self.n_total
            )));
        }
        if self.method.uses_embedding() && self.norm == EmbeddingNorm::Abs1d && self.feature != FeatureLayer::P0Scalar {
            return Err(Error::InvalidInput(format!(
                "abs_1d needs one-dimensional features, not {:?}",
                self.feature
            )));
        }
        self.p_spec().validate()?;
        self.train.validate()
    }

    pub fn p_spec(&self) -> HdgmSpec {
        HdgmSpec::p(self.d, self.level)
    }

    pub fn q_spec(&self) -> HdgmSpec {
        match self.hypothesis {
            Hypothesis::H0 => HdgmSpec::q_null(self.d, self.level),
            Hypothesis::H1 => HdgmSpec::q_alt(self.d, self.level),
        }
    }

    pub fn n_per_cluster(&self) -> usize {
        self.n_total / 4
    }

    pub fn trial_seed(&self, trial: u64) -> u64 {
        derive_seed(self.seed, trial)
    }

    fn permutation(&self, seed: u64) -> PermutationConfig {
        PermutationConfig {
            n_perm: self.n_perm,
            alpha: self.alpha,
            tie_rule: self.tie_rule,
            seed: substream(seed, Stream::Permutation),
        }
    }
}

/// Fresh labeled split for one trial.
pub fn trial_data(cfg: &ExperimentConfig, trial: u64) -> Result<SplitDataset> {
    let seed = cfg.trial_seed(trial);
    let n = cfg.n_per_cluster();
    let sp = sample_hdgm(&cfg.p_spec(), n, substream(seed, Stream::SampleP))?;
    let sq = sample_hdgm(&cfg.q_spec(), n, substream(seed, Stream::SampleQ))?;
    shuffle_split(&build_dataset(&sp, &sq)?, substream(seed, Stream::Split))
}

/// Trains the method's classifier for one trial.
pub fn train_for_trial(cfg: &ExperimentConfig, split: &SplitDataset, trial: u64) -> Result<TrainedTest> {
    let train = TrainConfig {
        seed: cfg.trial_seed(trial),
        ..cfg.train.clone()
    };
    if cfg.method.pretrains() {
        train_ssl_c2st(split, &train)
    } else {
        train_c2st(split, &train)
    }
}

/// Permutation test of a trained classifier on the test half.
pub fn test_on_split(
    cfg: &ExperimentConfig,
    model: &TrainedTest,
    split: &SplitDataset,
    trial: u64,
) -> Result<TestOutcome> {
    let perm = cfg.permutation(cfg.trial_seed(trial));
    let (x, y) = split.test.by_label();
    if cfg.method.uses_embedding() {
        let fx = model.extract_features(&x, cfg.feature)?;
        let fy = model.extract_features(&y, cfg.feature)?;
        let norm = cfg.norm;
        permutation_test(|a, b| embedding_statistic(a, b, norm), &fx, &fy, &perm)
    } else {
        // the classifier is fixed, so relabeling points is relabeling predictions
        let px = model.predict_labels(&x)?;
        let py = model.predict_labels(&y)?;
        permutation_test_by(|a: &[u8], b: &[u8]| Ok(two_sample_accuracy(a, b)), &px, &py, &perm)
    }
}

/// One full draw-train-test trial.
pub fn run_trial(cfg: &ExperimentConfig, trial: u64) -> Result<TestOutcome> {
    let attempt = || -> Result<TestOutcome> {
        cfg.validate()?;
        let split = trial_data(cfg, trial)?;
        let model = train_for_trial(cfg, &split, trial)?;
        test_on_split(cfg, &model, &split, trial)
    };
    attempt().map_err(|e| Error::Trial {
        index: trial,
        source: Box::new(e),
    })
}

/// Rejection frequency over independent trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub rejections: u64,
    pub trials: u64,
    pub rate: f64,
    /// Binomial standard error `√(rate (1 - rate) / trials)`.
    pub stderr: f64,
}

impl PowerEstimate {
    pub fn from_counts(rejections: u64, trials: u64) -> Self {
        assert!(trials > 0 && rejections <= trials);
        let rate = rejections as f64 / trials as f64;
        Self {
            rejections,
            trials,
            rate,
            stderr: (rate * (1.0 - rate) / trials as f64).sqrt(),
        }
    }

    pub fn from_outcomes(outcomes: &[TestOutcome]) -> Self {
        let rejections = outcomes.iter().filter(|o| o.reject).count() as u64;
        Self::from_counts(rejections, outcomes.len() as u64)
    }
}

/// Parallelism and runtime budget for a cell.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub jobs: Option<usize>,
    /// Trials not yet started when this many seconds have elapsed are skipped
    /// and the cell fails with [`Error::Budget`].
    pub max_seconds: Option<f64>,
}

/// Outcomes of every trial of a cell, in trial order.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub estimate: PowerEstimate,
    pub outcomes: Vec<TestOutcome>,
    pub runtime_s: f64,
}

pub fn run_cell(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<CellResult> {
    cfg.validate()?;
    let start = Instant::now();
    let over_budget = AtomicBool::new(false);
    let work = || -> Vec<Option<Result<TestOutcome>>> {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                if let Some(limit) = opts.max_seconds {
                    if start.elapsed().as_secs_f64() > limit {
                        over_budget.store(true, Ordering::Relaxed);
                        return None;
                    }
                }
                Some(run_trial(cfg, trial))
            })
            .collect()
    };
    let results = match opts.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .install(work),
        None => work(),
    };
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results.into_iter().flatten() {
        outcomes.push(r?);
    }
    if over_budget.load(Ordering::Relaxed) {
        return Err(Error::Budget {
            budget_s: opts.max_seconds.unwrap_or_default(),
            completed: outcomes.len() as u64,
        });
    }
    Ok(CellResult {
        estimate: PowerEstimate::from_outcomes(&outcomes),
        outcomes,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Power (under H1) or type-I error (under H0) of one configuration.
pub fn estimate(cfg: &ExperimentConfig) -> Result<PowerEstimate> {
    Ok(run_cell(cfg, &RunOptions::default())?.estimate)
}

/// Axes of a sweep; an absent axis keeps the base configuration's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub base: ExperimentConfig,
    pub methods: Vec<Method>,
    pub levels: Vec<Level>,
    pub hypotheses: Vec<Hypothesis>,
    pub n_totals: Vec<usize>,
    pub dims: Vec<usize>,
    pub unlabeled_fractions: Vec<f64>,
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl GridConfig {
    /// Cartesian product of the axes, method-major.
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let b = &self.base;
        let mut cells = Vec::new();
        for method in axis(&self.methods, b.method) {
            for level in axis(&self.levels, b.level) {
                for hypothesis in axis(&self.hypotheses, b.hypothesis) {
                    for d in axis(&self.dims, b.d) {
                        for n_total in axis(&self.n_totals, b.n_total) {
                            for fraction in axis(&self.unlabeled_fractions, b.train.unlabeled_fraction) {
                                let mut cell = b.clone();
                                cell.method = method;
                                cell.level = level;
                                cell.hypothesis = hypothesis;
                                cell.d = d;
                                cell.n_total = n_total;
                                cell.train.unlabeled_fraction = fraction;
                                cells.push(cell);
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

/// One line of the sweep CSV. `rate` and `stderr` read `timeout` for cells
/// aborted by the runtime budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub dataset: String,
    pub hypothesis: String,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub unlabeled_fraction: f64,
    pub trials: u64,
    pub alpha: f64,
    pub rate: String,
    pub stderr: String,
    pub seed: u64,
    pub runtime_s: f64,
}

pub const CSV_COLUMNS: [&str; 12] = [
    "method",
    "dataset",
    "hypothesis",
    "d",
    "N",
    "unlabeled_fraction",
    "trials",
    "alpha",
    "rate",
    "stderr",
    "seed",
    "runtime_s",
];

impl CsvRow {
    fn for_cell(cfg: &ExperimentConfig, rate: String, stderr: String, runtime_s: f64) -> Self {
        Self {
            method: cfg.method.name().to_string(),
            dataset: cfg.level.name().to_string(),
            hypothesis: cfg.hypothesis.name().to_string(),
            d: cfg.d,
            n: cfg.n_total,
            unlabeled_fraction: cfg.train.unlabeled_fraction,
            trials: cfg.trials,
            alpha: cfg.alpha,
            rate,
            stderr,
            seed: cfg.seed,
            runtime_s,
        }
    }

    /// Identity of the cell this row reports, used to resume sweeps.
    pub fn key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{}|{}",
            self.method,
            self.dataset,
            self.hypothesis,
            self.d,
            self.n,
            self.unlabeled_fraction,
            self.trials,
            self.alpha,
            self.seed
        )
    }

    pub fn rate_value(&self) -> Option<f64> {
        self.rate.parse().ok()
    }
}

fn cell_key(cfg: &ExperimentConfig) -> String {
    CsvRow::for_cell(cfg, String::new(), String::new(), 0.0).key()
}

/// What a sweep did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSummary {
    pub written: Vec<CsvRow>,
    /// Cells already present in the output file.
    pub skipped: usize,
    /// Cells aborted by the runtime budget.
    pub timed_out: usize,
}

/// Runs every grid cell not already in `out`, appending and flushing one row per cell.
pub fn sweep(grid: &GridConfig, out: &Path, opts: &RunOptions) -> Result<SweepSummary> {
    let existing: HashSet<String> = if out.exists() && std::fs::metadata(out)?.len() > 0 {
        read_csv(out)?.iter().map(CsvRow::key).collect()
    } else {
        HashSet::new()
    };
    let fresh = existing.is_empty() && !(out.exists() && std::fs::metadata(out)?.len() > 0);
    let file = OpenOptions::new().create(true).append(true).open(out)?;
    let mut writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    let mut summary = SweepSummary::default();

    for cell in grid.cells() {
        if existing.contains(&cell_key(&cell)) {
            summary.skipped += 1;
            continue;
        }
        let row = match run_cell(&cell, opts) {
            Ok(res) => CsvRow::for_cell(
                &cell,
                res.estimate.rate.to_string(),
                res.estimate.stderr.to_string(),
                res.runtime_s,
            ),
            Err(Error::Budget { budget_s, .. }) => {
                summary.timed_out += 1;
                CsvRow::for_cell(&cell, "timeout".into(), "timeout".into(), budget_s)
            }
            Err(e) => {
                writer.flush()?;
                return Err(e);
            }
        };
        writer.serialize(&row)?;
        writer.flush()?;
        summary.written.push(row);
    }
    Ok(summary)
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let missing: Vec<&str> = CSV_COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidInput(format!(
            "CSV is missing columns: {}",
            missing.join(", ")
        )));
    }
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}
