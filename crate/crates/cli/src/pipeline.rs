//! The experiment grid: simulate, split, scale, train and audit for every
//! experiment and replicate, then summarize.

use std::path::{Path, PathBuf};

use equirank_core::dataset::{split, ComparisonSet, FeatureTable};
use equirank_core::equity::{build_report, EquityReport};
use equirank_core::ltr::{predict_all, train};
use equirank_core::simgen::generate;
use rayon::prelude::*;

use crate::config::{Experiment, PipelineConfig};
use crate::error::{CliError, Result};
use crate::io::{report_json, write_atomic};
use crate::scale::apply_scaler;

pub const SUMMARY_HEADER: [&str; 7] = [
    "Name of Experiment",
    "Accuracy",
    "Maximal Per-User Accuracy",
    "Standard Deviation of Per-User Accuracy",
    "Recall",
    "Maximal Per-User Recall",
    "Standard Deviation of Per-User Recall",
];

/// One simulated population, split into train and test.
pub struct Replicate {
    pub seed: u64,
    pub train: ComparisonSet,
    pub test: ComparisonSet,
    pub features: FeatureTable,
}

pub fn replicate(cfg: &PipelineConfig, r: usize) -> Result<Replicate> {
    let seed = cfg.seed.wrapping_add(r as u64);
    let mut sim = cfg.sim.clone();
    sim.seed = seed;
    let (set, features, _) = generate(&sim)?;
    let (train, test) = split(&set, cfg.train_fraction, seed)?;
    Ok(Replicate {
        seed,
        train,
        test,
        features,
    })
}

/// Scales the training split, trains and evaluates against the raw test
/// labels, so every experiment is scored on the same targets.
pub fn run_cell(cfg: &PipelineConfig, exp: &Experiment, rep: &Replicate) -> Result<EquityReport> {
    let scaled = apply_scaler(&rep.train, exp.scaler, &cfg.mehestan)?;
    let tc = cfg.train_config(exp, rep.seed);
    let model = train(&scaled, &rep.features, &tc)?;
    let predictions = predict_all(&model.params, &rep.test, &rep.features)?;
    Ok(build_report(&predictions, tc.tie_epsilon)?)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(text) = std::env::var("EQUIRANK_THREADS") {
        let n: usize = text
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("EQUIRANK_THREADS=`{text}` is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Data(format!("thread pool: {e}")))
}

pub struct PipelineOutput {
    /// Per experiment, one report per replicate.
    pub reports: Vec<Vec<EquityReport>>,
    pub files: Vec<PathBuf>,
}

pub fn report_path(out_dir: &Path, exp: &Experiment, replicate: usize) -> PathBuf {
    out_dir.join("reports").join(format!("{}.rep{replicate}.json", exp.slug()))
}

/// Runs every experiment cell and writes the per-cell report JSONs and
/// `summary.csv`. Cells run in parallel; outputs do not depend on the
/// thread count.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutput> {
    let pool = thread_pool()?;
    let reports = pool.install(|| -> Result<_> {
        let replicates = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| replicate(cfg, r))
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<(usize, usize)> = (0..cfg.experiments.len())
            .flat_map(|e| (0..cfg.replicates).map(move |r| (e, r)))
            .collect();
        let reports = cells
            .par_iter()
            .map(|&(e, r)| run_cell(cfg, &cfg.experiments[e], &replicates[r]))
            .collect::<Result<Vec<_>>>()?;
        Ok(reports)
    })?;

    let mut grouped: Vec<Vec<EquityReport>> = vec![Vec::new(); cfg.experiments.len()];
    let mut files = Vec::new();
    let mut it = reports.into_iter();
    for (e, exp) in cfg.experiments.iter().enumerate() {
        for r in 0..cfg.replicates {
            let report = it.next().expect("one report per cell");
            let path = report_path(out_dir, exp, r);
            write_atomic(&path, &report_json(&report))?;
            files.push(path);
            grouped[e].push(report);
        }
    }
    let summary = out_dir.join("summary.csv");
    write_atomic(&summary, &summary_csv(&cfg.experiments, &grouped))?;
    files.push(summary);
    Ok(PipelineOutput {
        reports: grouped,
        files,
    })
}

/// One row per experiment in config order; each column is the mean over
/// replicates, as a fraction.
pub fn summary_csv(experiments: &[Experiment], reports: &[Vec<EquityReport>]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).expect("in-memory write");
    for (exp, reps) in experiments.iter().zip(reports) {
        let n = reps.len() as f64;
        let mean = |f: fn(&EquityReport) -> f64| reps.iter().map(f).sum::<f64>() / n;
        let cols = [
            mean(|r| r.overall_accuracy),
            mean(|r| r.acc_max_gap),
            mean(|r| r.acc_std),
            mean(|r| r.overall_recall),
            mean(|r| r.recall_max_gap),
            mean(|r| r.recall_std),
        ];
        w.write_record(std::iter::once(exp.label.clone()).chain(cols.iter().map(f64::to_string)))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}
