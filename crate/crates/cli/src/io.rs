//! CSV and JSON file formats.
//!
//! Floats are written in Rust's shortest round-trip decimal form, so
//! reading a file back yields bit-identical values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use equirank_core::dataset::{Comparison, ComparisonSet, FeatureTable};
use equirank_core::equity::EquityReport;
use equirank_core::gbt::IndividualScores;
use equirank_core::ltr::ModelParams;
use equirank_core::scaling::{ScaledComparisonSet, UserAffine};
use equirank_core::simgen::GroundTruth;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const COMPARISON_HEADER: [&str; 5] = ["user_id", "criterion", "left_item", "right_item", "score"];

/// Writes `bytes` to a temporary file in the target directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory CSV writer does not fail")
}

fn row<I, S>(w: &mut csv::Writer<Vec<u8>>, fields: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).expect("in-memory CSV writer does not fail");
}

fn open(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn data_error(path: &Path, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}:{line}: {msg}", path.display()))
}

fn headers(path: &Path, reader: &mut csv::Reader<fs::File>) -> Result<Vec<String>> {
    let h = reader.headers().map_err(|e| data_error(path, 1, e))?;
    Ok(h.iter().map(str::to_string).collect())
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| data_error(path, line, format!("`{field}` is not a number")))
}

/// Reads a comparisons CSV. A trailing `scaler` column, as written by
/// [`scaled_csv`], is accepted and ignored.
pub fn read_comparisons(path: &Path) -> Result<ComparisonSet> {
    let mut reader = open(path)?;
    let header = headers(path, &mut reader)?;
    let plain = header == COMPARISON_HEADER;
    let scaled = header.len() == 6 && header[..5] == COMPARISON_HEADER && header[5] == "scaler";
    if !plain && !scaled {
        return Err(data_error(
            path,
            1,
            format!("expected header `{}`, found `{}`", COMPARISON_HEADER.join(","), header.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            data_error(path, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let score = parse_f64(path, line, &record[4])?;
        let c = Comparison::new(&record[0], &record[1], &record[2], &record[3], score)
            .map_err(|e| data_error(path, line, e))?;
        rows.push(c);
    }
    Ok(ComparisonSet::new(rows)?)
}

pub fn comparisons_csv(set: &ComparisonSet) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, COMPARISON_HEADER);
    for c in set {
        let score = c.score.to_string();
        row(&mut w, [&c.user_id, &c.criterion, &c.left_item, &c.right_item, &score]);
    }
    finish(w)
}

pub fn scaled_csv(scaled: &ScaledComparisonSet) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, COMPARISON_HEADER.iter().copied().chain(["scaler"]));
    let tag = scaled.scaler.as_str();
    for c in &scaled.set {
        let score = c.score.to_string();
        row(&mut w, [&c.user_id, &c.criterion, &c.left_item, &c.right_item, &score, tag]);
    }
    finish(w)
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut reader = open(path)?;
    let header = headers(path, &mut reader)?;
    let dim = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("item_id".to_string())
        .chain((0..dim).map(|k| format!("f{k}")))
        .collect();
    if dim == 0 || header != expected {
        return Err(data_error(
            path,
            1,
            format!("expected header `item_id,f0,...`, found `{}`", header.join(",")),
        ));
    }
    let mut table = FeatureTable::new(dim)?;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            data_error(path, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .skip(1)
            .map(|f| parse_f64(path, line, f))
            .collect::<Result<Vec<f64>>>()?;
        table
            .insert(&record[0], values)
            .map_err(|e| data_error(path, line, e))?;
    }
    Ok(table)
}

pub fn features_csv(table: &FeatureTable) -> Vec<u8> {
    let mut w = writer();
    let header: Vec<String> = std::iter::once("item_id".to_string())
        .chain((0..table.dim()).map(|k| format!("f{k}")))
        .collect();
    row(&mut w, &header);
    for (item, v) in table.iter() {
        row(&mut w, std::iter::once(item.to_string()).chain(v.iter().map(f64::to_string)));
    }
    finish(w)
}

pub fn individual_scores_csv(scores: &[IndividualScores]) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, ["user_id", "item_id", "theta"]);
    for s in scores {
        for (item, theta) in &s.theta {
            row(&mut w, [s.user_id.as_str(), item, &theta.to_string()]);
        }
    }
    finish(w)
}

pub fn affine_csv(affine: &[UserAffine]) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, ["user_id", "s", "tau"]);
    for a in affine {
        row(&mut w, [a.user_id.clone(), a.s.to_string(), a.tau.to_string()]);
    }
    finish(w)
}

pub fn truth_theta_csv(truth: &GroundTruth) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, ["user_id", "item_id", "theta"]);
    for (user, items) in &truth.user_theta {
        for (item, theta) in items {
            row(&mut w, [user.as_str(), item, &theta.to_string()]);
        }
    }
    finish(w)
}

pub fn truth_users_csv(truth: &GroundTruth) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, ["user_id", "group", "archetype"]);
    for (user, group) in &truth.user_group {
        let archetype = truth.user_archetype[user].as_str();
        row(&mut w, [user.as_str(), &group.to_string(), archetype]);
    }
    finish(w)
}

/// On-disk model: shared weights plus optional per-user offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dim: usize,
    pub w: Vec<f64>,
    pub user_offsets: BTreeMap<String, Vec<f64>>,
}

pub fn model_json(params: &ModelParams) -> Vec<u8> {
    let file = ModelFile {
        dim: params.dim(),
        w: params.w.clone(),
        user_offsets: params.user_offsets.clone(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("model serializes");
    text.push('\n');
    text.into_bytes()
}

pub fn read_model(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if file.w.len() != file.dim {
        return Err(CliError::Data(format!(
            "{}: dim is {} but w has {} entries",
            path.display(),
            file.dim,
            file.w.len()
        )));
    }
    let params = ModelParams {
        w: file.w,
        user_offsets: file.user_offsets,
    };
    params
        .validate()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(params)
}

/// JSON form of [`EquityReport`], field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub per_user_accuracy: BTreeMap<String, f64>,
    pub per_user_recall: BTreeMap<String, f64>,
    pub overall_accuracy: f64,
    pub overall_recall: f64,
    pub acc_max_gap: f64,
    pub acc_std: f64,
    pub recall_max_gap: f64,
    pub recall_std: f64,
    pub gini_accuracy: f64,
    pub mean_accuracy: f64,
    pub n_users: usize,
    pub lorenz: Vec<(f64, f64)>,
}

impl From<&EquityReport> for ReportFile {
    fn from(r: &EquityReport) -> Self {
        ReportFile {
            per_user_accuracy: r.per_user_accuracy.clone(),
            per_user_recall: r.per_user_recall.clone(),
            overall_accuracy: r.overall_accuracy,
            overall_recall: r.overall_recall,
            acc_max_gap: r.acc_max_gap,
            acc_std: r.acc_std,
            recall_max_gap: r.recall_max_gap,
            recall_std: r.recall_std,
            gini_accuracy: r.gini_accuracy,
            mean_accuracy: r.mean_accuracy,
            n_users: r.n_users,
            lorenz: r.lorenz.clone(),
        }
    }
}

pub fn report_json(report: &EquityReport) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(&ReportFile::from(report)).expect("report serializes");
    text.push('\n');
    text.into_bytes()
}

pub fn lorenz_csv(points: &[(f64, f64)]) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, ["population_fraction", "cumulative_share"]);
    for (x, y) in points {
        row(&mut w, [x.to_string(), y.to_string()]);
    }
    finish(w)
}

/// Entry 0 is the loss of the initial model; entry `k` follows epoch `k`.
pub fn loss_trace_csv(trace: &[f64]) -> Vec<u8> {
    let mut w = writer();
    row(&mut w, ["epoch", "loss"]);
    for (epoch, loss) in trace.iter().enumerate() {
        row(&mut w, [epoch.to_string(), loss.to_string()]);
    }
    finish(w)
}
