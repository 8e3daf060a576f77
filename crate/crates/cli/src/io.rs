//! On-disk formats.
//!
//! * Dataset CSV: header `x0,...,x{d-1},label`, label `-1` for unlabeled rows.
//! * Truth CSV: header `ood`, one `0`/`1` per row.
//! * Model checkpoint JSON: `schema_version`, `layer_dims`, `activation`,
//!   `weights` (per layer, row-major nested arrays), `biases`, `seed`,
//!   `epochs_trained`.
//! * Ensemble directory: `members/member_<i>.json` checkpoints plus
//!   `manifest.json`.
//! * Split bundle directory: `train.csv`, `val.csv`, `unlabeled.csv`,
//!   `unlabeled_truth.csv`, `test.csv`, `test_truth.csv`, `meta.json`.
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is
//! lossless and reruns are byte-identical.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use erd_core::datagen::{Dataset, SplitBundle, SplitIndices, SplitParams};
use erd_core::ensemble::{ErdEpochRecord, Statistic};
use erd_core::linalg::Matrix;
use erd_core::metrics::RocReport;
use erd_core::nn::{Activation, MlpClassifier};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::DataSpec;
use crate::error::{CliError, Result};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| CliError::io(path, e))?,
    ))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format(path, line, format!("{other:?}")),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

fn finish<W: Write>(path: &Path, mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::format(path, None, e.to_string()))?;
    w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, Some(e.line() as u64), e.to_string()))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let mut row = Vec::with_capacity(data.dim() + 1);
    for (x, label) in data.features().iter_rows().zip(data.labels()) {
        row.clear();
        row.extend(x.iter().map(|&v| float(v)));
        row.push(label.to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

/// Reads a dataset CSV. Without `num_classes` the class count is
/// `max(label) + 1`, at least 2.
pub fn read_dataset(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    parse_dataset(open(path)?, path, num_classes)
}

pub fn parse_dataset<R: Read>(reader: R, origin: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    let cols = header.len();
    let valid =
        cols >= 2 && &header[cols - 1] == "label" && (0..cols - 1).all(|j| header[j] == format!("x{j}"));
    if !valid {
        let d = cols.saturating_sub(1).max(1);
        return Err(CliError::format(
            origin,
            Some(1),
            format!(
                "expected header x0,...,x{},label, got {:?}",
                d - 1,
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let d = cols - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record.position().map(|p| p.line());
        if record.len() != cols {
            return Err(CliError::format(
                origin,
                line,
                format!("expected {cols} fields, got {}", record.len()),
            ));
        }
        for j in 0..d {
            let v: f64 = record[j].trim().parse().map_err(|_| {
                CliError::format(origin, line, format!("x{j} = {:?} is not a number", &record[j]))
            })?;
            data.push(v);
        }
        let label: i64 = record[d].trim().parse().map_err(|_| {
            CliError::format(origin, line, format!("label {:?} is not an integer", &record[d]))
        })?;
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(CliError::format(origin, None, "no samples"));
    }
    let classes = num_classes.unwrap_or_else(|| {
        labels
            .iter()
            .map(|&l| (l + 1).max(0) as usize)
            .max()
            .unwrap_or(0)
            .max(2)
    });
    let n = labels.len();
    let features = Matrix::new(n, d, data).map_err(|e| CliError::format(origin, None, e.to_string()))?;
    Dataset::new(features, labels, classes).map_err(|e| CliError::format(origin, None, e.to_string()))
}

pub fn write_truth(path: &Path, truth: &[bool]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["ood"]).map_err(|e| csv_error(path, e))?;
    for &t in truth {
        w.write_record([if t { "1" } else { "0" }])
            .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

pub fn read_truth(path: &Path) -> Result<Vec<bool>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(open(path)?);
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() != 1 || &header[0] != "ood" {
        return Err(CliError::format(path, Some(1), "expected header ood"));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        out.push(match record[0].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(CliError::format(
                    path,
                    record.position().map(|p| p.line()),
                    format!("ood flag must be 0 or 1, got {other:?}"),
                ))
            }
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub schema_version: u32,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    /// Per layer, `out x in`, row-major.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
    pub epochs_trained: usize,
}

impl ModelCheckpoint {
    pub fn from_model(model: &MlpClassifier, seed: u64, epochs_trained: usize) -> Self {
        Self {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            layer_dims: model.layer_dims().to_vec(),
            activation: model.activation(),
            weights: model
                .weights()
                .iter()
                .map(|w| w.iter_rows().map(<[f64]>::to_vec).collect())
                .collect(),
            biases: model.biases().to_vec(),
            seed,
            epochs_trained,
        }
    }

    pub fn to_model(&self) -> erd_core::Result<MlpClassifier> {
        if self.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(erd_core::Error::InvalidArgument(format!(
                "unsupported checkpoint schema_version {}",
                self.schema_version
            )));
        }
        let weights = self
            .weights
            .iter()
            .map(|rows| Matrix::from_rows(rows))
            .collect::<erd_core::Result<Vec<_>>>()?;
        MlpClassifier::from_parameters(&self.layer_dims, self.activation, weights, self.biases.clone())
    }
}

pub fn write_model(path: &Path, model: &MlpClassifier, seed: u64, epochs_trained: usize) -> Result<()> {
    write_json(path, &ModelCheckpoint::from_model(model, seed, epochs_trained))
}

pub fn read_model(path: &Path) -> Result<(MlpClassifier, ModelCheckpoint)> {
    let ckpt: ModelCheckpoint = read_json(path)?;
    let model = ckpt
        .to_model()
        .map_err(|e| CliError::format(path, None, e.to_string()))?;
    Ok((model, ckpt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticDefaults {
    pub statistic: Statistic,
    pub target_fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    /// `erd` or `vanilla`.
    pub kind: String,
    /// Empty for vanilla ensembles.
    pub artificial_labels: Vec<usize>,
    pub stop_epochs: Vec<usize>,
    pub statistic_defaults: StatisticDefaults,
    /// Member checkpoint paths relative to the ensemble directory.
    pub members: Vec<String>,
}

/// Writes member checkpoints and the manifest; `manifest.members` is
/// overwritten with the written paths.
pub fn write_ensemble(
    dir: &Path,
    members: &[MlpClassifier],
    seeds: &[u64],
    manifest: &EnsembleManifest,
) -> Result<()> {
    let mut manifest = manifest.clone();
    manifest.members.clear();
    for (i, m) in members.iter().enumerate() {
        let rel = format!("members/member_{i}.json");
        write_model(&dir.join(&rel), m, seeds[i], manifest.stop_epochs[i])?;
        manifest.members.push(rel);
    }
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn read_ensemble(dir: &Path) -> Result<(Vec<MlpClassifier>, EnsembleManifest)> {
    let path = dir.join("manifest.json");
    let manifest: EnsembleManifest = read_json(&path)?;
    if manifest.members.len() != manifest.stop_epochs.len() {
        return Err(CliError::format(
            &path,
            None,
            "members and stop_epochs differ in length",
        ));
    }
    let members = manifest
        .members
        .iter()
        .map(|rel| read_model(&dir.join(rel)).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    Ok((members, manifest))
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

/// Per-epoch learning curve of one ERD member; missing values are empty.
pub fn write_learning_curve(path: &Path, trace: &[ErdEpochRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "val_acc", "acc_S", "acc_U_c_on_ood", "acc_U_c_on_id"])
        .map_err(|e| csv_error(path, e))?;
    for r in trace {
        w.write_record([
            r.epoch.to_string(),
            float(r.val_accuracy),
            float(r.acc_on_train),
            opt(r.acc_unlabeled_c_ood),
            opt(r.acc_unlabeled_c_id),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

pub fn write_roc(path: &Path, report: &RocReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["threshold", "fpr", "tpr"])
        .map_err(|e| csv_error(path, e))?;
    for i in 0..report.thresholds.len() {
        w.write_record([
            float(report.thresholds[i]),
            float(report.fpr[i]),
            float(report.tpr[i]),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

/// Rows of an arbitrary numeric table with a fixed header.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|&v| float(v)))
            .map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSizes {
    pub train: usize,
    pub validation: usize,
    pub unlabeled: usize,
    pub unlabeled_ood: usize,
    pub test: usize,
    pub test_ood: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub experiment: String,
    pub seed: u64,
    pub data: DataSpec,
    pub split: SplitParams,
    pub num_classes: usize,
    pub dim: usize,
    pub sizes: BundleSizes,
    /// Source-row indices of every split.
    pub indices: SplitIndices,
}

impl BundleMeta {
    pub fn new(
        experiment: &str,
        seed: u64,
        data: &DataSpec,
        split: SplitParams,
        bundle: &SplitBundle,
    ) -> Self {
        let ood = |t: &[bool]| t.iter().filter(|&&b| b).count();
        Self {
            experiment: experiment.into(),
            seed,
            data: data.clone(),
            split,
            num_classes: bundle.num_classes(),
            dim: bundle.train.dim(),
            sizes: BundleSizes {
                train: bundle.train.len(),
                validation: bundle.validation.len(),
                unlabeled: bundle.unlabeled.len(),
                unlabeled_ood: ood(&bundle.unlabeled_truth),
                test: bundle.test.len(),
                test_ood: ood(&bundle.test_truth),
            },
            indices: bundle.indices.clone(),
        }
    }
}

const BUNDLE_FILES: [&str; 6] = [
    "train.csv",
    "val.csv",
    "unlabeled.csv",
    "unlabeled_truth.csv",
    "test.csv",
    "test_truth.csv",
];

fn bundle_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(BUNDLE_FILES[i])
}

pub fn write_bundle(dir: &Path, bundle: &SplitBundle, meta: &BundleMeta) -> Result<()> {
    write_dataset(&bundle_path(dir, 0), &bundle.train)?;
    write_dataset(&bundle_path(dir, 1), &bundle.validation)?;
    write_dataset(&bundle_path(dir, 2), &bundle.unlabeled)?;
    write_truth(&bundle_path(dir, 3), &bundle.unlabeled_truth)?;
    write_dataset(&bundle_path(dir, 4), &bundle.test)?;
    write_truth(&bundle_path(dir, 5), &bundle.test_truth)?;
    write_json(&dir.join("meta.json"), meta)
}

pub fn read_bundle(dir: &Path) -> Result<(SplitBundle, BundleMeta)> {
    let meta: BundleMeta = read_json(&dir.join("meta.json"))?;
    let nc = Some(meta.num_classes);
    let train = read_dataset(&bundle_path(dir, 0), nc)?;
    let validation = read_dataset(&bundle_path(dir, 1), nc)?;
    let unlabeled = read_dataset(&bundle_path(dir, 2), nc)?;
    let unlabeled_truth = read_truth(&bundle_path(dir, 3))?;
    let test = read_dataset(&bundle_path(dir, 4), nc)?;
    let test_truth = read_truth(&bundle_path(dir, 5))?;
    for (path, truth, data) in [
        (bundle_path(dir, 3), &unlabeled_truth, &unlabeled),
        (bundle_path(dir, 5), &test_truth, &test),
    ] {
        if truth.len() != data.len() {
            return Err(CliError::format(
                path,
                None,
                format!("{} flags for {} samples", truth.len(), data.len()),
            ));
        }
    }
    let bundle = SplitBundle {
        train,
        validation,
        unlabeled,
        unlabeled_truth,
        test,
        test_truth,
        indices: meta.indices.clone(),
    };
    Ok((bundle, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text.as_bytes(), Path::new("mem.csv"), None)
    }

    #[test]
    fn empty_body_is_no_samples() {
        let err = parse("x0,x1,label\n").unwrap_err();
        assert!(err.to_string().contains("no samples"), "{err}");
    }

    #[test]
    fn missing_label_column_names_expected_header() {
        let err = parse("x0,x1\n1,2\n").unwrap_err();
        assert!(err.to_string().contains("x0,...,x0,label"), "{err}");
        let err = parse("a,label\n1,0\n").unwrap_err();
        assert!(err.to_string().contains("expected header"), "{err}");
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let err = parse("x0,label\n0.5,1\nabc,0\n").unwrap_err();
        match err {
            CliError::Format { line, .. } => assert_eq!(line, Some(3)),
            other => panic!("{other}"),
        }
        let err = parse("x0,label\n0.5,1\n0.5,0.5\n").unwrap_err();
        assert!(matches!(err, CliError::Format { line: Some(3), .. }), "{err}");
    }

    #[test]
    fn unlabeled_rows_parse() {
        let d = parse("x0,label\n1e-3,-1\n2.5,1\n").unwrap();
        assert_eq!(d.labels(), &[-1, 1]);
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.features().data(), &[1e-3, 2.5]);
    }
}
