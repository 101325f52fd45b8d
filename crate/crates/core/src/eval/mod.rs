//! Classification metrics, threshold curves, evaluation reports and
//! representation export.

pub mod curves;
pub mod metrics;
pub mod pca;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use curves::{curve_csv, roc_pr_points, CurvePoint, Curves};
pub use metrics::{macro_f1, metrics, ClassMetrics, Confusion, Metrics};
pub use pca::{pca, Pca};

use crate::error::{Error, Result};
use crate::ingest::ANOMALY;
use crate::modality::embed::write_matrix;
use crate::modality::{Batch, Dataset, Split};
use crate::model::tensor::Mat;
use crate::model::{argmax, Model};
use crate::par::Exec;

/// How per-file scores are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileWeighting {
    #[default]
    Uniform,
    Size,
}

impl FromStr for FileWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(FileWeighting::Uniform),
            "size" => Ok(FileWeighting::Size),
            _ => Err(Error::config(format!("unknown file weighting {s:?} (uniform|size)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Predictions {
    /// Dataset indices of the scored samples.
    pub samples: Vec<usize>,
    /// `n × n_classes`
    pub probabilities: Mat,
    pub predicted: Vec<usize>,
    pub truth: Vec<usize>,
}

impl Predictions {
    /// Probability of the anomaly class for each sample.
    pub fn anomaly_scores(&self) -> Vec<f64> {
        (0..self.probabilities.rows)
            .map(|r| self.probabilities[(r, ANOMALY as usize)])
            .collect()
    }
}

/// Score `indices` of `ds` in batches of `batch_size`.
pub fn predict(model: &Model, ds: &Dataset, indices: &[usize], batch_size: usize, exec: Exec) -> Result<Predictions> {
    let n_classes = model.config.n_classes;
    let mut probs = Vec::with_capacity(indices.len() * n_classes);
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = Batch::gather(&ds.samples, &ds.events, chunk, n_classes);
        probs.extend(model.probabilities(&batch, exec).data);
    }
    let probabilities = Mat::from_vec(indices.len(), n_classes, probs);
    let predicted = (0..indices.len()).map(|r| argmax(probabilities.row(r))).collect();
    let truth = indices.iter().map(|&i| ds.samples[i].label(n_classes)).collect();
    Ok(Predictions {
        samples: indices.to_vec(),
        probabilities,
        predicted,
        truth,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileReport {
    pub file: String,
    pub samples: usize,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileAverage {
    pub weighting: FileWeighting,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_classes: usize,
    pub samples: usize,
    pub confusion: Confusion,
    pub metrics: Metrics,
    /// Scores of the anomaly class alone (2-class mode).
    pub anomaly: Option<ClassMetrics>,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub per_file: Vec<FileReport>,
    pub file_average: Option<FileAverage>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn average(files: &[FileReport], weighting: FileWeighting) -> Option<FileAverage> {
    let weights: Vec<f64> = files
        .iter()
        .map(|f| match weighting {
            FileWeighting::Uniform => 1.0,
            FileWeighting::Size => f.samples as f64,
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return None;
    }
    let mean = |g: fn(&FileReport) -> f64| files.iter().zip(&weights).map(|(f, w)| g(f) * w).sum::<f64>() / total;
    Some(FileAverage {
        weighting,
        macro_precision: mean(|f| f.macro_precision),
        macro_recall: mean(|f| f.macro_recall),
        macro_f1: mean(|f| f.macro_f1),
        accuracy: mean(|f| f.accuracy),
    })
}

/// Build the report for already computed predictions.
pub fn report(ds: &Dataset, p: &Predictions, n_classes: usize, weighting: FileWeighting) -> Result<(EvalReport, Option<Curves>)> {
    if p.samples.is_empty() {
        return Err(Error::data("no samples to evaluate"));
    }
    let confusion = Confusion::from_predictions(&p.truth, &p.predicted, n_classes);
    let m = metrics(&confusion)?;
    let curves = (n_classes == 2).then(|| {
        let positive: Vec<bool> = p.truth.iter().map(|&t| t == ANOMALY as usize).collect();
        roc_pr_points(&p.anomaly_scores(), &positive)
    });
    let mut per_file = Vec::new();
    for (f, name) in ds.meta.files.iter().enumerate() {
        let rows: Vec<usize> = (0..p.samples.len())
            .filter(|&r| ds.samples[p.samples[r]].file == f)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let truth: Vec<usize> = rows.iter().map(|&r| p.truth[r]).collect();
        let pred: Vec<usize> = rows.iter().map(|&r| p.predicted[r]).collect();
        let fm = metrics(&Confusion::from_predictions(&truth, &pred, n_classes))?;
        per_file.push(FileReport {
            file: name.clone(),
            samples: rows.len(),
            macro_precision: fm.macro_precision,
            macro_recall: fm.macro_recall,
            macro_f1: fm.macro_f1,
            accuracy: fm.accuracy,
        });
    }
    let report = EvalReport {
        n_classes,
        samples: p.samples.len(),
        anomaly: (n_classes == 2).then(|| m.per_class[ANOMALY as usize].clone()),
        roc_auc: curves.as_ref().and_then(|c| c.roc_auc),
        pr_auc: curves.as_ref().and_then(|c| c.pr_auc),
        file_average: average(&per_file, weighting),
        per_file,
        confusion,
        metrics: m,
    };
    Ok((report, curves))
}

/// Predict and report on one split.
pub fn evaluate(
    model: &Model,
    ds: &Dataset,
    split: Split,
    batch_size: usize,
    weighting: FileWeighting,
    exec: Exec,
) -> Result<(EvalReport, Option<Curves>)> {
    let idx = ds.indices(split);
    let p = predict(model, ds, &idx, batch_size, exec)?;
    report(ds, &p, model.config.n_classes, weighting)
}

/// Write the report as `report.json` and curves as `roc.csv` / `pr.csv`.
pub fn write_report(dir: &Path, report: &EvalReport, curves: Option<&Curves>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    write("report.json", report.to_json())?;
    if let Some(c) = curves {
        write("roc.csv", curve_csv(&c.roc, "fpr", "tpr"))?;
        write("pr.csv", curve_csv(&c.pr, "recall", "precision"))?;
    }
    Ok(())
}

/// Write fused latent vectors (`latent.bin`) and, with at least two samples,
/// their 2-D PCA projection (`pca.csv`, `pca.json`).
pub fn export_vectors(
    model: &Model,
    ds: &Dataset,
    indices: &[usize],
    batch_size: usize,
    dir: &Path,
    exec: Exec,
) -> Result<Option<Pca>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n_classes = model.config.n_classes;
    let mut data = Vec::with_capacity(indices.len() * model.config.latent);
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = Batch::gather(&ds.samples, &ds.events, chunk, n_classes);
        data.extend(model.latent(&batch, exec).data);
    }
    let latent = Mat::from_vec(indices.len(), model.config.latent, data);
    let f32s: Vec<f32> = latent.data.iter().map(|&v| v as f32).collect();
    write_matrix(&dir.join("latent.bin"), latent.rows, latent.cols, &f32s)?;
    let Some(p) = pca(&latent, 2) else {
        return Ok(None);
    };
    let mut csv = String::from("file,line_no,label,pc1,pc2\n");
    for (r, &i) in indices.iter().enumerate() {
        let s = &ds.samples[i];
        let pc = p.projection.row(r);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            ds.meta.files[s.file],
            s.line_no,
            s.label(n_classes),
            pc[0],
            pc.get(1).copied().unwrap_or(0.0)
        ));
    }
    let path = dir.join("pca.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("pca.json");
    let json = serde_json::to_string_pretty(&p).expect("pca serializes");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(Some(p))
}
