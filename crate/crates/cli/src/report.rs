use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;
use serde::Serialize;
use sevot::metrics::{confusion, iou, severity_score, ConfusionMatrix};
use sevot::GroundMatrix;
use sevot_lab::seg::{evaluate, nearest_prototype, Class, SceneSample, SoftmaxModel, N_CLASSES};

use crate::output::write;

#[derive(Debug, Clone, Serialize)]
pub struct ClassIou {
    pub class: &'static str,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegReport {
    pub pixels: u64,
    pub accuracy: f64,
    pub miou: Option<f64>,
    pub per_class: Vec<ClassIou>,
    /// Mean matrix cost charged per pixel, prediction row against truth column.
    pub severity: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<u64>>,
}

impl SegReport {
    pub fn new(cm: &ConfusionMatrix, d: &GroundMatrix) -> Result<Self> {
        let n = cm.n();
        let report = iou(cm);
        Ok(Self {
            pixels: cm.total(),
            accuracy: cm.accuracy(),
            miou: report.miou,
            per_class: Class::ALL
                .iter()
                .zip(&report.per_class)
                .map(|(c, v)| ClassIou {
                    class: c.name(),
                    iou: *v,
                })
                .collect(),
            severity: severity_score(cm, d)?,
            confusion: (0..n).map(|t| (0..n).map(|p| cm.get(t, p)).collect()).collect(),
        })
    }

    pub fn write_csv(&self, cm: &ConfusionMatrix, dir: &Path) -> Result<()> {
        write(&dir.join("confusion.csv"), &cm.to_csv())?;
        let mut table = String::from("class,iou\n");
        for c in &self.per_class {
            let _ = writeln!(table, "{},{}", c.class, c.iou.map_or(String::new(), |v| v.to_string()));
        }
        write(&dir.join("iou.csv"), &table)
    }
}

pub fn model_confusion(model: &SoftmaxModel, samples: &[SceneSample]) -> Result<ConfusionMatrix> {
    Ok(evaluate(model, samples)?)
}

/// Confusion of the nearest-prototype classifier.
pub fn oracle_confusion(samples: &[SceneSample]) -> Result<ConfusionMatrix> {
    let preds: Vec<Vec<usize>> = samples
        .iter()
        .map(|s| (0..s.pixels()).map(|p| nearest_prototype(s.feature(p))).collect())
        .collect();
    let truths: Vec<Vec<usize>> = samples.iter().map(|s| s.labels.clone()).collect();
    Ok(confusion(N_CLASSES, &preds, &truths)?)
}
