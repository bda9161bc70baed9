//! Segmentation and driving evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ground::GroundMatrix;

/// Pixel counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_counts(n: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: counts.len(),
            });
        }
        Ok(Self { n, counts })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        for index in [truth, pred] {
            if index >= self.n {
                return Err(Error::ClassOutOfRange { index, n: self.n });
            }
        }
        self.counts[truth * self.n + pred] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n).map(|k| self.get(k, k)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.correct() as f64 / total as f64
    }

    /// Each row scaled to sum to one; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|t| {
                let row = &self.counts[t * self.n..(t + 1) * self.n];
                let sum: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if sum == 0 { 0.0 } else { c as f64 / sum as f64 })
                    .collect()
            })
            .collect()
    }

    /// Relabels class `k` as `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::new(self.n);
        for t in 0..self.n {
            for p in 0..self.n {
                out.counts[perm[t] * self.n + perm[p]] = self.get(t, p);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for t in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|p| self.get(t, p).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Counts every pixel of every prediction against its label grid.
pub fn confusion(n: usize, preds: &[Vec<usize>], truths: &[Vec<usize>]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: truths.len(),
            found: preds.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(n);
    for (p, t) in preds.iter().zip(truths) {
        if p.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                found: p.len(),
            });
        }
        for (&pred, &truth) in p.iter().zip(t) {
            cm.add(truth, pred)?;
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IouReport {
    /// `None` marks a class absent from both prediction and truth.
    pub per_class: Vec<Option<f64>>,
    /// Mean over the classes that have an IoU.
    pub miou: Option<f64>,
}

/// `TP / (TP + FP + FN)` per class and their mean.
pub fn iou(cm: &ConfusionMatrix) -> IouReport {
    let n = cm.n();
    let per_class: Vec<Option<f64>> = (0..n)
        .map(|k| {
            let tp = cm.get(k, k);
            let fn_: u64 = (0..n).filter(|&p| p != k).map(|p| cm.get(k, p)).sum();
            let fp: u64 = (0..n).filter(|&t| t != k).map(|t| cm.get(t, k)).sum();
            let denom = tp + fp + fn_;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    IouReport { per_class, miou }
}

/// Mean severity per evaluated pixel.
///
/// A pixel of true class `t` predicted as `p` is charged `D[p][t]`, the cost
/// the transport loss assigns to prediction mass on `p` when the target is `t`.
pub fn severity_score(cm: &ConfusionMatrix, d: &GroundMatrix) -> Result<f64> {
    if d.n() != cm.n() {
        return Err(Error::DimensionMismatch {
            expected: cm.n(),
            found: d.n(),
        });
    }
    let total = cm.total();
    if total == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for t in 0..cm.n() {
        for p in 0..cm.n() {
            if t != p {
                sum += cm.get(t, p) as f64 * d.get(p, t);
            }
        }
    }
    Ok(sum / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfractionKind {
    CollisionPerson,
    CollisionCar,
    CollisionStatic,
    OffLine,
    OffRoad,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 5] = [
        InfractionKind::CollisionPerson,
        InfractionKind::CollisionCar,
        InfractionKind::CollisionStatic,
        InfractionKind::OffLine,
        InfractionKind::OffRoad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::CollisionPerson => "collision-person",
            Self::CollisionCar => "collision-car",
            Self::CollisionStatic => "collision-static",
            Self::OffLine => "off-line",
            Self::OffRoad => "off-road",
        }
    }

    pub fn is_collision(self) -> bool {
        matches!(self, Self::CollisionPerson | Self::CollisionCar | Self::CollisionStatic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Infraction {
    pub kind: InfractionKind,
    pub step: usize,
    /// Longitudinal and lateral position in meters.
    pub position: (f64, f64),
}

/// One evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrivingRecord {
    pub steps: usize,
    pub distance_km: f64,
    pub infractions: Vec<Infraction>,
    pub reached_goal: bool,
}

impl DrivingRecord {
    pub fn count(&self, kind: InfractionKind) -> usize {
        self.infractions.iter().filter(|x| x.kind == kind).count()
    }
}

/// Kilometers per infraction, or the marker for a run with none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KmPer {
    Finite(f64),
    NoInfraction,
}

impl KmPer {
    fn ratio(km: f64, count: usize) -> Self {
        if count == 0 {
            Self::NoInfraction
        } else {
            Self::Finite(km / count as f64)
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::NoInfraction => None,
        }
    }
}

impl std::fmt::Display for KmPer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v:.4}"),
            Self::NoInfraction => f.write_str("no-infraction"),
        }
    }
}

impl Serialize for KmPer {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(v) => serializer.serialize_f64(*v),
            Self::NoInfraction => serializer.serialize_str("no-infraction"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrivingReport {
    pub episodes: usize,
    pub step_cap: usize,
    pub total_steps: usize,
    pub drive_percent: f64,
    pub km: f64,
    pub mean_speed_kmh: f64,
    /// Distance per out-of-lane event (off-line or off-road).
    pub km_per_out_of_lane: KmPer,
    pub km_per_collision: KmPer,
    pub infraction_counts: BTreeMap<InfractionKind, usize>,
    pub km_per_infraction: BTreeMap<InfractionKind, KmPer>,
}

/// Aggregates episodes. `step_seconds` converts steps to hours for the mean speed.
pub fn driving_metrics(records: &[DrivingRecord], step_cap: usize, step_seconds: f64) -> Result<DrivingReport> {
    if records.is_empty() {
        return Err(Error::invalid("no driving records"));
    }
    if step_cap == 0 {
        return Err(Error::invalid("step cap must be positive"));
    }
    let total_steps: usize = records.iter().map(|r| r.steps).sum();
    let km: f64 = records.iter().map(|r| r.distance_km).sum();
    let hours = total_steps as f64 * step_seconds / 3600.0;
    let mut infraction_counts = BTreeMap::new();
    for kind in InfractionKind::ALL {
        infraction_counts.insert(kind, records.iter().map(|r| r.count(kind)).sum::<usize>());
    }
    let collisions = infraction_counts
        .iter()
        .filter(|(k, _)| k.is_collision())
        .map(|(_, c)| c)
        .sum();
    let out_of_lane = infraction_counts[&InfractionKind::OffLine] + infraction_counts[&InfractionKind::OffRoad];
    let km_per_infraction = infraction_counts
        .iter()
        .map(|(&k, &c)| (k, KmPer::ratio(km, c)))
        .collect();
    Ok(DrivingReport {
        episodes: records.len(),
        step_cap,
        total_steps,
        drive_percent: 100.0 * total_steps as f64 / step_cap as f64,
        km,
        mean_speed_kmh: if hours > 0.0 { km / hours } else { 0.0 },
        km_per_out_of_lane: KmPer::ratio(km, out_of_lane),
        km_per_collision: KmPer::ratio(km, collisions),
        infraction_counts,
        km_per_infraction,
    })
}

impl DrivingReport {
    /// Kilometers between infractions, one row per infraction type.
    pub fn infraction_table_csv(&self) -> String {
        let mut out = String::from("infraction,count,km_per_infraction\n");
        for (kind, per) in &self.km_per_infraction {
            let _ = writeln!(out, "{},{},{}", kind.name(), self.infraction_counts[kind], per);
        }
        out
    }

    /// Single-row summary: drive%, km, km/h, km per out-of-lane, km per collision.
    pub fn summary_csv(&self) -> String {
        format!(
            "drive_percent,km,km_per_hr,km_per_out_of_lane,km_per_collision\n{:.2},{:.4},{:.3},{},{}\n",
            self.drive_percent, self.km, self.mean_speed_kmh, self.km_per_out_of_lane, self.km_per_collision
        )
    }
}

/// Fraction of episodes that reached their goal.
pub fn success_rate(records: &[DrivingRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("no driving records"));
    }
    Ok(records.iter().filter(|r| r.reached_goal).count() as f64 / records.len() as f64)
}
