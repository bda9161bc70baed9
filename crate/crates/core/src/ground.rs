//! Ground matrices: the per-pair costs of moving probability mass between
//! classes.
//!
//! Entry `(i, j)` is the cost charged for mass that the prediction puts on
//! class `i` when the target class is `j`. Matrices may be asymmetric; the
//! diagonal is always zero.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Tolerance used when validating a loaded diagonal.
pub const DIAGONAL_TOLERANCE: f64 = 1e-12;

/// Nondecreasing map `f` applied to raw severities, with `f(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricTransform {
    Linear,
    /// `d^rho`, `rho > 1`.
    Power {
        rho: f64,
    },
    /// `d^2` below `tau`, `tau (2d - tau)` above.
    Huber {
        tau: f64,
    },
    /// `0` at zero, `1` everywhere else.
    Step,
}

impl MetricTransform {
    pub fn power(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 1.0) {
            return Err(Error::InvalidTransform(format!(
                "power exponent must exceed 1, got {rho}"
            )));
        }
        Ok(Self::Power { rho })
    }

    pub fn huber(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidTransform(format!(
                "huber threshold must be positive, got {tau}"
            )));
        }
        Ok(Self::Huber { tau })
    }

    /// Re-checks parameters of a value built with a struct literal.
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Power { rho } => Self::power(rho).map(|_| ()),
            Self::Huber { tau } => Self::huber(tau).map(|_| ()),
            Self::Linear | Self::Step => Ok(()),
        }
    }

    /// Applies the transform to a nonnegative severity.
    pub fn apply(&self, d: f64) -> f64 {
        debug_assert!(d >= 0.0, "severity must be nonnegative, got {d}");
        match *self {
            Self::Linear => d,
            Self::Power { rho } => d.powf(rho),
            Self::Huber { tau } => {
                if d <= tau {
                    d * d
                } else {
                    tau * (2.0 * d - tau)
                }
            }
            Self::Step => {
                if d == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

impl std::str::FromStr for MetricTransform {
    type Err = Error;

    /// Parses `linear`, `step`, `power:RHO` or `huber:TAU`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k.trim(), Some(p.trim())),
            None => (s, None),
        };
        let number = |p: Option<&str>| -> Result<f64> {
            p.ok_or_else(|| Error::InvalidTransform(format!("`{kind}` needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidTransform(format!("{s}: {e}")))
        };
        match kind {
            "linear" => Ok(Self::Linear),
            "step" => Ok(Self::Step),
            "power" => Self::power(number(param)?),
            "huber" => Self::huber(number(param)?),
            other => Err(Error::InvalidTransform(format!("unknown transform `{other}`"))),
        }
    }
}

/// Square table of nonnegative costs with a zero diagonal.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GroundMatrix {
    n: usize,
    costs: Vec<f64>,
}

impl GroundMatrix {
    /// Validates a row-major `n x n` table.
    pub fn new(n: usize, costs: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ground matrix needs at least one class"));
        }
        if costs.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: costs.len(),
            });
        }
        let mut costs = costs;
        for i in 0..n {
            for j in 0..n {
                let value = costs[i * n + j];
                if !value.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j, value });
                }
                if i == j {
                    if value.abs() > DIAGONAL_TOLERANCE {
                        return Err(Error::NonzeroDiagonal { index: i, value });
                    }
                    costs[i * n + j] = 0.0;
                } else if value < 0.0 {
                    return Err(Error::NegativeCost { row: i, col: j, value });
                }
            }
        }
        Ok(Self { n, costs })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut costs = Vec::with_capacity(n * n);
        for (row, r) in rows.into_iter().enumerate() {
            if r.len() != n {
                return Err(Error::NotSquare {
                    row,
                    len: r.len(),
                    expected: n,
                });
            }
            costs.extend(r);
        }
        Self::new(n, costs)
    }

    /// Uniform off-diagonal cost of one; optimal transport under it is half the
    /// l1 distance.
    pub fn step(n: usize) -> Self {
        build_severity_matrix(n, &[], 1.0).expect("fill of 1 is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.costs[i * self.n..(i + 1) * self.n]
    }

    /// Costs of every source class against target class `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.costs
    }

    pub fn max(&self) -> f64 {
        self.costs.iter().copied().fold(0.0, f64::max)
    }

    /// Mean over the off-diagonal entries.
    pub fn mean_off_diagonal(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.costs.iter().sum::<f64>() / (self.n * (self.n - 1)) as f64
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut costs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                costs[j * n + i] = self.costs[i * n + j];
            }
        }
        Self { n, costs }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Applies `f` entrywise. `f(0) = 0` keeps the diagonal zero.
    pub fn transformed(&self, f: &MetricTransform) -> Self {
        Self {
            n: self.n,
            costs: self.costs.iter().map(|&d| f.apply(d)).collect(),
        }
    }

    /// Writes the matrix as headerless CSV using shortest round-trip decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses headerless CSV, validating shape, sign and diagonal.
    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_csv_table(text)?;
        if rows.is_empty() {
            return Err(Error::Csv {
                line: 1,
                message: "empty table".into(),
            });
        }
        Self::from_rows(rows)
    }
}

/// Parses a headerless numeric CSV table, skipping blank lines.
pub fn parse_csv_table(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|e| Error::Csv {
                    line: lineno + 1,
                    message: format!("`{}`: {e}", cell.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn save_matrix(path: impl AsRef<Path>, matrix: &GroundMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix.to_csv()).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<GroundMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    GroundMatrix::from_csv(&text)
}

/// Builds a severity matrix from sparse off-diagonal entries; unspecified
/// off-diagonal cells take `fill`.
pub fn build_severity_matrix(n: usize, entries: &[(usize, usize, f64)], fill: f64) -> Result<GroundMatrix> {
    if !(fill.is_finite() && fill >= 0.0) {
        return Err(Error::invalid(format!("fill value must be nonnegative, got {fill}")));
    }
    let mut costs = vec![fill; n * n];
    for i in 0..n {
        costs[i * n + i] = 0.0;
    }
    for &(i, j, cost) in entries {
        if i >= n || j >= n {
            return Err(Error::IndexOutOfRange { row: i, col: j, n });
        }
        if i == j {
            return Err(Error::NonzeroDiagonal { index: i, value: cost });
        }
        if !cost.is_finite() || cost < 0.0 {
            return Err(Error::NegativeCost {
                row: i,
                col: j,
                value: cost,
            });
        }
        costs[i * n + j] = cost;
    }
    GroundMatrix::new(n, costs)
}

/// Class-importance groups: every class belongs to one group `1..=G` and
/// group `g` carries weight `weight_of[g - 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceGrouping {
    group_of: Vec<usize>,
    weight_of: Vec<f64>,
}

impl ImportanceGrouping {
    pub fn new(group_of: Vec<usize>, weight_of: Vec<f64>) -> Result<Self> {
        if group_of.is_empty() {
            return Err(Error::invalid("grouping has no classes"));
        }
        if weight_of.is_empty() {
            return Err(Error::invalid("grouping has no groups"));
        }
        for (k, &g) in group_of.iter().enumerate() {
            if g == 0 || g > weight_of.len() {
                return Err(Error::invalid(format!(
                    "class {k} has group {g}, expected 1..={}",
                    weight_of.len()
                )));
            }
        }
        for (g, &w) in weight_of.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!("group {} weight {w} is not positive", g + 1)));
            }
        }
        if weight_of.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::invalid("group weights must be nondecreasing in importance"));
        }
        Ok(Self { group_of, weight_of })
    }

    pub fn n(&self) -> usize {
        self.group_of.len()
    }

    pub fn group(&self, class: usize) -> usize {
        self.group_of[class]
    }

    pub fn class_weight(&self, class: usize) -> f64 {
        self.weight_of[self.group_of[class] - 1]
    }
}

/// Importance-weighted matrix: column `j` holds the weight of target class
/// `j` off the diagonal, so the one-hot loss is `w_j (1 - s_j)`.
pub fn build_importance_matrix(grouping: &ImportanceGrouping) -> GroundMatrix {
    let n = grouping.n();
    let mut costs = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                costs[i * n + j] = grouping.class_weight(j);
            }
        }
    }
    GroundMatrix::new(n, costs).expect("positive weights give a valid matrix")
}

/// Per-class feature centroids; `None` marks a class with no samples.
pub type Centroids = Vec<Option<Vec<f64>>>;

/// Scales a feature row to unit l2 norm; the zero row is left as is.
pub fn l2_normalize(row: &mut [f64]) {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        row.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Arithmetic mean of the feature rows of each class.
pub fn class_centroids<'a, I>(samples: I, n: usize, dim: usize) -> Result<Centroids>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    let mut sums = vec![vec![0.0; dim]; n];
    let mut counts = vec![0usize; n];
    for (row, label) in samples {
        if label >= n {
            return Err(Error::ClassOutOfRange { index: label, n });
        }
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        for (s, &v) in sums[label].iter_mut().zip(row) {
            *s += v;
        }
        counts[label] += 1;
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(sum, count)| (count > 0).then(|| sum.into_iter().map(|s| s / count as f64).collect()))
        .collect())
}

/// Symmetric table of pairwise centroid distances with missing entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    values: Vec<Option<f64>>,
}

impl DistanceTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.n + j]
    }
}

/// l1 distances between every pair of centroids.
pub fn centroid_distances(centroids: &[Option<Vec<f64>>]) -> DistanceTable {
    let n = centroids.len();
    let mut values = vec![None; n * n];
    for i in 0..n {
        let Some(a) = &centroids[i] else { continue };
        values[i * n + i] = Some(0.0);
        for j in (i + 1)..n {
            let Some(b) = &centroids[j] else { continue };
            let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
            values[i * n + j] = Some(d);
            values[j * n + i] = Some(d);
        }
    }
    DistanceTable { n, values }
}

/// Mixes the learned centroid distances with the predefined severities:
/// `D = (f(dbar) + alpha f(d)) / (1 + alpha)`. Entries whose centroid
/// distance is missing keep `f(d)`; the diagonal is forced to zero.
pub fn update_learned_matrix(
    predefined: &GroundMatrix,
    centroid_d: &DistanceTable,
    alpha: f64,
    f: &MetricTransform,
) -> Result<GroundMatrix> {
    let n = predefined.n();
    if centroid_d.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: centroid_d.n(),
        });
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be nonnegative, got {alpha}")));
    }
    let mut costs = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let prior = f.apply(predefined.get(i, j));
            costs[i * n + j] = match centroid_d.get(i, j) {
                Some(dbar) => (f.apply(dbar) + alpha * prior) / (1.0 + alpha),
                None => prior,
            };
        }
    }
    GroundMatrix::new(n, costs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_examples() {
        assert_eq!(MetricTransform::power(2.0).unwrap().apply(3.0), 9.0);
        let h = MetricTransform::huber(1.0).unwrap();
        assert_eq!(h.apply(0.5), 0.25);
        assert_eq!(h.apply(3.0), 5.0);
        assert_eq!(MetricTransform::Step.apply(0.0), 0.0);
        assert_eq!(MetricTransform::Step.apply(2.0), 1.0);
        assert_eq!(MetricTransform::Linear.apply(2.5), 2.5);
    }

    #[test]
    fn invalid_transform_parameters() {
        assert!(MetricTransform::power(1.0).is_err());
        assert!(MetricTransform::power(0.5).is_err());
        assert!(MetricTransform::huber(0.0).is_err());
        assert!(MetricTransform::huber(-1.0).is_err());
        assert!(MetricTransform::Power { rho: 1.0 }.validate().is_err());
    }

    #[test]
    fn transform_parsing() {
        assert_eq!("linear".parse::<MetricTransform>().unwrap(), MetricTransform::Linear);
        assert_eq!(
            "power:2".parse::<MetricTransform>().unwrap(),
            MetricTransform::Power { rho: 2.0 }
        );
        assert_eq!(
            "huber: 0.5".parse::<MetricTransform>().unwrap(),
            MetricTransform::Huber { tau: 0.5 }
        );
        assert!("power".parse::<MetricTransform>().is_err());
        assert!("cubic".parse::<MetricTransform>().is_err());
    }

    #[test]
    fn severity_matrix_keeps_asymmetry() {
        let (person, road) = (0, 1);
        let d = build_severity_matrix(3, &[(person, road, 5.0), (road, person, 1.0)], 1.0).unwrap();
        assert_eq!(d.get(person, road), 5.0);
        assert_eq!(d.get(road, person), 1.0);
        assert!(!d.is_symmetric());
    }

    #[test]
    fn severity_matrix_fill_and_errors() {
        let d = build_severity_matrix(4, &[], 1.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(d.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
        assert!(matches!(
            build_severity_matrix(4, &[(2, 2, 1.0)], 1.0),
            Err(Error::NonzeroDiagonal { index: 2, .. })
        ));
        assert!(matches!(
            build_severity_matrix(4, &[(0, 1, -1.0)], 1.0),
            Err(Error::NegativeCost { .. })
        ));
        assert!(matches!(
            build_severity_matrix(4, &[(0, 4, 1.0)], 1.0),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn importance_matrix_columns() {
        let g = ImportanceGrouping::new(vec![1, 2, 2], vec![1.0, 2.0]).unwrap();
        let d = build_importance_matrix(&g);
        assert_eq!(d.column(0), vec![0.0, 1.0, 1.0]);
        assert_eq!(d.column(1), vec![2.0, 0.0, 2.0]);
        assert_eq!(d.column(2), vec![2.0, 2.0, 0.0]);

        let flat = ImportanceGrouping::new(vec![1; 5], vec![1.0]).unwrap();
        assert_eq!(build_importance_matrix(&flat), GroundMatrix::step(5));
    }

    #[test]
    fn importance_grouping_validation() {
        assert!(ImportanceGrouping::new(vec![1, 3], vec![1.0, 2.0]).is_err());
        assert!(ImportanceGrouping::new(vec![1, 0], vec![1.0]).is_err());
        assert!(ImportanceGrouping::new(vec![1, 2], vec![2.0, 1.0]).is_err());
        assert!(ImportanceGrouping::new(vec![1, 2], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn centroids_and_missing_classes() {
        let a = [0.0, 0.0];
        let b = [2.0, 2.0];
        let c = [5.0, -1.0];
        let samples = [(&a[..], 0), (&b[..], 0), (&c[..], 1)];
        let cents = class_centroids(samples, 3, 2).unwrap();
        assert_eq!(cents[0], Some(vec![1.0, 1.0]));
        assert_eq!(cents[1], Some(vec![5.0, -1.0]));
        assert_eq!(cents[2], None);

        let dist = centroid_distances(&cents);
        assert_eq!(dist.get(0, 1), Some(4.0 + 2.0));
        assert_eq!(dist.get(1, 0), Some(6.0));
        assert_eq!(dist.get(0, 0), Some(0.0));
        assert_eq!(dist.get(2, 0), None);
        assert_eq!(dist.get(2, 2), None);
    }

    #[test]
    fn centroid_errors() {
        let r = [1.0];
        assert!(class_centroids([(&r[..], 3)], 3, 1).is_err());
        assert!(class_centroids([(&r[..], 0)], 3, 2).is_err());
    }

    #[test]
    fn centroid_distance_example() {
        let cents = vec![Some(vec![0.0, 0.0]), Some(vec![1.0, 3.0]), Some(vec![1.0, 3.0])];
        let d = centroid_distances(&cents);
        assert_eq!(d.get(0, 1), Some(4.0));
        assert_eq!(d.get(1, 2), Some(0.0));
    }

    #[test]
    fn learned_update_formula() {
        let predefined = GroundMatrix::from_rows(vec![vec![0.0, 1.1], vec![1.1, 0.0]]).unwrap();
        let cents = vec![Some(vec![0.0]), Some(vec![2.2])];
        let dbar = centroid_distances(&cents);
        let f = MetricTransform::Linear;
        let d = update_learned_matrix(&predefined, &dbar, 10.0, &f).unwrap();
        assert!((d.get(0, 1) - 1.2).abs() < 1e-12);
        let d0 = update_learned_matrix(&predefined, &dbar, 0.0, &f).unwrap();
        assert_eq!(d0.get(0, 1), 2.2);

        let same = centroid_distances(&[Some(vec![0.0]), Some(vec![1.1])]);
        let fixed = update_learned_matrix(&predefined, &same, 10.0, &f).unwrap();
        assert!((fixed.get(1, 0) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn learned_update_missing_and_mismatch() {
        let predefined = build_severity_matrix(3, &[(0, 2, 4.0)], 1.0).unwrap();
        let dbar = centroid_distances(&[Some(vec![0.0]), Some(vec![3.0]), None]);
        let f = MetricTransform::power(2.0).unwrap();
        let d = update_learned_matrix(&predefined, &dbar, 0.0, &f).unwrap();
        assert_eq!(d.get(0, 2), 16.0);
        assert_eq!(d.get(2, 1), 1.0);
        assert_eq!(d.get(0, 1), 9.0);

        let small = centroid_distances(&[Some(vec![0.0]), Some(vec![1.0])]);
        assert!(update_learned_matrix(&predefined, &small, 1.0, &f).is_err());
        assert!(update_learned_matrix(&predefined, &dbar, -1.0, &f).is_err());
    }

    #[test]
    fn csv_validation() {
        assert!(matches!(
            GroundMatrix::from_csv("0,1,2\n1,0,2\n"),
            Err(Error::NotSquare { .. })
        ));
        match GroundMatrix::from_csv("0,1\n-2,0\n") {
            Err(Error::NegativeCost { row, col, .. }) => assert_eq!((row, col), (1, 0)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            GroundMatrix::from_csv("0.5,1\n1,0\n"),
            Err(Error::NonzeroDiagonal { index: 0, .. })
        ));
        assert!(matches!(
            GroundMatrix::from_csv("0,x\n1,0\n"),
            Err(Error::Csv { line: 1, .. })
        ));
        assert!(GroundMatrix::from_csv("").is_err());
        // within tolerance is clamped to exactly zero
        let m = GroundMatrix::from_csv("1e-13,1\n1,0\n").unwrap();
        assert_eq!(m.get(0, 0), 0.0);
    }
}
