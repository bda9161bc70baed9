use crate::error::{Error, Result};

/// Tolerance on the total mass of a normalized histogram.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Nonnegative mass over `N` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    mass: Vec<f64>,
}

impl Histogram {
    /// Builds a normalized histogram; total mass must be within 1e-6 of one.
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        let h = Self::unnormalized(mass)?;
        let total = h.total();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidHistogram(format!("total mass {total} is not 1")));
        }
        Ok(h)
    }

    /// Builds a histogram without the unit-mass check.
    pub fn unnormalized(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidHistogram("no classes".into()));
        }
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidHistogram(format!("entry {i} is {m}")));
            }
        }
        Ok(Self { mass })
    }

    /// Histogram with all mass on `class`.
    pub fn onehot(n: usize, class: usize) -> Result<Self> {
        if class >= n {
            return Err(Error::ClassOutOfRange { index: class, n });
        }
        let mut mass = vec![0.0; n];
        mass[class] = 1.0;
        Ok(Self { mass })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Rescales positive mass to total one.
    pub fn normalized(mass: Vec<f64>) -> Result<Self> {
        let h = Self::unnormalized(mass)?;
        let total = h.total();
        if total <= 0.0 {
            return Err(Error::InvalidHistogram("zero total mass".into()));
        }
        Ok(Self {
            mass: h.mass.into_iter().map(|m| m / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mass
    }

    /// Index of the largest entry; lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.mass.iter().enumerate() {
            if m > self.mass[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.mass[self.argmax()]
    }

    /// `Some(j)` when all mass sits on class `j`.
    pub fn onehot_class(&self) -> Option<usize> {
        let j = self.argmax();
        let others_zero = self.mass.iter().enumerate().all(|(i, &m)| i == j || m == 0.0);
        (others_zero && self.mass[j] > 0.0).then_some(j)
    }
}

impl std::ops::Index<usize> for Histogram {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.mass[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_unnormalized() {
        assert!(Histogram::new(vec![0.5, -0.1, 0.6]).is_err());
        assert!(Histogram::new(vec![0.5, 0.6]).is_err());
        assert!(Histogram::unnormalized(vec![0.5, 0.6]).is_ok());
        assert!(Histogram::new(vec![]).is_err());
    }

    #[test]
    fn onehot_detection() {
        let h = Histogram::onehot(4, 2).unwrap();
        assert_eq!(h.onehot_class(), Some(2));
        let s = Histogram::new(vec![0.1, 0.9]).unwrap();
        assert_eq!(s.onehot_class(), None);
        assert!(Histogram::onehot(3, 3).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        let h = Histogram::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(h.argmax(), 0);
    }
}
