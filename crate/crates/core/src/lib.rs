//! Severity-aware optimal transport over class histograms.
//!
//! A prediction is a histogram `s` over `N` classes and a label is a target
//! histogram `t`. The loss is the cost of the cheapest transport plan that
//! moves the mass of `s` onto `t`, where moving a unit of mass from class `i`
//! to class `j` costs `D[i][j]`. Choosing `D` to encode how bad each mistake
//! is turns the loss into a severity-aware training signal.
//!
//! Orientation used throughout the crate: row `i` of a [`GroundMatrix`] is the
//! *source* (predicted) class and column `j` is the *target* (true) class.
//!
//! ```
//! use sevot::{GroundMatrix, Histogram, ot};
//!
//! // truth is class 1; predicting class 2 instead is five times worse than class 0
//! let d = GroundMatrix::from_rows(vec![
//!     vec![0.0, 1.0, 1.0],
//!     vec![1.0, 0.0, 1.0],
//!     vec![1.0, 5.0, 0.0],
//! ]).unwrap();
//! let a = Histogram::new(vec![0.4, 0.6, 0.0]).unwrap();
//! let b = Histogram::new(vec![0.0, 0.6, 0.4]).unwrap();
//! let la = ot::onehot_wasserstein(&a, 1, &d).unwrap().cost;
//! let lb = ot::onehot_wasserstein(&b, 1, &d).unwrap().cost;
//! assert!((la - 0.4).abs() < 1e-12);
//! assert!((lb - 2.0).abs() < 1e-12);
//! ```

pub mod error;
pub mod ground;
pub mod histogram;
pub mod metrics;
pub mod ot;

pub use error::{Error, Result};
pub use ground::{GroundMatrix, ImportanceGrouping, MetricTransform};
pub use histogram::Histogram;
