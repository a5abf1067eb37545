//! Entropy-transport and heat-flow inequalities on finite metric-measure spaces.
//!
//! The crate computes p-Hellinger, Kantorovich-Wasserstein and
//! Hellinger-Kantorovich distances between measures on a finite space,
//! evolves them under a reversible Markov heat semigroup, and numerically
//! checks the contraction and curvature inequalities relating them.

pub mod divergences;
pub mod error;
pub mod heat;
pub mod gaussian;
pub mod hk;
pub mod quad;
pub mod space;
pub mod transport;
pub mod verify;

pub use error::{Error, MetricViolation, Result};
pub use space::{lebesgue_decompose, DiscreteMeasure, LebesgueDecomposition, MetricMeasureSpace};
