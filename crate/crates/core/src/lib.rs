//! Quantitative coarse-geometry toolkit for block operators over finite
//! metric spaces: propagation and quasi-locality analysis, sign selection,
//! concentration witnesses, extraction of coarse equivalences from unitaries,
//! and covering unitaries.

pub mod coarse_maps;
pub mod covering;
pub mod concentration;
pub mod error;
pub mod extraction;
pub mod format;
pub mod linalg;
pub mod locality;
pub mod metric_space;
pub mod operators;
pub mod scenario;
pub mod signs;

pub use coarse_maps::{certify_equivalence, closeness, control_modulus, CoarseMap, EquivalenceReport};
pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
pub use metric_space::{FiniteMetricSpace, PointSet};
pub use operators::{indicator, random_band_unitary, BlockOperator, FiberedSpace};
pub use covering::{covering_unitary, outer_roundtrip, upgrade_trick, CoveringPlan, UpgradeResult};
pub use scenario::{run, Scenario};
