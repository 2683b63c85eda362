//! Bounding-map (BM) and size-adaptive bounding-map (ABM) supervision for
//! two-stage lesion detectors.
//!
//! The crate covers the target side of training only:
//!
//! - [`bm`]: per-box axis maps, aggregation across boxes and the final
//!   `BM_xy` / `ABM_xy` image map.
//! - [`resize`]: half-pixel bilinear resampling onto the feature grid (`BM^r`).
//! - [`anchors`]: foreground/background partition, balanced background
//!   sampling, objectness BCE, BM-thresholded positive anchors, regression
//!   loss aggregation and the IoU-baseline anchor matcher.
//! - [`roi`]: RoI crop-and-resize of the ABM and its L2 loss.
//! - [`eval`]: greedy detection matching and sensitivity at fixed
//!   false positives per image (FROC).
//! - [`io`], [`config`], [`cli`]: file formats, run configuration and the
//!   `bmc` command line.

pub mod anchors;
pub mod bm;
pub mod boxes;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod map;
pub mod resize;
pub mod roi;

pub use anchors::{Cell, PixelSet, SupervisionTarget};
pub use bm::{AlphaPolicy, Axis};
pub use boxes::GtBox;
pub use config::RunConfig;
pub use error::{Error, Result};
pub use map::ScalarMap;
pub use resize::GridSpec;

/// How per-pixel loss terms are reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

impl Reduction {
    pub(crate) fn apply(self, total: f64, count: usize) -> f64 {
        match self {
            Reduction::Sum => total,
            Reduction::Mean if count == 0 => 0.0,
            Reduction::Mean => total / count as f64,
        }
    }
}
