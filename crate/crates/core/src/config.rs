use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::{AnchorConfig, TargetParams};
use crate::bm::AlphaPolicy;
use crate::error::{Error, Result};
use crate::eval::{FrocMode, DEFAULT_EVAL_IOU, DEFAULT_FPPI_POINTS};
use crate::roi::DEFAULT_MASK_SIZE;
use crate::Reduction;

/// Every tunable of a run. Missing keys in a config file fall back to the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Feature-grid stride `R`.
    pub stride: usize,
    pub anchor_classes: usize,
    /// Positive anchor boundary value `B`.
    pub boundary: f64,
    /// Boxes below this area select positives at 0.5 instead of `boundary`.
    pub small_box_area: f64,
    pub min_background: usize,
    pub a_small: f64,
    pub a_medium: f64,
    /// `(small, medium, large)` slope ratios.
    pub alphas: [f64; 3],
    pub anchor_sizes: Vec<(f64, f64)>,
    pub baseline_iou: f64,
    pub eval_iou: f64,
    pub fppi_points: Vec<f64>,
    pub froc_mode: FrocMode,
    pub objectness_reduction: Reduction,
    pub abm_reduction: Reduction,
    pub seed: u64,
    pub mask_width: usize,
    pub mask_height: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let alpha = AlphaPolicy::default();
        let targets = TargetParams::default();
        let anchors = AnchorConfig::default();
        Self {
            stride: 8,
            anchor_classes: 1,
            boundary: targets.boundary,
            small_box_area: targets.small_box_area,
            min_background: targets.min_background,
            a_small: alpha.a_small,
            a_medium: alpha.a_medium,
            alphas: [alpha.alpha_small, alpha.alpha_medium, alpha.alpha_large],
            anchor_sizes: anchors.sizes,
            baseline_iou: anchors.iou_threshold,
            eval_iou: DEFAULT_EVAL_IOU,
            fppi_points: DEFAULT_FPPI_POINTS.to_vec(),
            froc_mode: FrocMode::Step,
            objectness_reduction: Reduction::Sum,
            abm_reduction: Reduction::Mean,
            seed: 0,
            mask_width: DEFAULT_MASK_SIZE.0,
            mask_height: DEFAULT_MASK_SIZE.1,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }

    pub fn alpha_policy(&self) -> AlphaPolicy {
        AlphaPolicy {
            a_small: self.a_small,
            a_medium: self.a_medium,
            alpha_small: self.alphas[0],
            alpha_medium: self.alphas[1],
            alpha_large: self.alphas[2],
        }
    }

    pub fn target_params(&self) -> TargetParams {
        TargetParams {
            boundary: self.boundary,
            small_box_area: self.small_box_area,
            min_background: self.min_background,
        }
    }

    pub fn anchor_config(&self) -> AnchorConfig {
        AnchorConfig {
            sizes: self.anchor_sizes.clone(),
            iou_threshold: self.baseline_iou,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.anchor_classes == 0 {
            return Err(Error::validation("stride and anchor_classes must be >= 1"));
        }
        if self.mask_width == 0 || self.mask_height == 0 {
            return Err(Error::validation("mask dimensions must be >= 1"));
        }
        if !(self.eval_iou > 0.0 && self.eval_iou < 1.0) {
            return Err(Error::validation(format!(
                "eval_iou must lie in (0, 1), got {}",
                self.eval_iou
            )));
        }
        if self.fppi_points.is_empty()
            || self
                .fppi_points
                .iter()
                .any(|p| !(*p > 0.0 && p.is_finite()))
        {
            return Err(Error::validation(
                "fppi_points must be a non-empty list of positive values",
            ));
        }
        self.alpha_policy().validate()?;
        self.target_params().validate()?;
        self.anchor_config().validate()
    }
}
