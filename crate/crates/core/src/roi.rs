//! Stage-2 ABM supervision: crop the image ABM by a RoI, resample it to the
//! mask-head output size and compare with the predicted map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::ScalarMap;
use crate::resize::{sample, Tap};
use crate::Reduction;

/// Default mask-head output size `W_b x H_b`.
pub const DEFAULT_MASK_SIZE: (usize, usize) = (28, 28);

/// RoI in continuous ABM-map coordinates; pixel `i` spans `[i, i + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl RoiBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) || x2 <= x1 || y2 <= y1 {
            return Err(Error::validation(format!(
                "RoI ({x1}, {y1}, {x2}, {y2}) must be finite with x2 > x1 and y2 > y1"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    fn intersects(&self, width: usize, height: usize) -> bool {
        self.x1 < width as f64 && self.x2 > 0.0 && self.y1 < height as f64 && self.y2 > 0.0
    }
}

/// `ABM^RoI`: bilinear samples of `abm` on an `out_width x out_height` grid
/// covering the RoI. Sample `i` sits at `x1 + (i + 0.5) * (x2 - x1) / W_b`,
/// shifted by half a pixel into index space and clamped at the map edge.
pub fn crop_resize_abm(
    abm: &ScalarMap,
    roi: &RoiBox,
    out_width: usize,
    out_height: usize,
) -> Result<ScalarMap> {
    if out_width == 0 || out_height == 0 {
        return Err(Error::validation(format!(
            "RoI output must be at least 1x1, got {out_width}x{out_height}"
        )));
    }
    if !roi.intersects(abm.width(), abm.height()) {
        return Err(Error::validation(format!(
            "RoI ({}, {}, {}, {}) does not intersect the {}x{} map",
            roi.x1,
            roi.y1,
            roi.x2,
            roi.y2,
            abm.width(),
            abm.height()
        )));
    }
    let taps = |lo: f64, hi: f64, n: usize, len: usize| -> Vec<Tap> {
        let step = (hi - lo) / n as f64;
        (0..n)
            .map(|i| Tap::at(lo + (i as f64 + 0.5) * step - 0.5, len))
            .collect()
    };
    let xs = taps(roi.x1, roi.x2, out_width, abm.width());
    let ys = taps(roi.y1, roi.y2, out_height, abm.height());
    ScalarMap::from_fn(out_width, out_height, |x, y| sample(abm, xs[x], ys[y]))
}

/// Squared-error loss between the predicted and target RoI maps.
///
/// [`Reduction::Mean`] is the usual choice here so the loss does not scale
/// with the mask-head size.
pub fn abm_loss(pred: &ScalarMap, target: &ScalarMap, reduction: Reduction) -> Result<f64> {
    pred.ensure_same_dims(target, "abm_loss")?;
    let total: f64 = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(&p, &t)| {
            let d = f64::from(p) - f64::from(t);
            d * d
        })
        .sum();
    Ok(reduction.apply(total, pred.len()))
}
