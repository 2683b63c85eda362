//! Bounding-map generation.
//!
//! For every ground-truth box an axis map is drawn on an all-zero grid: inside
//! the box the value decays linearly from 1 at the centre line, with slope
//! `alpha * k` where `k = 1 / extent`. With `alpha = 1` the box edges sit at
//! 0.5. Per-axis maps of all boxes are summed and capped at 1, and the two
//! axes are merged with a per-pixel geometric mean into `BM_xy`.
//!
//! The size-adaptive variant (`ABM_xy`) uses the same pipeline with a per-box
//! `alpha` picked from the box area by an [`AlphaPolicy`].
//!
//! Pixel `(x, y)` is the integer coordinate itself: it belongs to a box when
//! `x1 <= x <= x2` and `y1 <= y <= y2`. Box areas are in square input pixels.

use serde::{Deserialize, Serialize};

use crate::boxes::GtBox;
use crate::error::{Error, Result};
use crate::map::ScalarMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Area-dependent slope ratio for size-adaptive maps.
///
/// Small boxes (`area < a_small`) get `alpha_small`, medium boxes
/// (`a_small <= area < a_medium`) get `alpha_medium`, everything larger
/// gets `alpha_large`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaPolicy {
    pub a_small: f64,
    pub a_medium: f64,
    pub alpha_small: f64,
    pub alpha_medium: f64,
    pub alpha_large: f64,
}

impl Default for AlphaPolicy {
    fn default() -> Self {
        Self {
            a_small: 250.0,
            a_medium: 1000.0,
            alpha_small: 0.0,
            alpha_medium: 1.0,
            alpha_large: 1.4,
        }
    }
}

impl AlphaPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_small > 0.0 && self.a_small < self.a_medium && self.a_medium.is_finite()) {
            return Err(Error::validation(format!(
                "alpha policy needs 0 < a_small < a_medium, got {} and {}",
                self.a_small, self.a_medium
            )));
        }
        for a in [self.alpha_small, self.alpha_medium, self.alpha_large] {
            check_alpha(a)?;
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::validation(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    Ok(())
}

/// Inclusive integer pixel range `[ceil(lo), floor(hi)]` clipped to `0..len`.
pub(crate) fn pixel_span(lo: f64, hi: f64, len: usize) -> Option<(usize, usize)> {
    let first = lo.ceil().max(0.0);
    let last = hi.floor().min(len as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

/// Axis map of a single box: `1 - alpha * k * |coord - centre|` inside the
/// box, 0 outside. Values that would go negative for large `alpha` are
/// clamped to 0.
pub fn axis_map(
    gt: &GtBox,
    map_width: usize,
    map_height: usize,
    axis: Axis,
    alpha: f64,
) -> Result<ScalarMap> {
    let mut map = ScalarMap::zeros(map_width, map_height)?;
    gt.check_within(map_width as f64, map_height as f64)?;
    check_alpha(alpha)?;

    let (Some((xa, xb)), Some((ya, yb))) = (
        pixel_span(gt.x1(), gt.x2(), map_width),
        pixel_span(gt.y1(), gt.y2(), map_height),
    ) else {
        return Ok(map);
    };

    let (slope, centre) = match axis {
        Axis::X => (gt.slope_x(), gt.x_center()),
        Axis::Y => (gt.slope_y(), gt.y_center()),
    };
    let value = |c: usize| (1.0 - alpha * slope * (c as f64 - centre).abs()).max(0.0) as f32;

    for y in ya..=yb {
        for x in xa..=xb {
            let v = match axis {
                Axis::X => value(x),
                Axis::Y => value(y),
            };
            map.set(x, y, v);
        }
    }
    Ok(map)
}

/// Element-wise sum of per-box maps, capped at 1.
pub fn aggregate(maps: &[ScalarMap]) -> Result<ScalarMap> {
    let (first, rest) = maps
        .split_first()
        .ok_or_else(|| Error::validation("aggregate needs at least one map"))?;
    let mut out = first.clone();
    for m in rest {
        out.ensure_same_dims(m, "aggregate")?;
        for (o, &v) in out.values_mut().iter_mut().zip(m.values()) {
            *o += v;
        }
    }
    for o in out.values_mut() {
        *o = o.min(1.0);
    }
    Ok(out)
}

/// Per-pixel geometric mean `sqrt(mx * my)` of the two axis maps.
pub fn combine_xy(mx: &ScalarMap, my: &ScalarMap) -> Result<ScalarMap> {
    mx.ensure_same_dims(my, "combine_xy")?;
    let values = mx
        .values()
        .iter()
        .zip(my.values())
        .map(|(&a, &b)| (f64::from(a) * f64::from(b)).sqrt() as f32)
        .collect();
    ScalarMap::from_vec(mx.width(), mx.height(), values)
}

/// Slope ratio for a box of the given area (square input pixels).
pub fn alpha_for_area(area: f64, policy: &AlphaPolicy) -> Result<f64> {
    if !(area > 0.0 && area.is_finite()) {
        return Err(Error::validation(format!(
            "box area must be positive, got {area}"
        )));
    }
    Ok(if area < policy.a_small {
        policy.alpha_small
    } else if area < policy.a_medium {
        policy.alpha_medium
    } else {
        policy.alpha_large
    })
}

/// `BM_xy` of a single box with a fixed `alpha`.
pub fn box_map(gt: &GtBox, map_width: usize, map_height: usize, alpha: f64) -> Result<ScalarMap> {
    let mx = axis_map(gt, map_width, map_height, Axis::X, alpha)?;
    let my = axis_map(gt, map_width, map_height, Axis::Y, alpha)?;
    combine_xy(&mx, &my)
}

/// Image-level map for all boxes.
///
/// Without a policy every box uses `alpha = 1` and the result is `BM_xy`;
/// with a policy each box gets its own `alpha` and the result is `ABM_xy`.
/// An empty box list yields an all-zero map.
pub fn generate_map(
    boxes: &[GtBox],
    map_width: usize,
    map_height: usize,
    policy: Option<&AlphaPolicy>,
) -> Result<ScalarMap> {
    if let Some(p) = policy {
        p.validate()?;
    }
    if boxes.is_empty() {
        return ScalarMap::zeros(map_width, map_height);
    }

    let mut xs = Vec::with_capacity(boxes.len());
    let mut ys = Vec::with_capacity(boxes.len());
    for gt in boxes {
        let alpha = match policy {
            Some(p) => alpha_for_area(gt.area(), p)?,
            None => 1.0,
        };
        xs.push(axis_map(gt, map_width, map_height, Axis::X, alpha)?);
        ys.push(axis_map(gt, map_width, map_height, Axis::Y, alpha)?);
    }
    combine_xy(&aggregate(&xs)?, &aggregate(&ys)?)
}
