use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `(x1, y1, x2, y2)` in continuous input-pixel coordinates.
///
/// Construction enforces `x2 > x1`, `y2 > y1` and finite corners, so the
/// slopes `1/(x2-x1)`, `1/(y2-y1)` are always positive and finite. Image
/// bounds are checked separately with [`GtBox::check_within`] because
/// anchors are allowed to cross the image border.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct GtBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl GtBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::validation(format!(
                "box ({x1}, {y1}, {x2}, {y2}) has non-finite coordinates"
            )));
        }
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::validation(format!(
                "box ({x1}, {y1}, {x2}, {y2}) must satisfy x2 > x1 and y2 > y1"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Box of size `width x height` centred on `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            cx - width / 2.0,
            cy - height / 2.0,
            cx + width / 2.0,
            cy + height / 2.0,
        )
    }

    /// Fails unless the box lies inside `[0, width] x [0, height]`.
    pub fn check_within(&self, width: f64, height: f64) -> Result<()> {
        let inside = self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height;
        if !inside {
            return Err(Error::validation(format!(
                "box ({}, {}, {}, {}) exceeds image bounds {width}x{height}",
                self.x1, self.y1, self.x2, self.y2
            )));
        }
        Ok(())
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn x_center(&self) -> f64 {
        (self.x1 + self.x2) / 2.0
    }

    pub fn y_center(&self) -> f64 {
        (self.y1 + self.y2) / 2.0
    }

    /// Horizontal slope `k_x = 1 / (x2 - x1)`.
    pub fn slope_x(&self) -> f64 {
        1.0 / self.width()
    }

    /// Vertical slope `k_y = 1 / (y2 - y1)`.
    pub fn slope_y(&self) -> f64 {
        1.0 / self.height()
    }

    /// Area in square input pixels.
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl TryFrom<[f64; 4]> for GtBox {
    type Error = Error;

    fn try_from([x1, y1, x2, y2]: [f64; 4]) -> Result<Self> {
        GtBox::new(x1, y1, x2, y2)
    }
}

impl From<GtBox> for [f64; 4] {
    fn from(b: GtBox) -> Self {
        b.as_array()
    }
}

/// Intersection over union; 0 for disjoint or edge-touching boxes.
pub fn iou(a: &GtBox, b: &GtBox) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
