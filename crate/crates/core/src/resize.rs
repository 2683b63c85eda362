//! Bilinear resampling between input resolution and the feature grid.
//!
//! Output pixel `i` samples the source at `(i + 0.5) * scale - 0.5` with
//! `scale = in / out`, clamped to the valid source range. Results never
//! leave the range spanned by the four neighbouring source values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::ScalarMap;

/// Input image size, network output stride `R` and anchor class count `A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub image_width: usize,
    pub image_height: usize,
    pub stride: usize,
    #[serde(default = "one")]
    pub anchor_classes: usize,
}

fn one() -> usize {
    1
}

impl GridSpec {
    pub fn new(image_width: usize, image_height: usize, stride: usize) -> Result<Self> {
        let g = Self {
            image_width,
            image_height,
            stride,
            anchor_classes: 1,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::validation("image dimensions must be positive"));
        }
        if self.stride == 0 || self.anchor_classes == 0 {
            return Err(Error::validation(format!(
                "stride and anchor classes must be >= 1, got {} and {}",
                self.stride, self.anchor_classes
            )));
        }
        Ok(())
    }

    /// Feature-grid size `(ceil(W / R), ceil(H / R))`.
    pub fn feature_dims(&self) -> (usize, usize) {
        (
            self.image_width.div_ceil(self.stride),
            self.image_height.div_ceil(self.stride),
        )
    }
}

/// Source sample position and blend weight along one axis.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Tap {
    pub lo: usize,
    pub hi: usize,
    pub t: f64,
}

impl Tap {
    /// Tap for continuous source index `pos`, clamped to `[0, len - 1]`.
    pub(crate) fn at(pos: f64, len: usize) -> Self {
        let pos = pos.clamp(0.0, (len - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(len - 1);
        Self {
            lo,
            hi,
            t: pos - lo as f64,
        }
    }
}

fn axis_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| Tap::at((i as f64 + 0.5) * scale - 0.5, in_len))
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Bilinear sample at the given taps, bounded by the four source values.
#[inline]
pub(crate) fn sample(map: &ScalarMap, tx: Tap, ty: Tap) -> f32 {
    let v00 = f64::from(map.get(tx.lo, ty.lo));
    let v10 = f64::from(map.get(tx.hi, ty.lo));
    let v01 = f64::from(map.get(tx.lo, ty.hi));
    let v11 = f64::from(map.get(tx.hi, ty.hi));
    let top = lerp(v00, v10, tx.t);
    let bottom = lerp(v01, v11, tx.t);
    let lo = v00.min(v10).min(v01).min(v11);
    let hi = v00.max(v10).max(v01).max(v11);
    lerp(top, bottom, ty.t).clamp(lo, hi) as f32
}

/// Resizes `map` to `out_width x out_height` with half-pixel bilinear sampling.
pub fn resize_linear(map: &ScalarMap, out_width: usize, out_height: usize) -> Result<ScalarMap> {
    if out_width == 0 || out_height == 0 {
        return Err(Error::validation(format!(
            "resize target must be at least 1x1, got {out_width}x{out_height}"
        )));
    }
    if map.dims() == (out_width, out_height) {
        return Ok(map.clone());
    }
    let xs = axis_taps(map.width(), out_width);
    let ys = axis_taps(map.height(), out_height);
    ScalarMap::from_fn(out_width, out_height, |x, y| sample(map, xs[x], ys[y]))
}

/// `BM^r`: the image-resolution map resized onto the feature grid.
///
/// The same grid is shared by all anchor classes.
pub fn to_feature_grid(map: &ScalarMap, grid: &GridSpec) -> Result<ScalarMap> {
    grid.validate()?;
    if map.dims() != (grid.image_width, grid.image_height) {
        return Err(Error::validation(format!(
            "map is {}x{} but grid expects {}x{}",
            map.width(),
            map.height(),
            grid.image_width,
            grid.image_height
        )));
    }
    let (w, h) = grid.feature_dims();
    resize_linear(map, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_constant() {
        let m = ScalarMap::from_fn(5, 3, |x, y| (x * 7 + y) as f32 / 40.0).unwrap();
        assert_eq!(resize_linear(&m, 5, 3).unwrap(), m);

        let c = ScalarMap::filled(7, 5, 0.37).unwrap();
        for (w, h) in [(1, 1), (3, 2), (14, 10), (9, 13)] {
            let r = resize_linear(&c, w, h).unwrap();
            assert!(r.values().iter().all(|&v| v == 0.37));
        }
    }

    #[test]
    fn zero_output_rejected() {
        let m = ScalarMap::zeros(4, 4).unwrap();
        assert!(resize_linear(&m, 0, 4).is_err());
        assert!(resize_linear(&m, 4, 0).is_err());
    }

    #[test]
    fn upsample_two_columns() {
        // half-pixel positions for 2 -> 4: -0.25, 0.25, 0.75, 1.25
        let m = ScalarMap::from_vec(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = resize_linear(&m, 4, 4).unwrap();
        for y in 0..4 {
            assert_eq!(r.row(y), &[0.0, 0.25, 0.75, 1.0]);
        }
    }

    #[test]
    fn feature_grid_shapes() {
        let g = GridSpec::new(64, 64, 16).unwrap();
        assert_eq!(g.feature_dims(), (4, 4));
        let g = GridSpec::new(65, 63, 16).unwrap();
        assert_eq!(g.feature_dims(), (5, 4));
        assert!(GridSpec::new(64, 64, 0).is_err());

        let m = ScalarMap::from_fn(64, 64, |x, y| ((x + y) % 3) as f32 / 2.0).unwrap();
        let g1 = GridSpec::new(64, 64, 1).unwrap();
        assert_eq!(to_feature_grid(&m, &g1).unwrap(), m);
        let g16 = GridSpec::new(64, 64, 16).unwrap();
        assert_eq!(to_feature_grid(&m, &g16).unwrap().dims(), (4, 4));
        let wrong = GridSpec::new(32, 64, 16).unwrap();
        assert!(to_feature_grid(&m, &wrong).is_err());
    }

    proptest! {
        #[test]
        fn output_within_input_range(
            w in 1usize..20, h in 1usize..20, ow in 1usize..30, oh in 1usize..30,
            seed in prop::collection::vec(0.0f32..1.0, 400),
        ) {
            let m = ScalarMap::from_fn(w, h, |x, y| seed[y * 20 + x]).unwrap();
            let (lo, hi) = m.min_max();
            let r = resize_linear(&m, ow, oh).unwrap();
            let (rlo, rhi) = r.min_max();
            prop_assert!(rlo >= lo && rhi <= hi);
        }
    }
}
