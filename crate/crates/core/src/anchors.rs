//! Stage-1 conditioning on the feature-grid bounding map `BM^r`.
//!
//! The objectness branch is trained per pixel against `BM^r`: cells with
//! `BM^r >= 0.5` are foreground, the rest background, and background is
//! subsampled to at most twice the foreground count. Regression uses positive
//! anchor locations picked by thresholding each box's own resized map.
//!
//! [`iou_positive_counts`] is the conventional IoU matcher, kept to measure
//! how few positives it yields on small lesions.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bm::{box_map, generate_map};
use crate::boxes::{iou, GtBox};
use crate::error::{Error, Result};
use crate::map::ScalarMap;
use crate::resize::{to_feature_grid, GridSpec};
use crate::Reduction;

/// Foreground threshold on `BM^r`.
pub const FOREGROUND_THRESHOLD: f32 = 0.5;

/// Probability floor inside the BCE logarithms.
pub const BCE_EPS: f64 = 1e-12;

/// Integer feature-grid location. Ordered row-major (`y`, then `x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl From<[u32; 2]> for Cell {
    fn from([x, y]: [u32; 2]) -> Self {
        Cell { x, y }
    }
}

impl From<Cell> for [u32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

/// Set of grid cells, kept sorted row-major without duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Cell>", into = "Vec<Cell>")]
pub struct PixelSet {
    cells: Vec<Cell>,
}

impl PixelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cells(mut cells: Vec<Cell>) -> Self {
        cells.sort_unstable();
        cells.dedup();
        Self { cells }
    }

    /// Cells of `map` whose value satisfies `keep`, in row-major order.
    pub fn from_map(map: &ScalarMap, mut keep: impl FnMut(f32) -> bool) -> Self {
        let w = map.width();
        let cells = map
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &v)| keep(v))
            .map(|(i, _)| Cell::new((i % w) as u32, (i / w) as u32))
            .collect();
        Self { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().copied()
    }

    pub fn as_slice(&self) -> &[Cell] {
        &self.cells
    }

    pub fn union(&self, other: &PixelSet) -> PixelSet {
        let mut cells = Vec::with_capacity(self.len() + other.len());
        let (mut a, mut b) = (self.cells.iter().peekable(), other.cells.iter().peekable());
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(&&x), Some(&&y)) => {
                    if x <= y {
                        a.next();
                        if x == y {
                            b.next();
                        }
                        x
                    } else {
                        b.next();
                        y
                    }
                }
                (Some(&&x), None) => {
                    a.next();
                    x
                }
                (None, Some(&&y)) => {
                    b.next();
                    y
                }
                (None, None) => break,
            };
            cells.push(next);
        }
        PixelSet { cells }
    }

    pub fn is_disjoint(&self, other: &PixelSet) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().all(|c| !large.contains(c))
    }

    pub fn is_subset(&self, other: &PixelSet) -> bool {
        self.iter().all(|c| other.contains(c))
    }
}

impl From<Vec<Cell>> for PixelSet {
    fn from(cells: Vec<Cell>) -> Self {
        PixelSet::from_cells(cells)
    }
}

impl From<PixelSet> for Vec<Cell> {
    fn from(s: PixelSet) -> Self {
        s.cells
    }
}

impl FromIterator<Cell> for PixelSet {
    fn from_iter<I: IntoIterator<Item = Cell>>(iter: I) -> Self {
        PixelSet::from_cells(iter.into_iter().collect())
    }
}

/// Splits `BM^r` into foreground (`>= 0.5`) and background cells.
pub fn partition_pixels(bm_r: &ScalarMap) -> Result<(PixelSet, PixelSet)> {
    bm_r.ensure_unit_range("partition_pixels")?;
    let fg = PixelSet::from_map(bm_r, |v| v >= FOREGROUND_THRESHOLD);
    let bg = PixelSet::from_map(bm_r, |v| v < FOREGROUND_THRESHOLD);
    Ok((fg, bg))
}

/// Uniformly samples `min(max(2 * N_f, min_background), |S_b|)` background
/// cells without replacement, drawing from `rng`.
///
/// `min_background = 0` gives the strict behaviour where lesion-free images
/// contribute no training pixels.
pub fn sample_background_with<R: Rng + ?Sized>(
    foreground: &PixelSet,
    background: &PixelSet,
    min_background: usize,
    rng: &mut R,
) -> Result<PixelSet> {
    if !foreground.is_disjoint(background) {
        return Err(Error::validation("foreground and background sets overlap"));
    }
    let quota = (2 * foreground.len())
        .max(min_background)
        .min(background.len());
    let picked = rand::seq::index::sample(rng, background.len(), quota);
    Ok(picked.iter().map(|i| background.as_slice()[i]).collect())
}

/// [`sample_background_with`] on a ChaCha8 generator seeded with `seed`.
pub fn sample_background(
    foreground: &PixelSet,
    background: &PixelSet,
    min_background: usize,
    seed: u64,
) -> Result<PixelSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_background_with(foreground, background, min_background, &mut rng)
}

/// Knobs for target construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    /// Positive anchor boundary value `B`.
    pub boundary: f64,
    /// Boxes below this area (square input pixels) select positives at 0.5
    /// instead of `boundary`.
    pub small_box_area: f64,
    pub min_background: usize,
}

impl Default for TargetParams {
    fn default() -> Self {
        Self {
            boundary: 0.25,
            small_box_area: 16.0,
            min_background: 0,
        }
    }
}

impl TargetParams {
    pub fn validate(&self) -> Result<()> {
        check_boundary(self.boundary)?;
        if !(self.small_box_area >= 0.0 && self.small_box_area.is_finite()) {
            return Err(Error::validation(format!(
                "small box area must be finite and >= 0, got {}",
                self.small_box_area
            )));
        }
        Ok(())
    }
}

fn check_boundary(b: f64) -> Result<()> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::validation(format!(
            "boundary value must lie in (0, 1), got {b}"
        )));
    }
    Ok(())
}

/// Objectness ground truth and training cells for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionTarget {
    /// `BM^r`, the soft objectness target.
    pub target: ScalarMap,
    /// `S_f`.
    pub foreground: PixelSet,
    /// `S_b^t`, the sampled background.
    pub sampled_background: PixelSet,
    /// `Loc_p`, positive anchor centre cells.
    pub positives: PixelSet,
    pub boundary: f64,
    pub seed: u64,
}

impl SupervisionTarget {
    /// `S_f ∪ S_b^t`, the cells that enter the objectness loss.
    pub fn training_cells(&self) -> PixelSet {
        self.foreground.union(&self.sampled_background)
    }
}

/// Per-box `BM^(n)` resized onto the feature grid, one map per box.
pub fn per_box_feature_maps(boxes: &[GtBox], grid: &GridSpec) -> Result<Vec<ScalarMap>> {
    boxes
        .iter()
        .map(|gt| {
            let m = box_map(gt, grid.image_width, grid.image_height, 1.0)?;
            to_feature_grid(&m, grid)
        })
        .collect()
}

/// Builds the full stage-1 target for one image: `BM^r`, `S_f`, sampled
/// `S_b^t` and `Loc_p`.
pub fn build_targets(
    boxes: &[GtBox],
    grid: &GridSpec,
    params: &TargetParams,
    seed: u64,
) -> Result<SupervisionTarget> {
    grid.validate()?;
    params.validate()?;
    let bm = generate_map(boxes, grid.image_width, grid.image_height, None)?;
    let target = to_feature_grid(&bm, grid)?;
    let (foreground, background) = partition_pixels(&target)?;
    let sampled_background =
        sample_background(&foreground, &background, params.min_background, seed)?;
    let per_box = per_box_feature_maps(boxes, grid)?;
    let positives =
        select_positive_anchors(boxes, &per_box, params.boundary, params.small_box_area)?;
    Ok(SupervisionTarget {
        target,
        foreground,
        sampled_background,
        positives,
        boundary: params.boundary,
        seed,
    })
}

/// Binary cross entropy summed (or averaged) over `S_f ∪ S_b^t`.
///
/// Targets are the soft `BM^r` values. Each logarithm argument is floored at
/// [`BCE_EPS`], so exact hard matches (`p = t ∈ {0, 1}`) contribute exactly 0.
pub fn objectness_loss(
    pred: &ScalarMap,
    target: &SupervisionTarget,
    reduction: Reduction,
) -> Result<f64> {
    pred.ensure_same_dims(&target.target, "objectness_loss")?;
    pred.ensure_unit_range("objectness prediction")?;
    let cells = target.training_cells();
    let total: f64 = cells
        .iter()
        .map(|c| {
            let p = f64::from(pred.get(c.x as usize, c.y as usize));
            let t = f64::from(target.target.get(c.x as usize, c.y as usize));
            bce(p, t)
        })
        .sum();
    Ok(reduction.apply(total, cells.len()))
}

/// Objectness loss over `A` anchor-class prediction maps sharing one target.
pub fn objectness_loss_per_class(
    preds: &[ScalarMap],
    target: &SupervisionTarget,
    reduction: Reduction,
) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::validation(
            "need at least one anchor-class prediction",
        ));
    }
    preds
        .iter()
        .map(|p| objectness_loss(p, target, reduction))
        .sum()
}

#[inline]
fn bce(p: f64, t: f64) -> f64 {
    let mut loss = 0.0;
    if t > 0.0 {
        loss -= t * p.max(BCE_EPS).ln();
    }
    if t < 1.0 {
        loss -= (1.0 - t) * (1.0 - p).max(BCE_EPS).ln();
    }
    loss
}

/// `Loc_p`: union over boxes of cells where the box's own `BM^r` reaches the
/// boundary value. Boxes smaller than `small_box_area` use 0.5 instead.
pub fn select_positive_anchors(
    boxes: &[GtBox],
    per_box_bm_r: &[ScalarMap],
    boundary: f64,
    small_box_area: f64,
) -> Result<PixelSet> {
    if boxes.len() != per_box_bm_r.len() {
        return Err(Error::validation(format!(
            "{} boxes but {} per-box maps",
            boxes.len(),
            per_box_bm_r.len()
        )));
    }
    check_boundary(boundary)?;
    let mut out = PixelSet::new();
    for (gt, m) in boxes.iter().zip(per_box_bm_r) {
        let thr = if gt.area() >= small_box_area {
            boundary
        } else {
            f64::from(FOREGROUND_THRESHOLD)
        };
        let cells = PixelSet::from_map(m, |v| f64::from(v) >= thr);
        out = out.union(&cells);
    }
    Ok(out)
}

/// Sum of caller-supplied per-location regression losses over `Loc_p`.
pub fn regression_loss(losses: &HashMap<Cell, f64>, positives: &PixelSet) -> Result<f64> {
    positives
        .iter()
        .map(|c| {
            losses.get(&c).copied().ok_or_else(|| {
                Error::validation(format!(
                    "no regression loss for location ({}, {})",
                    c.x, c.y
                ))
            })
        })
        .sum()
}

/// Smooth-L1 over paired regression coordinates; a stand-in for the host
/// detector's own regression loss.
pub fn smooth_l1(pred: &[f64], target: &[f64], beta: f64) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| {
            let d = (p - t).abs();
            if d < beta {
                0.5 * d * d / beta
            } else {
                d - 0.5 * beta
            }
        })
        .sum()
}

/// Anchor shapes and match threshold for the IoU baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    /// `(width, height)` in input pixels.
    pub sizes: Vec<(f64, f64)>,
    pub iou_threshold: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            sizes: [16.0, 32.0, 64.0, 128.0].iter().map(|&s| (s, s)).collect(),
            iou_threshold: 0.7,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self
            .sizes
            .iter()
            .any(|&(w, h)| !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()))
        {
            return Err(Error::validation("anchor sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(Error::validation(format!(
                "IoU threshold must lie in [0, 1], got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

/// Matched-positive anchor counts under the IoU rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositiveCounts {
    pub per_box: Vec<usize>,
    pub per_image: usize,
}

/// Counts, per GT box, anchors with `IoU >= threshold`.
///
/// Anchors sit at every cell centre `((x + 0.5) R, (y + 0.5) R)` for each
/// configured size and are not clipped at the image border. Only overlapping
/// anchors count, which matters for the degenerate threshold 0. The per-image
/// figure is the sum of the per-box counts.
pub fn iou_positive_counts(
    boxes: &[GtBox],
    config: &AnchorConfig,
    grid: &GridSpec,
) -> Result<PositiveCounts> {
    config.validate()?;
    grid.validate()?;
    let (fw, fh) = grid.feature_dims();
    let r = grid.stride as f64;
    let mut anchors = Vec::with_capacity(fw * fh * config.sizes.len());
    for y in 0..fh {
        for x in 0..fw {
            let (cx, cy) = ((x as f64 + 0.5) * r, (y as f64 + 0.5) * r);
            for &(w, h) in &config.sizes {
                anchors.push(GtBox::centered(cx, cy, w, h)?);
            }
        }
    }
    let per_box: Vec<usize> = boxes
        .iter()
        .map(|gt| {
            anchors
                .iter()
                .filter(|a| {
                    let v = iou(a, gt);
                    v > 0.0 && v >= config.iou_threshold
                })
                .count()
        })
        .collect();
    let per_image = per_box.iter().sum();
    Ok(PositiveCounts { per_box, per_image })
}
