//! Scalar reference implementations used as test oracles.
//!
//! Everything here is written directly from the formulas, pixel by pixel,
//! without going through the library's map pipeline.

#![allow(dead_code)]

use bmc_core::eval::Detection;
use bmc_core::GtBox;
use rand::Rng;

/// `BM_xy` (or `ABM_xy` with per-box alphas) evaluated independently at
/// every pixel: per-axis sums over boxes capped at 1, then `sqrt(x * y)`.
pub fn bm_oracle(boxes: &[GtBox], alphas: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let mut sx = 0.0;
            let mut sy = 0.0;
            for (b, &a) in boxes.iter().zip(alphas) {
                let inside = b.x1() <= fx && fx <= b.x2() && b.y1() <= fy && fy <= b.y2();
                if inside {
                    let cx = (b.x1() + b.x2()) / 2.0;
                    let cy = (b.y1() + b.y2()) / 2.0;
                    let kx = 1.0 / (b.x2() - b.x1());
                    let ky = 1.0 / (b.y2() - b.y1());
                    sx += f64::max(0.0, 1.0 - a * kx * (fx - cx).abs());
                    sy += f64::max(0.0, 1.0 - a * ky * (fy - cy).abs());
                }
            }
            out[y * w + x] = (sx.min(1.0) * sy.min(1.0)).sqrt();
        }
    }
    out
}

/// [`bm_oracle`] for a single box with the same `f32` storage points as the
/// on-disk map format: axis values and the combined value are rounded to
/// `f32`. Needed where results are compared exactly against thresholds.
pub fn single_box_bm_f32(b: &GtBox, w: usize, h: usize) -> Vec<f64> {
    let cx = (b.x1() + b.x2()) / 2.0;
    let cy = (b.y1() + b.y2()) / 2.0;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            if b.x1() <= fx && fx <= b.x2() && b.y1() <= fy && fy <= b.y2() {
                let ax = (1.0 - (fx - cx).abs() / (b.x2() - b.x1())) as f32;
                let ay = (1.0 - (fy - cy).abs() / (b.y2() - b.y1())) as f32;
                out[y * w + x] = f64::from((f64::from(ax) * f64::from(ay)).sqrt() as f32);
            }
        }
    }
    out
}

fn weights(pos: f64, len: usize) -> (usize, usize, f64, f64) {
    let p = pos.max(0.0).min((len - 1) as f64);
    let i0 = p.floor() as usize;
    let i1 = if i0 + 1 < len { i0 + 1 } else { i0 };
    let w1 = p - i0 as f64;
    (i0, i1, 1.0 - w1, w1)
}

/// Bilinear value of `src` at continuous index position `(u, v)`.
pub fn bilinear_at(src: &[f64], w: usize, h: usize, u: f64, v: f64) -> f64 {
    let (x0, x1, wx0, wx1) = weights(u, w);
    let (y0, y1, wy0, wy1) = weights(v, h);
    wx0 * wy0 * src[y0 * w + x0]
        + wx1 * wy0 * src[y0 * w + x1]
        + wx0 * wy1 * src[y1 * w + x0]
        + wx1 * wy1 * src[y1 * w + x1]
}

/// Half-pixel bilinear resize, evaluated per output pixel.
pub fn resize_oracle(src: &[f64], w: usize, h: usize, ow: usize, oh: usize) -> Vec<f64> {
    let sx = w as f64 / ow as f64;
    let sy = h as f64 / oh as f64;
    let mut out = Vec::with_capacity(ow * oh);
    for j in 0..oh {
        for i in 0..ow {
            let u = (i as f64 + 0.5) * sx - 0.5;
            let v = (j as f64 + 0.5) * sy - 0.5;
            out.push(bilinear_at(src, w, h, u, v));
        }
    }
    out
}

/// RoI crop-and-resize: `ow x oh` samples at cell centres of the RoI.
pub fn crop_oracle(
    src: &[f64],
    w: usize,
    h: usize,
    roi: [f64; 4],
    ow: usize,
    oh: usize,
) -> Vec<f64> {
    let [x1, y1, x2, y2] = roi;
    let mut out = Vec::with_capacity(ow * oh);
    for j in 0..oh {
        for i in 0..ow {
            let u = x1 + (i as f64 + 0.5) * (x2 - x1) / ow as f64 - 0.5;
            let v = y1 + (j as f64 + 0.5) * (y2 - y1) / oh as f64 - 0.5;
            out.push(bilinear_at(src, w, h, u, v));
        }
    }
    out
}

/// Cells of a feature-grid map (row-major) at or above `thr`.
pub fn threshold_cells(values: &[f64], w: usize, thr: f64) -> Vec<(u32, u32)> {
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= thr)
        .map(|(i, _)| ((i % w) as u32, (i / w) as u32))
        .collect()
}

/// Per-box `Loc_p` via the scalar BM and bilinear oracles.
pub fn positives_oracle(
    boxes: &[GtBox],
    img_w: usize,
    img_h: usize,
    stride: usize,
    boundary: f64,
) -> Vec<(u32, u32)> {
    let gw = img_w.div_ceil(stride);
    let gh = img_h.div_ceil(stride);
    let mut all = Vec::new();
    for b in boxes {
        let full = single_box_bm_f32(b, img_w, img_h);
        let r: Vec<f64> = resize_oracle(&full, img_w, img_h, gw, gh)
            .into_iter()
            .map(|v| f64::from(v as f32))
            .collect();
        let thr = if b.area() >= 16.0 { boundary } else { 0.5 };
        all.extend(threshold_cells(&r, gw, thr));
    }
    all.sort_by_key(|&(x, y)| (y, x));
    all.dedup();
    all
}

pub fn bce_term(p: f64, t: f64) -> f64 {
    let eps = 1e-12;
    -(t * p.max(eps).ln() + (1.0 - t) * (1.0 - p).max(eps).ln())
}

/// IoU from explicit corner arithmetic.
pub fn iou_oracle(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    if inter == 0.0 {
        return 0.0;
    }
    let area = |r: [f64; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    inter / (area(a) + area(b) - inter)
}

/// Brute-force IoU-positive count for one box over every anchor.
pub fn iou_count_oracle(
    gt: [f64; 4],
    img_w: usize,
    img_h: usize,
    stride: usize,
    sizes: &[f64],
    thr: f64,
) -> usize {
    let mut n = 0;
    for gy in 0..img_h.div_ceil(stride) {
        for gx in 0..img_w.div_ceil(stride) {
            let cx = (gx as f64 + 0.5) * stride as f64;
            let cy = (gy as f64 + 0.5) * stride as f64;
            for &s in sizes {
                let a = [cx - s / 2.0, cy - s / 2.0, cx + s / 2.0, cy + s / 2.0];
                let v = iou_oracle(a, gt);
                if v > 0.0 && v >= thr {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Greedy matching written out directly: explicit sort, linear GT scan.
pub fn greedy_oracle(
    dets: &[(usize, [f64; 4], f64)],
    gts: &[Vec<[f64; 4]>],
    thr: f64,
) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    // insertion sort: descending score, stable on ties
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && dets[idx[j - 1]].2 < dets[idx[j]].2 {
            idx.swap(j - 1, j);
            j -= 1;
        }
    }
    let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.len()]).collect();
    let mut tp = vec![false; dets.len()];
    for &d in &idx {
        let (img, bx, _) = dets[d];
        let mut best_j = None;
        let mut best_v = -1.0;
        for (j, g) in gts[img].iter().enumerate() {
            if !used[img][j] {
                let v = iou_oracle(bx, *g);
                if v > best_v {
                    best_v = v;
                    best_j = Some(j);
                }
            }
        }
        if let Some(j) = best_j {
            if best_v >= thr {
                used[img][j] = true;
                tp[d] = true;
            }
        }
    }
    tp
}

/// FROC by exhaustive threshold enumeration: for each distinct score the
/// surviving detections are re-matched from scratch.
pub fn froc_oracle(
    dets: &[(usize, [f64; 4], f64)],
    gts: &[Vec<[f64; 4]>],
    fppi_points: &[f64],
    thr: f64,
) -> (Vec<f64>, f64) {
    let total_gt: usize = gts.iter().map(Vec::len).sum();
    let n_img = gts.len() as f64;
    let mut curve = vec![(0.0, 0.0)];
    let mut scores: Vec<f64> = dets.iter().map(|d| d.2).collect();
    scores.sort_by(|a, b| b.total_cmp(a));
    scores.dedup();
    for s in scores {
        let kept: Vec<_> = dets.iter().copied().filter(|d| d.2 >= s).collect();
        let tp = greedy_oracle(&kept, gts, thr);
        let n_tp = tp.iter().filter(|&&t| t).count();
        let n_fp = kept.len() - n_tp;
        curve.push((n_fp as f64 / n_img, n_tp as f64 / total_gt as f64));
    }
    let sens: Vec<f64> = fppi_points
        .iter()
        .map(|&p| {
            curve
                .iter()
                .filter(|c| c.0 <= p)
                .map(|c| c.1)
                .fold(0.0, f64::max)
        })
        .collect();
    let avg = sens.iter().sum::<f64>() / sens.len() as f64;
    (sens, avg)
}

pub fn to_detections(dets: &[(usize, [f64; 4], f64)]) -> Vec<Detection> {
    dets.iter()
        .map(|&(img, b, s)| Detection {
            image_id: format!("img{img:02}"),
            bbox: GtBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            score: s,
        })
        .collect()
}

pub fn ground_truth(gts: &[Vec<[f64; 4]>]) -> bmc_core::eval::GroundTruth {
    gts.iter()
        .enumerate()
        .map(|(i, g)| {
            (
                format!("img{i:02}"),
                g.iter()
                    .map(|b| GtBox::new(b[0], b[1], b[2], b[3]).unwrap())
                    .collect(),
            )
        })
        .collect()
}

/// Random box inside `w x h` with sides in `[min_side, max_side]`.
pub fn random_box<R: Rng>(rng: &mut R, w: usize, h: usize, min_side: f64, max_side: f64) -> GtBox {
    let bw = rng.gen_range(min_side..=max_side.min(w as f64));
    let bh = rng.gen_range(min_side..=max_side.min(h as f64));
    let x1 = rng.gen_range(0.0..=(w as f64 - bw));
    let y1 = rng.gen_range(0.0..=(h as f64 - bh));
    GtBox::new(x1, y1, x1 + bw, y1 + bh).unwrap()
}

pub type OracleDetection = (usize, [f64; 4], f64);

/// Random detection/GT instance with partial overlaps and score ties.
pub fn random_froc_instance<R: Rng>(rng: &mut R) -> (Vec<OracleDetection>, Vec<Vec<[f64; 4]>>) {
    let n_img = rng.gen_range(1..=10);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for img in 0..n_img {
        let n_gt = rng.gen_range(0..=3);
        let g: Vec<[f64; 4]> = (0..n_gt)
            .map(|_| random_box(rng, 64, 64, 4.0, 24.0).as_array())
            .collect();
        for _ in 0..rng.gen_range(0..=8) {
            let b = if !g.is_empty() && rng.gen_bool(0.6) {
                let t = g[rng.gen_range(0..g.len())];
                let j = |r: &mut R| r.gen_range(-3.0..3.0);
                let (x1, y1) = (t[0] + j(rng), t[1] + j(rng));
                let (x2, y2) = (t[2] + j(rng), t[3] + j(rng));
                if x2 > x1 + 0.5 && y2 > y1 + 0.5 {
                    [x1, y1, x2, y2]
                } else {
                    t
                }
            } else {
                random_box(rng, 64, 64, 4.0, 24.0).as_array()
            };
            // coarse scores make ties common
            let score = (rng.gen_range(0..20) as f64) / 20.0;
            dets.push((img, b, score));
        }
        gts.push(g);
    }
    if gts.iter().all(Vec::is_empty) {
        gts[0].push([10.0, 10.0, 20.0, 20.0]);
    }
    (dets, gts)
}
