//! COCO-protocol detection metrics: IoU, greedy score-ordered matching,
//! 101-point interpolated average precision, and the mAP / mAP@50 / mAP@75
//! aggregates over IoU thresholds 0.50:0.05:0.95.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};

/// The ten IoU thresholds mAP averages over.
pub const IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Axis-aligned box in `(x, y, w, h)` pixels, top-left origin.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// An annotated object.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroundTruthBox {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BBox,
}

/// A scored detector output.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectionBox {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BBox,
    pub score: f64,
}

/// Intersection over union of two boxes, in [0, 1].
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    if a.w <= 0.0 || a.h <= 0.0 || b.w <= 0.0 || b.h <= 0.0 {
        return Err(Error::Parameter(format!(
            "iou requires positive box dims, got {}x{} and {}x{}",
            a.w, a.h, b.w, b.h
        )));
    }
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return Ok(0.0);
    }
    let inter = ix * iy;
    Ok(inter / (a.area() + b.area() - inter))
}

/// Matching outcome for one `(image, category)` group.
#[derive(Clone, Debug)]
pub struct MatchResult {
    /// Indices into the input detections, sorted by descending score
    /// (stable for ties).
    pub order: Vec<usize>,
    /// True-positive flag per entry of `order`.
    pub tp: Vec<bool>,
}

/// Greedy matching within one `(image, category)` group: detections in
/// descending-score order claim the unmatched ground truth with the highest
/// IoU at or above `iou_threshold`; every ground truth is used at most once.
pub fn match_detections(
    dets: &[DetectionBox],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<MatchResult> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .expect("finite scores")
    });
    let mut gt_used = vec![false; gts.len()];
    let mut tp = Vec::with_capacity(dets.len());
    for &di in &order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_used[gi] {
                continue;
            }
            let v = iou(&dets[di].bbox, &gt.bbox)?;
            if v >= iou_threshold && best.map_or(true, |(_, bv)| v > bv) {
                best = Some((gi, v));
            }
        }
        match best {
            Some((gi, _)) => {
                gt_used[gi] = true;
                tp.push(true);
            }
            None => tp.push(false),
        }
    }
    Ok(MatchResult { order, tp })
}

/// 101-point interpolated average precision.
///
/// `flags` are TP/FP indicators in descending-score order. Returns `None`
/// when the category has no ground truth and no detections (undefined, to
/// be excluded from averages); zero ground truth with detections scores 0.
pub fn average_precision(flags: &[bool], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return if flags.is_empty() { None } else { Some(0.0) };
    }
    if flags.is_empty() {
        return Some(0.0);
    }
    let n = flags.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        if f {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    // precision envelope: max precision at recall >= r
    for i in (0..n - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut j = 0usize;
    for r in 0..=100u32 {
        let level = r as f64 / 100.0;
        while j < n && recall[j] < level {
            j += 1;
        }
        if j < n {
            sum += precision[j];
        }
    }
    Some(sum / 101.0)
}

/// Per-condition metrics mirroring the three headline columns plus the full
/// per-category AP table.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    /// Mean AP over categories and the ten IoU thresholds.
    pub map: f64,
    /// Mean AP over categories at IoU 0.50.
    pub map50: f64,
    /// Mean AP over categories at IoU 0.75.
    pub map75: f64,
    /// Per-threshold category means, aligned with `IOU_THRESHOLDS`.
    pub per_threshold_map: Vec<f64>,
    /// AP per category and threshold, aligned with `IOU_THRESHOLDS`.
    pub per_category_ap: BTreeMap<u32, Vec<f64>>,
    pub counts: EvalCounts,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct EvalCounts {
    pub images: usize,
    pub gt_boxes: usize,
    pub detections: usize,
}

/// Full evaluation: pools all images, caps detections at 100 per image by
/// score, computes per-category AP at each threshold, and averages over the
/// categories that have at least one ground-truth box.
pub fn coco_map(dets: &[DetectionBox], gts: &[GroundTruthBox]) -> Result<EvalReport> {
    for (i, g) in gts.iter().enumerate() {
        if g.bbox.w <= 0.0 || g.bbox.h <= 0.0 {
            return Err(Error::Parameter(format!(
                "ground-truth box {i} has non-positive dims {}x{}",
                g.bbox.w, g.bbox.h
            )));
        }
    }
    for (i, d) in dets.iter().enumerate() {
        if d.bbox.w <= 0.0 || d.bbox.h <= 0.0 {
            return Err(Error::Parameter(format!(
                "detection {i} has non-positive dims {}x{}",
                d.bbox.w, d.bbox.h
            )));
        }
        if !(0.0..=1.0).contains(&d.score) || !d.score.is_finite() {
            return Err(Error::Parameter(format!(
                "detection {i} has score {} outside [0, 1]",
                d.score
            )));
        }
    }

    let mut warnings = Vec::new();

    // cap at 100 detections per image by score (stable for ties)
    let mut per_image: BTreeMap<u64, Vec<&DetectionBox>> = BTreeMap::new();
    for d in dets {
        per_image.entry(d.image_id).or_default().push(d);
    }
    let mut kept: Vec<&DetectionBox> = Vec::with_capacity(dets.len());
    for list in per_image.values_mut() {
        list.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));
        kept.extend(list.iter().take(100));
    }

    let categories: BTreeSet<u32> = gts.iter().map(|g| g.category_id).collect();
    let unknown: BTreeSet<u32> = kept
        .iter()
        .map(|d| d.category_id)
        .filter(|c| !categories.contains(c))
        .collect();
    for c in &unknown {
        warnings.push(format!(
            "detections reference category {c} absent from ground truth; excluded from averaging"
        ));
    }

    // group by (image, category)
    let mut gt_groups: HashMap<(u64, u32), Vec<&GroundTruthBox>> = HashMap::new();
    for g in gts {
        gt_groups.entry((g.image_id, g.category_id)).or_default().push(g);
    }
    let mut det_groups: HashMap<(u64, u32), Vec<&DetectionBox>> = HashMap::new();
    for d in &kept {
        det_groups.entry((d.image_id, d.category_id)).or_default().push(d);
    }

    let image_ids: BTreeSet<u64> = gts
        .iter()
        .map(|g| g.image_id)
        .chain(dets.iter().map(|d| d.image_id))
        .collect();

    let mut per_category_ap: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &cat in &categories {
        let num_gt: usize = gts.iter().filter(|g| g.category_id == cat).count();
        let mut aps = Vec::with_capacity(IOU_THRESHOLDS.len());
        for &thr in &IOU_THRESHOLDS {
            // pool scored flags across images, then order by descending score
            let mut pooled: Vec<(f64, usize, bool)> = Vec::new();
            for (&(img, c), group) in &det_groups {
                if c != cat {
                    continue;
                }
                let group_dets: Vec<DetectionBox> = group.iter().map(|d| (*d).clone()).collect();
                let group_gts: Vec<GroundTruthBox> = gt_groups
                    .get(&(img, c))
                    .map(|v| v.iter().map(|g| (*g).clone()).collect())
                    .unwrap_or_default();
                let m = match_detections(&group_dets, &group_gts, thr)?;
                for (&di, &f) in m.order.iter().zip(&m.tp) {
                    pooled.push((group_dets[di].score, di, f));
                }
            }
            // stable order: deterministic tie-break by image grouping is not
            // enough across images, so sort by (score desc) with the stable
            // sort preserving per-group insertion order
            pooled.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
            let flags: Vec<bool> = pooled.iter().map(|&(_, _, f)| f).collect();
            aps.push(average_precision(&flags, num_gt).unwrap_or(0.0));
        }
        per_category_ap.insert(cat, aps);
    }

    let per_threshold_map: Vec<f64> = (0..IOU_THRESHOLDS.len())
        .map(|ti| {
            if per_category_ap.is_empty() {
                0.0
            } else {
                per_category_ap.values().map(|aps| aps[ti]).sum::<f64>()
                    / per_category_ap.len() as f64
            }
        })
        .collect();
    let map = per_threshold_map.iter().sum::<f64>() / per_threshold_map.len() as f64;

    Ok(EvalReport {
        map,
        map50: per_threshold_map[0],
        map75: per_threshold_map[5],
        per_threshold_map,
        per_category_ap,
        counts: EvalCounts {
            images: image_ids.len(),
            gt_boxes: gts.len(),
            detections: dets.len(),
        },
        warnings,
    })
}

/// Renders condition rows as an aligned three-column table.
pub fn format_condition_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>10} {:>13} {:>13}\n",
        "Condition", "bbox mAP", "bbox mAP@50", "bbox mAP@75"
    ));
    for (name, report) in rows {
        out.push_str(&format!(
            "{:<16} {:>10.4} {:>13.4} {:>13.4}\n",
            name, report.map, report.map50, report.map75
        ));
    }
    out
}
