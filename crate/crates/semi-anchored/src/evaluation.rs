//! COCO-style detection metrics and class-imbalance statistics.
//!
//! Average precision uses the 101-point interpolated convention: greedy
//! score-ordered matching per class and image, a running precision
//! envelope, and sampling at recalls `0.00, 0.01, …, 1.00`. The headline
//! AP averages over IoU thresholds `0.50:0.05:0.95`.

use std::collections::HashMap;

use crate::assignment::AssignmentResult;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// One detection record for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DetRecord {
    pub image_id: i64,
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

/// One ground-truth record for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GtRecord {
    pub image_id: i64,
    pub bbox: BBox,
    pub class_id: usize,
}

/// The IoU thresholds of the headline AP metric.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

/// The 101 recall sample points. Kept as `i/100` exactly so recall
/// comparisons are reproducible.
fn recall_points() -> impl Iterator<Item = f64> {
    (0..=100).map(|i| i as f64 / 100.0)
}

fn validate_records(dets: &[DetRecord], gts: &[GtRecord]) -> Result<()> {
    for (i, d) in dets.iter().enumerate() {
        if !d.bbox.is_valid() {
            return Err(Error::invalid(
                "dets",
                format!("detection {i}: box has non-positive extent"),
            ));
        }
        if !d.score.is_finite() {
            return Err(Error::invalid(
                "dets",
                format!("detection {i}: non-finite score"),
            ));
        }
        if d.class_id == 0 {
            return Err(Error::invalid(
                "dets",
                format!("detection {i}: class 0 is reserved for background"),
            ));
        }
    }
    for (i, g) in gts.iter().enumerate() {
        if !g.bbox.is_valid() {
            return Err(Error::invalid(
                "gt",
                format!("ground truth {i}: box has non-positive extent"),
            ));
        }
        if g.class_id == 0 {
            return Err(Error::invalid(
                "gt",
                format!("ground truth {i}: class 0 is reserved for background"),
            ));
        }
    }
    Ok(())
}

/// A content-based total order on detections: descending score, then
/// image, then box coordinates. Input order never influences results.
fn canonical_det_order(a: &DetRecord, b: &DetRecord) -> std::cmp::Ordering {
    b.score
        .partial_cmp(&a.score)
        .expect("scores validated finite")
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| {
            let ka = [a.bbox.x1, a.bbox.y1, a.bbox.x2, a.bbox.y2];
            let kb = [b.bbox.x1, b.bbox.y1, b.bbox.x2, b.bbox.y2];
            ka.partial_cmp(&kb).expect("boxes validated finite")
        })
}

/// Greedy matching of one class's detections at one IoU threshold,
/// returning cumulative (tp, fp) pairs in score order plus the GT count.
fn match_class(
    dets: &[&DetRecord],
    gts_by_image: &HashMap<i64, Vec<&GtRecord>>,
    iou_thresh: f64,
) -> Vec<(usize, usize)> {
    let mut used: HashMap<i64, Vec<bool>> = gts_by_image
        .iter()
        .map(|(&id, v)| (id, vec![false; v.len()]))
        .collect();
    let mut curve = Vec::with_capacity(dets.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for det in dets {
        let mut matched = false;
        if let Some(gts) = gts_by_image.get(&det.image_id) {
            let flags = used.get_mut(&det.image_id).expect("same keys");
            let mut best = -1.0;
            let mut best_idx = None;
            for (gi, gt) in gts.iter().enumerate() {
                if flags[gi] {
                    continue;
                }
                let v = iou(&det.bbox, &gt.bbox);
                if v >= iou_thresh && v > best {
                    best = v;
                    best_idx = Some(gi);
                }
            }
            if let Some(gi) = best_idx {
                flags[gi] = true;
                matched = true;
            }
        }
        if matched {
            tp += 1;
        } else {
            fp += 1;
        }
        curve.push((tp, fp));
    }
    curve
}

/// 101-point interpolated AP from a cumulative match curve.
fn interpolated_ap(curve: &[(usize, usize)], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let recalls: Vec<f64> = curve
        .iter()
        .map(|&(tp, _)| tp as f64 / num_gt as f64)
        .collect();
    let mut precisions: Vec<f64> = curve
        .iter()
        .map(|&(tp, fp)| tp as f64 / (tp + fp) as f64)
        .collect();
    // Precision envelope: best precision at this recall or beyond.
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut total = 0.0;
    for r in recall_points() {
        // First curve point reaching recall r; beyond max recall the
        // interpolated precision is 0.
        if let Some(idx) = recalls.iter().position(|&rec| rec >= r) {
            total += precisions[idx];
        }
    }
    total / 101.0
}

/// Sorted list of class ids that appear in the ground truth. Classes
/// without any GT are excluded from every mean (matching the COCO
/// convention of skipping absent categories).
fn gt_classes(gts: &[GtRecord]) -> Vec<usize> {
    let mut classes: Vec<usize> = gts.iter().map(|g| g.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    classes
}

fn per_class_ap(dets: &[DetRecord], gts: &[GtRecord], iou_thresh: f64) -> Vec<(usize, f64)> {
    let classes = gt_classes(gts);
    let mut sorted: Vec<&DetRecord> = dets.iter().collect();
    sorted.sort_by(|a, b| canonical_det_order(a, b));
    let mut out = Vec::with_capacity(classes.len());
    for &cls in &classes {
        let class_dets: Vec<&DetRecord> = sorted
            .iter()
            .filter(|d| d.class_id == cls)
            .copied()
            .collect();
        let mut gts_by_image: HashMap<i64, Vec<&GtRecord>> = HashMap::new();
        let mut num_gt = 0usize;
        for g in gts.iter().filter(|g| g.class_id == cls) {
            gts_by_image.entry(g.image_id).or_default().push(g);
            num_gt += 1;
        }
        let curve = match_class(&class_dets, &gts_by_image, iou_thresh);
        out.push((cls, interpolated_ap(&curve, num_gt)));
    }
    out
}

/// Mean average precision over ground-truth classes at one IoU
/// threshold.
pub fn average_precision(dets: &[DetRecord], gts: &[GtRecord], iou_thresh: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&iou_thresh) {
        return Err(Error::invalid(
            "iou_thresh",
            format!("must be in [0,1], got {iou_thresh}"),
        ));
    }
    if gts.is_empty() {
        return Err(Error::invalid("gt", "cannot evaluate without ground truth"));
    }
    validate_records(dets, gts)?;
    let per_class = per_class_ap(dets, gts, iou_thresh);
    Ok(per_class.iter().map(|&(_, ap)| ap).sum::<f64>() / per_class.len() as f64)
}

/// Aggregated metrics over the standard threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean AP over IoU thresholds 0.50:0.05:0.95 and classes.
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// AP restricted to small/medium/large objects (area bands split at
    /// 32^2 and 96^2, applied to ground truth and detections alike);
    /// `None` when the band holds no ground truth.
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
    /// Per-class AP at the full threshold sweep, sorted by class id.
    pub per_class: Vec<(usize, f64)>,
    pub num_gt: usize,
    pub num_dets: usize,
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fn opt(v: Option<f64>) -> String {
            v.map_or_else(|| "   n/a".to_string(), |x| format!("{x:6.4}"))
        }
        writeln!(f, "  metric      value")?;
        writeln!(f, "  AP          {:6.4}", self.ap)?;
        writeln!(f, "  AP50        {:6.4}", self.ap50)?;
        writeln!(f, "  AP75        {:6.4}", self.ap75)?;
        writeln!(f, "  AP-small    {}", opt(self.ap_small))?;
        writeln!(f, "  AP-medium   {}", opt(self.ap_medium))?;
        writeln!(f, "  AP-large    {}", opt(self.ap_large))?;
        for (cls, ap) in &self.per_class {
            writeln!(f, "  class {cls:<5} {ap:6.4}")?;
        }
        write!(
            f,
            "  ({} ground-truth boxes, {} detections)",
            self.num_gt, self.num_dets
        )
    }
}

fn mean_ap_over_thresholds(dets: &[DetRecord], gts: &[GtRecord]) -> (f64, Vec<(usize, f64)>) {
    let classes = gt_classes(gts);
    let thresholds = coco_iou_thresholds();
    let mut sums: HashMap<usize, f64> = classes.iter().map(|&c| (c, 0.0)).collect();
    for &t in &thresholds {
        for (cls, ap) in per_class_ap(dets, gts, t) {
            *sums.get_mut(&cls).expect("same classes each threshold") += ap;
        }
    }
    let per_class: Vec<(usize, f64)> = classes
        .iter()
        .map(|&c| (c, sums[&c] / thresholds.len() as f64))
        .collect();
    let ap = per_class.iter().map(|&(_, v)| v).sum::<f64>() / per_class.len().max(1) as f64;
    (ap, per_class)
}

const SMALL_AREA: f64 = 32.0 * 32.0;
const MEDIUM_AREA: f64 = 96.0 * 96.0;

fn area_band(area: f64, band: usize) -> bool {
    match band {
        0 => area < SMALL_AREA,
        1 => (SMALL_AREA..MEDIUM_AREA).contains(&area),
        _ => area >= MEDIUM_AREA,
    }
}

/// Full COCO-style report: threshold-swept AP, fixed-threshold AP50 and
/// AP75, area-banded APs, and per-class breakdown.
pub fn map_report(dets: &[DetRecord], gts: &[GtRecord]) -> Result<EvalReport> {
    if gts.is_empty() {
        return Err(Error::invalid("gt", "cannot evaluate without ground truth"));
    }
    validate_records(dets, gts)?;
    let (ap, per_class) = mean_ap_over_thresholds(dets, gts);
    let ap50 = average_precision(dets, gts, 0.5)?;
    let ap75 = average_precision(dets, gts, 0.75)?;
    let mut banded = [None, None, None];
    for band in 0..3 {
        let band_gts: Vec<GtRecord> = gts
            .iter()
            .filter(|g| area_band(g.bbox.area(), band))
            .cloned()
            .collect();
        if band_gts.is_empty() {
            continue;
        }
        let band_dets: Vec<DetRecord> = dets
            .iter()
            .filter(|d| area_band(d.bbox.area(), band))
            .cloned()
            .collect();
        let (band_ap, _) = mean_ap_over_thresholds(&band_dets, &band_gts);
        banded[band] = Some(band_ap);
    }
    Ok(EvalReport {
        ap,
        ap50,
        ap75,
        ap_small: banded[0],
        ap_medium: banded[1],
        ap_large: banded[2],
        per_class,
        num_gt: gts.len(),
        num_dets: dets.len(),
    })
}

/// Positive/negative counts at anchor and location granularity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImbalanceStats {
    pub positive_anchors: usize,
    pub negative_anchors: usize,
    pub positive_locations: usize,
    pub negative_locations: usize,
}

impl ImbalanceStats {
    pub fn from_assignment(assign: &AssignmentResult) -> Self {
        let positive_anchors = assign.num_positive_anchors();
        let positive_locations = assign.num_positive_locations();
        ImbalanceStats {
            positive_anchors,
            negative_anchors: assign.anchor_labels.len() - positive_anchors,
            positive_locations,
            negative_locations: assign.locations.len() - positive_locations,
        }
    }

    pub fn merge(&mut self, other: &ImbalanceStats) {
        self.positive_anchors += other.positive_anchors;
        self.negative_anchors += other.negative_anchors;
        self.positive_locations += other.positive_locations;
        self.negative_locations += other.negative_locations;
    }

    /// Fraction of anchors labeled foreground; 0 on an empty grid.
    pub fn anchor_positive_fraction(&self) -> f64 {
        let total = self.positive_anchors + self.negative_anchors;
        if total == 0 {
            0.0
        } else {
            self.positive_anchors as f64 / total as f64
        }
    }

    /// Fraction of locations labeled foreground; 0 on an empty grid.
    pub fn location_positive_fraction(&self) -> f64 {
        let total = self.positive_locations + self.negative_locations;
        if total == 0 {
            0.0
        } else {
            self.positive_locations as f64 / total as f64
        }
    }

    /// Negatives per positive at anchor granularity (the `1:N` figure);
    /// infinite when there are no positives.
    pub fn anchor_imbalance(&self) -> f64 {
        if self.positive_anchors == 0 {
            f64::INFINITY
        } else {
            self.negative_anchors as f64 / self.positive_anchors as f64
        }
    }

    /// Negatives per positive at location granularity.
    pub fn location_imbalance(&self) -> f64 {
        if self.positive_locations == 0 {
            f64::INFINITY
        } else {
            self.negative_locations as f64 / self.positive_locations as f64
        }
    }
}

impl std::fmt::Display for ImbalanceStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "anchors: {} pos / {} neg (1:{:.1}); locations: {} pos / {} neg (1:{:.1})",
            self.positive_anchors,
            self.negative_anchors,
            self.anchor_imbalance(),
            self.positive_locations,
            self.negative_locations,
            self.location_imbalance()
        )
    }
}

/// Aggregates imbalance statistics over a set of per-image assignments.
pub fn imbalance_stats(assignments: &[AssignmentResult]) -> ImbalanceStats {
    let mut stats = ImbalanceStats::default();
    for a in assignments {
        stats.merge(&ImbalanceStats::from_assignment(a));
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::{label_locations, GroundTruth, GtObject, LocationLabeler};
    use crate::geometry::AnchorSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn det(image_id: i64, x: f64, y: f64, w: f64, h: f64, class_id: usize, score: f64) -> DetRecord {
        DetRecord {
            image_id,
            bbox: BBox::from_xywh(x, y, w, h),
            class_id,
            score,
        }
    }

    fn gt(image_id: i64, x: f64, y: f64, w: f64, h: f64, class_id: usize) -> GtRecord {
        GtRecord {
            image_id,
            bbox: BBox::from_xywh(x, y, w, h),
            class_id,
        }
    }

    #[test]
    fn perfect_detections_score_one() {
        let gts = vec![gt(1, 0.0, 0.0, 10.0, 10.0, 1), gt(1, 30.0, 0.0, 8.0, 12.0, 2)];
        let dets = vec![
            det(1, 0.0, 0.0, 10.0, 10.0, 1, 1.0),
            det(1, 30.0, 0.0, 8.0, 12.0, 2, 1.0),
        ];
        let report = map_report(&dets, &gts).unwrap();
        assert_relative_eq!(report.ap, 1.0);
        assert_relative_eq!(report.ap50, 1.0);
        assert_relative_eq!(report.ap75, 1.0);
    }

    #[test]
    fn no_detections_score_zero() {
        let gts = vec![gt(1, 0.0, 0.0, 10.0, 10.0, 1)];
        let report = map_report(&[], &gts).unwrap();
        assert_eq!(report.ap, 0.0);
        assert_eq!(report.num_dets, 0);
    }

    #[test]
    fn empty_gt_rejected() {
        assert!(map_report(&[], &[]).is_err());
        assert!(average_precision(&[], &[], 0.5).is_err());
    }

    #[test]
    fn trailing_fp_does_not_hurt_ap() {
        // TP at 0.9, FP at 0.8, one GT: recall 1 is reached at
        // precision 1, so every interpolation point reads 1.
        let gts = vec![gt(1, 0.0, 0.0, 10.0, 10.0, 1)];
        let dets = vec![
            det(1, 0.0, 0.0, 10.0, 10.0, 1, 0.9),
            det(1, 500.0, 500.0, 10.0, 10.0, 1, 0.8),
        ];
        let ap = average_precision(&dets, &gts, 0.5).unwrap();
        assert_relative_eq!(ap, 1.0);
    }

    #[test]
    fn leading_fp_halves_ap() {
        // FP outranks the TP: every recall point sees precision 1/2.
        let gts = vec![gt(1, 0.0, 0.0, 10.0, 10.0, 1)];
        let dets = vec![
            det(1, 500.0, 500.0, 10.0, 10.0, 1, 0.9),
            det(1, 0.0, 0.0, 10.0, 10.0, 1, 0.8),
        ];
        let ap = average_precision(&dets, &gts, 0.5).unwrap();
        assert_relative_eq!(ap, 0.5);
    }

    #[test]
    fn jittered_boxes_split_ap50_ap75() {
        // 10x10 GT, detection shifted by 3 along x: IoU = 7/13 ~ 0.538.
        let gts = vec![gt(1, 0.0, 0.0, 10.0, 10.0, 1)];
        let dets = vec![det(1, 3.0, 0.0, 10.0, 10.0, 1, 0.9)];
        let v = iou(&dets[0].bbox, &gts[0].bbox);
        assert!((0.5..0.75).contains(&v), "setup: IoU {v}");
        let report = map_report(&dets, &gts).unwrap();
        assert_relative_eq!(report.ap50, 1.0);
        assert_relative_eq!(report.ap75, 0.0);
    }

    #[test]
    fn detections_matched_within_their_image_only() {
        let gts = vec![gt(1, 0.0, 0.0, 10.0, 10.0, 1)];
        // Same box, wrong image.
        let dets = vec![det(2, 0.0, 0.0, 10.0, 10.0, 1, 0.9)];
        let ap = average_precision(&dets, &gts, 0.5).unwrap();
        assert_eq!(ap, 0.0);
    }

    #[test]
    fn shuffled_input_orders_agree() {
        let gts = vec![
            gt(1, 0.0, 0.0, 10.0, 10.0, 1),
            gt(1, 20.0, 0.0, 10.0, 10.0, 1),
            gt(2, 0.0, 0.0, 12.0, 9.0, 2),
        ];
        let dets = vec![
            det(1, 1.0, 0.0, 10.0, 10.0, 1, 0.8),
            det(1, 20.0, 0.5, 10.0, 10.0, 1, 0.8),
            det(2, 0.0, 0.0, 12.0, 9.0, 2, 0.6),
            det(1, 40.0, 40.0, 10.0, 10.0, 1, 0.7),
        ];
        let base = map_report(&dets, &gts).unwrap();
        let mut rev = dets.clone();
        rev.reverse();
        let report = map_report(&rev, &gts).unwrap();
        assert_eq!(base, report);
    }

    #[test]
    fn zero_gt_classes_excluded_from_mean() {
        // Class 2 has detections but no GT: the mean covers class 1 only.
        let gts = vec![gt(1, 0.0, 0.0, 10.0, 10.0, 1)];
        let dets = vec![
            det(1, 0.0, 0.0, 10.0, 10.0, 1, 0.9),
            det(1, 50.0, 50.0, 10.0, 10.0, 2, 0.99),
        ];
        let report = map_report(&dets, &gts).unwrap();
        assert_relative_eq!(report.ap, 1.0);
        assert_eq!(report.per_class.len(), 1);
        assert_eq!(report.per_class[0].0, 1);
    }

    #[test]
    fn area_bands_populate_when_gt_present() {
        let gts = vec![
            gt(1, 0.0, 0.0, 10.0, 10.0, 1),    // small (100)
            gt(1, 50.0, 0.0, 50.0, 50.0, 1),   // medium (2500)
            gt(1, 150.0, 0.0, 100.0, 100.0, 1) // large (10000)
        ];
        let dets: Vec<DetRecord> = gts
            .iter()
            .map(|g| DetRecord {
                image_id: g.image_id,
                bbox: g.bbox,
                class_id: g.class_id,
                score: 1.0,
            })
            .collect();
        let report = map_report(&dets, &gts).unwrap();
        assert_eq!(report.ap_small, Some(1.0));
        assert_eq!(report.ap_medium, Some(1.0));
        assert_eq!(report.ap_large, Some(1.0));
    }

    #[test]
    fn imbalance_counts_and_direction() {
        let spec = AnchorSpec::new(5, 5).unwrap();
        let grid = crate::geometry::AnchorGrid::for_image(spec, 80, 80, 8.0, 24.0).unwrap();
        let gt = GroundTruth::new(
            vec![GtObject {
                bbox: BBox::new(20.0, 20.0, 52.0, 48.0),
                class_id: 1,
            }],
            1,
        )
        .unwrap();
        let assign = label_locations(&grid, &gt, LocationLabeler::Simplified, 0.5, 0.4).unwrap();
        let stats = imbalance_stats(&[assign]);
        assert!(stats.positive_anchors > 0, "setup: no positive anchors");
        assert!(
            stats.location_positive_fraction() > stats.anchor_positive_fraction(),
            "{stats}"
        );
        let empty = ImbalanceStats::default();
        assert_eq!(empty.anchor_positive_fraction(), 0.0);
        assert!(empty.anchor_imbalance().is_infinite());
    }

    /// Brute-force AP oracle: recomputes matching from scratch for every
    /// top-k prefix and takes the definitional max-precision-at-recall
    /// interpolation, sharing no code with the production path.
    mod oracle {
        use super::*;

        fn match_prefix(
            dets: &[&DetRecord],
            gts: &[&GtRecord],
            iou_thresh: f64,
        ) -> (usize, usize) {
            let mut used = vec![false; gts.len()];
            let (mut tp, mut fp) = (0, 0);
            for d in dets {
                let mut best = -1.0;
                let mut best_idx = None;
                for (gi, g) in gts.iter().enumerate() {
                    if used[gi] || g.image_id != d.image_id {
                        continue;
                    }
                    let v = iou(&d.bbox, &g.bbox);
                    if v >= iou_thresh && v > best {
                        best = v;
                        best_idx = Some(gi);
                    }
                }
                match best_idx {
                    Some(gi) => {
                        used[gi] = true;
                        tp += 1;
                    }
                    None => fp += 1,
                }
            }
            (tp, fp)
        }

        pub fn class_ap(
            dets: &[DetRecord],
            gts: &[GtRecord],
            class_id: usize,
            iou_thresh: f64,
        ) -> f64 {
            let gts: Vec<&GtRecord> = gts.iter().filter(|g| g.class_id == class_id).collect();
            if gts.is_empty() {
                return 0.0;
            }
            let mut dets: Vec<&DetRecord> =
                dets.iter().filter(|d| d.class_id == class_id).collect();
            dets.sort_by(|a, b| super::canonical_det_order(a, b));
            // One PR point per prefix, each matched from scratch.
            let mut points = Vec::new();
            for k in 1..=dets.len() {
                let (tp, fp) = match_prefix(&dets[..k], &gts, iou_thresh);
                points.push((
                    tp as f64 / gts.len() as f64,
                    tp as f64 / (tp + fp) as f64,
                ));
            }
            let mut total = 0.0;
            for i in 0..=100 {
                let r = i as f64 / 100.0;
                let best = points
                    .iter()
                    .filter(|&&(rec, _)| rec >= r)
                    .map(|&(_, prec)| prec)
                    .fold(0.0f64, f64::max);
                total += best;
            }
            total / 101.0
        }

        pub fn mean_ap(dets: &[DetRecord], gts: &[GtRecord], iou_thresh: f64) -> f64 {
            let classes = super::gt_classes(gts);
            classes
                .iter()
                .map(|&c| class_ap(dets, gts, c, iou_thresh))
                .sum::<f64>()
                / classes.len() as f64
        }
    }

    fn arb_records() -> impl Strategy<Value = (Vec<DetRecord>, Vec<GtRecord>)> {
        let gts = proptest::collection::vec(
            (1i64..3, 0.0..60.0f64, 0.0..60.0f64, 4.0..20.0f64, 4.0..20.0f64, 1usize..3),
            1..8,
        );
        let dets = proptest::collection::vec(
            (1i64..3, 0.0..60.0f64, 0.0..60.0f64, 4.0..20.0f64, 4.0..20.0f64, 1usize..3, 0.0..1.0f64),
            0..16,
        );
        (gts, dets).prop_map(|(g, d)| {
            let gts = g
                .into_iter()
                .map(|(im, x, y, w, h, c)| gt(im, x, y, w, h, c))
                .collect();
            let dets = d
                .into_iter()
                .map(|(im, x, y, w, h, c, s)| det(im, x, y, w, h, c, s))
                .collect();
            (dets, gts)
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracle((dets, gts) in arb_records(), t in 0.3..0.9f64) {
            let fast = average_precision(&dets, &gts, t).unwrap();
            let slow = oracle::mean_ap(&dets, &gts, t);
            prop_assert!((fast - slow).abs() <= 1e-9, "{fast} vs {slow}");
        }

        #[test]
        fn monotone_score_transform_keeps_ap((dets, gts) in arb_records()) {
            let base = average_precision(&dets, &gts, 0.5).unwrap();
            let squeezed: Vec<DetRecord> = dets
                .iter()
                .map(|d| DetRecord { score: d.score * 0.25 + 3.0, ..d.clone() })
                .collect();
            let transformed = average_precision(&squeezed, &gts, 0.5).unwrap();
            prop_assert!((base - transformed).abs() <= 1e-12);
        }

        #[test]
        fn ap_non_increasing_in_threshold((dets, gts) in arb_records()) {
            let mut last = f64::INFINITY;
            for t in coco_iou_thresholds() {
                let ap = average_precision(&dets, &gts, t).unwrap();
                prop_assert!(ap <= last + 1e-12);
                last = ap;
            }
        }
    }
}
