//! Detection extraction: factorized scoring, per-location anchor
//! selection, and greedy class-wise NMS.

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

/// One scored box with its provenance in the anchor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    /// Class in `1..=C`.
    pub class_id: usize,
    pub score: f64,
    /// Grid location the box came from.
    pub location: usize,
    /// Anchor slot within the location.
    pub anchor: usize,
}

/// How anchors are chosen per location before NMS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionStrategy {
    /// Keep the `k` anchors with the highest anchor probability at each
    /// location. `TopK { k: 1 }` is the default.
    TopK { k: usize },
    /// Keep every anchor whose anchor probability reaches `tau`.
    Pos { tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub strategy: SelectionStrategy,
    pub nms_iou_thresh: f64,
    /// Detections scoring below this are dropped before NMS.
    pub pre_nms_score_thresh: f64,
    /// Cap on kept detections per image after NMS.
    pub max_detections: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            strategy: SelectionStrategy::TopK { k: 1 },
            nms_iou_thresh: 0.5,
            pre_nms_score_thresh: 0.05,
            max_detections: 100,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            SelectionStrategy::TopK { k } if k == 0 => {
                return Err(Error::invalid("strategy", "top-k needs k >= 1"));
            }
            SelectionStrategy::Pos { tau } if !(0.0..=1.0).contains(&tau) => {
                return Err(Error::invalid(
                    "strategy",
                    format!("pos threshold must be in [0,1], got {tau}"),
                ));
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.nms_iou_thresh) {
            return Err(Error::invalid(
                "nms_iou_thresh",
                format!("must be in [0,1], got {}", self.nms_iou_thresh),
            ));
        }
        if !(0.0..=1.0).contains(&self.pre_nms_score_thresh) {
            return Err(Error::invalid(
                "pre_nms_score_thresh",
                format!("must be in [0,1], got {}", self.pre_nms_score_thresh),
            ));
        }
        if self.max_detections == 0 {
            return Err(Error::invalid("max_detections", "must be at least 1"));
        }
        Ok(())
    }
}

/// The factorized score of one (location, anchor, class) triple: the
/// location's class probability times the anchor's own probability.
#[inline]
pub fn factorized_score(loc_prob: f64, anchor_prob: f64) -> f64 {
    loc_prob * anchor_prob
}

/// Bulk factorized scores. `loc_probs[i * C + c]` is the location-class
/// probability, `anchor_probs[i * K + k]` the anchor probability; the
/// result is indexed `(i * K + k) * C + c`.
pub fn factorized_scores(
    loc_probs: &[f64],
    anchor_probs: &[f64],
    num_classes: usize,
    anchors_per_location: usize,
) -> Result<Vec<f64>> {
    let (c, k) = (num_classes, anchors_per_location);
    if c == 0 || k == 0 {
        return Err(Error::invalid(
            "num_classes/anchors_per_location",
            "must be at least 1",
        ));
    }
    if loc_probs.len() % c != 0 || anchor_probs.len() % k != 0 {
        return Err(Error::invalid(
            "loc_probs/anchor_probs",
            "lengths must be multiples of C and K",
        ));
    }
    let n = loc_probs.len() / c;
    if anchor_probs.len() / k != n {
        return Err(Error::invalid(
            "loc_probs/anchor_probs",
            format!(
                "location counts disagree: {} vs {}",
                n,
                anchor_probs.len() / k
            ),
        ));
    }
    validate_probs(loc_probs, "loc_probs")?;
    validate_probs(anchor_probs, "anchor_probs")?;
    let mut out = Vec::with_capacity(n * k * c);
    for i in 0..n {
        for slot in 0..k {
            let ap = anchor_probs[i * k + slot];
            for cls in 0..c {
                out.push(factorized_score(loc_probs[i * c + cls], ap));
            }
        }
    }
    Ok(out)
}

fn validate_probs(probs: &[f64], arg: &'static str) -> Result<()> {
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(
                arg,
                format!("probability must be in [0,1], got {p}"),
            ));
        }
    }
    Ok(())
}

/// Selects anchors per location and emits pre-NMS detections.
///
/// Top-k ranks anchors by anchor probability (ties broken by anchor
/// index); Pos keeps anchors at or above its threshold. Each kept
/// anchor yields one candidate per class, scored by the factorized
/// product, and candidates below `pre_nms_score_thresh` are dropped.
/// Output order is (location, anchor, class) ascending.
pub fn select_anchors(
    loc_probs: &[f64],
    anchor_probs: &[f64],
    refined: &[BBox],
    num_classes: usize,
    anchors_per_location: usize,
    cfg: &InferenceConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let (c, k) = (num_classes, anchors_per_location);
    if c == 0 || k == 0 {
        return Err(Error::invalid(
            "num_classes/anchors_per_location",
            "must be at least 1",
        ));
    }
    if refined.len() != anchor_probs.len() {
        return Err(Error::invalid(
            "refined",
            format!(
                "need one box per anchor ({}), got {}",
                anchor_probs.len(),
                refined.len()
            ),
        ));
    }
    if loc_probs.len() % c != 0
        || anchor_probs.len() % k != 0
        || loc_probs.len() / c != anchor_probs.len() / k
    {
        return Err(Error::invalid(
            "loc_probs/anchor_probs",
            "location counts disagree",
        ));
    }
    validate_probs(loc_probs, "loc_probs")?;
    validate_probs(anchor_probs, "anchor_probs")?;
    let n = loc_probs.len() / c;
    let mut out = Vec::new();
    let mut order: Vec<usize> = Vec::with_capacity(k);
    for i in 0..n {
        let probs = &anchor_probs[i * k..(i + 1) * k];
        order.clear();
        match cfg.strategy {
            SelectionStrategy::TopK { k: keep } => {
                order.extend(0..k);
                order.sort_by(|&a, &b| {
                    probs[b]
                        .partial_cmp(&probs[a])
                        .expect("probabilities validated finite")
                        .then(a.cmp(&b))
                });
                order.truncate(keep.min(k));
                // Emit in anchor order so output ordering is canonical.
                order.sort_unstable();
            }
            SelectionStrategy::Pos { tau } => {
                order.extend((0..k).filter(|&slot| probs[slot] >= tau));
            }
        }
        for &slot in &order {
            let bbox = refined[i * k + slot];
            for cls in 0..c {
                let score = factorized_score(loc_probs[i * c + cls], probs[slot]);
                if score >= cfg.pre_nms_score_thresh {
                    out.push(Detection {
                        bbox,
                        class_id: cls + 1,
                        score,
                        location: i,
                        anchor: slot,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Greedy class-wise non-maximum suppression.
///
/// Detections are sorted by descending score (ties by location, anchor,
/// then class index); each is kept unless it overlaps a previously kept
/// detection of the same class at `iou_thresh` or more. At most
/// `max_detections` survive. The output keeps the sorted order, making
/// the operation idempotent.
pub fn nms(dets: &[Detection], iou_thresh: f64, max_detections: usize) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&iou_thresh) {
        return Err(Error::invalid(
            "iou_thresh",
            format!("must be in [0,1], got {iou_thresh}"),
        ));
    }
    if max_detections == 0 {
        return Err(Error::invalid("max_detections", "must be at least 1"));
    }
    if dets.iter().any(|d| !d.score.is_finite()) {
        return Err(Error::invalid("dets", "scores must be finite"));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .expect("scores validated finite")
            .then_with(|| {
                let da = &dets[a];
                let db = &dets[b];
                (da.location, da.anchor, da.class_id).cmp(&(db.location, db.anchor, db.class_id))
            })
    });
    let mut kept: Vec<Detection> = Vec::new();
    for idx in order {
        if kept.len() == max_detections {
            break;
        }
        let cand = &dets[idx];
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == cand.class_id && iou(&k.bbox, &cand.bbox) >= iou_thresh);
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    Ok(kept)
}

/// Full per-image pipeline: selection followed by NMS.
pub fn run_inference(
    loc_probs: &[f64],
    anchor_probs: &[f64],
    refined: &[BBox],
    num_classes: usize,
    anchors_per_location: usize,
    cfg: &InferenceConfig,
) -> Result<Vec<Detection>> {
    let candidates = select_anchors(
        loc_probs,
        anchor_probs,
        refined,
        num_classes,
        anchors_per_location,
        cfg,
    )?;
    nms(&candidates, cfg.nms_iou_thresh, cfg.max_detections)
}
