//! Training-target assignment.
//!
//! Produces every target the trainer consumes: per-anchor class labels
//! from IoU thresholds, per-location labels aggregated from anchor votes
//! (threshold-moved or simplified), center-containment baselines, and
//! post-regression anchor-classification targets with soft IoU labels.

use crate::error::{Error, Result};
use crate::geometry::{iou, AnchorGrid, BBox};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One annotated object. `class_id` is in `1..=num_classes`; 0 is
/// reserved for background everywhere in this crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtObject {
    pub bbox: BBox,
    pub class_id: usize,
}

/// The annotated objects of one image, validated against a class count.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    objects: Vec<GtObject>,
    num_classes: usize,
}

impl GroundTruth {
    pub fn new(objects: Vec<GtObject>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("num_classes", "must be at least 1"));
        }
        for (idx, obj) in objects.iter().enumerate() {
            if !obj.bbox.is_valid() {
                return Err(Error::invalid(
                    "objects",
                    format!("object {idx}: box has non-positive extent or non-finite coordinates"),
                ));
            }
            if obj.class_id == 0 || obj.class_id > num_classes {
                return Err(Error::invalid(
                    "objects",
                    format!(
                        "object {idx}: class {} outside 1..={num_classes}",
                        obj.class_id
                    ),
                ));
            }
        }
        Ok(GroundTruth {
            objects,
            num_classes,
        })
    }

    pub fn empty(num_classes: usize) -> Result<Self> {
        GroundTruth::new(Vec::new(), num_classes)
    }

    pub fn objects(&self) -> &[GtObject] {
        &self.objects
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

/// Assigns a class label to every anchor of the grid by IoU against the
/// ground truth: the class of the max-IoU object when that IoU reaches
/// `fg_thresh`, otherwise background. The band `[bg_thresh, fg_thresh)`
/// is folded into background so the per-location vote histogram stays a
/// proper distribution.
///
/// Returns one label per anchor, `grid.num_anchors()` long, in the
/// grid's `location * K + k` order. IoU ties between objects resolve to
/// the lowest object index.
pub fn label_anchors(
    grid: &AnchorGrid,
    gt: &GroundTruth,
    fg_thresh: f64,
    bg_thresh: f64,
) -> Result<Vec<usize>> {
    if !(0.0 <= bg_thresh && bg_thresh <= fg_thresh && fg_thresh <= 1.0) {
        return Err(Error::invalid(
            "fg_thresh/bg_thresh",
            format!("need 0 <= bg <= fg <= 1, got bg={bg_thresh}, fg={fg_thresh}"),
        ));
    }
    let mut labels = vec![0usize; grid.num_anchors()];
    if gt.is_empty() {
        return Ok(labels);
    }
    for (a, anchor) in grid.anchors.iter().enumerate() {
        let mut best_iou = 0.0;
        let mut best_class = 0usize;
        for obj in gt.objects() {
            let v = iou(anchor, &obj.bbox);
            if v > best_iou {
                best_iou = v;
                best_class = obj.class_id;
            }
        }
        if best_iou >= fg_thresh {
            labels[a] = best_class;
        }
    }
    Ok(labels)
}

/// The anchor-vote score vector of one location: index 0 is the fraction
/// of background anchors, index `c` the fraction labeled class `c`.
/// Components sum to 1 exactly (integer counts over `K`).
pub fn score_location(anchor_labels: &[usize], num_classes: usize) -> Result<Vec<f64>> {
    if anchor_labels.is_empty() {
        return Err(Error::invalid("anchor_labels", "must be non-empty"));
    }
    let k = anchor_labels.len() as f64;
    let mut counts = vec![0usize; num_classes + 1];
    for &y in anchor_labels {
        if y > num_classes {
            return Err(Error::invalid(
                "anchor_labels",
                format!("label {y} outside 0..={num_classes}"),
            ));
        }
        counts[y] += 1;
    }
    Ok(counts.iter().map(|&n| n as f64 / k).collect())
}

/// Rescales a location's score vector by moving the decision threshold
/// (background is damped by `gamma`, foreground boosted by `1 - gamma`)
/// and returns the rescaled vector together with its argmax label.
///
/// Ties: foreground beats background; among foreground classes the
/// lowest index wins.
pub fn threshold_move(scores: &[f64], gamma: f64) -> Result<(Vec<f64>, usize)> {
    validate_scores(scores)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", format!("must be in [0,1], got {gamma}")));
    }
    let mut moved = Vec::with_capacity(scores.len());
    moved.push(gamma * scores[0]);
    for &s in &scores[1..] {
        moved.push((1.0 - gamma) * s);
    }
    let mut best_fg = 0usize; // 0 = none found yet
    for c in 1..moved.len() {
        if moved[c] > 0.0 && (best_fg == 0 || moved[c] > moved[best_fg]) {
            best_fg = c;
        }
    }
    let label = if best_fg != 0 && moved[best_fg] >= moved[0] {
        best_fg
    } else {
        0
    };
    Ok((moved, label))
}

/// The parameter-free location rule: background only when every anchor
/// voted background, otherwise the plurality foreground class (lowest
/// index on ties).
pub fn label_location_simplified(scores: &[f64]) -> Result<usize> {
    validate_scores(scores)?;
    if scores[0] >= 1.0 {
        return Ok(0);
    }
    let mut best = 1usize;
    for c in 2..scores.len() {
        if scores[c] > scores[best] {
            best = c;
        }
    }
    Ok(best)
}

fn validate_scores(scores: &[f64]) -> Result<()> {
    if scores.len() < 2 {
        return Err(Error::invalid(
            "scores",
            "need background plus at least one foreground class",
        ));
    }
    let sum: f64 = scores.iter().sum();
    if scores.iter().any(|&s| !(0.0..=1.0).contains(&s)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "scores",
            format!("components must lie in [0,1] and sum to 1, got sum {sum}"),
        ));
    }
    Ok(())
}

/// Strategy for turning per-anchor votes (or raw geometry) into
/// per-location class labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocationLabeler {
    /// Parameter-free rule: any foreground vote makes the location
    /// positive. The default.
    Simplified,
    /// Threshold moving with an explicit background damping factor.
    ThresholdMove { gamma: f64 },
    /// Center-containment labeling against (optionally shrunk) ground
    /// truth; `shrink_factor` = 1.0 is plain containment.
    Fcos { shrink_factor: f64 },
}

impl Default for LocationLabeler {
    fn default() -> Self {
        LocationLabeler::Simplified
    }
}

/// The classification target of one grid location.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationTarget {
    /// Class label in `0..=C`, 0 = background.
    pub label: usize,
    /// Anchor-vote histogram, length `C + 1`, summing to 1.
    pub scores: Vec<f64>,
    /// Rescaled scores; equal to `scores` for strategies without a
    /// rescaling step.
    pub scores_moved: Vec<f64>,
    pub positive: bool,
}

/// Per-image assignment output: anchor labels plus location targets.
#[derive(Debug, Clone)]
pub struct AssignmentResult {
    /// Per-anchor class labels, `num_locations * K` long.
    pub anchor_labels: Vec<usize>,
    /// Per-location targets, `num_locations` long.
    pub locations: Vec<LocationTarget>,
}

impl AssignmentResult {
    pub fn num_positive_locations(&self) -> usize {
        self.locations.iter().filter(|t| t.positive).count()
    }

    pub fn num_positive_anchors(&self) -> usize {
        self.anchor_labels.iter().filter(|&&y| y > 0).count()
    }
}

/// Runs the full per-image labeling pipeline: anchor labels, vote
/// histograms, and location labels under the chosen strategy.
///
/// The vote histograms are computed for every strategy (the
/// center-containment baselines ignore them for the label itself but
/// downstream consumers still need the anchor votes).
pub fn label_locations(
    grid: &AnchorGrid,
    gt: &GroundTruth,
    labeler: LocationLabeler,
    fg_thresh: f64,
    bg_thresh: f64,
) -> Result<AssignmentResult> {
    let anchor_labels = label_anchors(grid, gt, fg_thresh, bg_thresh)?;
    let k = grid.anchors_per_location();
    let c = gt.num_classes();
    let fcos_labels = match labeler {
        LocationLabeler::Fcos { shrink_factor } => {
            Some(label_locations_fcos(grid, gt, shrink_factor)?)
        }
        LocationLabeler::ThresholdMove { gamma } if !(0.0..=1.0).contains(&gamma) => {
            return Err(Error::invalid(
                "gamma",
                format!("must be in [0,1], got {gamma}"),
            ));
        }
        _ => None,
    };
    let mut locations = Vec::with_capacity(grid.num_locations());
    for i in 0..grid.num_locations() {
        let votes = &anchor_labels[i * k..(i + 1) * k];
        let scores = score_location(votes, c)?;
        let (scores_moved, label) = match labeler {
            LocationLabeler::Simplified => {
                let y = label_location_simplified(&scores)?;
                (scores.clone(), y)
            }
            LocationLabeler::ThresholdMove { gamma } => threshold_move(&scores, gamma)?,
            LocationLabeler::Fcos { .. } => {
                let y = fcos_labels.as_ref().expect("computed above")[i];
                (scores.clone(), y)
            }
        };
        locations.push(LocationTarget {
            label,
            positive: label > 0,
            scores,
            scores_moved,
        });
    }
    Ok(AssignmentResult {
        anchor_labels,
        locations,
    })
}

/// Center-containment location labeling: a location is positive when its
/// center lies inside a ground-truth box shrunk about its center by
/// `shrink_factor`; overlaps resolve to the smallest-area box.
pub fn label_locations_fcos(
    grid: &AnchorGrid,
    gt: &GroundTruth,
    shrink_factor: f64,
) -> Result<Vec<usize>> {
    if !(shrink_factor > 0.0 && shrink_factor <= 1.0) {
        return Err(Error::invalid(
            "shrink_factor",
            format!("must be in (0,1], got {shrink_factor}"),
        ));
    }
    let shrunk: Vec<BBox> = gt
        .objects()
        .iter()
        .map(|o| {
            let (cx, cy) = o.bbox.center();
            BBox::from_center(
                cx,
                cy,
                o.bbox.width() * shrink_factor,
                o.bbox.height() * shrink_factor,
            )
        })
        .collect();
    let mut labels = vec![0usize; grid.num_locations()];
    for (i, &(cx, cy)) in grid.centers.iter().enumerate() {
        let mut best_area = f64::INFINITY;
        for (obj, sbox) in gt.objects().iter().zip(&shrunk) {
            if sbox.contains(cx, cy) && obj.bbox.area() < best_area {
                best_area = obj.bbox.area();
                labels[i] = obj.class_id;
            }
        }
    }
    Ok(labels)
}

/// Soft labels for one location's post-regression IoU vector: each IoU
/// is divided by the location max and raised to `sigma`, so the best
/// anchor always scores 1. A zero max (no overlap anywhere) yields all
/// zeros. `sigma = 0` is the diagnostic hard-label mode: 1 for any
/// positive IoU.
pub fn soft_labels(ious: &[f64], sigma: f64) -> Vec<f64> {
    let max = ious.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return vec![0.0; ious.len()];
    }
    ious.iter()
        .map(|&u| if u <= 0.0 { 0.0 } else { (u / max).powf(sigma) })
        .collect()
}

/// The anchor-classification target of one anchor at a positive
/// location.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTarget {
    /// Location index in the grid.
    pub location: usize,
    /// Anchor slot within the location, `0..K`.
    pub anchor: usize,
    /// Pre-regression anchor class label.
    pub pre_label: usize,
    /// The ground-truth box the refined anchor matched, when it overlaps
    /// any box of the location's class.
    pub matched_gt: Option<BBox>,
    /// Post-regression IoU with the matched box.
    pub iou: f64,
    /// Normalized soft label.
    pub soft_label: f64,
    /// Binary anchor-classification label: true when the refined
    /// anchor's IoU reaches the threshold, i.e. its post-regression
    /// label equals the location label.
    pub positive: bool,
}

/// Builds anchor-classification targets from refined (post-regression)
/// anchor boxes.
///
/// Targets are produced for every anchor of every *positive* location,
/// in `(location, anchor)` order: the refined box is matched to the
/// max-IoU ground truth of the location's class, labeled positive when
/// that IoU reaches `ac_iou_thresh`, and given a soft label normalized
/// per location.
///
/// `sigma` must lie in `[0,1)`; 0 selects the diagnostic hard-label
/// mode. Errors when a positive location has no ground truth of its
/// class — that indicates the location targets and ground truth come
/// from different images.
pub fn build_ac_targets(
    grid: &AnchorGrid,
    refined: &[BBox],
    locations: &[LocationTarget],
    anchor_labels: &[usize],
    gt: &GroundTruth,
    ac_iou_thresh: f64,
    sigma: f64,
) -> Result<Vec<AnchorTarget>> {
    let k = grid.anchors_per_location();
    if refined.len() != grid.num_anchors() {
        return Err(Error::invalid(
            "refined",
            format!(
                "need one refined box per anchor ({}), got {}",
                grid.num_anchors(),
                refined.len()
            ),
        ));
    }
    if locations.len() != grid.num_locations() {
        return Err(Error::invalid(
            "locations",
            format!(
                "need one target per location ({}), got {}",
                grid.num_locations(),
                locations.len()
            ),
        ));
    }
    if anchor_labels.len() != grid.num_anchors() {
        return Err(Error::invalid(
            "anchor_labels",
            format!(
                "need one label per anchor ({}), got {}",
                grid.num_anchors(),
                anchor_labels.len()
            ),
        ));
    }
    if !(0.0..=1.0).contains(&ac_iou_thresh) {
        return Err(Error::invalid(
            "ac_iou_thresh",
            format!("must be in [0,1], got {ac_iou_thresh}"),
        ));
    }
    if !(0.0..1.0).contains(&sigma) {
        return Err(Error::invalid(
            "sigma",
            format!("must be in [0,1) (0 = hard labels), got {sigma}"),
        ));
    }
    let mut out = Vec::new();
    for (i, loc) in locations.iter().enumerate() {
        if !loc.positive {
            continue;
        }
        let class_boxes: Vec<&BBox> = gt
            .objects()
            .iter()
            .filter(|o| o.class_id == loc.label)
            .map(|o| &o.bbox)
            .collect();
        if class_boxes.is_empty() {
            return Err(Error::Inconsistent(format!(
                "location {i} is positive for class {} but the image has no object of that class",
                loc.label
            )));
        }
        let mut ious = Vec::with_capacity(k);
        let mut matches: Vec<Option<BBox>> = Vec::with_capacity(k);
        for slot in 0..k {
            let refined_box = &refined[i * k + slot];
            let mut best = 0.0f64;
            let mut best_box: Option<BBox> = None;
            for gt_box in &class_boxes {
                let v = iou(refined_box, gt_box);
                if v > best {
                    best = v;
                    best_box = Some(**gt_box);
                }
            }
            ious.push(best);
            matches.push(best_box);
        }
        let soft = soft_labels(&ious, sigma);
        for slot in 0..k {
            out.push(AnchorTarget {
                location: i,
                anchor: slot,
                pre_label: anchor_labels[i * k + slot],
                matched_gt: matches[slot],
                iou: ious[slot],
                soft_label: soft[slot],
                positive: ious[slot] >= ac_iou_thresh,
            });
        }
    }
    Ok(out)
}

/// How an enumerated anchor-vote case violated the positive-location
/// guarantee or its proof bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum Prop1Violation {
    /// Foreground votes present, yet the location was labeled background.
    LabeledBackground,
    /// No foreground votes, yet the location was labeled positive.
    SpuriousPositive { label: usize },
    /// Normalized background score failed its strict upper bound.
    BackgroundBound { s_bg: f64, bound: f64 },
    /// A voted class's normalized score failed its strict lower bound.
    ForegroundBound { class: usize, s_fg: f64, bound: f64 },
}

impl std::fmt::Display for Prop1Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Prop1Violation::LabeledBackground => {
                write!(f, "labeled background despite foreground votes")
            }
            Prop1Violation::SpuriousPositive { label } => {
                write!(f, "labeled class {label} despite all-background votes")
            }
            Prop1Violation::BackgroundBound { s_bg, bound } => {
                write!(f, "background score {s_bg} not below bound {bound}")
            }
            Prop1Violation::ForegroundBound { class, s_fg, bound } => {
                write!(f, "class {class} score {s_fg} not above bound {bound}")
            }
        }
    }
}

/// A concrete vote assignment that broke the guarantee.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Counterexample {
    pub anchor_labels: Vec<usize>,
    pub violation: Prop1Violation,
}

/// Result of sweeping anchor-vote assignments for one `(K, C, gamma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report {
    pub k: usize,
    pub num_classes: usize,
    pub gamma: f64,
    /// Number of assignments checked.
    pub cases: usize,
    pub counterexample: Option<Prop1Counterexample>,
}

impl Prop1Report {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

impl std::fmt::Display for Prop1Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "K={} C={} gamma={:.6}: {} cases, ",
            self.k, self.num_classes, self.gamma, self.cases
        )?;
        match &self.counterexample {
            None => write!(f, "pass"),
            Some(ce) => write!(f, "FAIL at votes {:?}: {}", ce.anchor_labels, ce.violation),
        }
    }
}

/// Exhaustively checks the positive-location guarantee for `K` anchors
/// and `C` classes at a given `gamma`: every one of the `(C+1)^K` vote
/// assignments with at least one foreground vote must label the
/// location positive, and for `gamma < 1/K` the normalized scores must
/// respect the strict bounds `s̃_bg < 1/(1+F)` and `s̃_c > n_c/(1+F)`
/// (`F` = total foreground votes, `n_c` = votes for class `c`).
///
/// All-background assignments are checked to stay background. Stops at
/// the first violation.
pub fn verify_proposition_1(k: usize, num_classes: usize, gamma: f64) -> Result<Prop1Report> {
    if k == 0 || num_classes == 0 {
        return Err(Error::invalid("k/num_classes", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", format!("must be in [0,1], got {gamma}")));
    }
    let total = ((num_classes + 1) as f64).powi(k as i32);
    if total > 2e7 {
        return Err(Error::invalid(
            "k/num_classes",
            format!("(C+1)^K = {total:.0} assignments is too many to enumerate; use the sampled check"),
        ));
    }
    let mut votes = vec![0usize; k];
    let mut cases = 0usize;
    loop {
        cases += 1;
        if let Some(violation) = check_prop1_case(&votes, num_classes, gamma, k)? {
            return Ok(Prop1Report {
                k,
                num_classes,
                gamma,
                cases,
                counterexample: Some(Prop1Counterexample {
                    anchor_labels: votes,
                    violation,
                }),
            });
        }
        // Odometer increment in base C+1.
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(Prop1Report {
                    k,
                    num_classes,
                    gamma,
                    cases,
                    counterexample: None,
                });
            }
            if votes[pos] < num_classes {
                votes[pos] += 1;
                break;
            }
            votes[pos] = 0;
            pos += 1;
        }
    }
}

/// Randomized variant of [`verify_proposition_1`] for vote spaces too
/// large to enumerate: checks `samples` uniformly random assignments.
pub fn verify_proposition_1_sampled(
    k: usize,
    num_classes: usize,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> Result<Prop1Report> {
    if k == 0 || num_classes == 0 {
        return Err(Error::invalid("k/num_classes", "must be at least 1"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid("gamma", format!("must be in [0,1], got {gamma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = 0usize;
    for _ in 0..samples {
        let votes: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=num_classes)).collect();
        cases += 1;
        if let Some(violation) = check_prop1_case(&votes, num_classes, gamma, k)? {
            return Ok(Prop1Report {
                k,
                num_classes,
                gamma,
                cases,
                counterexample: Some(Prop1Counterexample {
                    anchor_labels: votes,
                    violation,
                }),
            });
        }
    }
    Ok(Prop1Report {
        k,
        num_classes,
        gamma,
        cases,
        counterexample: None,
    })
}

fn check_prop1_case(
    votes: &[usize],
    num_classes: usize,
    gamma: f64,
    k: usize,
) -> Result<Option<Prop1Violation>> {
    let scores = score_location(votes, num_classes)?;
    let (moved, label) = threshold_move(&scores, gamma)?;
    let fg_votes = votes.iter().filter(|&&v| v > 0).count();
    if fg_votes == 0 {
        return Ok(if label != 0 {
            Some(Prop1Violation::SpuriousPositive { label })
        } else {
            None
        });
    }
    if label == 0 {
        return Ok(Some(Prop1Violation::LabeledBackground));
    }
    // The proof's strict confidence bounds apply in the gamma < 1/K
    // regime (where the guarantee itself holds).
    if gamma < 1.0 / k as f64 {
        let norm: f64 = moved.iter().sum();
        let bound = 1.0 / (1.0 + fg_votes as f64);
        let s_bg = moved[0] / norm;
        if !(s_bg < bound) {
            return Ok(Some(Prop1Violation::BackgroundBound { s_bg, bound }));
        }
        for c in 1..=num_classes {
            let n_c = votes.iter().filter(|&&v| v == c).count();
            if n_c == 0 {
                continue;
            }
            let s_fg = moved[c] / norm;
            let fg_bound = n_c as f64 / (1.0 + fg_votes as f64);
            if !(s_fg > fg_bound) {
                return Ok(Some(Prop1Violation::ForegroundBound {
                    class: c,
                    s_fg,
                    bound: fg_bound,
                }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AnchorSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn small_grid() -> AnchorGrid {
        let spec = AnchorSpec::new(1, 1).unwrap();
        AnchorGrid::for_image(spec, 64, 64, 8.0, 16.0).unwrap()
    }

    #[test]
    fn anchor_identical_to_gt_gets_its_class() {
        let grid = small_grid();
        // Anchor at location 0 is centered (4,4) with side 16.
        let anchor = *grid.anchor(0, 0);
        let gt = GroundTruth::new(
            vec![GtObject {
                bbox: anchor,
                class_id: 3,
            }],
            3,
        )
        .unwrap();
        let labels = label_anchors(&grid, &gt, 0.5, 0.4).unwrap();
        assert_eq!(labels[0], 3);
    }

    #[test]
    fn disjoint_anchor_is_background() {
        let grid = small_grid();
        let gt = GroundTruth::new(
            vec![GtObject {
                bbox: BBox::new(1000.0, 1000.0, 1016.0, 1016.0),
                class_id: 1,
            }],
            1,
        )
        .unwrap();
        let labels = label_anchors(&grid, &gt, 0.5, 0.4).unwrap();
        assert!(labels.iter().all(|&y| y == 0));
    }

    #[test]
    fn ignore_band_folds_to_background() {
        let grid = small_grid();
        let anchor = *grid.anchor(0, 0); // 16x16 at (4,4)
        // Shift the GT so IoU lands strictly inside [0.4, 0.5):
        // 16x16 boxes offset by d along x have IoU (16-d)/(16+d);
        // d = 5 gives 11/21 ~ 0.5238; d = 6 gives 10/22 ~ 0.4545.
        let gt_box = BBox::new(anchor.x1 + 6.0, anchor.y1, anchor.x2 + 6.0, anchor.y2);
        let v = iou(&anchor, &gt_box);
        assert!((0.4..0.5).contains(&v), "setup: IoU {v} not in band");
        let gt = GroundTruth::new(
            vec![GtObject {
                bbox: gt_box,
                class_id: 1,
            }],
            1,
        )
        .unwrap();
        let labels = label_anchors(&grid, &gt, 0.5, 0.4).unwrap();
        assert_eq!(labels[0], 0);
    }

    #[test]
    fn empty_gt_is_all_background() {
        let grid = small_grid();
        let gt = GroundTruth::empty(2).unwrap();
        let labels = label_anchors(&grid, &gt, 0.5, 0.4).unwrap();
        assert!(labels.iter().all(|&y| y == 0));
    }

    #[test]
    fn gt_validation_rejects_bad_inputs() {
        assert!(GroundTruth::new(vec![], 0).is_err());
        let bad_class = GtObject {
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            class_id: 0,
        };
        assert!(GroundTruth::new(vec![bad_class], 2).is_err());
        let bad_box = GtObject {
            bbox: BBox::new(1.0, 0.0, 0.0, 1.0),
            class_id: 1,
        };
        assert!(GroundTruth::new(vec![bad_box], 2).is_err());
    }

    #[test]
    fn score_location_counts() {
        let all_bg = vec![0usize; 25];
        let s = score_location(&all_bg, 3).unwrap();
        assert_eq!(s[0], 1.0);
        assert!(s[1..].iter().all(|&v| v == 0.0));

        let mut one_fg = vec![0usize; 25];
        one_fg[7] = 2;
        let s = score_location(&one_fg, 3).unwrap();
        assert_relative_eq!(s[0], 24.0 / 25.0);
        assert_relative_eq!(s[2], 1.0 / 25.0);

        let s = score_location(&[1, 2], 2).unwrap();
        assert_eq!(s, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn threshold_move_small_gamma_keeps_lone_vote() {
        // 24 background votes and one foreground vote; gamma just under
        // 1/K keeps the location positive.
        let mut s = vec![24.0 / 25.0, 0.0, 0.0];
        s[2] = 1.0 / 25.0;
        let (moved, label) = threshold_move(&s, 1.0 / 26.0).unwrap();
        assert_relative_eq!(moved[0], 24.0 / 650.0, epsilon = 1e-15);
        assert_relative_eq!(moved[2], 25.0 / 650.0, epsilon = 1e-15);
        assert_eq!(label, 2);
    }

    #[test]
    fn threshold_move_large_gamma_drops_lone_vote() {
        let s = vec![24.0 / 25.0, 1.0 / 25.0];
        let (moved, label) = threshold_move(&s, 0.2).unwrap();
        assert_relative_eq!(moved[0], 0.192, epsilon = 1e-12);
        assert_relative_eq!(moved[1], 0.032, epsilon = 1e-12);
        assert_eq!(label, 0);
    }

    #[test]
    fn threshold_move_all_background_stays_background() {
        for gamma in [0.0, 0.04, 0.5, 1.0] {
            let (_, label) = threshold_move(&[1.0, 0.0, 0.0], gamma).unwrap();
            assert_eq!(label, 0, "gamma {gamma}");
        }
    }

    #[test]
    fn simplified_rule_examples() {
        assert_eq!(label_location_simplified(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0);
        let mut s = vec![24.0 / 25.0, 0.0, 0.0, 0.0];
        s[3] = 1.0 / 25.0;
        assert_eq!(label_location_simplified(&s).unwrap(), 3);
        // Tie between classes 1 and 2: lowest index wins.
        let s = vec![23.0 / 25.0, 1.0 / 25.0, 1.0 / 25.0];
        assert_eq!(label_location_simplified(&s).unwrap(), 1);
    }

    #[test]
    fn fcos_labeling_containment_and_shrink() {
        let grid = small_grid();
        // Location 9 sits at (12, 12).
        let gt = GroundTruth::new(
            vec![GtObject {
                bbox: BBox::new(8.0, 8.0, 24.0, 24.0),
                class_id: 2,
            }],
            2,
        )
        .unwrap();
        let full = label_locations_fcos(&grid, &gt, 1.0).unwrap();
        assert_eq!(full[9], 2);
        // Shrinking to 20% pulls the box to (14.4..17.6); (12,12) falls out.
        let shrunk = label_locations_fcos(&grid, &gt, 0.2).unwrap();
        assert_eq!(shrunk[9], 0);
    }

    #[test]
    fn fcos_nested_boxes_take_smaller() {
        let grid = small_grid();
        let gt = GroundTruth::new(
            vec![
                GtObject {
                    bbox: BBox::new(0.0, 0.0, 40.0, 40.0),
                    class_id: 1,
                },
                GtObject {
                    bbox: BBox::new(8.0, 8.0, 16.0, 16.0),
                    class_id: 2,
                },
            ],
            2,
        )
        .unwrap();
        let labels = label_locations_fcos(&grid, &gt, 1.0).unwrap();
        // (12,12) is inside both; the smaller (class 2) wins.
        assert_eq!(labels[9], 2);
        // (28,28) is only inside the big box.
        let idx = grid
            .centers
            .iter()
            .position(|&(x, y)| x == 28.0 && y == 28.0)
            .unwrap();
        assert_eq!(labels[idx], 1);
    }

    #[test]
    fn soft_labels_examples() {
        let soft = soft_labels(&[0.8, 0.4], 0.9);
        assert_relative_eq!(soft[0], 1.0);
        assert_relative_eq!(soft[1], 0.5f64.powf(0.9), epsilon = 1e-12);
        // Degenerate location: no overlap anywhere.
        assert_eq!(soft_labels(&[0.0, 0.0], 0.9), vec![0.0, 0.0]);
        // Diagnostic hard-label mode.
        assert_eq!(soft_labels(&[0.8, 0.4, 0.0], 0.0), vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn ac_targets_perfect_regression() {
        let grid = small_grid();
        let gt_box = *grid.anchor(9, 0);
        let gt = GroundTruth::new(
            vec![GtObject {
                bbox: gt_box,
                class_id: 1,
            }],
            1,
        )
        .unwrap();
        let assign = label_locations(&grid, &gt, LocationLabeler::Simplified, 0.5, 0.4).unwrap();
        assert!(assign.locations[9].positive);
        // Refined boxes: every anchor collapses exactly onto the GT.
        let refined = vec![gt_box; grid.num_anchors()];
        let targets = build_ac_targets(
            &grid,
            &refined,
            &assign.locations,
            &assign.anchor_labels,
            &gt,
            0.5,
            0.9,
        )
        .unwrap();
        assert!(!targets.is_empty());
        for t in &targets {
            assert_relative_eq!(t.iou, 1.0);
            assert_relative_eq!(t.soft_label, 1.0);
            assert!(t.positive);
            assert_eq!(t.matched_gt, Some(gt_box));
        }
    }

    #[test]
    fn ac_targets_only_cover_positive_locations() {
        let grid = small_grid();
        let gt_box = *grid.anchor(9, 0);
        let gt = GroundTruth::new(
            vec![GtObject {
                bbox: gt_box,
                class_id: 1,
            }],
            1,
        )
        .unwrap();
        let assign = label_locations(&grid, &gt, LocationLabeler::Simplified, 0.5, 0.4).unwrap();
        let refined = grid.anchors.clone();
        let targets = build_ac_targets(
            &grid,
            &refined,
            &assign.locations,
            &assign.anchor_labels,
            &gt,
            0.5,
            0.9,
        )
        .unwrap();
        let positive_locs: std::collections::BTreeSet<usize> = assign
            .locations
            .iter()
            .enumerate()
            .filter(|(_, t)| t.positive)
            .map(|(i, _)| i)
            .collect();
        let target_locs: std::collections::BTreeSet<usize> =
            targets.iter().map(|t| t.location).collect();
        assert_eq!(positive_locs, target_locs);
        assert_eq!(
            targets.len(),
            positive_locs.len() * grid.anchors_per_location()
        );
        // Positive AC label implies the IoU threshold was met.
        for t in &targets {
            if t.positive {
                assert!(t.iou >= 0.5);
            }
        }
    }

    #[test]
    fn ac_targets_reject_inconsistent_inputs() {
        let grid = small_grid();
        let gt_box = *grid.anchor(9, 0);
        let gt = GroundTruth::new(
            vec![GtObject {
                bbox: gt_box,
                class_id: 1,
            }],
            2,
        )
        .unwrap();
        let assign = label_locations(&grid, &gt, LocationLabeler::Simplified, 0.5, 0.4).unwrap();
        // Forge a location target claiming class 2, which has no GT.
        let mut locations = assign.locations.clone();
        locations[9].label = 2;
        locations[9].positive = true;
        let refined = grid.anchors.clone();
        let err = build_ac_targets(
            &grid,
            &refined,
            &locations,
            &assign.anchor_labels,
            &gt,
            0.5,
            0.9,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)));
    }

    #[test]
    fn ac_targets_validate_sigma() {
        let grid = small_grid();
        let gt = GroundTruth::empty(1).unwrap();
        let assign = label_locations(&grid, &gt, LocationLabeler::Simplified, 0.5, 0.4).unwrap();
        let refined = grid.anchors.clone();
        for bad in [-0.1, 1.0, 1.5] {
            assert!(build_ac_targets(
                &grid,
                &refined,
                &assign.locations,
                &assign.anchor_labels,
                &gt,
                0.5,
                bad,
            )
            .is_err());
        }
    }

    #[test]
    fn prop1_exhaustive_small_case() {
        let report = verify_proposition_1(3, 2, 0.25).unwrap();
        assert_eq!(report.cases, 27);
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn prop1_sampled_large_case() {
        let report = verify_proposition_1_sampled(25, 1, 1.0 / 26.0, 2000, 7).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn prop1_violated_gamma_finds_counterexample() {
        let report = verify_proposition_1(2, 1, 0.6).unwrap();
        let ce = report.counterexample.expect("gamma 0.6 > 1/2 must fail");
        assert_eq!(ce.violation, Prop1Violation::LabeledBackground);
        assert_eq!(ce.anchor_labels.iter().filter(|&&v| v > 0).count(), 1);
    }

    #[test]
    fn positive_locations_have_overlapping_anchor() {
        // Every positive location under the simplified rule carries at
        // least one anchor meeting the foreground IoU threshold.
        let spec = AnchorSpec::new(2, 3).unwrap();
        let grid = AnchorGrid::for_image(spec, 64, 64, 8.0, 24.0).unwrap();
        let gt = GroundTruth::new(
            vec![
                GtObject {
                    bbox: BBox::new(10.0, 10.0, 34.0, 30.0),
                    class_id: 1,
                },
                GtObject {
                    bbox: BBox::new(30.0, 35.0, 60.0, 60.0),
                    class_id: 2,
                },
            ],
            2,
        )
        .unwrap();
        let assign = label_locations(&grid, &gt, LocationLabeler::Simplified, 0.5, 0.4).unwrap();
        let k = grid.anchors_per_location();
        assert!(assign.num_positive_locations() > 0, "setup: nothing matched");
        for (i, t) in assign.locations.iter().enumerate() {
            if t.positive {
                let votes = &assign.anchor_labels[i * k..(i + 1) * k];
                assert!(
                    votes.iter().any(|&y| y > 0),
                    "positive location {i} has no foreground anchor"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn scores_sum_to_one(
            labels in proptest::collection::vec(0usize..4, 1..30)
        ) {
            let s = score_location(&labels, 3).unwrap();
            let sum: f64 = s.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn simplified_equals_threshold_move_below_one_over_k(
            labels in proptest::collection::vec(0usize..4, 1..26),
            t in 0.0..1.0f64,
        ) {
            let k = labels.len();
            let gamma = t / k as f64 * 0.999; // anywhere in [0, 1/K)
            let s = score_location(&labels, 3).unwrap();
            let simplified = label_location_simplified(&s).unwrap();
            let (_, moved) = threshold_move(&s, gamma).unwrap();
            prop_assert_eq!(simplified, moved);
        }

        #[test]
        fn gamma_monotone_positive_sets(
            labels in proptest::collection::vec(0usize..4, 1..26),
            g1 in 0.0..=1.0f64,
            g2 in 0.0..=1.0f64,
        ) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let s = score_location(&labels, 3).unwrap();
            let (_, y_lo) = threshold_move(&s, lo).unwrap();
            let (_, y_hi) = threshold_move(&s, hi).unwrap();
            // Positive under the larger gamma implies positive under the
            // smaller one.
            prop_assert!(y_hi == 0 || y_lo != 0);
        }

        #[test]
        fn soft_label_invariants(
            ious in proptest::collection::vec(0.0..1.0f64, 1..20),
            sigma in 0.01..0.99f64,
        ) {
            let soft = soft_labels(&ious, sigma);
            let max_iou = ious.iter().cloned().fold(0.0f64, f64::max);
            if max_iou > 0.0 {
                // The best anchor scores exactly 1 regardless of sigma.
                let best = ious.iter().position(|&u| u == max_iou).unwrap();
                prop_assert!((soft[best] - 1.0).abs() < 1e-12);
                // Monotone: higher IoU never gets a lower soft label.
                for a in 0..ious.len() {
                    for b in 0..ious.len() {
                        if ious[a] <= ious[b] {
                            prop_assert!(soft[a] <= soft[b] + 1e-12);
                        }
                    }
                }
            } else {
                prop_assert!(soft.iter().all(|&v| v == 0.0));
            }
        }
    }
}
