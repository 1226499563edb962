//! Training objectives with analytic gradients.
//!
//! Every loss here returns its value together with the derivative with
//! respect to its predictions, so the toy trainer can backpropagate
//! without an autodiff dependency and the finite-difference harness can
//! verify each formula independently.
//!
//! Conventions shared by all losses:
//! - probabilities are clamped to `[eps, 1-eps]` before any `log`; when
//!   the clamp is active the returned derivative is 0 (the clamp is a
//!   flat function of the raw input there);
//! - targets (labels, soft labels, matched boxes) are constants during
//!   differentiation;
//! - reductions run in a fixed order so results are bit-reproducible.

use crate::assignment::{AnchorTarget, LocationTarget};
use crate::error::{Error, Result};
use crate::geometry::{intersection_area, BBox};

/// Which regression loss to apply to the IoU value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouLossKind {
    /// `-ln(max(iou, eps))`: steep near zero overlap.
    NegLog,
    /// `1 - iou`: bounded linear alternative.
    OneMinusIou,
}

/// Hyper-parameters of all objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Focal weight/exponent for location classification.
    pub alpha_loc: f64,
    pub beta_loc: f64,
    /// Focal weight/exponent for anchor classification.
    pub alpha_ac: f64,
    pub beta_ac: f64,
    /// Soft-label exponent used when building anchor targets.
    pub sigma: f64,
    /// Weight of the regression term in the total loss.
    pub lambda_reg: f64,
    /// Weight of the anchor-classification term.
    pub lambda_ac: f64,
    /// Probability clamp for logs.
    pub prob_eps: f64,
    /// IoU clamp for the log regression loss.
    pub iou_eps: f64,
    pub iou_loss: IouLossKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha_loc: 0.25,
            beta_loc: 1.0,
            alpha_ac: 0.25,
            beta_ac: 2.0,
            sigma: 0.9,
            lambda_reg: 2.0,
            lambda_ac: 1.0,
            prob_eps: 1e-7,
            iou_eps: 1e-7,
            iou_loss: IouLossKind::NegLog,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, alpha) in [("alpha_loc", self.alpha_loc), ("alpha_ac", self.alpha_ac)] {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::invalid(
                    "LossConfig",
                    format!("{name} must be in (0,1), got {alpha}"),
                ));
            }
        }
        for (name, beta) in [("beta_loc", self.beta_loc), ("beta_ac", self.beta_ac)] {
            if !(beta >= 0.0) || !beta.is_finite() {
                return Err(Error::invalid(
                    "LossConfig",
                    format!("{name} must be >= 0, got {beta}"),
                ));
            }
        }
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(Error::invalid(
                "LossConfig",
                format!("sigma must be in [0,1), got {}", self.sigma),
            ));
        }
        for (name, lambda) in [("lambda_reg", self.lambda_reg), ("lambda_ac", self.lambda_ac)] {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(Error::invalid(
                    "LossConfig",
                    format!("{name} must be >= 0, got {lambda}"),
                ));
            }
        }
        for (name, eps) in [("prob_eps", self.prob_eps), ("iou_eps", self.iou_eps)] {
            if !(eps > 0.0 && eps < 0.5) {
                return Err(Error::invalid(
                    "LossConfig",
                    format!("{name} must be in (0, 0.5), got {eps}"),
                ));
            }
        }
        Ok(())
    }
}

/// One training step's loss breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub l_cls: f64,
    pub l_reg: f64,
    pub l_ac: f64,
    pub l_total: f64,
    pub num_pos_locations: usize,
    pub num_pos_anchors: usize,
}

impl std::fmt::Display for LossReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "cls={:.6} reg={:.6} ac={:.6} total={:.6} pos_loc={} pos_anchor={}",
            self.l_cls, self.l_reg, self.l_ac, self.l_total, self.num_pos_locations, self.num_pos_anchors
        )
    }
}

fn validate_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(
            "p",
            format!("probability must be in [0,1], got {p}"),
        ));
    }
    Ok(())
}

/// Focal loss of a single binary prediction: `-alpha (1-p)^beta ln p`
/// for positives, `-(1-alpha) p^beta ln(1-p)` for negatives.
///
/// Returns `(loss, dloss/dp)`.
pub fn focal_loss(p: f64, positive: bool, alpha: f64, beta: f64, eps: f64) -> Result<(f64, f64)> {
    validate_prob(p)?;
    let pc = p.clamp(eps, 1.0 - eps);
    let clamped = pc != p;
    let (value, grad) = if positive {
        let w = (1.0 - pc).powf(beta);
        let value = -alpha * w * pc.ln();
        let dw = if beta == 0.0 {
            0.0
        } else {
            beta * (1.0 - pc).powf(beta - 1.0)
        };
        let grad = alpha * dw * pc.ln() - alpha * w / pc;
        (value, grad)
    } else {
        let w = pc.powf(beta);
        let value = -(1.0 - alpha) * w * (1.0 - pc).ln();
        let dw = if beta == 0.0 { 0.0 } else { beta * pc.powf(beta - 1.0) };
        let grad = -(1.0 - alpha) * (dw * (1.0 - pc).ln() - w / (1.0 - pc));
        (value, grad)
    };
    Ok((value, if clamped { 0.0 } else { grad }))
}

/// Smoothed focal loss of one anchor prediction against a soft label:
/// `-alpha |mu - p|^beta mu ln p` for positives (`mu` the soft label),
/// the plain focal negative branch otherwise.
///
/// The `|mu - p|^beta` factor has a kink at `p = mu`; its derivative is
/// taken as 0 there (the loss attains its minimum at that point).
/// Returns `(loss, dloss/dp)`.
pub fn smoothed_focal_loss(
    p: f64,
    soft_label: f64,
    positive: bool,
    alpha: f64,
    beta: f64,
    eps: f64,
) -> Result<(f64, f64)> {
    validate_prob(p)?;
    if !(0.0..=1.0).contains(&soft_label) {
        return Err(Error::invalid(
            "soft_label",
            format!("must be in [0,1], got {soft_label}"),
        ));
    }
    if !positive {
        return focal_loss(p, false, alpha, beta, eps);
    }
    let pc = p.clamp(eps, 1.0 - eps);
    let clamped = pc != p;
    let mu = soft_label;
    let u = (mu - pc).abs();
    let w = u.powf(beta); // note powf(0,0) = 1, matching the beta = 0 reading
    let value = -alpha * w * mu * pc.ln();
    let dw = if pc == mu || beta == 0.0 {
        0.0
    } else {
        let sign = if pc > mu { 1.0 } else { -1.0 };
        beta * u.powf(beta - 1.0) * sign
    };
    let grad = -alpha * mu * (dw * pc.ln() + w / pc);
    Ok((value, if clamped { 0.0 } else { grad }))
}

/// IoU regression loss of one predicted box against one target box,
/// with the analytic gradient with respect to the prediction's corner
/// coordinates `[x1, y1, x2, y2]`.
///
/// `NegLog` yields `-ln(max(iou, eps))` (zero exactly at perfect
/// overlap, finite even for disjoint boxes); `OneMinusIou` yields
/// `1 - iou`. Overlap-boundary kinks use the active-side subgradient;
/// when the `eps` clamp is active the gradient is 0.
pub fn iou_loss(pred: &BBox, target: &BBox, cfg: &LossConfig) -> Result<(f64, [f64; 4])> {
    if !pred.is_valid() {
        return Err(Error::invalid("pred", "box must have positive extent"));
    }
    if !target.is_valid() || target.area() <= 0.0 {
        return Err(Error::invalid("target", "box must have positive area"));
    }
    let inter = intersection_area(pred, target);
    let area_p = pred.area();
    let union = area_p + target.area() - inter;
    let iou = inter / union;

    // d(inter)/d(pred corner): only the sides the prediction contributes
    // to the overlap rectangle are active.
    let iw = (pred.x2.min(target.x2) - pred.x1.max(target.x1)).max(0.0);
    let ih = (pred.y2.min(target.y2) - pred.y1.max(target.y1)).max(0.0);
    let overlapping = iw > 0.0 && ih > 0.0;
    let d_inter = if overlapping {
        [
            if pred.x1 >= target.x1 { -ih } else { 0.0 },
            if pred.y1 >= target.y1 { -iw } else { 0.0 },
            if pred.x2 <= target.x2 { ih } else { 0.0 },
            if pred.y2 <= target.y2 { iw } else { 0.0 },
        ]
    } else {
        [0.0; 4]
    };
    let d_area = [
        -pred.height(),
        -pred.width(),
        pred.height(),
        pred.width(),
    ];
    // iou = I/U with U = A_p + A_t - I, so
    // d(iou) = (I' (U + I) - I A_p') / U^2.
    let mut d_iou = [0.0; 4];
    for i in 0..4 {
        d_iou[i] = (d_inter[i] * (union + inter) - inter * d_area[i]) / (union * union);
    }
    match cfg.iou_loss {
        IouLossKind::NegLog => {
            if iou <= cfg.iou_eps {
                Ok((-cfg.iou_eps.ln(), [0.0; 4]))
            } else {
                let mut g = [0.0; 4];
                for i in 0..4 {
                    g[i] = -d_iou[i] / iou;
                }
                Ok((-iou.ln(), g))
            }
        }
        IouLossKind::OneMinusIou => {
            let mut g = [0.0; 4];
            for i in 0..4 {
                g[i] = -d_iou[i];
            }
            Ok((1.0 - iou, g))
        }
    }
}

/// Location classification loss: one-vs-all focal loss over every
/// location and class, normalized by the number of positive locations
/// (floored at 1 so empty images stay finite).
///
/// `probs[i * C + c]` is the predicted probability that location `i`
/// is class `c + 1`. Returns `(loss, dloss/dprobs, num_pos_locations)`.
pub fn location_cls_loss(
    probs: &[f64],
    targets: &[LocationTarget],
    num_classes: usize,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>, usize)> {
    if num_classes == 0 {
        return Err(Error::invalid("num_classes", "must be at least 1"));
    }
    if probs.len() != targets.len() * num_classes {
        return Err(Error::invalid(
            "probs",
            format!(
                "need {} probabilities ({} locations x {num_classes} classes), got {}",
                targets.len() * num_classes,
                targets.len(),
                probs.len()
            ),
        ));
    }
    let num_pos = targets.iter().filter(|t| t.positive).count();
    let norm = num_pos.max(1) as f64;
    let mut total = 0.0;
    let mut grads = vec![0.0; probs.len()];
    for (i, t) in targets.iter().enumerate() {
        for c in 0..num_classes {
            let p = probs[i * num_classes + c];
            let positive = t.label == c + 1;
            let (v, g) = focal_loss(p, positive, cfg.alpha_loc, cfg.beta_loc, cfg.prob_eps)?;
            total += v;
            grads[i * num_classes + c] = g / norm;
        }
    }
    Ok((total / norm, grads, num_pos))
}

/// Anchor classification loss: smoothed focal loss over every anchor of
/// every positive location (the targets are built only for those),
/// normalized by the number of positive anchor labels (floored at 1).
///
/// `probs` is aligned with `targets`. Returns
/// `(loss, dloss/dprobs, num_pos_anchors)`; an empty target set yields
/// a zero loss.
pub fn anchor_cls_loss(
    probs: &[f64],
    targets: &[AnchorTarget],
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>, usize)> {
    if probs.len() != targets.len() {
        return Err(Error::invalid(
            "probs",
            format!(
                "need one probability per target ({}), got {}",
                targets.len(),
                probs.len()
            ),
        ));
    }
    if targets.is_empty() {
        return Ok((0.0, Vec::new(), 0));
    }
    let num_pos = targets.iter().filter(|t| t.positive).count();
    let norm = num_pos.max(1) as f64;
    let mut total = 0.0;
    let mut grads = vec![0.0; probs.len()];
    for (j, (p, t)) in probs.iter().zip(targets).enumerate() {
        let (v, g) = smoothed_focal_loss(
            *p,
            t.soft_label,
            t.positive,
            cfg.alpha_ac,
            cfg.beta_ac,
            cfg.prob_eps,
        )?;
        total += v;
        grads[j] = g / norm;
    }
    Ok((total / norm, grads, num_pos))
}

/// Combines the three component losses into the weighted total.
pub fn total_loss(
    l_cls: f64,
    l_reg: f64,
    l_ac: f64,
    num_pos_locations: usize,
    num_pos_anchors: usize,
    cfg: &LossConfig,
) -> Result<LossReport> {
    for (name, v) in [("l_cls", l_cls), ("l_reg", l_reg), ("l_ac", l_ac)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(match name {
                "l_cls" => "location classification loss",
                "l_reg" => "regression loss",
                _ => "anchor classification loss",
            }));
        }
        if v < 0.0 {
            return Err(Error::invalid(
                "loss components",
                format!("{name} must be non-negative, got {v}"),
            ));
        }
    }
    Ok(LossReport {
        l_cls,
        l_reg,
        l_ac,
        l_total: l_cls + cfg.lambda_reg * l_reg + cfg.lambda_ac * l_ac,
        num_pos_locations,
        num_pos_anchors,
    })
}
