//! Central finite-difference verification of every analytic gradient.
//!
//! Each check samples random interior points (away from clamp
//! boundaries and non-differentiable kinks, where a two-sided
//! difference would straddle two branches), compares the analytic
//! gradient against a central difference with step [`FD_STEP`], and
//! reports the worst relative error seen.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

use crate::assignment::AnchorTarget;
use crate::error::{Error, Result};
use crate::geometry::{AnchorSpec, BBox};
use crate::losses::{focal_loss, iou_loss, smoothed_focal_loss, IouLossKind, LossConfig};
use crate::toytrain::{SceneConfig, ToyTrainer, TrainConfig};

/// Step used by every central difference in this module.
pub const FD_STEP: f64 = 1e-6;

/// Tolerance for the closed-form loss gradients.
pub const LOSS_TOL: f64 = 1e-5;

/// Tolerance for the end-to-end model gradient.
pub const MODEL_TOL: f64 = 1e-4;

/// Relative error with a small absolute floor so that near-zero
/// gradient pairs compare on absolute terms.
pub fn relative_error(analytic: f64, reference: f64) -> f64 {
    (analytic - reference).abs() / analytic.abs().max(reference.abs()).max(1e-4)
}

/// `(f(x+h) - f(x-h)) / 2h` for a fallible scalar function.
pub fn central_difference<F>(mut f: F, x: f64, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}

/// Outcome of one gradient suite.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Which gradient was checked.
    pub name: String,
    /// Number of (point, coordinate) comparisons made.
    pub points: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} points={:<5} max_rel_err={:.3e} tol={:.0e} {}",
            self.name,
            self.points,
            self.max_rel_err,
            self.tolerance,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

/// Focal loss `dL/dp` at random probabilities, both branches, a spread
/// of focusing exponents.
pub fn check_focal_gradient(points: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_err: f64 = 0.0;
    for _ in 0..points {
        let p = rng.gen_range(0.02..0.98);
        let positive = rng.gen_bool(0.5);
        let alpha = rng.gen_range(0.1..0.9);
        let beta = [0.0, 1.0, 2.0][rng.gen_range(0..3)];
        let (_, grad) = focal_loss(p, positive, alpha, beta, 1e-7)?;
        let fd = central_difference(
            |x| focal_loss(x, positive, alpha, beta, 1e-7).map(|(v, _)| v),
            p,
            FD_STEP,
        )?;
        max_rel_err = max_rel_err.max(relative_error(grad, fd));
    }
    Ok(GradCheckReport {
        name: "focal-loss".into(),
        points,
        max_rel_err,
        tolerance: LOSS_TOL,
    })
}

/// Smoothed focal loss `dL/dp`; sampling stays clear of the `p = soft
/// label` kink, where the subgradient convention (zero) is exercised by
/// unit tests instead.
pub fn check_smoothed_focal_gradient(points: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_err: f64 = 0.0;
    let mut done = 0;
    while done < points {
        let p: f64 = rng.gen_range(0.02..0.98);
        let soft_label: f64 = rng.gen_range(0.05..1.0);
        if (p - soft_label).abs() < 1e-3 {
            continue;
        }
        let positive = rng.gen_bool(0.7);
        let alpha = rng.gen_range(0.1..0.9);
        let beta = [1.0, 2.0][rng.gen_range(0..2)];
        let (_, grad) = smoothed_focal_loss(p, soft_label, positive, alpha, beta, 1e-7)?;
        let fd = central_difference(
            |x| smoothed_focal_loss(x, soft_label, positive, alpha, beta, 1e-7).map(|(v, _)| v),
            p,
            FD_STEP,
        )?;
        max_rel_err = max_rel_err.max(relative_error(grad, fd));
        done += 1;
    }
    Ok(GradCheckReport {
        name: "smoothed-focal-loss".into(),
        points,
        max_rel_err,
        tolerance: LOSS_TOL,
    })
}

/// IoU-loss corner gradients on overlapping box pairs, both loss kinds.
/// Sampling keeps every predicted corner at least 1e-3 away from its
/// opposing target corner so no comparison straddles an
/// active-side switch of the overlap rectangle.
pub fn check_iou_gradient(points: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_err: f64 = 0.0;
    let mut done = 0;
    while done < points {
        let target = BBox::new(
            rng.gen_range(0.0..20.0),
            rng.gen_range(0.0..20.0),
            rng.gen_range(30.0..60.0),
            rng.gen_range(30.0..60.0),
        );
        let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(-8.0..8.0);
        let pred = BBox::new(
            target.x1 + jitter(&mut rng),
            target.y1 + jitter(&mut rng),
            target.x2 + jitter(&mut rng),
            target.y2 + jitter(&mut rng),
        );
        if !pred.is_valid() {
            continue;
        }
        let near_switch = [
            pred.x1 - target.x1,
            pred.y1 - target.y1,
            pred.x2 - target.x2,
            pred.y2 - target.y2,
        ]
        .iter()
        .any(|d| d.abs() < 1e-3);
        if near_switch || crate::geometry::iou(&pred, &target) < 0.05 {
            continue;
        }
        let mut cfg = LossConfig::default();
        cfg.iou_loss = if done % 2 == 0 {
            IouLossKind::NegLog
        } else {
            IouLossKind::OneMinusIou
        };
        let (_, grads) = iou_loss(&pred, &target, &cfg)?;
        for coord in 0..4 {
            let fd = central_difference(
                |x| {
                    let mut b = pred;
                    match coord {
                        0 => b.x1 = x,
                        1 => b.y1 = x,
                        2 => b.x2 = x,
                        _ => b.y2 = x,
                    }
                    iou_loss(&b, &target, &cfg).map(|(v, _)| v)
                },
                [pred.x1, pred.y1, pred.x2, pred.y2][coord],
                FD_STEP,
            )?;
            max_rel_err = max_rel_err.max(relative_error(grads[coord], fd));
        }
        done += 1;
    }
    Ok(GradCheckReport {
        name: "iou-loss".into(),
        points: points * 4,
        max_rel_err,
        tolerance: LOSS_TOL,
    })
}

/// A deliberately tiny training instance: one image on a 2x2 location
/// grid with two anchors per location, so the finite-difference loop
/// over every parameter stays fast while all three loss terms are
/// active.
fn small_instance(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        steps: 5,
        num_images: 1,
        num_eval_images: 1,
        batch_size: 1,
        spec: AnchorSpec::new(2, 1).expect("static spec"),
        // Loose matching bands: on a sparse 2x2 grid the default bands
        // rarely fire, and the check only needs every loss term active,
        // not a realistic assignment policy.
        fg_thresh: 0.2,
        bg_thresh: 0.15,
        ac_iou_thresh: 0.2,
        scene: SceneConfig {
            num_classes: 2,
            image_size: 16,
            base_size: 10.0,
            ..SceneConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// End-to-end check: the hand-derived gradient of the total training
/// loss against a central difference in every model parameter, on a
/// small instance with targets frozen (the same function the analytic
/// backward pass differentiates).
pub fn check_model_gradient(points: usize, seed: u64) -> Result<GradCheckReport> {
    let mut max_rel_err: f64 = 0.0;
    let mut probed = 0usize;
    let mut next_seed = seed;
    // Each instance contributes one randomly trained parameter vector;
    // every coordinate comparison against it is one probed point. Keep
    // drawing instances until the requested budget is met.
    while probed < points.max(1) {
        let (trainer, batch, targets, analytic, used_seed) = model_check_instance(next_seed)?;
        next_seed = used_seed.wrapping_add(1);
        let base = trainer.model.params();
        let mut probe = trainer.model.clone();
        for j in 0..base.len() {
            let fd = central_difference(
                |x| {
                    let mut params = base.clone();
                    params[j] = x;
                    probe.set_params(&params)?;
                    trainer.batch_loss(&probe, &batch, &targets)
                },
                base[j],
                FD_STEP,
            )?;
            max_rel_err = max_rel_err.max(relative_error(analytic[j], fd));
        }
        probed += base.len();
    }
    Ok(GradCheckReport {
        name: "toy-model-total-loss".into(),
        points: probed,
        max_rel_err,
        tolerance: MODEL_TOL,
    })
}

type ModelCheckInstance = (ToyTrainer, Vec<usize>, Vec<Vec<AnchorTarget>>, Vec<f64>, u64);

/// Finds the first seed at or after `seed` whose trained small instance
/// has every loss term active, so the check has teeth. The sparse 2x2
/// grid leaves many single-object scenes without a positive location,
/// hence the bounded scan.
fn model_check_instance(seed: u64) -> Result<ModelCheckInstance> {
    for offset in 0..32 {
        let instance_seed = seed.wrapping_add(offset);
        let cfg = small_instance(instance_seed);
        let mut trainer = ToyTrainer::new(cfg)?;
        // A short warm-up moves the parameters off the all-zeros point,
        // where many sigmoids sit exactly at 0.5 and the check would be
        // unrepresentative.
        trainer.run()?;
        let batch: Vec<usize> = vec![0];
        let targets = trainer.build_targets(&trainer.model, &batch)?;
        let (report, analytic) = trainer.batch_grads(&trainer.model, &batch, &targets)?;
        if report.num_pos_locations > 0 && report.num_pos_anchors > 0 {
            return Ok((trainer, batch, targets, analytic, instance_seed));
        }
    }
    Err(Error::invalid(
        "seed",
        "no non-degenerate check instance in the scanned seed window",
    ))
}

/// Runs every suite at its standard size.
pub fn check_all(points: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    Ok(vec![
        check_focal_gradient(points, seed)?,
        check_smoothed_focal_gradient(points, seed.wrapping_add(1))?,
        check_iou_gradient(points, seed.wrapping_add(2))?,
        check_model_gradient(points, seed.wrapping_add(3))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_gradients_match_finite_differences() {
        let report = check_focal_gradient(150, 11).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn smoothed_focal_gradients_match_finite_differences() {
        let report = check_smoothed_focal_gradient(150, 12).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn iou_gradients_match_finite_differences() {
        let report = check_iou_gradient(150, 13).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn model_gradient_matches_finite_differences_on_all_params() {
        let report = check_model_gradient(100, 1).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.points >= 100, "expected the full point budget");
    }

    #[test]
    fn checks_are_deterministic_per_seed() {
        let a = check_focal_gradient(50, 9).unwrap();
        let b = check_focal_gradient(50, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn relative_error_floors_near_zero_pairs() {
        assert!(relative_error(0.0, 1e-9) < 1e-4);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_line_mentions_pass_state() {
        let report = GradCheckReport {
            name: "demo".into(),
            points: 1,
            max_rel_err: 1.0,
            tolerance: 1e-5,
        };
        assert!(report.to_string().contains("FAIL"));
    }
}
