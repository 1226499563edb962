//! Recomputes the hand-checkable loss values: each formula evaluated at
//! a point where the closed form collapses to something a human can
//! verify on paper, printed next to the library's answer.
//!
//! Run with: cargo run --example loss_closed_forms

use semi_anchored::losses::{
    focal_loss, iou_loss, smoothed_focal_loss, total_loss, LossConfig,
};
use semi_anchored::{BBox, Result};

fn main() -> Result<()> {
    let cfg = LossConfig::default();

    // Negative focal branch at p = 1/2, alpha = 0.25, beta = 2:
    // -(1 - 0.25) * (1/2)^2 * ln(1 - 1/2) = 0.75 * 0.25 * ln 2.
    let (v, _) = focal_loss(0.5, false, cfg.alpha_ac, cfg.beta_ac, cfg.prob_eps)?;
    let expect = 0.75 * 0.25 * std::f64::consts::LN_2;
    println!("focal(p=0.5, negative, beta=2)        = {v:.17}");
    println!("  0.75 * 0.25 * ln 2                  = {expect:.17}");
    assert!((v - expect).abs() < 1e-15);

    // Anchor smoothed focal loss at p = 1/2 against soft label mu = 1,
    // beta = 2: -0.25 * (1 - 1/2)^2 * 1 * ln(1/2) = 0.25 * 0.25 * ln 2.
    let (v, _) = smoothed_focal_loss(0.5, 1.0, true, cfg.alpha_ac, cfg.beta_ac, cfg.prob_eps)?;
    let expect = 0.25 * 0.25 * std::f64::consts::LN_2;
    println!("smoothed focal(p=0.5, mu=1, beta=2)   = {v:.17}");
    println!("  0.25 * 0.25 * ln 2                  = {expect:.17}");
    assert!((v - expect).abs() < 1e-15);

    // Negative-log IoU loss of two unit squares offset so that the
    // intersection is 1/4 and the union 7/4: -ln(1/7) = ln 7.
    let pred = BBox::new(0.0, 0.0, 1.0, 1.0);
    let target = BBox::new(0.5, 0.5, 1.5, 1.5);
    let (v, _) = iou_loss(&pred, &target, &cfg)?;
    let expect = 7f64.ln();
    println!("-ln iou(half-offset unit squares)     = {v:.17}");
    println!("  ln 7                                = {expect:.17}");
    assert!((v - expect).abs() < 1e-15);

    // Total is the weighted sum L_cls + 2 L_reg + 1 L_ac; with the
    // component losses at 1, 1/2, 1/4 it comes to 1 + 1 + 1/4 = 2.25.
    let report = total_loss(1.0, 0.5, 0.25, 3, 5, &cfg)?;
    println!("total(1, 0.5, 0.25)                   = {:.17}", report.l_total);
    println!("  1 + 2*0.5 + 1*0.25                  = {:.17}", 2.25);
    assert!((report.l_total - 2.25).abs() < 1e-15);
    println!("\nfull report: {report}");
    Ok(())
}
