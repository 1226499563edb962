//! Runs every analytic gradient against central finite differences:
//! the three loss gradients coordinate by coordinate, and the toy
//! model end to end (perturb one weight, retrace the whole forward
//! pass and loss, compare against the backpropagated derivative).
//!
//! Run with: cargo run --example gradient_check

use semi_anchored::gradcheck::check_all;
use semi_anchored::Result;

fn main() -> Result<()> {
    let reports = check_all(200, 42)?;
    let mut all_ok = true;
    for report in &reports {
        println!("{report}");
        all_ok &= report.passed();
    }
    assert!(all_ok, "a gradient check failed");
    println!("\nall {} gradient suites agree with finite differences", reports.len());
    Ok(())
}
