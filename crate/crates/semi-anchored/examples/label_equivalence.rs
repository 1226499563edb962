//! Exhaustively verifies that the simplified location rule ("any
//! foreground vote makes the location positive") agrees with the
//! explicit threshold-moving rule whenever the threshold is small
//! enough, and shows the guarantee genuinely breaking once the
//! threshold leaves that regime.
//!
//! For K anchors and C classes every one of the (C+1)^K vote
//! assignments is enumerated. In the small-threshold regime the
//! normalized scores must also respect the strict confidence bounds
//! (background below 1/(1+F), each voted class above n_c/(1+F)).
//!
//! Run with: cargo run --example label_equivalence

use semi_anchored::assignment::verify_proposition_1;
use semi_anchored::Result;

fn main() -> Result<()> {
    println!("small-threshold regime (gamma < 1/K): equivalence + bounds");
    for k in 1..=4 {
        for c in 1..=3 {
            for gamma in [1.0 / (k as f64 + 1.0), 1.0 / (2.0 * k as f64)] {
                let report = verify_proposition_1(k, c, gamma)?;
                println!("  {report}");
                assert!(report.passed());
            }
        }
    }

    println!("\noutside the regime the guarantee fails, and the sweep shows how:");
    let report = verify_proposition_1(4, 3, 0.5)?;
    println!("  {report}");
    assert!(!report.passed());
    // A single foreground vote among four anchors gives the background a
    // normalized score of 3/4; subtracting gamma = 0.5 leaves 0.25, which
    // ties the lone foreground class instead of falling below it.
    Ok(())
}
