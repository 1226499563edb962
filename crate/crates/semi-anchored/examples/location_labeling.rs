//! Labels one hand-built image under the three location-labeling rules
//! and prints the resulting label maps side by side: anchor votes feed
//! the simplified rule and the explicit-threshold rule, while the
//! center-containment baseline ignores votes entirely.
//!
//! Run with: cargo run --example location_labeling

use semi_anchored::assignment::{label_locations, GroundTruth, GtObject, LocationLabeler};
use semi_anchored::{AnchorGrid, AnchorSpec, BBox, Result};

fn main() -> Result<()> {
    let spec = AnchorSpec::new(3, 3)?;
    let grid = AnchorGrid::for_image(spec, 64, 64, 8.0, 24.0)?;
    let gt = GroundTruth::new(
        vec![
            GtObject {
                bbox: BBox::new(6.0, 6.0, 30.0, 30.0),
                class_id: 1,
            },
            GtObject {
                bbox: BBox::new(34.0, 28.0, 58.0, 60.0),
                class_id: 2,
            },
        ],
        2,
    )?;

    let rules = [
        ("simplified (any foreground vote)", LocationLabeler::Simplified),
        ("threshold gamma = 0.2", LocationLabeler::ThresholdMove { gamma: 0.2 }),
        ("center containment", LocationLabeler::Fcos { shrink_factor: 1.0 }),
    ];
    let level = &grid.levels[0];
    for (name, rule) in rules {
        let assignment = label_locations(&grid, &gt, rule, 0.5, 0.4)?;
        println!("{name}: {} positive locations", assignment.num_positive_locations());
        for row in 0..level.height {
            print!("  ");
            for col in 0..level.width {
                let loc = &assignment.locations[row * level.width + col];
                print!("{}", if loc.positive { char::from(b'0' + loc.label as u8) } else { '.' });
            }
            println!();
        }
    }

    // The vote histogram behind one positive location: each anchor
    // contributes its IoU-matched class, and the normalized histogram is
    // what the rules act on.
    let assignment = label_locations(&grid, &gt, LocationLabeler::Simplified, 0.5, 0.4)?;
    let i = assignment
        .locations
        .iter()
        .position(|l| l.positive)
        .expect("some location is positive");
    let k = grid.anchors_per_location();
    println!(
        "\nlocation {i} (center {:?}): anchor votes {:?}",
        grid.centers[i],
        &assignment.anchor_labels[i * k..(i + 1) * k]
    );
    println!("  class scores {:?}", assignment.locations[i].scores);
    Ok(())
}
