//! Builds anchor grids and prints their layout: the shape set spanned
//! by a spec, single-level grids sized to an image, and a two-level
//! pyramid.
//!
//! Run with: cargo run --example anchor_grid

use semi_anchored::{AnchorGrid, AnchorSpec, Result};

fn main() -> Result<()> {
    for (scales, aspects) in [(1, 1), (3, 3), (5, 5)] {
        let spec = AnchorSpec::new(scales, aspects)?;
        println!(
            "spec {scales}x{aspects}: K = {} anchors per location, aspect ratios {:?}",
            spec.anchors_per_location(),
            spec.aspect_ratios()
        );
        let shapes = spec.shapes(32.0);
        print!("  shapes at base 32:");
        for (w, h) in shapes.iter().take(5) {
            print!(" {w:.1}x{h:.1}");
        }
        if shapes.len() > 5 {
            print!(" ... ({} total)", shapes.len());
        }
        println!();
    }

    let spec = AnchorSpec::new(3, 3)?;
    let grid = AnchorGrid::for_image(spec.clone(), 64, 48, 8.0, 24.0)?;
    println!(
        "\n64x48 image at stride 8: {} locations, {} anchors",
        grid.num_locations(),
        grid.num_anchors()
    );
    println!(
        "  first center {:?}, last center {:?}",
        grid.centers.first().unwrap(),
        grid.centers.last().unwrap()
    );

    let pyramid = AnchorGrid::pyramid_for_image(spec, 64, 64, &[8.0, 16.0], &[24.0, 48.0])?;
    println!(
        "\ntwo-level pyramid on 64x64: {} locations across {} levels",
        pyramid.num_locations(),
        pyramid.levels.len()
    );
    for (i, level) in pyramid.levels.iter().enumerate() {
        println!(
            "  level {i}: {}x{} cells, stride {}, base size {}",
            level.width, level.height, level.stride, level.base_size
        );
    }
    Ok(())
}
