//! Semi-anchored object detection targets: anchor-free location labels
//! derived from anchor votes, anchor-based box regression, and a
//! post-regression anchor classifier that bridges the two.

pub mod assignment;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod gradcheck;
pub mod inference;
pub mod io;
pub mod losses;
pub mod toytrain;

pub use error::{Error, Result};
pub use geometry::{iou, AnchorGrid, AnchorSpec, BBox, GridLevel};
