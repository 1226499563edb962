//! Axis-aligned boxes, IoU, and anchor grids.
//!
//! Boxes use corner coordinates `(x1, y1, x2, y2)` in continuous image
//! space with `x2 > x1`, `y2 > y1`; width is `x2 - x1` exactly (no pixel
//! `+1` convention anywhere).

use crate::error::{Error, Result};

/// An axis-aligned bounding box in corner form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    /// Builds a box from `(x, y, w, h)` with `(x, y)` the top-left corner.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox::new(x, y, x + w, y + h)
    }

    /// Builds a box from a center point and extents.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// True when the box has strictly positive extent and finite coordinates.
    pub fn is_valid(&self) -> bool {
        self.x1.is_finite()
            && self.y1.is_finite()
            && self.x2.is_finite()
            && self.y2.is_finite()
            && self.x2 > self.x1
            && self.y2 > self.y1
    }

    /// True when the point lies inside the box (closed on all edges).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x1 && x <= self.x2 && y >= self.y1 && y <= self.y2
    }
}

/// Intersection area of two boxes; zero when they do not overlap.
pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    iw * ih
}

/// Intersection-over-union of two boxes.
///
/// Total on all inputs: degenerate (zero-area) boxes simply yield 0
/// unless the union is itself zero, in which case the result is 0 too.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// The anchor layout attached to every spatial location of a grid level.
///
/// Each location carries `num_scales * num_aspects` anchors, all centered
/// on the location. Scale `j` has side `base_size * 2^(j / num_scales)`
/// (so the ladder spans one octave), and an anchor of scale `s` and
/// aspect ratio `a = h / w` has `w = s / sqrt(a)`, `h = s * sqrt(a)`
/// (area is `s^2` for every aspect).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSpec {
    pub num_scales: usize,
    pub num_aspects: usize,
}

impl AnchorSpec {
    /// `num_scales >= 1`; `num_aspects` must be 1, 3, or 5 (the supported
    /// symmetric aspect sets).
    pub fn new(num_scales: usize, num_aspects: usize) -> Result<Self> {
        if num_scales == 0 {
            return Err(Error::invalid("num_scales", "must be at least 1"));
        }
        if !matches!(num_aspects, 1 | 3 | 5) {
            return Err(Error::invalid(
                "num_aspects",
                format!("must be 1, 3, or 5, got {num_aspects}"),
            ));
        }
        Ok(AnchorSpec {
            num_scales,
            num_aspects,
        })
    }

    /// Anchors per location.
    pub fn anchors_per_location(&self) -> usize {
        self.num_scales * self.num_aspects
    }

    /// The aspect ratios (`h / w`) for this spec, ascending.
    pub fn aspect_ratios(&self) -> Vec<f64> {
        match self.num_aspects {
            1 => vec![1.0],
            3 => vec![0.5, 1.0, 2.0],
            5 => vec![1.0 / 3.0, 0.5, 1.0, 2.0, 3.0],
            _ => unreachable!("validated in new()"),
        }
    }

    /// The anchor side lengths for a level with the given base size,
    /// ascending: `base * 2^(j / num_scales)` for `j in 0..num_scales`.
    pub fn scales(&self, base_size: f64) -> Vec<f64> {
        (0..self.num_scales)
            .map(|j| base_size * 2f64.powf(j as f64 / self.num_scales as f64))
            .collect()
    }

    /// The `(scale_index, aspect_index)` pair for flat anchor index `k`.
    /// Anchors are ordered scale-major: `k = scale_idx * num_aspects + aspect_idx`.
    pub fn unflatten(&self, k: usize) -> (usize, usize) {
        (k / self.num_aspects, k % self.num_aspects)
    }

    /// Anchor shapes `(w, h)` for a level, in flat-index order.
    pub fn shapes(&self, base_size: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.anchors_per_location());
        for s in self.scales(base_size) {
            for a in self.aspect_ratios() {
                out.push((s / a.sqrt(), s * a.sqrt()));
            }
        }
        out
    }
}

/// One resolution level of an anchor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLevel {
    /// Locations along x.
    pub width: usize,
    /// Locations along y.
    pub height: usize,
    /// Pixel spacing between adjacent locations.
    pub stride: f64,
    /// Base anchor side length at this level.
    pub base_size: f64,
    /// Index of this level's first location in the flattened grid.
    pub loc_offset: usize,
}

impl GridLevel {
    pub fn num_locations(&self) -> usize {
        self.width * self.height
    }
}

/// A full anchor grid: locations from one or more levels, each carrying
/// the same number of anchors.
///
/// Locations are flattened level-major, then row-major within a level;
/// anchors are stored as `anchors[i * K + k]` for location `i` and
/// anchor slot `k`. Anchor boxes are *not* clipped to the image.
#[derive(Debug, Clone)]
pub struct AnchorGrid {
    pub spec: AnchorSpec,
    pub levels: Vec<GridLevel>,
    /// Location centers in image coordinates, one per location.
    pub centers: Vec<(f64, f64)>,
    /// All anchor boxes, `num_locations * anchors_per_location` long.
    pub anchors: Vec<BBox>,
}

impl AnchorGrid {
    /// Builds a grid from explicit per-level dimensions.
    ///
    /// `levels` gives `(width, height, stride, base_size)` per level.
    /// Location `(row, col)` of a level sits at
    /// `((col + 0.5) * stride, (row + 0.5) * stride)`.
    pub fn build(spec: AnchorSpec, levels: &[(usize, usize, f64, f64)]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("levels", "at least one level required"));
        }
        let mut grid_levels = Vec::with_capacity(levels.len());
        let mut centers = Vec::new();
        let mut anchors = Vec::new();
        let mut loc_offset = 0usize;
        for (li, &(width, height, stride, base_size)) in levels.iter().enumerate() {
            if width == 0 || height == 0 {
                return Err(Error::invalid(
                    "levels",
                    format!("level {li}: width and height must be positive"),
                ));
            }
            if !(stride > 0.0) || !(base_size > 0.0) {
                return Err(Error::invalid(
                    "levels",
                    format!("level {li}: stride and base_size must be positive"),
                ));
            }
            let shapes = spec.shapes(base_size);
            for row in 0..height {
                for col in 0..width {
                    let cx = (col as f64 + 0.5) * stride;
                    let cy = (row as f64 + 0.5) * stride;
                    centers.push((cx, cy));
                    for &(w, h) in &shapes {
                        anchors.push(BBox::from_center(cx, cy, w, h));
                    }
                }
            }
            grid_levels.push(GridLevel {
                width,
                height,
                stride,
                base_size,
                loc_offset,
            });
            loc_offset += width * height;
        }
        Ok(AnchorGrid {
            spec,
            levels: grid_levels,
            centers,
            anchors,
        })
    }

    /// Builds a single-level grid covering an image of `img_w` x `img_h`
    /// pixels: `ceil(img / stride)` locations per axis.
    pub fn for_image(
        spec: AnchorSpec,
        img_w: usize,
        img_h: usize,
        stride: f64,
        base_size: f64,
    ) -> Result<Self> {
        if img_w == 0 || img_h == 0 {
            return Err(Error::invalid(
                "img_w/img_h",
                "image dimensions must be positive",
            ));
        }
        if !(stride > 0.0) {
            return Err(Error::invalid("stride", "must be positive"));
        }
        let w = (img_w as f64 / stride).ceil() as usize;
        let h = (img_h as f64 / stride).ceil() as usize;
        AnchorGrid::build(spec, &[(w, h, stride, base_size)])
    }

    /// Builds a multi-level (pyramid) grid for an image: one level per
    /// `(stride, base_size)` pair.
    pub fn pyramid_for_image(
        spec: AnchorSpec,
        img_w: usize,
        img_h: usize,
        strides: &[f64],
        base_sizes: &[f64],
    ) -> Result<Self> {
        if strides.len() != base_sizes.len() {
            return Err(Error::invalid(
                "strides/base_sizes",
                format!(
                    "length mismatch: {} strides vs {} base sizes",
                    strides.len(),
                    base_sizes.len()
                ),
            ));
        }
        if img_w == 0 || img_h == 0 {
            return Err(Error::invalid(
                "img_w/img_h",
                "image dimensions must be positive",
            ));
        }
        let mut levels = Vec::with_capacity(strides.len());
        for (&s, &b) in strides.iter().zip(base_sizes) {
            if !(s > 0.0) {
                return Err(Error::invalid("strides", "must be positive"));
            }
            let w = (img_w as f64 / s).ceil() as usize;
            let h = (img_h as f64 / s).ceil() as usize;
            levels.push((w, h, s, b));
        }
        AnchorGrid::build(spec, &levels)
    }

    pub fn num_locations(&self) -> usize {
        self.centers.len()
    }

    pub fn anchors_per_location(&self) -> usize {
        self.spec.anchors_per_location()
    }

    pub fn num_anchors(&self) -> usize {
        self.anchors.len()
    }

    /// The anchor box at location `i`, slot `k`.
    pub fn anchor(&self, i: usize, k: usize) -> &BBox {
        &self.anchors[i * self.anchors_per_location() + k]
    }
}
