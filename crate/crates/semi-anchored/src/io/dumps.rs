//! Line-oriented text artifacts: detection files, head-output files,
//! and target/statistics dumps.
//!
//! All floats are printed with 6 significant digits via [`fmt_g6`] so
//! dumps are portable golden files. Column orders:
//!
//! * detections: `<image_id> <class> <x> <y> <w> <h> <score>` (box in
//!   corner-origin width/height form),
//! * head outputs: a `head-outputs v1` header, then per image a
//!   `image <id> locations <L> classes <C> anchors <K>` line followed
//!   by `loc <i> <p_1> .. <p_C>` lines and
//!   `anchor <i> <k> <prob> <x1> <y1> <x2> <y2>` lines (refined box in
//!   corner coordinates).

use std::fmt::Write as _;
use std::path::Path;

use crate::assignment::AssignmentResult;
use crate::error::{Error, Result};
use crate::evaluation::{DetRecord, EvalReport, ImbalanceStats};
use crate::geometry::BBox;

use super::write_atomic;

/// Formats with 6 significant digits, trailing zeros trimmed;
/// magnitudes outside [1e-4, 1e6) switch to exponent form.
pub fn fmt_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    // Round to 6 significant digits first so the representation choice
    // sees the rounded exponent.
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("always has exponent");
    let exp: i32 = exp.parse().expect("valid exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (5 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    }
}

fn parse_field<T: std::str::FromStr>(
    file: &str,
    line: usize,
    what: &str,
    text: &str,
) -> Result<T> {
    text.parse().map_err(|_| Error::Parse {
        file: file.to_string(),
        line,
        reason: format!("cannot parse {what} from `{text}`"),
    })
}

fn parse_error(file: &str, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { file: file.to_string(), line, reason: reason.into() }
}

/// Renders detection records in the documented column order.
pub fn detections_text(dets: &[DetRecord]) -> String {
    let mut out = String::new();
    for d in dets {
        writeln!(
            out,
            "{} {} {} {} {} {} {}",
            d.image_id,
            d.class_id,
            fmt_g6(d.bbox.x1),
            fmt_g6(d.bbox.y1),
            fmt_g6(d.bbox.width()),
            fmt_g6(d.bbox.height()),
            fmt_g6(d.score)
        )
        .expect("string write");
    }
    out
}

/// Writes a detection file atomically.
pub fn write_detections(path: &Path, dets: &[DetRecord]) -> Result<()> {
    write_atomic(path, &detections_text(dets))
}

/// Parses detection text. `source` names the input in errors.
pub fn parse_detections(text: &str, source: &str) -> Result<Vec<DetRecord>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(parse_error(
                source,
                line_no,
                format!("expected 7 columns, got {}", fields.len()),
            ));
        }
        let image_id: i64 = parse_field(source, line_no, "image id", fields[0])?;
        let class_id: usize = parse_field(source, line_no, "class", fields[1])?;
        if class_id == 0 {
            return Err(parse_error(source, line_no, "class must be >= 1"));
        }
        let x: f64 = parse_field(source, line_no, "x", fields[2])?;
        let y: f64 = parse_field(source, line_no, "y", fields[3])?;
        let w: f64 = parse_field(source, line_no, "width", fields[4])?;
        let h: f64 = parse_field(source, line_no, "height", fields[5])?;
        let score: f64 = parse_field(source, line_no, "score", fields[6])?;
        if ![x, y, w, h].iter().all(|v| v.is_finite()) || w <= 0.0 || h <= 0.0 {
            return Err(parse_error(source, line_no, "box must have positive extent"));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(parse_error(source, line_no, "score must be in [0,1]"));
        }
        out.push(DetRecord {
            image_id,
            class_id,
            bbox: BBox::new(x, y, x + w, y + h),
            score,
        });
    }
    Ok(out)
}

/// Reads a detection file.
pub fn read_detections(path: &Path) -> Result<Vec<DetRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_detections(&text, &path.display().to_string())
}

/// The per-image head outputs that factorized inference consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub image_id: i64,
    pub num_classes: usize,
    pub anchors_per_location: usize,
    /// `locations * num_classes`, location-major.
    pub loc_probs: Vec<f64>,
    /// `locations * anchors_per_location`, location-major.
    pub anchor_probs: Vec<f64>,
    /// Refined box per anchor slot, aligned with `anchor_probs`.
    pub refined: Vec<BBox>,
}

impl HeadOutputs {
    pub fn num_locations(&self) -> usize {
        if self.num_classes == 0 {
            0
        } else {
            self.loc_probs.len() / self.num_classes
        }
    }
}

const HEAD_OUTPUTS_HEADER: &str = "head-outputs v1";

/// Renders head outputs in the documented format.
pub fn head_outputs_text(images: &[HeadOutputs]) -> String {
    let mut out = String::new();
    writeln!(out, "{HEAD_OUTPUTS_HEADER}").expect("string write");
    for img in images {
        let locations = img.num_locations();
        writeln!(
            out,
            "image {} locations {} classes {} anchors {}",
            img.image_id, locations, img.num_classes, img.anchors_per_location
        )
        .expect("string write");
        for i in 0..locations {
            write!(out, "loc {i}").expect("string write");
            for c in 0..img.num_classes {
                write!(out, " {}", fmt_g6(img.loc_probs[i * img.num_classes + c]))
                    .expect("string write");
            }
            out.push('\n');
        }
        for i in 0..locations {
            for k in 0..img.anchors_per_location {
                let slot = i * img.anchors_per_location + k;
                let b = img.refined[slot];
                writeln!(
                    out,
                    "anchor {i} {k} {} {} {} {} {}",
                    fmt_g6(img.anchor_probs[slot]),
                    fmt_g6(b.x1),
                    fmt_g6(b.y1),
                    fmt_g6(b.x2),
                    fmt_g6(b.y2)
                )
                .expect("string write");
            }
        }
    }
    out
}

/// Writes head outputs atomically.
pub fn write_head_outputs(path: &Path, images: &[HeadOutputs]) -> Result<()> {
    write_atomic(path, &head_outputs_text(images))
}

/// Parses head-output text. Every location and anchor slot of each
/// image must be covered exactly once.
pub fn parse_head_outputs(text: &str, source: &str) -> Result<Vec<HeadOutputs>> {
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, header)) if header.trim() == HEAD_OUTPUTS_HEADER => {}
        Some((_, other)) => {
            return Err(parse_error(
                source,
                1,
                format!("expected header `{HEAD_OUTPUTS_HEADER}`, got `{other}`"),
            ))
        }
        None => return Err(parse_error(source, 1, "empty file")),
    }
    let mut images = Vec::new();
    while let Some((idx, raw)) = lines.next() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 || fields[0] != "image" {
            return Err(parse_error(
                source,
                line_no,
                "expected `image <id> locations <L> classes <C> anchors <K>`",
            ));
        }
        if fields[2] != "locations" || fields[4] != "classes" || fields[6] != "anchors" {
            return Err(parse_error(source, line_no, "malformed image header labels"));
        }
        let image_id: i64 = parse_field(source, line_no, "image id", fields[1])?;
        let locations: usize = parse_field(source, line_no, "locations", fields[3])?;
        let num_classes: usize = parse_field(source, line_no, "classes", fields[5])?;
        let anchors: usize = parse_field(source, line_no, "anchors", fields[7])?;
        if num_classes == 0 || anchors == 0 {
            return Err(parse_error(source, line_no, "classes and anchors must be >= 1"));
        }

        let mut loc_probs = vec![f64::NAN; locations * num_classes];
        let mut loc_seen = vec![false; locations];
        let mut anchor_probs = vec![f64::NAN; locations * anchors];
        let mut refined = vec![BBox::new(0.0, 0.0, 1.0, 1.0); locations * anchors];
        let mut anchor_seen = vec![false; locations * anchors];

        let needed = locations + locations * anchors;
        for _ in 0..needed {
            let Some((idx, raw)) = lines.next() else {
                return Err(parse_error(source, line_no, "truncated image block"));
            };
            let row_no = idx + 1;
            let fields: Vec<&str> = raw.trim().split_whitespace().collect();
            match fields.first().copied() {
                Some("loc") => {
                    if fields.len() != 2 + num_classes {
                        return Err(parse_error(
                            source,
                            row_no,
                            format!("expected `loc <i>` plus {num_classes} probabilities"),
                        ));
                    }
                    let i: usize = parse_field(source, row_no, "location", fields[1])?;
                    if i >= locations {
                        return Err(parse_error(source, row_no, "location out of range"));
                    }
                    if loc_seen[i] {
                        return Err(parse_error(source, row_no, "duplicate location row"));
                    }
                    loc_seen[i] = true;
                    for c in 0..num_classes {
                        let p: f64 =
                            parse_field(source, row_no, "probability", fields[2 + c])?;
                        if !(0.0..=1.0).contains(&p) {
                            return Err(parse_error(
                                source,
                                row_no,
                                "probability must be in [0,1]",
                            ));
                        }
                        loc_probs[i * num_classes + c] = p;
                    }
                }
                Some("anchor") => {
                    if fields.len() != 8 {
                        return Err(parse_error(
                            source,
                            row_no,
                            "expected `anchor <i> <k> <prob> <x1> <y1> <x2> <y2>`",
                        ));
                    }
                    let i: usize = parse_field(source, row_no, "location", fields[1])?;
                    let k: usize = parse_field(source, row_no, "anchor", fields[2])?;
                    if i >= locations || k >= anchors {
                        return Err(parse_error(source, row_no, "anchor slot out of range"));
                    }
                    let slot = i * anchors + k;
                    if anchor_seen[slot] {
                        return Err(parse_error(source, row_no, "duplicate anchor row"));
                    }
                    anchor_seen[slot] = true;
                    let p: f64 = parse_field(source, row_no, "probability", fields[3])?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(parse_error(source, row_no, "probability must be in [0,1]"));
                    }
                    let x1: f64 = parse_field(source, row_no, "x1", fields[4])?;
                    let y1: f64 = parse_field(source, row_no, "y1", fields[5])?;
                    let x2: f64 = parse_field(source, row_no, "x2", fields[6])?;
                    let y2: f64 = parse_field(source, row_no, "y2", fields[7])?;
                    let b = BBox::new(x1, y1, x2, y2);
                    if !b.is_valid() {
                        return Err(parse_error(source, row_no, "refined box must be valid"));
                    }
                    anchor_probs[slot] = p;
                    refined[slot] = b;
                }
                _ => {
                    return Err(parse_error(
                        source,
                        row_no,
                        "expected a `loc` or `anchor` row inside an image block",
                    ))
                }
            }
        }
        images.push(HeadOutputs {
            image_id,
            num_classes,
            anchors_per_location: anchors,
            loc_probs,
            anchor_probs,
            refined,
        });
    }
    Ok(images)
}

/// Reads a head-output file.
pub fn read_head_outputs(path: &Path) -> Result<Vec<HeadOutputs>> {
    let text = std::fs::read_to_string(path)?;
    parse_head_outputs(&text, &path.display().to_string())
}

/// Renders one image's assignment: location labels (0 = background)
/// and per-anchor pre-regression labels.
pub fn assignment_text(
    image_id: i64,
    assign: &AssignmentResult,
    anchors_per_location: usize,
) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "image {} locations {} anchors-per-location {}",
        image_id,
        assign.locations.len(),
        anchors_per_location
    )
    .expect("string write");
    for (i, loc) in assign.locations.iter().enumerate() {
        writeln!(
            out,
            "location {i} label {} positive {}",
            loc.label,
            u8::from(loc.positive)
        )
        .expect("string write");
    }
    for (slot, &label) in assign.anchor_labels.iter().enumerate() {
        let i = slot / anchors_per_location;
        let k = slot % anchors_per_location;
        writeln!(out, "anchor {i} {k} label {label}").expect("string write");
    }
    out
}

/// Renders an evaluation report as flat `key value` lines; area-band
/// entries with no ground truth print `n/a`.
pub fn eval_report_text(report: &EvalReport) -> String {
    fn opt(v: Option<f64>) -> String {
        v.map_or_else(|| "n/a".to_string(), fmt_g6)
    }
    let mut out = String::new();
    writeln!(out, "ap {}", fmt_g6(report.ap)).expect("string write");
    writeln!(out, "ap50 {}", fmt_g6(report.ap50)).expect("string write");
    writeln!(out, "ap75 {}", fmt_g6(report.ap75)).expect("string write");
    writeln!(out, "ap_small {}", opt(report.ap_small)).expect("string write");
    writeln!(out, "ap_medium {}", opt(report.ap_medium)).expect("string write");
    writeln!(out, "ap_large {}", opt(report.ap_large)).expect("string write");
    for (cls, ap) in &report.per_class {
        writeln!(out, "class {cls} {}", fmt_g6(*ap)).expect("string write");
    }
    writeln!(out, "num_gt {}", report.num_gt).expect("string write");
    writeln!(out, "num_dets {}", report.num_dets).expect("string write");
    out
}

/// Renders imbalance statistics with both ratios.
pub fn imbalance_text(stats: &ImbalanceStats) -> String {
    let mut out = String::new();
    writeln!(out, "positive_anchors {}", stats.positive_anchors).expect("string write");
    writeln!(out, "negative_anchors {}", stats.negative_anchors).expect("string write");
    writeln!(out, "positive_locations {}", stats.positive_locations).expect("string write");
    writeln!(out, "negative_locations {}", stats.negative_locations).expect("string write");
    writeln!(
        out,
        "anchor_positive_fraction {}",
        fmt_g6(stats.anchor_positive_fraction())
    )
    .expect("string write");
    writeln!(
        out,
        "location_positive_fraction {}",
        fmt_g6(stats.location_positive_fraction())
    )
    .expect("string write");
    out
}
