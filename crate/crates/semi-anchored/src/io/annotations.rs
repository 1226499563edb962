//! COCO-style annotation ingestion.
//!
//! Reads the documented subset of the COCO instances schema —
//! `images[].{id,width,height}`, `annotations[].{image_id,category_id,
//! bbox}` (bbox as `[x, y, width, height]`), `categories[].{id,name}` —
//! validates cross-references, and exposes ground truth in the
//! contiguous class indexing the rest of the crate uses (categories
//! sorted by id map to classes `1..=C`).
//!
//! Loading is order-independent: images, categories, and annotations
//! are all sorted into a canonical order, so permuting the records of a
//! file yields an identical [`AnnotationSet`].

use std::path::Path;

use serde::Deserialize;

use crate::assignment::{GroundTruth, GtObject};
use crate::error::{Error, Result};
use crate::evaluation::GtRecord;
use crate::geometry::BBox;

#[derive(Debug, Deserialize)]
struct RawFile {
    #[serde(default)]
    images: Vec<RawImage>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
    #[serde(default)]
    categories: Vec<RawCategory>,
}

#[derive(Debug, Deserialize)]
struct RawImage {
    id: i64,
    width: f64,
    height: f64,
}

#[derive(Debug, Deserialize)]
struct RawAnnotation {
    image_id: i64,
    category_id: i64,
    bbox: [f64; 4],
}

#[derive(Debug, Deserialize)]
struct RawCategory {
    id: i64,
    #[serde(default)]
    name: String,
}

/// One image entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInfo {
    pub id: i64,
    pub width: f64,
    pub height: f64,
}

/// One category entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub id: i64,
    pub name: String,
}

/// One validated annotation, box already converted to corner form.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub image_id: i64,
    pub category_id: i64,
    pub bbox: BBox,
}

/// A validated annotation set.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    /// Sorted by id.
    pub images: Vec<ImageInfo>,
    /// Sorted by id; index + 1 is the contiguous class of a category.
    pub categories: Vec<Category>,
    /// Sorted by (image, category, coordinates).
    pub annotations: Vec<Annotation>,
    /// Annotations dropped for non-positive width or height.
    pub dropped_degenerate: usize,
}

impl AnnotationSet {
    /// Parses and validates the JSON text of an annotation file.
    /// `source` names the input in error messages.
    pub fn from_json_str(text: &str, source: &str) -> Result<Self> {
        let raw: RawFile = serde_json::from_str(text)
            .map_err(|e| Error::Annotation(format!("{source}: {e}")))?;

        let mut images: Vec<ImageInfo> = Vec::with_capacity(raw.images.len());
        for (idx, img) in raw.images.iter().enumerate() {
            if !(img.width > 0.0 && img.height > 0.0)
                || !img.width.is_finite()
                || !img.height.is_finite()
            {
                return Err(Error::Annotation(format!(
                    "{source}: image #{idx} (id {}): non-positive size {}x{}",
                    img.id, img.width, img.height
                )));
            }
            images.push(ImageInfo { id: img.id, width: img.width, height: img.height });
        }
        images.sort_by_key(|i| i.id);
        if let Some(w) = images.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Annotation(format!(
                "{source}: duplicate image id {}",
                w[0].id
            )));
        }

        let mut categories: Vec<Category> = raw
            .categories
            .iter()
            .map(|c| Category { id: c.id, name: c.name.clone() })
            .collect();
        categories.sort_by_key(|c| c.id);
        if let Some(w) = categories.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Annotation(format!(
                "{source}: duplicate category id {}",
                w[0].id
            )));
        }

        let mut annotations = Vec::with_capacity(raw.annotations.len());
        let mut dropped_degenerate = 0;
        for (idx, ann) in raw.annotations.iter().enumerate() {
            if images.binary_search_by_key(&ann.image_id, |i| i.id).is_err() {
                return Err(Error::Annotation(format!(
                    "{source}: annotation #{idx}: unknown image id {}",
                    ann.image_id
                )));
            }
            if categories
                .binary_search_by_key(&ann.category_id, |c| c.id)
                .is_err()
            {
                return Err(Error::Annotation(format!(
                    "{source}: annotation #{idx}: unknown category id {}",
                    ann.category_id
                )));
            }
            let [x, y, w, h] = ann.bbox;
            if ![x, y, w, h].iter().all(|v| v.is_finite()) {
                return Err(Error::Annotation(format!(
                    "{source}: annotation #{idx}: non-finite bbox"
                )));
            }
            if w <= 0.0 || h <= 0.0 {
                dropped_degenerate += 1;
                continue;
            }
            annotations.push(Annotation {
                image_id: ann.image_id,
                category_id: ann.category_id,
                bbox: BBox::new(x, y, x + w, y + h),
            });
        }
        annotations.sort_by(|a, b| {
            (a.image_id, a.category_id)
                .cmp(&(b.image_id, b.category_id))
                .then(a.bbox.x1.total_cmp(&b.bbox.x1))
                .then(a.bbox.y1.total_cmp(&b.bbox.y1))
                .then(a.bbox.x2.total_cmp(&b.bbox.x2))
                .then(a.bbox.y2.total_cmp(&b.bbox.y2))
        });

        Ok(AnnotationSet { images, categories, annotations, dropped_degenerate })
    }

    pub fn num_classes(&self) -> usize {
        self.categories.len()
    }

    /// Contiguous class (`1..=C`) of a category id.
    pub fn class_of(&self, category_id: i64) -> Option<usize> {
        self.categories
            .binary_search_by_key(&category_id, |c| c.id)
            .ok()
            .map(|i| i + 1)
    }

    /// Category id behind a contiguous class.
    pub fn category_of(&self, class: usize) -> Option<i64> {
        (class >= 1)
            .then(|| self.categories.get(class - 1).map(|c| c.id))
            .flatten()
    }

    /// Ground truth of one image in contiguous class indexing.
    pub fn ground_truth(&self, image_id: i64) -> Result<GroundTruth> {
        if self.images.binary_search_by_key(&image_id, |i| i.id).is_err() {
            return Err(Error::Annotation(format!("unknown image id {image_id}")));
        }
        if self.categories.is_empty() {
            return Err(Error::Annotation(
                "annotation set has no categories".into(),
            ));
        }
        let objects = self
            .annotations
            .iter()
            .filter(|a| a.image_id == image_id)
            .map(|a| GtObject {
                bbox: a.bbox,
                class_id: self.class_of(a.category_id).expect("validated category"),
            })
            .collect();
        GroundTruth::new(objects, self.num_classes())
    }

    /// Every annotation as an evaluation record (contiguous classes).
    pub fn gt_records(&self) -> Vec<GtRecord> {
        self.annotations
            .iter()
            .map(|a| GtRecord {
                image_id: a.image_id,
                bbox: a.bbox,
                class_id: self.class_of(a.category_id).expect("validated category"),
            })
            .collect()
    }
}

/// Loads and validates an annotation file.
pub fn load_annotations(path: &Path) -> Result<AnnotationSet> {
    let text = std::fs::read_to_string(path)?;
    AnnotationSet::from_json_str(&text, &path.display().to_string())
}
