//! Ground truth: per-image class instances with polygon masks, loaded from a
//! COCO-style subset, and point-in-mask tests for location accuracy.

use crate::vocabulary::{ClassName, Vocabulary};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read ground truth: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed ground truth JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("annotation {index}: unknown category id {category_id}")]
    UnknownCategory { index: usize, category_id: u64 },
    #[error("category {name:?} is not in vocabulary {vocabulary:?}")]
    CategoryNotInVocabulary { name: String, vocabulary: String },
    #[error("annotation {index}: unknown image id {image_id}")]
    UnknownImage { index: usize, image_id: String },
    #[error("duplicate image id {0}")]
    DuplicateImage(String),
}

pub type Point = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon(pub Vec<Point>);

impl Polygon {
    /// Boundary-inclusive even-odd containment.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.0;
        let n = v.len();
        if n < 3 {
            return false;
        }
        let (px, py) = p;
        let mut inside = false;
        for i in 0..n {
            let (x0, y0) = v[i];
            let (x1, y1) = v[(i + 1) % n];
            if on_segment(p, (x0, y0), (x1, y1)) {
                return true;
            }
            if (y0 > py) != (y1 > py) {
                let x_cross = x0 + (py - y0) * (x1 - x0) / (y1 - y0);
                if px < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Shoelace area in square pixels.
    pub fn area(&self) -> f64 {
        let v = &self.0;
        let n = v.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (x0, y0) = v[i];
                let (x1, y1) = v[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        twice.abs() / 2.0
    }
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let scale = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1.0);
    if cross.abs() > 1e-9 * scale {
        return false;
    }
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub class: ClassName,
    pub polygons: Vec<Polygon>,
}

impl Instance {
    pub fn contains(&self, p: Point) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }

    pub fn area(&self) -> f64 {
        self.polygons.iter().map(Polygon::area).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskTest {
    Hit,
    Miss,
    ClassAbsent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthImage {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub file_name: String,
    pub instances: Vec<Instance>,
}

impl GroundTruthImage {
    pub fn class_set(&self) -> BTreeSet<String> {
        self.instances.iter().map(|i| i.class.normalized().to_string()).collect()
    }

    pub fn has_class(&self, class: &str) -> bool {
        self.instances.iter().any(|i| i.class.normalized() == class)
    }

    /// First instance of `class` whose mask contains `p`.
    pub fn containing_instance(&self, class: &str, p: Point) -> Option<&Instance> {
        self.instances
            .iter()
            .find(|i| i.class.normalized() == class && i.contains(p))
    }

    /// `class` is a canonical class name.
    pub fn point_in_class_mask(&self, class: &str, p: Point) -> MaskTest {
        if !self.has_class(class) {
            MaskTest::ClassAbsent
        } else if self.containing_instance(class, p).is_some() {
            MaskTest::Hit
        } else {
            MaskTest::Miss
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSet {
    pub vocabulary_id: String,
    pub images: BTreeMap<String, GroundTruthImage>,
    /// Instances or polygons dropped during loading.
    pub warnings: Vec<String>,
}

impl GroundTruthSet {
    pub fn get(&self, image_id: &str) -> Option<&GroundTruthImage> {
        self.images.get(image_id)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CocoId {
    Int(u64),
    Str(String),
}

impl std::fmt::Display for CocoId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CocoId::Int(i) => write!(f, "{i}"),
            CocoId::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: CocoId,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub file_name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub image_id: CocoId,
    pub category_id: u64,
    pub segmentation: Vec<Vec<f64>>,
}

/// COCO-style ground-truth document (polygon segmentations only).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CocoFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary_id: Option<String>,
    pub images: Vec<CocoImage>,
    pub categories: Vec<CocoCategory>,
    pub annotations: Vec<CocoAnnotation>,
}

fn polygon_from_flat(flat: &[f64], width: u32, height: u32) -> Result<Polygon, String> {
    if flat.len() % 2 != 0 {
        return Err(format!("odd coordinate count {}", flat.len()));
    }
    if flat.len() < 6 {
        return Err(format!("{} vertices, need at least 3", flat.len() / 2));
    }
    let (w, h) = (f64::from(width), f64::from(height));
    let points: Vec<Point> = flat.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| !(x.is_finite() && y.is_finite() && (0.0..=w).contains(x) && (0.0..=h).contains(y)))
    {
        return Err(format!("vertex ({x}, {y}) outside {width}x{height} image"));
    }
    let poly = Polygon(points);
    if poly.area() == 0.0 {
        return Err("zero-area polygon".into());
    }
    Ok(poly)
}

impl GroundTruthSet {
    /// Validates a COCO-style document against `vocab`. Degenerate polygons
    /// are dropped with a warning; an instance left without polygons is
    /// dropped too.
    pub fn from_coco(file: CocoFile, vocab: &Vocabulary) -> Result<Self, DatasetError> {
        let mut categories = HashMap::new();
        for cat in &file.categories {
            let class = vocab
                .contains(&cat.name)
                .ok_or_else(|| DatasetError::CategoryNotInVocabulary {
                    name: cat.name.clone(),
                    vocabulary: vocab.id().to_string(),
                })?;
            categories.insert(cat.id, class.clone());
        }
        let mut images = BTreeMap::new();
        for img in &file.images {
            let id = img.id.to_string();
            let gt = GroundTruthImage {
                image_id: id.clone(),
                width: img.width,
                height: img.height,
                file_name: img.file_name.clone(),
                instances: Vec::new(),
            };
            if images.insert(id.clone(), gt).is_some() {
                return Err(DatasetError::DuplicateImage(id));
            }
        }
        let mut warnings = Vec::new();
        for (index, ann) in file.annotations.iter().enumerate() {
            let class = categories
                .get(&ann.category_id)
                .ok_or(DatasetError::UnknownCategory {
                    index,
                    category_id: ann.category_id,
                })?;
            let image_id = ann.image_id.to_string();
            let image = images
                .get_mut(&image_id)
                .ok_or_else(|| DatasetError::UnknownImage {
                    index,
                    image_id: image_id.clone(),
                })?;
            let mut polygons = Vec::new();
            for flat in &ann.segmentation {
                match polygon_from_flat(flat, image.width, image.height) {
                    Ok(p) => polygons.push(p),
                    Err(reason) => {
                        let msg = format!("annotation {index} (image {image_id}): polygon rejected: {reason}");
                        log::warn!("{msg}");
                        warnings.push(msg);
                    }
                }
            }
            if polygons.is_empty() {
                let msg = format!("annotation {index} (image {image_id}): instance rejected, no valid polygon");
                log::warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            image.instances.push(Instance {
                class: class.clone(),
                polygons,
            });
        }
        Ok(Self {
            vocabulary_id: file.vocabulary_id.unwrap_or_else(|| vocab.id().to_string()),
            images,
            warnings,
        })
    }

    pub fn from_json(text: &str, vocab: &Vocabulary) -> Result<Self, DatasetError> {
        Self::from_coco(serde_json::from_str(text)?, vocab)
    }

    pub fn load(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Self, DatasetError> {
        Self::from_json(&std::fs::read_to_string(path)?, vocab)
    }
}

/// Free-function form of [`GroundTruthSet::load`].
pub fn load_ground_truth(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<GroundTruthSet, DatasetError> {
    GroundTruthSet::load(path, vocab)
}

/// Free-function form of [`GroundTruthImage::point_in_class_mask`].
pub fn point_in_class_mask(gt: &GroundTruthImage, class: &ClassName, p: Point) -> MaskTest {
    gt.point_in_class_mask(class.normalized(), p)
}
