//! COCO-style annotation subset and the dataset augmentation pipeline.
//!
//! Each image goes through image-level zoom first and box-level
//! augmentation second, so scale categories and area ratios follow the
//! post-zoom box sizes. Every image draws from its own RNG seeded by
//! [`derive_seed`], which makes the output independent of processing order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageFormat, ImageReader, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotated::{derive_seed, AnnotatedImage, BoxAnnotation};
use crate::box_augment::{augment_boxes, BoxAudit};
use crate::gaussian::BlendDirection;
use crate::policy::Policy;
use crate::zoom::{apply_image_level, ZoomBranch, ZoomDecision};

/// JPEG quality used when re-encoding lossy outputs.
pub const JPEG_QUALITY: u8 = 95;

#[derive(Debug)]
pub enum DatasetError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { path: String, message: String },
    /// Annotations referencing image ids that do not exist.
    DanglingAnnotations { image_ids: Vec<u64> },
    DuplicateImageId(u64),
    InvalidBox { annotation: usize, bbox: [f64; 4] },
    Image { path: PathBuf, message: String },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Self::Parse { path, message } => {
                if path.is_empty() || path == "." {
                    write!(f, "annotation document: {message}")
                } else {
                    write!(f, "annotation document at {path}: {message}")
                }
            }
            Self::DanglingAnnotations { image_ids } => {
                let ids: Vec<String> = image_ids.iter().map(u64::to_string).collect();
                write!(f, "annotations reference unknown image ids: {}", ids.join(", "))
            }
            Self::DuplicateImageId(id) => write!(f, "image id {id} appears more than once"),
            Self::InvalidBox { annotation, bbox } => write!(
                f,
                "annotation {annotation} has a non-positive or non-finite bbox {bbox:?}"
            ),
            Self::Image { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

impl std::error::Error for DatasetError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u64,
    pub file_name: String,
    pub height: u32,
    pub width: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    pub image_id: u64,
    /// `(x_min, y_min, w, h)`.
    pub bbox: [f64; 4],
    pub category_id: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub id: u64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

/// The annotation document as stored on disk. Unknown top-level keys
/// (licenses, info, ...) are ignored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationDocument {
    pub images: Vec<ImageEntry>,
    pub annotations: Vec<AnnotationEntry>,
    #[serde(default)]
    pub categories: Vec<CategoryEntry>,
}

impl AnnotationDocument {
    pub fn from_json(doc: &str) -> Result<Self, DatasetError> {
        let de = &mut serde_json::Deserializer::from_str(doc);
        serde_path_to_error::deserialize(de).map_err(|e| DatasetError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation document serializes")
    }
}

/// One image with its boxes in center form.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedImage {
    pub entry: ImageEntry,
    pub boxes: Vec<BoxAnnotation>,
}

/// A validated annotation document plus the directory its files live in.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetIndex {
    pub image_root: PathBuf,
    pub images: Vec<IndexedImage>,
    pub categories: Vec<CategoryEntry>,
}

impl DatasetIndex {
    /// Validates a parsed document: unique image ids, no dangling
    /// annotations, positive finite boxes.
    pub fn from_document(
        doc: AnnotationDocument,
        image_root: impl Into<PathBuf>,
    ) -> Result<Self, DatasetError> {
        let mut position = HashMap::new();
        for (i, img) in doc.images.iter().enumerate() {
            if position.insert(img.id, i).is_some() {
                return Err(DatasetError::DuplicateImageId(img.id));
            }
        }
        let dangling: BTreeSet<u64> = doc
            .annotations
            .iter()
            .filter(|a| !position.contains_key(&a.image_id))
            .map(|a| a.image_id)
            .collect();
        if !dangling.is_empty() {
            return Err(DatasetError::DanglingAnnotations {
                image_ids: dangling.into_iter().collect(),
            });
        }
        let mut images: Vec<IndexedImage> = doc
            .images
            .into_iter()
            .map(|entry| IndexedImage {
                entry,
                boxes: Vec::new(),
            })
            .collect();
        for (i, a) in doc.annotations.iter().enumerate() {
            let [x, y, w, h] = a.bbox;
            if !(a.bbox.iter().all(|v| v.is_finite()) && w > 0.0 && h > 0.0) {
                return Err(DatasetError::InvalidBox {
                    annotation: i,
                    bbox: a.bbox,
                });
            }
            images[position[&a.image_id]]
                .boxes
                .push(BoxAnnotation::from_corner(x, y, w, h, a.category_id));
        }
        Ok(Self {
            image_root: image_root.into(),
            images,
            categories: doc.categories,
        })
    }

    pub fn annotation_count(&self) -> usize {
        self.images.iter().map(|i| i.boxes.len()).sum()
    }

    pub fn image_path(&self, image: &IndexedImage) -> PathBuf {
        self.image_root.join(&image.entry.file_name)
    }

    /// Decodes one image. Files are only touched here, never at load time.
    pub fn read_image(&self, image: &IndexedImage) -> Result<AnnotatedImage, DatasetError> {
        let path = self.image_path(image);
        let img_err = |message: String| DatasetError::Image {
            path: path.clone(),
            message,
        };
        let pixels = ImageReader::open(&path)
            .map_err(|e| img_err(e.to_string()))?
            .with_guessed_format()
            .map_err(|e| img_err(e.to_string()))?
            .decode()
            .map_err(|e| img_err(e.to_string()))?
            .to_rgb8();
        Ok(AnnotatedImage::new(
            image.entry.id.to_string(),
            pixels,
            image.boxes.clone(),
        ))
    }
}

pub fn load_dataset(
    annotation_path: impl AsRef<Path>,
    image_root: impl Into<PathBuf>,
) -> Result<DatasetIndex, DatasetError> {
    let path = annotation_path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    DatasetIndex::from_document(AnnotationDocument::from_json(&text)?, image_root)
}

/// Result of augmenting one image.
#[derive(Clone, Debug)]
pub struct AugmentedImage {
    pub image: AnnotatedImage,
    pub zoom: ZoomDecision,
    pub boxes_in: usize,
    pub audit: Vec<BoxAudit>,
}

/// Image-level zoom followed by box-level augmentation, driven by the
/// per-image seed.
pub fn augment_image(
    img: &AnnotatedImage,
    policy: &Policy,
    base_seed: u64,
    direction: BlendDirection,
) -> AugmentedImage {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(base_seed, &img.image_id));
    let (zoomed, zoom) = apply_image_level(img, policy, &mut rng);
    let (image, audit) = augment_boxes(&zoomed, policy, &mut rng, direction);
    AugmentedImage {
        image,
        zoom,
        boxes_in: img.boxes.len(),
        audit,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub zoom_in: usize,
    pub zoom_out: usize,
    pub original: usize,
}

impl BranchCounts {
    pub fn record(&mut self, branch: ZoomBranch) {
        match branch {
            ZoomBranch::ZoomIn => self.zoom_in += 1,
            ZoomBranch::ZoomOut => self.zoom_out += 1,
            ZoomBranch::Original => self.original += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.zoom_in + self.zoom_out + self.original
    }

    /// `(zoom_in, zoom_out, original)` as fractions; zeros when empty.
    pub fn frequencies(&self) -> [f64; 3] {
        let n = self.total().max(1) as f64;
        [
            self.zoom_in as f64 / n,
            self.zoom_out as f64 / n,
            self.original as f64 / n,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image_id: u64,
    pub file_name: String,
    pub reason: String,
    pub boxes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub images_in: usize,
    pub processed: usize,
    pub skipped: Vec<SkippedImage>,
    pub boxes_in: usize,
    pub boxes_kept: usize,
    /// Boxes lost to zoom-in cropping plus those of skipped images.
    pub boxes_dropped: usize,
    pub branch_counts: BranchCounts,
    /// `(zoom_in, zoom_out, original)` over processed images.
    pub branch_frequencies: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct AugmentOptions {
    pub direction: BlendDirection,
    /// Directory name under the output root that receives images.
    pub images_subdir: String,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            direction: BlendDirection::default(),
            images_subdir: "images".into(),
        }
    }
}

fn write_image(pixels: &RgbImage, path: &Path) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| e.to_string())?;
    }
    let format = ImageFormat::from_path(path).unwrap_or(ImageFormat::Png);
    #[cfg(feature = "codecs")]
    if format == ImageFormat::Jpeg {
        let file = fs::File::create(path).map_err(|e| e.to_string())?;
        let mut encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(
            std::io::BufWriter::new(file),
            JPEG_QUALITY,
        );
        return encoder.encode_image(pixels).map_err(|e| e.to_string());
    }
    pixels.save_with_format(path, format).map_err(|e| e.to_string())
}

fn process_one(
    index: &DatasetIndex,
    entry: &IndexedImage,
    policy: &Policy,
    seed: u64,
    options: &AugmentOptions,
    images_out: &Path,
) -> Result<AugmentedImage, String> {
    let img = index.read_image(entry).map_err(|e| e.to_string())?;
    let out = augment_image(&img, policy, seed, options.direction);
    write_image(&out.image.pixels, &images_out.join(&entry.entry.file_name))?;
    Ok(out)
}

/// Augments every image, writing rasters under `out_dir/<images_subdir>`,
/// plus `annotations.json` and `report.json` in `out_dir`.
///
/// Unreadable or unwritable images are skipped and listed in the report.
pub fn augment_dataset(
    index: &DatasetIndex,
    policy: &Policy,
    seed: u64,
    out_dir: impl AsRef<Path>,
    options: &AugmentOptions,
) -> Result<AugmentReport, DatasetError> {
    let out_dir = out_dir.as_ref();
    let images_out = out_dir.join(&options.images_subdir);
    fs::create_dir_all(&images_out).map_err(|source| DatasetError::Io {
        path: images_out.clone(),
        source,
    })?;

    let work = |entry: &IndexedImage| process_one(index, entry, policy, seed, options, &images_out);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<AugmentedImage, String>> = {
        use rayon::prelude::*;
        index.images.par_iter().map(work).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<AugmentedImage, String>> = index.images.iter().map(work).collect();

    let mut doc = AnnotationDocument {
        categories: index.categories.clone(),
        ..Default::default()
    };
    let mut report = AugmentReport {
        images_in: index.images.len(),
        processed: 0,
        skipped: Vec::new(),
        boxes_in: index.annotation_count(),
        boxes_kept: 0,
        boxes_dropped: 0,
        branch_counts: BranchCounts::default(),
        branch_frequencies: [0.0; 3],
    };
    let mut next_annotation_id = 1u64;
    for (entry, result) in index.images.iter().zip(results) {
        match result {
            Ok(out) => {
                report.processed += 1;
                report.branch_counts.record(out.zoom.branch);
                report.boxes_kept += out.image.boxes.len();
                report.boxes_dropped += out.boxes_in - out.image.boxes.len();
                doc.images.push(ImageEntry {
                    id: entry.entry.id,
                    file_name: entry.entry.file_name.clone(),
                    height: out.image.height(),
                    width: out.image.width(),
                });
                for b in &out.image.boxes {
                    doc.annotations.push(AnnotationEntry {
                        id: Some(next_annotation_id),
                        image_id: entry.entry.id,
                        bbox: b.to_corner(),
                        category_id: b.category_id,
                    });
                    next_annotation_id += 1;
                }
            }
            Err(reason) => {
                report.boxes_dropped += entry.boxes.len();
                report.skipped.push(SkippedImage {
                    image_id: entry.entry.id,
                    file_name: entry.entry.file_name.clone(),
                    reason,
                    boxes: entry.boxes.len(),
                });
            }
        }
    }
    report.branch_frequencies = report.branch_counts.frequencies();

    let write = |name: &str, text: String| {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|source| DatasetError::Io { path, source })
    };
    write("annotations.json", doc.to_json())?;
    write(
        "report.json",
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    Ok(report)
}

/// Groups a report's skipped entries by reason, for display.
pub fn skipped_by_reason(report: &AugmentReport) -> BTreeMap<&str, Vec<u64>> {
    let mut out: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for s in &report.skipped {
        out.entry(s.reason.as_str()).or_default().push(s.image_id);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": 7, "file_name": "a.png", "height": 64, "width": 48}],
        "annotations": [{"id": 1, "image_id": 7, "bbox": [10, 20, 30, 40], "category_id": 3}],
        "categories": [{"id": 3, "name": "thing"}],
        "licenses": []
    }"#;

    #[test]
    fn minimal_document_loads_and_converts_to_center_form() {
        let doc = AnnotationDocument::from_json(MINIMAL).unwrap();
        let index = DatasetIndex::from_document(doc, "/nowhere").unwrap();
        assert_eq!((index.images.len(), index.annotation_count()), (1, 1));
        let b = index.images[0].boxes[0];
        assert_eq!((b.x_c, b.y_c, b.h, b.w, b.category_id), (25.0, 40.0, 40.0, 30.0, 3));
        assert_eq!(b.to_corner(), [10.0, 20.0, 30.0, 40.0]);
    }

    #[test]
    fn dangling_annotation_names_the_id() {
        let doc = AnnotationDocument::from_json(&MINIMAL.replace(r#""image_id": 7"#, r#""image_id": 99"#))
            .unwrap();
        let err = DatasetIndex::from_document(doc, ".").unwrap_err();
        assert!(matches!(&err, DatasetError::DanglingAnnotations { image_ids } if image_ids == &[99]));
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn non_positive_boxes_are_rejected() {
        let doc = AnnotationDocument::from_json(&MINIMAL.replace("[10, 20, 30, 40]", "[10, 20, 0, 40]"))
            .unwrap();
        assert!(matches!(
            DatasetIndex::from_document(doc, "."),
            Err(DatasetError::InvalidBox { annotation: 0, .. })
        ));
    }

    #[test]
    fn parse_errors_carry_a_path() {
        let err = AnnotationDocument::from_json(&MINIMAL.replace(r#""file_name": "a.png", "#, ""))
            .unwrap_err();
        match err {
            DatasetError::Parse { path, message } => {
                assert_eq!(path, "images[0]");
                assert!(message.contains("file_name"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_image_ids_are_rejected() {
        let doc = AnnotationDocument {
            images: vec![
                ImageEntry { id: 1, file_name: "a".into(), height: 1, width: 1 },
                ImageEntry { id: 1, file_name: "b".into(), height: 1, width: 1 },
            ],
            ..Default::default()
        };
        assert!(matches!(
            DatasetIndex::from_document(doc, "."),
            Err(DatasetError::DuplicateImageId(1))
        ));
    }

    #[test]
    fn branch_frequencies_follow_the_published_policy() {
        let policy = Policy::published();
        let mut counts = BranchCounts::default();
        for i in 0..1000 {
            let img = AnnotatedImage::new(format!("img{i}"), RgbImage::new(8, 8), vec![]);
            counts.record(augment_image(&img, &policy, 17, BlendDirection::default()).zoom.branch);
        }
        let f = counts.frequencies();
        for (got, want) in f.iter().zip([0.2, 0.4, 0.4]) {
            assert!((got - want).abs() < 0.04, "{f:?}");
        }
    }
}
