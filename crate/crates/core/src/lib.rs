//! Scale-aware data augmentation for object detection.
//!
//! - [`policy`]: search space, policy documents and genome encoding.
//! - [`gaussian`]: per-box Gaussian blend maps.
//! - [`box_augment`]: box-level color and geometric ops.
//! - [`zoom`]: image-level zoom-in / zoom-out.
//! - [`metric`]: Pareto Scale Balance and Pearson correlation.
//! - [`evolution`]: evolutionary policy search with pluggable evaluators.
//! - [`dataset`]: COCO-style ingestion and the augmentation pipeline.

pub mod annotated;
pub mod box_augment;
pub mod dataset;
pub mod evolution;
pub mod gaussian;
pub mod metric;
pub mod policy;
pub mod raster;
pub mod zoom;

pub use annotated::{derive_seed, AnnotatedImage, BoxAnnotation};
pub use gaussian::{BlendDirection, BoxGeometry, DomainError};
pub use policy::{Genome, Policy, PolicyError, ScaleCategory};
