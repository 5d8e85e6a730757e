use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::gaussian::BoxGeometry;
use crate::policy::ScaleCategory;

/// Axis-aligned object box in center form, pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxAnnotation {
    pub x_c: f64,
    pub y_c: f64,
    pub h: f64,
    pub w: f64,
    pub category_id: u64,
}

impl BoxAnnotation {
    /// From COCO corner form `(x_min, y_min, w, h)`.
    pub fn from_corner(x_min: f64, y_min: f64, w: f64, h: f64, category_id: u64) -> Self {
        Self {
            x_c: x_min + w / 2.0,
            y_c: y_min + h / 2.0,
            h,
            w,
            category_id,
        }
    }

    /// `(x_min, y_min, w, h)`.
    pub fn to_corner(&self) -> [f64; 4] {
        [self.x_c - self.w / 2.0, self.y_c - self.h / 2.0, self.w, self.h]
    }

    /// `(x0, y0, x1, y1)`.
    pub fn bounds(&self) -> [f64; 4] {
        [
            self.x_c - self.w / 2.0,
            self.y_c - self.h / 2.0,
            self.x_c + self.w / 2.0,
            self.y_c + self.h / 2.0,
        ]
    }

    pub fn from_bounds(x0: f64, y0: f64, x1: f64, y1: f64, category_id: u64) -> Self {
        Self {
            x_c: (x0 + x1) / 2.0,
            y_c: (y0 + y1) / 2.0,
            h: y1 - y0,
            w: x1 - x0,
            category_id,
        }
    }

    pub fn area(&self) -> f64 {
        self.h * self.w
    }

    pub fn scale(&self) -> ScaleCategory {
        ScaleCategory::from_area(self.area())
    }

    pub fn geometry(&self, image_width: u32, image_height: u32) -> BoxGeometry {
        BoxGeometry {
            x_c: self.x_c,
            y_c: self.y_c,
            h: self.h,
            w: self.w,
            image_h: f64::from(image_height),
            image_w: f64::from(image_width),
        }
    }
}

/// An RGB raster with its object boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedImage {
    pub image_id: String,
    pub pixels: RgbImage,
    pub boxes: Vec<BoxAnnotation>,
}

impl AnnotatedImage {
    pub fn new(image_id: impl Into<String>, pixels: RgbImage, boxes: Vec<BoxAnnotation>) -> Self {
        Self {
            image_id: image_id.into(),
            pixels,
            boxes,
        }
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }
}

/// Stable per-image seed: FNV-1a over the id, mixed with the base seed.
pub fn derive_seed(base_seed: u64, image_id: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in image_id.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = hash ^ base_seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
