//! Gaussian blend maps for box-level augmentation.
//!
//! Each box gets an axis-aligned Gaussian weight field centred on the box.
//! Its spreads are chosen so the field integrates to `r * h * w` (the area
//! ratio times the box area) while its aspect follows the box's aspect
//! relative to the image:
//!
//! ```text
//! sigma_h = h * sqrt((W / H) * r / 2pi)     spread along the height axis
//! sigma_w = w * sqrt((H / W) * r / 2pi)     spread along the width axis
//! sigma_h / sigma_w = (h / H) / (w / W)
//! ```
//!
//! The map extends over the whole image; nothing is clipped to the box.

use std::f64::consts::PI;
use std::fmt;

use image::RgbImage;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub enum DomainError {
    /// A length, size or ratio that must be positive was not.
    NonPositive { field: &'static str, value: f64 },
    /// Raster with zero pixels.
    EmptyRaster,
    /// Two rasters that must agree in size do not.
    DimensionMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },
    /// Discrete magnitude outside 0..=10.
    MagnitudeOutOfRange(u8),
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositive { field, value } => write!(f, "{field} must be positive, got {value}"),
            Self::EmptyRaster => f.write_str("raster has zero pixels"),
            Self::DimensionMismatch { expected, got } => write!(
                f,
                "dimension mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Self::MagnitudeOutOfRange(m) => write!(f, "magnitude {m} outside 0..=10"),
        }
    }
}

impl std::error::Error for DomainError {}

fn positive(field: &'static str, value: f64) -> Result<f64, DomainError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(DomainError::NonPositive { field, value })
    }
}

/// A box in center form inside an image of known size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxGeometry {
    /// Horizontal center, pixels.
    pub x_c: f64,
    /// Vertical center, pixels.
    pub y_c: f64,
    /// Box height, pixels.
    pub h: f64,
    /// Box width, pixels.
    pub w: f64,
    /// Image height, pixels.
    pub image_h: f64,
    /// Image width, pixels.
    pub image_w: f64,
}

impl BoxGeometry {
    pub fn validate(&self) -> Result<(), DomainError> {
        positive("h", self.h)?;
        positive("w", self.w)?;
        positive("image_h", self.image_h)?;
        positive("image_w", self.image_w)?;
        Ok(())
    }
}

/// Spreads of the Gaussian map along each image axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sigmas {
    /// Standard deviation along the vertical axis, proportional to box height.
    pub sigma_h: f64,
    /// Standard deviation along the horizontal axis, proportional to box width.
    pub sigma_w: f64,
}

/// Closed-form spreads for a box and an area ratio `r`.
pub fn derive_sigmas(geometry: &BoxGeometry, r: f64) -> Result<Sigmas, DomainError> {
    geometry.validate()?;
    let r = positive("area_ratio", r)?;
    let (img_h, img_w) = (geometry.image_h, geometry.image_w);
    Ok(Sigmas {
        sigma_h: geometry.h * ((img_w / img_h) / (2.0 * PI) * r).sqrt(),
        sigma_w: geometry.w * ((img_h / img_w) / (2.0 * PI) * r).sqrt(),
    })
}

/// Box geometry, area ratio and the derived spreads.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMapParams {
    pub geometry: BoxGeometry,
    pub area_ratio: f64,
    pub sigmas: Sigmas,
}

impl GaussianMapParams {
    pub fn new(geometry: BoxGeometry, area_ratio: f64) -> Result<Self, DomainError> {
        let sigmas = derive_sigmas(&geometry, area_ratio)?;
        Ok(Self {
            geometry,
            area_ratio,
            sigmas,
        })
    }

    /// Raster size implied by the geometry, `(width, height)`.
    pub fn raster_size(&self) -> (u32, u32) {
        (
            self.geometry.image_w.round() as u32,
            self.geometry.image_h.round() as u32,
        )
    }

    /// Column factor `g_w(x)` of the separable map, one entry per pixel column.
    pub fn column_profile(&self, width: u32) -> Vec<f64> {
        axis_profile(width, self.geometry.x_c, self.sigmas.sigma_w)
    }

    /// Row factor `g_h(y)`.
    pub fn row_profile(&self, height: u32) -> Vec<f64> {
        axis_profile(height, self.geometry.y_c, self.sigmas.sigma_h)
    }

    /// Map value at a continuous position.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.geometry.x_c;
        let dy = y - self.geometry.y_c;
        let sw = self.sigmas.sigma_w;
        let sh = self.sigmas.sigma_h;
        (-(dx * dx / (2.0 * sw * sw) + dy * dy / (2.0 * sh * sh))).exp()
    }

    /// Pixel rectangle `[x0, x1) x [y0, y1)` outside of which the map is
    /// below `exp(-k^2 / 2)`, clipped to a `width x height` raster.
    pub fn support(&self, k: f64, width: u32, height: u32) -> PixelRect {
        let g = &self.geometry;
        let span = |c: f64, s: f64, len: u32| {
            let lo = (c - k * s - 0.5).floor().max(0.0);
            let hi = (c + k * s + 0.5).ceil().min(f64::from(len));
            (lo as u32, (hi as u32).max(lo as u32))
        };
        let (x0, x1) = span(g.x_c, self.sigmas.sigma_w, width);
        let (y0, y1) = span(g.y_c, self.sigmas.sigma_h, height);
        PixelRect { x0, y0, x1, y1 }
    }
}

fn axis_profile(len: u32, center: f64, sigma: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let d = f64::from(i) + 0.5 - center;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Half-open pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn full(width: u32, height: u32) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }
}

/// Row-major `width x height` field of blend weights in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl AlphaMap {
    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self, DomainError> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(DomainError::DimensionMismatch {
                expected: (width, height),
                got: (values.len() as u32, 1),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: u32, height: u32, alpha: f64) -> Self {
        Self {
            width,
            height,
            values: vec![alpha.clamp(0.0, 1.0); width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Grayscale rendering, `round(alpha * 255)`.
    pub fn to_gray(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width, self.height, |x, y| {
            image::Luma([(self.get(x, y) * 255.0).round() as u8])
        })
    }
}

/// Samples the Gaussian map at pixel centers over the full image.
pub fn gaussian_map(params: &GaussianMapParams) -> Result<AlphaMap, DomainError> {
    let (width, height) = params.raster_size();
    if width == 0 || height == 0 {
        return Err(DomainError::EmptyRaster);
    }
    let cols = params.column_profile(width);
    let rows = params.row_profile(height);
    let mut values = Vec::with_capacity(cols.len() * rows.len());
    for gy in &rows {
        values.extend(cols.iter().map(|gx| gy * gx));
    }
    Ok(AlphaMap {
        width,
        height,
        values,
    })
}

/// Midpoint-rule integral of the map; each pixel has unit area.
pub fn numeric_area(map: &AlphaMap) -> f64 {
    map.values.iter().sum()
}

/// Which raster the Gaussian peak favours.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendDirection {
    /// `alpha * original + (1 - alpha) * transformed`: the original dominates
    /// at the box center and the transform shows through farther out.
    OriginalAtCenter,
    /// `alpha * transformed + (1 - alpha) * original`: the transform dominates
    /// at the box center and fades out with distance.
    #[default]
    TransformAtCenter,
}

fn check_dims(a: &RgbImage, width: u32, height: u32) -> Result<(), DomainError> {
    if a.width() != width || a.height() != height {
        return Err(DomainError::DimensionMismatch {
            expected: (width, height),
            got: (a.width(), a.height()),
        });
    }
    Ok(())
}

/// Convex per-channel blend of two rasters, rounded and clamped to 8 bits.
pub fn blend(
    original: &RgbImage,
    transformed: &RgbImage,
    map: &AlphaMap,
    direction: BlendDirection,
) -> Result<RgbImage, DomainError> {
    check_dims(original, map.width, map.height)?;
    check_dims(transformed, map.width, map.height)?;
    let mut out = original.clone();
    for (x, y, px) in out.enumerate_pixels_mut() {
        let t = transformed.get_pixel(x, y);
        *px = blend_pixel(*px, *t, map.get(x, y), direction);
    }
    Ok(out)
}

/// Blends `transformed` into `target` in place, only inside `rect`, with
/// weights evaluated from `params`. Pixels outside `rect` are left untouched.
pub(crate) fn blend_region(
    target: &mut RgbImage,
    transformed: &RgbImage,
    params: &GaussianMapParams,
    rect: PixelRect,
    direction: BlendDirection,
) {
    let cols = params.column_profile(target.width());
    let rows = params.row_profile(target.height());
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            let alpha = rows[y as usize] * cols[x as usize];
            let out = blend_pixel(*target.get_pixel(x, y), *transformed.get_pixel(x, y), alpha, direction);
            target.put_pixel(x, y, out);
        }
    }
}

#[inline]
pub(crate) fn blend_pixel(
    original: image::Rgb<u8>,
    transformed: image::Rgb<u8>,
    alpha: f64,
    direction: BlendDirection,
) -> image::Rgb<u8> {
    let weight_original = match direction {
        BlendDirection::OriginalAtCenter => alpha,
        BlendDirection::TransformAtCenter => 1.0 - alpha,
    };
    let mut out = original;
    for c in 0..3 {
        let i = f64::from(original[c]);
        let t = f64::from(transformed[c]);
        let v = weight_original * i + (1.0 - weight_original) * t;
        out[c] = crate::raster::quantize(v);
    }
    out
}
