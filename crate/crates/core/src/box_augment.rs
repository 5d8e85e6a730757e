//! Box-level operations and their Gaussian-blended application per object.
//!
//! Every op produces a full-size candidate raster `T`. [`augment_boxes`]
//! then mixes `T` back into the image with the box's Gaussian map, so the
//! change is strongest at the box center and fades into the context at a
//! rate set by the scale's area ratio.

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotated::AnnotatedImage;
use crate::gaussian::{
    blend_region, BlendDirection, BoxGeometry, DomainError, GaussianMapParams, PixelRect, Sigmas,
};
use crate::policy::{BoxOpSpec, OpKind, Policy, ScaleCategory, MAX_MAGNITUDE, NUM_SUB_POLICIES};
use crate::raster::{mean_color, quantize, sample_bilinear, to_pixel};

/// Outside `SUPPORT_SIGMAS` standard deviations the map weight is below
/// `exp(-12.5)`, too small to move an 8-bit value after rounding.
const SUPPORT_SIGMAS: f64 = 5.0;

/// Gray used by Cutout.
const CUTOUT_GRAY: Rgb<u8> = Rgb([128, 128, 128]);

/// Physical range a discrete magnitude is mapped onto.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagnitudeRange {
    pub min: f64,
    pub max: f64,
    /// Symmetric range `[-max, max]`; the sign is drawn when the op is applied.
    pub signed: bool,
}

pub fn magnitude_range(kind: OpKind) -> Option<MagnitudeRange> {
    let unsigned = |min, max| {
        Some(MagnitudeRange {
            min,
            max,
            signed: false,
        })
    };
    let signed = |max: f64| {
        Some(MagnitudeRange {
            min: -max,
            max,
            signed: true,
        })
    };
    match kind {
        OpKind::Brightness | OpKind::Color | OpKind::Contrast | OpKind::Sharpness => {
            unsigned(0.1, 1.9)
        }
        OpKind::Cutout => unsigned(0.0, 60.0),
        OpKind::Solarize => unsigned(0.0, 256.0),
        OpKind::SolarizeAdd => unsigned(0.0, 110.0),
        OpKind::Rotate => signed(30.0),
        OpKind::ShearX | OpKind::ShearY => signed(0.3),
        OpKind::TranslateX | OpKind::TranslateY => signed(150.0),
        OpKind::Equalize | OpKind::Hflip => None,
    }
}

/// Maps a discrete magnitude onto the op's physical range.
///
/// For signed ranges this returns the absolute value; see [`ResolvedOp::sample`].
/// Magnitude-free ops return `None`.
pub fn map_magnitude(kind: OpKind, m: u8) -> Result<Option<f64>, DomainError> {
    if m > MAX_MAGNITUDE {
        return Err(DomainError::MagnitudeOutOfRange(m));
    }
    let t = f64::from(m) / f64::from(MAX_MAGNITUDE);
    Ok(magnitude_range(kind).map(|r| {
        if r.signed {
            t * r.max
        } else {
            r.min + t * (r.max - r.min)
        }
    }))
}

/// An op with its physical parameter fixed (sign included).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedOp {
    pub kind: OpKind,
    pub value: Option<f64>,
}

impl ResolvedOp {
    pub fn new(kind: OpKind, value: Option<f64>) -> Self {
        Self { kind, value }
    }

    /// Maps the spec's magnitude and, for signed ranges, draws the sign.
    pub fn sample<R: Rng + ?Sized>(spec: &BoxOpSpec, rng: &mut R) -> Self {
        let kind = spec.kind();
        let magnitude = map_magnitude(kind, spec.magnitude().get()).expect("spec magnitude in range");
        let value = match (magnitude, magnitude_range(kind)) {
            (Some(v), Some(r)) if r.signed => Some(if rng.gen_bool(0.5) { v } else { -v }),
            (v, _) => v,
        };
        Self { kind, value }
    }

    /// True when applying the op cannot change any pixel.
    pub fn is_identity(&self) -> bool {
        match (self.kind, self.value) {
            (OpKind::Equalize | OpKind::Hflip, _) => false,
            (OpKind::Brightness | OpKind::Color | OpKind::Contrast | OpKind::Sharpness, Some(v)) => {
                v == 1.0
            }
            (OpKind::Solarize, Some(v)) => v >= 256.0,
            (_, Some(v)) => v == 0.0,
            (_, None) => true,
        }
    }
}

fn luma(p: Rgb<u8>) -> f64 {
    // ITU-R 601-2, as 8-bit grayscale
    (f64::from(p[0]) * 299.0 + f64::from(p[1]) * 587.0 + f64::from(p[2]) * 114.0) / 1000.0
}

fn mix(degenerate: f64, v: u8, factor: f64) -> u8 {
    quantize(degenerate + factor * (f64::from(v) - degenerate))
}

/// Per-channel histogram equalization.
fn equalize(img: &RgbImage) -> RgbImage {
    let mut luts = [[0u8; 256]; 3];
    for (c, lut) in luts.iter_mut().enumerate() {
        let mut hist = [0u64; 256];
        for p in img.pixels() {
            hist[usize::from(p[c])] += 1;
        }
        let last_nonzero = hist.iter().rposition(|&n| n > 0).map_or(0, |i| hist[i]);
        let total: u64 = hist.iter().sum();
        let step = (total - last_nonzero) / 255;
        if step == 0 {
            for (i, v) in lut.iter_mut().enumerate() {
                *v = i as u8;
            }
            continue;
        }
        let mut n = step / 2;
        for (i, v) in lut.iter_mut().enumerate() {
            *v = (n / step).min(255) as u8;
            n += hist[i];
        }
    }
    let mut out = img.clone();
    for p in out.pixels_mut() {
        for c in 0..3 {
            p[c] = luts[c][usize::from(p[c])];
        }
    }
    out
}

/// 3x3 smoothing kernel `[1 1 1; 1 5 1; 1 1 1] / 13`; border pixels are kept.
fn smooth(img: &RgbImage) -> RgbImage {
    let (w, h) = img.dimensions();
    let mut out = img.clone();
    if w < 3 || h < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = [0u32; 3];
            for dy in 0..3 {
                for dx in 0..3 {
                    let weight = if dx == 1 && dy == 1 { 5 } else { 1 };
                    let p = img.get_pixel(x + dx - 1, y + dy - 1);
                    for c in 0..3 {
                        acc[c] += weight * u32::from(p[c]);
                    }
                }
            }
            out.put_pixel(x, y, Rgb(acc.map(|a| quantize(f64::from(a) / 13.0))));
        }
    }
    out
}

/// Applies a color op to every pixel of `image`.
///
/// `anchor` is where Cutout places its square (the box center).
pub fn apply_color_op(image: &RgbImage, op: &ResolvedOp, anchor: (f64, f64)) -> RgbImage {
    if op.is_identity() {
        return image.clone();
    }
    let mut out = image.clone();
    let value = op.value.unwrap_or(0.0);
    match op.kind {
        OpKind::Brightness => {
            for p in out.pixels_mut() {
                *p = Rgb(p.0.map(|v| mix(0.0, v, value)));
            }
        }
        OpKind::Color => {
            for p in out.pixels_mut() {
                let gray = luma(*p).round();
                *p = Rgb(p.0.map(|v| mix(gray, v, value)));
            }
        }
        OpKind::Contrast => {
            let n = f64::from(image.width()) * f64::from(image.height());
            let mean = (image.pixels().map(|p| luma(*p).round()).sum::<f64>() / n).round();
            for p in out.pixels_mut() {
                *p = Rgb(p.0.map(|v| mix(mean, v, value)));
            }
        }
        OpKind::Sharpness => {
            let blurred = smooth(image);
            for (p, b) in out.pixels_mut().zip(blurred.pixels()) {
                for c in 0..3 {
                    p[c] = mix(f64::from(b[c]), p[c], value);
                }
            }
        }
        OpKind::Equalize => return equalize(image),
        OpKind::Solarize => {
            for p in out.pixels_mut() {
                *p = Rgb(p.0.map(|v| if f64::from(v) >= value { 255 - v } else { v }));
            }
        }
        OpKind::SolarizeAdd => {
            let amount = value.round() as u16;
            for p in out.pixels_mut() {
                *p = Rgb(p.0.map(|v| if v < 128 { (u16::from(v) + amount).min(255) as u8 } else { v }));
            }
        }
        OpKind::Cutout => {
            let half = value / 2.0;
            let (ax, ay) = anchor;
            for (x, y, p) in out.enumerate_pixels_mut() {
                let (u, v) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
                if u >= ax - half && u < ax + half && v >= ay - half && v < ay + half {
                    *p = CUTOUT_GRAY;
                }
            }
        }
        _ => {}
    }
    out
}

/// Source position for output position `(u, v)` under a geometric op
/// anchored at the box center.
fn inverse_map(op: &ResolvedOp, center: (f64, f64), u: f64, v: f64) -> (f64, f64) {
    let (cx, cy) = center;
    let value = op.value.unwrap_or(0.0);
    match op.kind {
        OpKind::Hflip => {
            // Mirror axis on the half-pixel lattice keeps the flip an exact involution.
            let axis = (2.0 * cx).round() / 2.0;
            (2.0 * axis - u, v)
        }
        OpKind::Rotate => {
            let (s, c) = value.to_radians().sin_cos();
            let (dx, dy) = (u - cx, v - cy);
            (cx + c * dx + s * dy, cy - s * dx + c * dy)
        }
        OpKind::ShearX => (u - value * (v - cy), v),
        OpKind::ShearY => (u, v - value * (u - cx)),
        OpKind::TranslateX => (u - value, v),
        OpKind::TranslateY => (u, v - value),
        _ => (u, v),
    }
}

/// Applies a geometric op about the box center with bilinear resampling.
///
/// Only pixels inside `window` are resampled; the rest are copied from the
/// input. Samples falling outside the frame read `fill`.
pub fn apply_geometric_op_in(
    image: &RgbImage,
    geometry: &BoxGeometry,
    op: &ResolvedOp,
    fill: Rgb<u8>,
    window: PixelRect,
) -> RgbImage {
    if op.is_identity() {
        return image.clone();
    }
    let center = (geometry.x_c, geometry.y_c);
    let mut out = image.clone();
    for y in window.y0..window.y1 {
        for x in window.x0..window.x1 {
            let (su, sv) = inverse_map(op, center, f64::from(x) + 0.5, f64::from(y) + 0.5);
            out.put_pixel(x, y, to_pixel(sample_bilinear(image, su, sv, fill)));
        }
    }
    out
}

/// Whole-image geometric op, out-of-frame samples filled with the mean color.
pub fn apply_geometric_op(image: &RgbImage, geometry: &BoxGeometry, op: &ResolvedOp) -> RgbImage {
    let window = PixelRect::full(image.width(), image.height());
    apply_geometric_op_in(image, geometry, op, mean_color(image), window)
}

/// What happened to one box during [`augment_boxes`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxAudit {
    pub box_index: usize,
    pub scale: ScaleCategory,
    pub area_ratio: f64,
    pub sub_policy: usize,
    pub sigmas: Option<Sigmas>,
    /// Ops that fired, in application order.
    pub applied: Vec<ResolvedOp>,
    /// Zero-area boxes are skipped without touching the RNG.
    pub skipped: bool,
}

/// Applies one uniformly chosen sub-policy per box, blended through the
/// box's Gaussian map. Boxes are left unchanged.
pub fn augment_boxes<R: Rng + ?Sized>(
    img: &AnnotatedImage,
    policy: &Policy,
    rng: &mut R,
    direction: BlendDirection,
) -> (AnnotatedImage, Vec<BoxAudit>) {
    let (width, height) = img.pixels.dimensions();
    let mut pixels = img.pixels.clone();
    let mut audit = Vec::with_capacity(img.boxes.len());
    for (box_index, b) in img.boxes.iter().enumerate() {
        let scale = b.scale();
        let area_ratio = policy.area_ratios.for_scale(scale).value();
        if !(b.h > 0.0 && b.w > 0.0) || width == 0 || height == 0 {
            audit.push(BoxAudit {
                box_index,
                scale,
                area_ratio,
                sub_policy: 0,
                sigmas: None,
                applied: Vec::new(),
                skipped: true,
            });
            continue;
        }
        let sub_policy = rng.gen_range(0..NUM_SUB_POLICIES);
        let sub = &policy.sub_policies[sub_policy];
        let mut applied = Vec::new();
        for spec in sub.ops() {
            let fires = rng.gen_bool(spec.probability().value());
            let resolved = ResolvedOp::sample(spec, rng);
            if fires {
                applied.push(resolved);
            }
        }
        let geometry = b.geometry(width, height);
        let params = GaussianMapParams::new(geometry, area_ratio).expect("positive box and ratio");
        if applied.iter().any(|op| !op.is_identity()) {
            let window = match direction {
                BlendDirection::TransformAtCenter => params.support(SUPPORT_SIGMAS, width, height),
                BlendDirection::OriginalAtCenter => PixelRect::full(width, height),
            };
            let fill = mean_color(&pixels);
            let mut candidate = pixels.clone();
            for op in &applied {
                candidate = match op.kind.category() {
                    crate::policy::OpCategory::Color => {
                        apply_color_op(&candidate, op, (geometry.x_c, geometry.y_c))
                    }
                    crate::policy::OpCategory::Geometric => {
                        apply_geometric_op_in(&candidate, &geometry, op, fill, window)
                    }
                };
            }
            blend_region(&mut pixels, &candidate, &params, window, direction);
        }
        audit.push(BoxAudit {
            box_index,
            scale,
            area_ratio,
            sub_policy,
            sigmas: Some(params.sigmas),
            applied,
            skipped: false,
        });
    }
    (
        AnnotatedImage {
            image_id: img.image_id.clone(),
            pixels,
            boxes: img.boxes.clone(),
        },
        audit,
    )
}
