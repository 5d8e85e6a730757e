//! Image-level zoom-in / zoom-out.
//!
//! Both functions keep the raster size. Zoom-in crops a `rho`-sized window
//! and scales it back up; zoom-out shrinks the image by `1 / rho` and pastes
//! it on a mean-colored canvas of the original size.

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotated::{AnnotatedImage, BoxAnnotation};
use crate::gaussian::DomainError;
use crate::policy::{Policy, MAX_MAGNITUDE};
use crate::raster::{mean_color, resize_bilinear};

/// Boxes keeping less than this fraction of their area after cropping are dropped.
pub const MIN_VISIBLE_FRACTION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoomBranch {
    ZoomIn,
    ZoomOut,
    Original,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoomDecision {
    pub branch: ZoomBranch,
    pub ratio: f64,
}

/// `1 - 0.05 m` for zoom-in, `1 + 0.05 m` for zoom-out, `1` for the original.
pub fn zoom_ratio_from_magnitude(branch: ZoomBranch, m: u8) -> Result<f64, DomainError> {
    if m > MAX_MAGNITUDE {
        return Err(DomainError::MagnitudeOutOfRange(m));
    }
    // Integer hundredths keep the grid values exact (0.8, not 0.7999...).
    let step = i32::from(m) * 5;
    Ok(match branch {
        ZoomBranch::ZoomIn => f64::from(100 - step) / 100.0,
        ZoomBranch::ZoomOut => f64::from(100 + step) / 100.0,
        ZoomBranch::Original => 1.0,
    })
}

fn scaled_len(len: u32, factor: f64) -> u32 {
    ((f64::from(len) * factor).round() as u32).clamp(1, len.max(1))
}

/// Crop window size for zoom-in, `(width, height)`.
pub fn crop_size(width: u32, height: u32, rho: f64) -> (u32, u32) {
    (scaled_len(width, rho), scaled_len(height, rho))
}

/// Pasted image size for zoom-out, `(width, height)`.
pub fn paste_size(width: u32, height: u32, rho: f64) -> (u32, u32) {
    (scaled_len(width, 1.0 / rho), scaled_len(height, 1.0 / rho))
}

/// Zoom-in with the crop window at a uniformly random in-bounds offset.
pub fn zoom_in<R: Rng + ?Sized>(img: &AnnotatedImage, rho: f64, rng: &mut R) -> AnnotatedImage {
    let (cw, ch) = crop_size(img.width(), img.height(), rho.clamp(0.5, 1.0));
    let ox = rng.gen_range(0..=img.width().saturating_sub(cw));
    let oy = rng.gen_range(0..=img.height().saturating_sub(ch));
    zoom_in_at(img, rho, (ox, oy))
}

/// Zoom-in with an explicit crop offset.
pub fn zoom_in_at(img: &AnnotatedImage, rho: f64, offset: (u32, u32)) -> AnnotatedImage {
    let (width, height) = (img.width(), img.height());
    let (cw, ch) = crop_size(width, height, rho.clamp(0.5, 1.0));
    let ox = offset.0.min(width - cw);
    let oy = offset.1.min(height - ch);
    if cw == width && ch == height {
        return img.clone();
    }
    let crop = image::imageops::crop_imm(&img.pixels, ox, oy, cw, ch).to_image();
    let pixels = resize_bilinear(&crop, width, height);

    let (x_lo, y_lo) = (f64::from(ox), f64::from(oy));
    let (x_hi, y_hi) = (x_lo + f64::from(cw), y_lo + f64::from(ch));
    let sx = f64::from(width) / f64::from(cw);
    let sy = f64::from(height) / f64::from(ch);
    let boxes = img
        .boxes
        .iter()
        .filter_map(|b| {
            let [x0, y0, x1, y1] = b.bounds();
            let (cx0, cy0) = (x0.max(x_lo), y0.max(y_lo));
            let (cx1, cy1) = (x1.min(x_hi), y1.min(y_hi));
            let visible = (cx1 - cx0).max(0.0) * (cy1 - cy0).max(0.0);
            let area = b.area();
            if area <= 0.0 || visible < MIN_VISIBLE_FRACTION * area {
                return None;
            }
            Some(BoxAnnotation::from_bounds(
                (cx0 - x_lo) * sx,
                (cy0 - y_lo) * sy,
                (cx1 - x_lo) * sx,
                (cy1 - y_lo) * sy,
                b.category_id,
            ))
        })
        .collect();
    AnnotatedImage {
        image_id: img.image_id.clone(),
        pixels,
        boxes,
    }
}

/// Zoom-out pasted at a uniformly random offset.
pub fn zoom_out<R: Rng + ?Sized>(img: &AnnotatedImage, rho: f64, rng: &mut R) -> AnnotatedImage {
    let (pw, ph) = paste_size(img.width(), img.height(), rho.clamp(1.0, 1.5));
    let ox = rng.gen_range(0..=img.width().saturating_sub(pw));
    let oy = rng.gen_range(0..=img.height().saturating_sub(ph));
    zoom_out_at(img, rho, (ox, oy))
}

/// Zoom-out with an explicit paste offset.
pub fn zoom_out_at(img: &AnnotatedImage, rho: f64, offset: (u32, u32)) -> AnnotatedImage {
    let (width, height) = (img.width(), img.height());
    let (pw, ph) = paste_size(width, height, rho.clamp(1.0, 1.5));
    if pw == width && ph == height {
        return img.clone();
    }
    let ox = offset.0.min(width - pw);
    let oy = offset.1.min(height - ph);
    let small = resize_bilinear(&img.pixels, pw, ph);
    let mut pixels = RgbImage::from_pixel(width, height, mean_color(&img.pixels));
    image::imageops::replace(&mut pixels, &small, i64::from(ox), i64::from(oy));

    let sx = f64::from(pw) / f64::from(width);
    let sy = f64::from(ph) / f64::from(height);
    let (fx, fy) = (f64::from(ox), f64::from(oy));
    let (w_max, h_max) = (f64::from(width), f64::from(height));
    let boxes = img
        .boxes
        .iter()
        .map(|b| {
            let [x0, y0, x1, y1] = b.bounds();
            BoxAnnotation::from_bounds(
                (fx + x0 * sx).clamp(0.0, w_max),
                (fy + y0 * sy).clamp(0.0, h_max),
                (fx + x1 * sx).clamp(0.0, w_max),
                (fy + y1 * sy).clamp(0.0, h_max),
                b.category_id,
            )
        })
        .collect();
    AnnotatedImage {
        image_id: img.image_id.clone(),
        pixels,
        boxes,
    }
}

/// Draws a branch with probabilities `(P_in, P_out, 1 - P_in - P_out)`.
///
/// Probabilities are whole tenths, so one uniform draw over ten outcomes
/// realizes them exactly.
pub fn sample_branch<R: Rng + ?Sized>(policy: &Policy, rng: &mut R) -> ZoomBranch {
    let p_in = policy.zoom_in.probability().tenths();
    let p_out = policy.zoom_out.probability().tenths();
    let k = rng.gen_range(0..10u8);
    if k < p_in {
        ZoomBranch::ZoomIn
    } else if k < p_in + p_out {
        ZoomBranch::ZoomOut
    } else {
        ZoomBranch::Original
    }
}

/// Samples a zoom branch and applies it.
pub fn apply_image_level<R: Rng + ?Sized>(
    img: &AnnotatedImage,
    policy: &Policy,
    rng: &mut R,
) -> (AnnotatedImage, ZoomDecision) {
    let branch = sample_branch(policy, rng);
    let magnitude = match branch {
        ZoomBranch::ZoomIn => policy.zoom_in.magnitude().get(),
        ZoomBranch::ZoomOut => policy.zoom_out.magnitude().get(),
        ZoomBranch::Original => 0,
    };
    let ratio = zoom_ratio_from_magnitude(branch, magnitude).expect("policy magnitude in range");
    let out = match branch {
        ZoomBranch::ZoomIn => zoom_in(img, ratio, rng),
        ZoomBranch::ZoomOut => zoom_out(img, ratio, rng),
        ZoomBranch::Original => img.clone(),
    };
    (out, ZoomDecision { branch, ratio })
}
