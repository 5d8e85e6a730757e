//! Raster helpers shared by the zoom and box-level operations.
//!
//! Continuous coordinates follow the pixel-center convention: pixel `(i, j)`
//! covers `[i, i+1) x [j, j+1)` and its center sits at `(i + 0.5, j + 0.5)`.

use image::{Rgb, RgbImage};

/// Coordinates closer than this to an integer sample position are snapped,
/// so exact shifts and identity transforms reproduce pixels bit-for-bit.
const SNAP: f64 = 1e-9;

/// Per-channel mean, rounded to the nearest integer.
pub fn mean_color(img: &RgbImage) -> Rgb<u8> {
    let n = u64::from(img.width()) * u64::from(img.height());
    if n == 0 {
        return Rgb([0, 0, 0]);
    }
    let mut sum = [0u64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            sum[c] += u64::from(p[c]);
        }
    }
    Rgb(sum.map(|s| ((s as f64) / (n as f64)).round() as u8))
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Bilinear sample at continuous position `(u, v)`. Neighbours outside the
/// raster read as `fill`.
pub fn sample_bilinear(img: &RgbImage, u: f64, v: f64, fill: Rgb<u8>) -> [f64; 3] {
    let fx = snap(u - 0.5);
    let fy = snap(v - 0.5);
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let (w, h) = (i64::from(img.width()), i64::from(img.height()));
    let fetch = |x: i64, y: i64| -> [f64; 3] {
        let p = if x >= 0 && y >= 0 && x < w && y < h {
            *img.get_pixel(x as u32, y as u32)
        } else {
            fill
        };
        [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])]
    };
    let (x0, y0) = (x0 as i64, y0 as i64);
    if tx == 0.0 && ty == 0.0 {
        return fetch(x0, y0);
    }
    let a = fetch(x0, y0);
    let b = fetch(x0 + 1, y0);
    let c = fetch(x0, y0 + 1);
    let d = fetch(x0 + 1, y0 + 1);
    let mut out = [0.0; 3];
    for k in 0..3 {
        let top = a[k] + (b[k] - a[k]) * tx;
        let bottom = c[k] + (d[k] - c[k]) * tx;
        out[k] = top + (bottom - top) * ty;
    }
    out
}

/// Bilinear sample with edge clamping.
pub fn sample_bilinear_clamped(img: &RgbImage, u: f64, v: f64) -> [f64; 3] {
    let max_u = f64::from(img.width()) - 0.5;
    let max_v = f64::from(img.height()) - 0.5;
    sample_bilinear(img, u.clamp(0.5, max_u), v.clamp(0.5, max_v), Rgb([0, 0, 0]))
}

pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn to_pixel(v: [f64; 3]) -> Rgb<u8> {
    Rgb(v.map(quantize))
}

/// Resizes `src` to `width x height` with bilinear interpolation, sampling
/// the source at the pre-image of each destination pixel center.
pub fn resize_bilinear(src: &RgbImage, width: u32, height: u32) -> RgbImage {
    if src.width() == width && src.height() == height {
        return src.clone();
    }
    let sx = f64::from(src.width()) / f64::from(width);
    let sy = f64::from(src.height()) / f64::from(height);
    RgbImage::from_fn(width, height, |x, y| {
        let u = (f64::from(x) + 0.5) * sx;
        let v = (f64::from(y) + 0.5) * sy;
        to_pixel(sample_bilinear_clamped(src, u, v))
    })
}
