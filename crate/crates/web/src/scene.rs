//! Plain-Rust halves of the demo operations, usable without a browser.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use scaleaug::box_augment::BoxAudit;
use scaleaug::dataset::augment_image;
use scaleaug::gaussian::{gaussian_map, numeric_area, GaussianMapParams};
use scaleaug::metric::{pareto_scale_balance, MetricValue, ScaleStats};
use scaleaug::policy::parse_policy;
use scaleaug::zoom::ZoomDecision;
use scaleaug::{AnnotatedImage, BlendDirection, BoxAnnotation, BoxGeometry, Policy};

pub const SCENE_WIDTH: u32 = 320;
pub const SCENE_HEIGHT: u32 = 240;

/// Rendered Gaussian map with its numbers.
#[derive(Clone, Debug, Serialize)]
pub struct GaussianView {
    pub width: u32,
    pub height: u32,
    #[serde(skip)]
    pub rgba: Vec<u8>,
    pub sigma_h: f64,
    pub sigma_w: f64,
    pub numeric_area: f64,
    pub target_area: f64,
}

/// Maps alpha in [0, 1] to a dark-blue to yellow ramp.
fn heat(alpha: f64) -> [u8; 4] {
    let a = alpha.clamp(0.0, 1.0);
    let lerp = |lo: f64, hi: f64| (lo + (hi - lo) * a).round() as u8;
    [lerp(20.0, 255.0), lerp(24.0, 220.0), lerp(60.0, 40.0), 255]
}

pub fn render_gaussian(geometry: BoxGeometry, ratio: f64) -> Result<GaussianView, String> {
    let params = GaussianMapParams::new(geometry, ratio).map_err(|e| e.to_string())?;
    let map = gaussian_map(&params).map_err(|e| e.to_string())?;
    let rgba = map.values().iter().flat_map(|&a| heat(a)).collect();
    Ok(GaussianView {
        width: map.width(),
        height: map.height(),
        rgba,
        sigma_h: params.sigmas.sigma_h,
        sigma_w: params.sigmas.sigma_w,
        numeric_area: numeric_area(&map),
        target_area: ratio * geometry.h * geometry.w,
    })
}

/// A street-like scene with two objects of each scale.
pub fn synthetic_scene(seed: u64) -> AnnotatedImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (SCENE_WIDTH, SCENE_HEIGHT);
    let horizon = h * 2 / 5;
    let mut pixels = RgbImage::from_fn(w, h, |x, y| {
        if y < horizon {
            let t = y * 90 / horizon;
            Rgb([(110 + t) as u8, (150 + t) as u8, 215])
        } else {
            let n = ((x * 7 + y * 13) % 17) as u8;
            Rgb([70 + n, 90 + n, 60 + n])
        }
    });
    // (side range) for small, middle, large
    let sizes = [(10.0, 26.0), (36.0, 80.0), (100.0, 150.0)];
    let palette = [
        Rgb([200, 40, 40]),
        Rgb([240, 200, 30]),
        Rgb([40, 90, 200]),
        Rgb([230, 230, 230]),
        Rgb([150, 60, 170]),
        Rgb([30, 160, 120]),
    ];
    let mut boxes = Vec::new();
    for (k, &(lo, hi)) in sizes.iter().enumerate().rev() {
        for j in 0..2 {
            let bw: f64 = rng.gen_range(lo..hi);
            let bh: f64 = (bw * rng.gen_range(0.6..1.4)).clamp(lo, f64::from(h) - 4.0);
            let x0 = rng.gen_range(0.0..f64::from(w) - bw);
            let y0 = rng.gen_range(0.0..f64::from(h) - bh);
            let color = palette[(2 * k + j) % palette.len()];
            let (px0, py0) = (x0.round() as u32, y0.round() as u32);
            let (px1, py1) = ((x0 + bw).round() as u32, (y0 + bh).round() as u32);
            for y in py0..py1.min(h) {
                for x in px0..px1.min(w) {
                    let stripe = ((x - px0) / 4 + (y - py0) / 4) % 2 == 0;
                    let shade = if stripe { 1.0 } else { 0.75 };
                    let c = color.0.map(|v| (f64::from(v) * shade) as u8);
                    pixels.put_pixel(x, y, Rgb(c));
                }
            }
            boxes.push(BoxAnnotation::from_corner(
                f64::from(px0),
                f64::from(py0),
                f64::from(px1.min(w) - px0),
                f64::from(py1.min(h) - py0),
                k as u64 + 1,
            ));
        }
    }
    AnnotatedImage::new(format!("scene-{seed}"), pixels, boxes)
}

#[derive(Clone, Debug, Serialize)]
pub struct SceneView {
    pub width: u32,
    pub height: u32,
    #[serde(skip)]
    pub before: Vec<u8>,
    #[serde(skip)]
    pub after: Vec<u8>,
    /// `(x_min, y_min, w, h)` boxes before and after.
    pub boxes_before: Vec<[f64; 4]>,
    pub boxes_after: Vec<[f64; 4]>,
    pub zoom: ZoomDecision,
    pub audit: Vec<BoxAudit>,
}

pub fn to_rgba(img: &RgbImage) -> Vec<u8> {
    img.pixels().flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Augments the synthetic scene for `seed`. An empty policy document means
/// the published policy.
pub fn augment_scene(seed: u64, policy_doc: &str, original_at_center: bool) -> Result<SceneView, String> {
    let policy = if policy_doc.trim().is_empty() {
        Policy::published()
    } else {
        parse_policy(policy_doc).map_err(|e| e.to_string())?
    };
    let direction = if original_at_center {
        BlendDirection::OriginalAtCenter
    } else {
        BlendDirection::TransformAtCenter
    };
    let scene = synthetic_scene(seed);
    let out = augment_image(&scene, &policy, seed, direction);
    Ok(SceneView {
        width: scene.width(),
        height: scene.height(),
        before: to_rgba(&scene.pixels),
        after: to_rgba(&out.image.pixels),
        boxes_before: scene.boxes.iter().map(BoxAnnotation::to_corner).collect(),
        boxes_after: out.image.boxes.iter().map(BoxAnnotation::to_corner).collect(),
        zoom: out.zoom,
        audit: out.audit,
    })
}

pub fn evaluate_metric(stats_doc: &str, eps: f64) -> Result<MetricValue, String> {
    let stats = ScaleStats::from_json(stats_doc).map_err(|e| e.to_string())?;
    pareto_scale_balance(&stats, eps).map_err(|e| e.to_string())
}
