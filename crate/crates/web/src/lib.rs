//! WebAssembly bindings for the scaleaug browser demo.

pub mod scene;

use wasm_bindgen::prelude::*;

use scaleaug::policy::serialize_policy;
use scaleaug::{BoxGeometry, Policy};

#[wasm_bindgen]
pub struct GaussianRender {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
    info: String,
}

#[wasm_bindgen]
impl GaussianRender {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// JSON with sigmas and areas.
    #[wasm_bindgen(getter)]
    pub fn info(&self) -> String {
        self.info.clone()
    }
}

/// Renders the blending map of one box as RGBA pixels.
#[wasm_bindgen]
pub fn gaussian_map_rgba(
    x_c: f64,
    y_c: f64,
    h: f64,
    w: f64,
    image_h: f64,
    image_w: f64,
    ratio: f64,
) -> Result<GaussianRender, JsError> {
    let geometry = BoxGeometry {
        x_c,
        y_c,
        h,
        w,
        image_h,
        image_w,
    };
    let view = scene::render_gaussian(geometry, ratio).map_err(|e| JsError::new(&e))?;
    Ok(GaussianRender {
        width: view.width,
        height: view.height,
        info: serde_json::to_string(&view).expect("view serializes"),
        rgba: view.rgba,
    })
}

#[wasm_bindgen]
pub struct SceneRender {
    width: u32,
    height: u32,
    before: Vec<u8>,
    after: Vec<u8>,
    info: String,
}

#[wasm_bindgen]
impl SceneRender {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn before(&self) -> Vec<u8> {
        self.before.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn after(&self) -> Vec<u8> {
        self.after.clone()
    }

    /// JSON with boxes, zoom decision and per-box audit.
    #[wasm_bindgen(getter)]
    pub fn info(&self) -> String {
        self.info.clone()
    }
}

/// Runs image-level then box-level augmentation on a generated scene.
#[wasm_bindgen]
pub fn augment_scene(seed: u32, policy_json: &str, original_at_center: bool) -> Result<SceneRender, JsError> {
    let view = scene::augment_scene(u64::from(seed), policy_json, original_at_center)
        .map_err(|e| JsError::new(&e))?;
    Ok(SceneRender {
        width: view.width,
        height: view.height,
        info: serde_json::to_string(&view).expect("view serializes"),
        before: view.before,
        after: view.after,
    })
}

/// Pareto Scale Balance of a stats document, as JSON.
#[wasm_bindgen]
pub fn scale_balance(stats_json: &str, eps: f64) -> Result<String, JsError> {
    let value = scene::evaluate_metric(stats_json, eps).map_err(|e| JsError::new(&e))?;
    Ok(serde_json::to_string_pretty(&value).expect("metric serializes"))
}

#[wasm_bindgen]
pub fn published_policy() -> String {
    serialize_policy(&Policy::published())
}
