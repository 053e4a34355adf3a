//! Browser bindings for the pipeline: preview the synthetic physical model,
//! inspect single prestack gathers, and run a miniature end-to-end
//! experiment. Everything is pure computation on seeded generators, so the
//! demo needs no JS-side randomness and produces identical output for
//! identical inputs.
//!
//! The exported functions are thin wrappers over `_impl` variants that use
//! `String` errors; `JsError` can only be constructed on wasm targets, and
//! the plain variants keep the logic testable with `cargo test` on the host.

use wasm_bindgen::prelude::*;

use prefacies_core::baselines::poststack_features;
use prefacies_core::cae::{train_layerwise, CaeModel, DecoderActivation, LayerSpec, TrainConfig};
use prefacies_core::clustering::{kmeans, ClusterConfig};
use prefacies_core::features::{assemble_feature_matrix, standardize_survey};
use prefacies_core::formats::PALETTE;
use prefacies_core::synth::{
    generate_survey, noise_sigma_for_snr, physical_model, score_map, FaciesMap, ModelLayout,
};
use prefacies_core::tensor::{Tensor, UnpoolMode};

const DT_MS: f64 = 2.0;
const WINDOW_MS: f64 = 48.0;
const OFFSETS: usize = 8;

fn check_extents(inlines: usize, crosslines: usize) -> Result<(), String> {
    if !(8..=48).contains(&inlines) || !(8..=48).contains(&crosslines) {
        return Err("grid extents must lie in 8..=48".to_string());
    }
    Ok(())
}

fn noisy_layout(
    inlines: usize,
    crosslines: usize,
    seed: u64,
    snr: f64,
) -> Result<ModelLayout, String> {
    if !(1.0..=1000.0).contains(&snr) {
        return Err("snr must lie in 1..=1000".to_string());
    }
    let mut layout = physical_model(inlines, crosslines, seed);
    layout.noise_sigma = noise_sigma_for_snr(&layout, DT_MS, WINDOW_MS, OFFSETS, snr)
        .map_err(|e| e.to_string())?;
    Ok(layout)
}

fn map_rgba(map: &FaciesMap) -> Vec<u8> {
    let mut rgba = Vec::with_capacity(map.inlines * map.crosslines * 4);
    for il in 0..map.inlines {
        for xl in 0..map.crosslines {
            let [r, g, b] = PALETTE[map.get(il, xl) % PALETTE.len()];
            rgba.extend_from_slice(&[r, g, b, 255]);
        }
    }
    rgba
}

/// RGBA raster plus its pixel dimensions.
#[wasm_bindgen]
pub struct LabelImage {
    width: u32,
    height: u32,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl LabelImage {
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
}

fn label_image(map: &FaciesMap) -> LabelImage {
    LabelImage {
        width: map.crosslines as u32,
        height: map.inlines as u32,
        rgba: map_rgba(map),
    }
}

fn layout_preview_impl(
    inlines: usize,
    crosslines: usize,
    seed: u64,
) -> Result<LabelImage, String> {
    check_extents(inlines, crosslines)?;
    let layout = physical_model(inlines, crosslines, seed);
    let mut keys = Vec::with_capacity(inlines * crosslines);
    let mut labels = Vec::with_capacity(inlines * crosslines);
    for il in 0..inlines {
        for xl in 0..crosslines {
            keys.push((il, xl));
            labels.push(layout.class_of(il, xl));
        }
    }
    let map = FaciesMap::from_keyed_labels(inlines, crosslines, &keys, &labels)
        .map_err(|e| e.to_string())?;
    Ok(label_image(&map))
}

/// True facies map of the synthetic physical model (bands, caves, river).
#[wasm_bindgen]
pub fn layout_preview(inlines: usize, crosslines: usize, seed: u64) -> Result<LabelImage, JsError> {
    layout_preview_impl(inlines, crosslines, seed).map_err(|e| JsError::new(&e))
}

fn gather_preview_impl(
    inlines: usize,
    crosslines: usize,
    seed: u64,
    snr: f64,
    inline: usize,
    crossline: usize,
) -> Result<LabelImage, String> {
    check_extents(inlines, crosslines)?;
    if inline >= inlines || crossline >= crosslines {
        return Err("gather position outside the grid".to_string());
    }
    let layout = noisy_layout(inlines, crosslines, seed, snr)?;
    let (grid, _truth) =
        generate_survey(&layout, DT_MS, WINDOW_MS, OFFSETS).map_err(|e| e.to_string())?;
    let (grid, _constant) = standardize_survey(&grid).map_err(|e| e.to_string())?;
    let window = grid.window(inline, crossline);
    let (h, w) = (window.height(), window.width());
    let peak = window
        .samples
        .data()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    let mut rgba = Vec::with_capacity(h * w * 4);
    for i in 0..h {
        for j in 0..w {
            let t = (window.samples.get3(0, i, j) / peak).clamp(-1.0, 1.0);
            // negative amplitudes toward blue, positive toward red
            let (r, g, b) = if t >= 0.0 {
                (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
            } else {
                (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
            };
            rgba.extend_from_slice(&[r as u8, g as u8, b as u8, 255]);
        }
    }
    Ok(LabelImage {
        width: w as u32,
        height: h as u32,
        rgba,
    })
}

/// One standardized prestack window (time samples x offset traces) as a
/// blue-white-red amplitude raster.
#[wasm_bindgen]
pub fn gather_preview(
    inlines: usize,
    crosslines: usize,
    seed: u64,
    snr: f64,
    inline: usize,
    crossline: usize,
) -> Result<LabelImage, JsError> {
    gather_preview_impl(inlines, crosslines, seed, snr, inline, crossline)
        .map_err(|e| JsError::new(&e))
}

/// Outcome of the miniature end-to-end experiment.
#[wasm_bindgen]
pub struct PipelineOutcome {
    width: u32,
    height: u32,
    truth_rgba: Vec<u8>,
    predicted_rgba: Vec<u8>,
    accuracy: f64,
    poststack_accuracy: f64,
    epochs: u32,
    losses: Vec<f64>,
}

#[wasm_bindgen]
impl PipelineOutcome {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[wasm_bindgen(getter)]
    pub fn truth_rgba(&self) -> Vec<u8> {
        self.truth_rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn predicted_rgba(&self) -> Vec<u8> {
        self.predicted_rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    #[wasm_bindgen(getter)]
    pub fn poststack_accuracy(&self) -> f64 {
        self.poststack_accuracy
    }

    /// Per-layer loss histories flattened; each layer spans `epochs` values.
    #[wasm_bindgen(getter)]
    pub fn losses(&self) -> Vec<f64> {
        self.losses.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn epochs(&self) -> u32 {
        self.epochs
    }
}

fn run_pipeline_impl(
    inlines: usize,
    crosslines: usize,
    seed: u64,
    snr: f64,
    epochs: usize,
    clusters: usize,
) -> Result<PipelineOutcome, String> {
    check_extents(inlines, crosslines)?;
    if !(1..=20).contains(&epochs) {
        return Err("epochs must lie in 1..=20".to_string());
    }
    if !(2..=8).contains(&clusters) {
        return Err("clusters must lie in 2..=8".to_string());
    }
    let layout = noisy_layout(inlines, crosslines, seed, snr)?;
    let (grid, truth) =
        generate_survey(&layout, DT_MS, WINDOW_MS, OFFSETS).map_err(|e| e.to_string())?;
    let (grid, _constant) = standardize_survey(&grid).map_err(|e| e.to_string())?;

    let specs = vec![
        LayerSpec {
            kernel_size: 3,
            maps: 10,
            pool: None,
        };
        2
    ];
    let model = CaeModel::init(
        grid.window_shape(),
        &specs,
        0.01,
        DecoderActivation::Auto,
        UnpoolMode::Random,
        seed,
    )
    .map_err(|e| e.to_string())?;
    let windows: Vec<Tensor> = grid.windows().iter().map(|w| w.samples.clone()).collect();
    let tc = TrainConfig {
        learning_rate: 0.02,
        epochs,
        corruption_prob: 0.05,
        batch_size: 1,
        seed,
    };
    let (model, history) = train_layerwise(model, &windows, &tc).map_err(|e| e.to_string())?;

    let ccfg = ClusterConfig {
        clusters,
        seed,
        ..ClusterConfig::default()
    };
    let features = assemble_feature_matrix(&grid, &model).map_err(|e| e.to_string())?;
    let res = kmeans(&features.matrix, &ccfg).map_err(|e| e.to_string())?;
    let pred = FaciesMap::from_keyed_labels(grid.inlines, grid.crosslines, &features.keys, &res.labels)
        .map_err(|e| e.to_string())?;
    let cae = score_map(&pred, &truth).map_err(|e| e.to_string())?;

    let (ps, _constant) = poststack_features(&grid).map_err(|e| e.to_string())?;
    let post_res = kmeans(&ps.matrix, &ccfg).map_err(|e| e.to_string())?;
    let post_pred =
        FaciesMap::from_keyed_labels(grid.inlines, grid.crosslines, &ps.keys, &post_res.labels)
            .map_err(|e| e.to_string())?;
    let post = score_map(&post_pred, &truth).map_err(|e| e.to_string())?;

    Ok(PipelineOutcome {
        width: truth.crosslines as u32,
        height: truth.inlines as u32,
        truth_rgba: map_rgba(&truth),
        predicted_rgba: map_rgba(&pred),
        accuracy: cae.accuracy,
        poststack_accuracy: post.accuracy,
        epochs: epochs as u32,
        losses: history.into_iter().flatten().collect(),
    })
}

/// Full miniature pipeline: synthesize, standardize, train a two-layer
/// autoencoder, cluster the bottleneck features, and score against both the
/// truth and the poststack baseline.
#[wasm_bindgen]
pub fn run_pipeline(
    inlines: usize,
    crosslines: usize,
    seed: u64,
    snr: f64,
    epochs: usize,
    clusters: usize,
) -> Result<PipelineOutcome, JsError> {
    run_pipeline_impl(inlines, crosslines, seed, snr, epochs, clusters)
        .map_err(|e| JsError::new(&e))
}
