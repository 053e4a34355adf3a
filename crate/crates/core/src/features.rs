//! Window preparation: cut fixed-length windows from prestack gathers
//! along the horizon, validate and standardize them, and marshal feature
//! vectors for clustering.

use crate::cae::{extract_features, CaeModel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::Tensor;

/// Where the window sits relative to the horizon pick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    /// Window centered on the pick sample.
    Centered,
    /// Window starts at the pick sample.
    Below,
}

/// One prestack window: `[1, h, w]` with `h` time samples down rows and
/// `w` offset traces across columns.
#[derive(Debug, Clone, PartialEq)]
pub struct GatherWindow {
    pub inline: usize,
    pub crossline: usize,
    pub samples: Tensor,
    pub dt_ms: f64,
    pub horizon_time_ms: f64,
}

impl GatherWindow {
    pub fn height(&self) -> usize {
        self.samples.dim(1)
    }

    pub fn width(&self) -> usize {
        self.samples.dim(2)
    }
}

/// Dense grid of uniformly shaped windows, one per cell, inline-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyGrid {
    pub inlines: usize,
    pub crosslines: usize,
    pub dt_ms: f64,
    pub window_ms: f64,
    windows: Vec<GatherWindow>,
}

impl SurveyGrid {
    pub fn new(
        inlines: usize,
        crosslines: usize,
        dt_ms: f64,
        window_ms: f64,
        windows: Vec<GatherWindow>,
    ) -> Result<SurveyGrid> {
        if inlines == 0 || crosslines == 0 || windows.len() != inlines * crosslines {
            return Err(Error::ShapeMismatch {
                context: "SurveyGrid",
                detail: format!(
                    "{} windows for a {inlines}x{crosslines} grid",
                    windows.len()
                ),
            });
        }
        let shape = windows[0].samples.shape().to_vec();
        for w in &windows {
            if w.samples.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    context: "SurveyGrid",
                    detail: format!("{:?} vs {:?}", w.samples.shape(), shape),
                });
            }
        }
        Ok(SurveyGrid {
            inlines,
            crosslines,
            dt_ms,
            window_ms,
            windows,
        })
    }

    /// `[1, h, w]` of every window.
    pub fn window_shape(&self) -> [usize; 3] {
        let s = self.windows[0].samples.shape();
        [s[0], s[1], s[2]]
    }

    pub fn window(&self, inline: usize, crossline: usize) -> &GatherWindow {
        &self.windows[inline * self.crosslines + crossline]
    }

    /// Inline-major traversal.
    pub fn windows(&self) -> &[GatherWindow] {
        &self.windows
    }
}

/// Full-length gathers before windowing, as stored in the cube file:
/// sample is the fastest index, then offset, crossline, inline.
#[derive(Debug, Clone, PartialEq)]
pub struct GatherCube {
    pub inlines: usize,
    pub crosslines: usize,
    pub offsets: usize,
    pub samples: usize,
    pub dt_ms: f64,
    pub horizon_ms: f64,
    pub window_ms: f64,
    pub data: Vec<f64>,
}

impl GatherCube {
    pub fn validate(&self) -> Result<()> {
        let want = self.inlines * self.crosslines * self.offsets * self.samples;
        if self.data.len() != want
            || self.inlines == 0
            || self.crosslines == 0
            || self.offsets == 0
            || self.samples == 0
        {
            return Err(Error::ShapeMismatch {
                context: "GatherCube",
                detail: format!("{} values for extents {want}", self.data.len()),
            });
        }
        if !(self.dt_ms > 0.0) || !self.data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "GatherCube",
            });
        }
        Ok(())
    }

    pub fn trace(&self, inline: usize, crossline: usize, offset: usize) -> &[f64] {
        let base =
            (((inline * self.crosslines) + crossline) * self.offsets + offset) * self.samples;
        &self.data[base..base + self.samples]
    }

    /// One cell's gather as `[1, samples, offsets]` (time down rows).
    pub fn gather(&self, inline: usize, crossline: usize) -> Tensor {
        let mut t = Tensor::zeros(&[1, self.samples, self.offsets]);
        for o in 0..self.offsets {
            let trace = self.trace(inline, crossline, o);
            for (s, &v) in trace.iter().enumerate() {
                t.set3(0, s, o, v);
            }
        }
        t
    }
}

/// Number of samples a window spans; errors unless `window_ms/dt_ms` is
/// integral (within float slack) and even.
pub fn window_samples(window_ms: f64, dt_ms: f64) -> Result<usize> {
    if !(dt_ms > 0.0) || !(window_ms > 0.0) {
        return Err(Error::NonIntegralSamples { window_ms, dt_ms });
    }
    let ratio = window_ms / dt_ms;
    let h = ratio.round();
    if (ratio - h).abs() > 1e-9 || h < 1.0 {
        return Err(Error::NonIntegralSamples { window_ms, dt_ms });
    }
    let h = h as usize;
    if h % 2 != 0 {
        return Err(Error::OddSampleCount { samples: h });
    }
    Ok(h)
}

/// Cuts the `h x w` window from one gather at the horizon pick. Alignment
/// `Below` starts at the pick sample; `Centered` puts the pick at `h/2`.
/// An odd trace count is evened by dropping the last trace.
pub fn cut_window(
    inline: usize,
    crossline: usize,
    gather: &Tensor,
    horizon_time_ms: f64,
    window_ms: f64,
    dt_ms: f64,
    alignment: Alignment,
) -> Result<GatherWindow> {
    let h = window_samples(window_ms, dt_ms)?;
    let trace_samples = gather.dim(1);
    let offsets = gather.dim(2);
    let pick = (horizon_time_ms / dt_ms).round() as isize;
    let start = match alignment {
        Alignment::Below => pick,
        Alignment::Centered => pick - (h / 2) as isize,
    };
    if start < 0 || start as usize + h > trace_samples {
        return Err(Error::WindowOutOfRange {
            start_ms: start as f64 * dt_ms,
            end_ms: (start + h as isize) as f64 * dt_ms,
            trace_ms: trace_samples as f64 * dt_ms,
        });
    }
    let start = start as usize;
    let w = offsets - offsets % 2;
    if w == 0 {
        return Err(Error::ShapeMismatch {
            context: "cut_window",
            detail: "gather has fewer than two offset traces".to_string(),
        });
    }
    let mut out = Tensor::zeros(&[1, h, w]);
    for i in 0..h {
        for j in 0..w {
            out.set3(0, i, j, gather.get3(0, start + i, j));
        }
    }
    Ok(GatherWindow {
        inline,
        crossline,
        samples: out,
        dt_ms,
        horizon_time_ms,
    })
}

/// Cuts every cell of a cube at its (flat) horizon.
pub fn cut_survey(cube: &GatherCube, alignment: Alignment) -> Result<SurveyGrid> {
    cube.validate()?;
    let mut windows = Vec::with_capacity(cube.inlines * cube.crosslines);
    for il in 0..cube.inlines {
        for xl in 0..cube.crosslines {
            let gather = cube.gather(il, xl);
            windows.push(cut_window(
                il,
                xl,
                &gather,
                cube.horizon_ms,
                cube.window_ms,
                cube.dt_ms,
                alignment,
            )?);
        }
    }
    SurveyGrid::new(cube.inlines, cube.crosslines, cube.dt_ms, cube.window_ms, windows)
}

/// Advisory quality report: traces lacking a crest or a trough.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowReport {
    /// Offset-trace indices without both a strictly positive interior local
    /// maximum and a strictly negative interior local minimum.
    pub flagged_traces: Vec<usize>,
}

impl WindowReport {
    pub fn passed(&self) -> bool {
        self.flagged_traces.is_empty()
    }
}

/// Flags traces that do not contain at least one crest and one trough.
/// Report only; the pipeline warns but never aborts on flagged windows.
pub fn validate_window(w: &GatherWindow) -> WindowReport {
    let (h, cols) = (w.height(), w.width());
    let mut flagged = Vec::new();
    for j in 0..cols {
        let mut crest = false;
        let mut trough = false;
        for i in 1..h.saturating_sub(1) {
            let v = w.samples.get3(0, i, j);
            let up = w.samples.get3(0, i - 1, j);
            let dn = w.samples.get3(0, i + 1, j);
            if v > 0.0 && v >= up && v >= dn {
                crest = true;
            }
            if v < 0.0 && v <= up && v <= dn {
                trough = true;
            }
        }
        if !(crest && trough) {
            flagged.push(j);
        }
    }
    WindowReport {
        flagged_traces: flagged,
    }
}

/// Zero mean, unit variance over the whole window. Constant (or otherwise
/// unnormalizable) windows come back all zero with the flag set.
pub fn standardize(w: &GatherWindow) -> (GatherWindow, bool) {
    let data = w.samples.data();
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let normalized: Vec<f64> = data.iter().map(|v| (v - mean) / std).collect();
    let constant = std == 0.0 || normalized.iter().any(|v| !v.is_finite());
    let samples = if constant {
        Tensor::zeros(w.samples.shape())
    } else {
        Tensor::from_vec(w.samples.shape(), normalized).expect("finite by construction")
    };
    (
        GatherWindow {
            samples,
            ..w.clone()
        },
        constant,
    )
}

/// Standardizes every window; returns the new grid and how many windows
/// were constant.
pub fn standardize_survey(grid: &SurveyGrid) -> Result<(SurveyGrid, usize)> {
    let mut constant = 0;
    let windows = grid
        .windows
        .iter()
        .map(|w| {
            let (sw, flag) = standardize(w);
            if flag {
                constant += 1;
            }
            sw
        })
        .collect();
    Ok((
        SurveyGrid::new(
            grid.inlines,
            grid.crosslines,
            grid.dt_ms,
            grid.window_ms,
            windows,
        )?,
        constant,
    ))
}

/// Feature vectors with their grid keys, rows aligned to keys.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// (inline, crossline) per row, inline-major.
    pub keys: Vec<(usize, usize)>,
    pub matrix: Matrix,
}

/// Runs the trained encoder over every window, inline-major.
pub fn assemble_feature_matrix(grid: &SurveyGrid, model: &CaeModel) -> Result<FeatureSet> {
    let rows = feature_rows(grid, model)?;
    let keys = grid.windows.iter().map(|w| (w.inline, w.crossline)).collect();
    Ok(FeatureSet {
        keys,
        matrix: Matrix::from_rows(&rows)?,
    })
}

#[cfg(feature = "parallel")]
fn feature_rows(grid: &SurveyGrid, model: &CaeModel) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    grid.windows
        .par_iter()
        .map(|w| extract_features(model, &w.samples))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn feature_rows(grid: &SurveyGrid, model: &CaeModel) -> Result<Vec<Vec<f64>>> {
    grid.windows
        .iter()
        .map(|w| extract_features(model, &w.samples))
        .collect()
}

/// Raw flattened windows (time-major), the PCA baseline's input.
pub fn flatten_windows(grid: &SurveyGrid) -> Result<FeatureSet> {
    let rows: Vec<Vec<f64>> = grid
        .windows
        .iter()
        .map(|w| w.samples.data().to_vec())
        .collect();
    let keys = grid.windows.iter().map(|w| (w.inline, w.crossline)).collect();
    Ok(FeatureSet {
        keys,
        matrix: Matrix::from_rows(&rows)?,
    })
}
