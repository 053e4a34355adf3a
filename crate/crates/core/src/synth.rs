//! Labeled synthetic prestack survey generator and map scoring.
//!
//! Each grid cell gets a facies class from the layout (river over caves
//! over background bands). A cell's gather is a Ricker wavelet at the
//! class's peak frequency, scaled by a two-term offset dependence
//! `A * (1 + G * sin^2 theta)`, plus seeded Gaussian noise. Classes that
//! share `A` and frequency but differ in `G` produce near-identical
//! stacked traces while their prestack gathers differ, which is what makes
//! the prestack-vs-poststack comparison measurable.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{cut_survey, window_samples, Alignment, GatherCube, SurveyGrid};
use crate::rng::{self, stream};

/// Incidence angle at the farthest offset, degrees. Offsets map linearly
/// onto `[0, this]`.
const MAX_INCIDENCE_DEG: f64 = 30.0;

/// Per-class synthesis parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassParams {
    /// Reflectivity amplitude A.
    pub amplitude: f64,
    /// AVO gradient G in `A * (1 + G * sin^2 theta)`; must exceed -1.
    pub avo_gradient: f64,
    /// Ricker peak frequency, Hz.
    pub peak_frequency_hz: f64,
}

/// Circular feature, class typically "cave".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub center_inline: f64,
    pub center_crossline: f64,
    pub radius: f64,
    pub class: usize,
}

/// Inline-range feature, the "water tank" style background regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub first_inline: usize,
    pub last_inline: usize,
    pub class: usize,
}

/// Strip of constant width around a polyline, class "river".
#[derive(Debug, Clone, PartialEq)]
pub struct RiverStrip {
    /// Vertices in (inline, crossline) cell coordinates.
    pub points: Vec<(f64, f64)>,
    pub width: f64,
    pub class: usize,
}

/// Layered map description. Cell class precedence: river, then discs in
/// order, then bands, then the background class.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub inlines: usize,
    pub crosslines: usize,
    pub background_class: usize,
    pub bands: Vec<Band>,
    pub discs: Vec<Disc>,
    pub river: Option<RiverStrip>,
    /// Row per class id.
    pub class_params: Vec<ClassParams>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ModelLayout {
    pub fn classes(&self) -> usize {
        self.class_params.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inlines == 0 || self.crosslines == 0 {
            return Err(Error::InvalidLayout("empty grid".to_string()));
        }
        if self.class_params.is_empty() {
            return Err(Error::InvalidLayout("no class parameters".to_string()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidLayout(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        let n = self.classes();
        let class_ok = |c: usize| c < n;
        if !class_ok(self.background_class) {
            return Err(Error::InvalidLayout(format!(
                "background class {} out of range (classes: {n})",
                self.background_class
            )));
        }
        for b in &self.bands {
            if !class_ok(b.class) || b.first_inline > b.last_inline || b.last_inline >= self.inlines
            {
                return Err(Error::InvalidLayout(format!("bad band {b:?}")));
            }
        }
        for d in &self.discs {
            let inside = d.center_inline - d.radius >= -0.5
                && d.center_inline + d.radius <= self.inlines as f64 - 0.5
                && d.center_crossline - d.radius >= -0.5
                && d.center_crossline + d.radius <= self.crosslines as f64 - 0.5;
            if !class_ok(d.class) || !(d.radius > 0.0) || !inside {
                return Err(Error::InvalidLayout(format!("bad disc {d:?}")));
            }
        }
        if let Some(r) = &self.river {
            if !class_ok(r.class) || r.points.len() < 2 || !(r.width > 0.0) {
                return Err(Error::InvalidLayout("bad river strip".to_string()));
            }
            for &(i, x) in &r.points {
                if i < 0.0 || x < 0.0 || i > self.inlines as f64 - 1.0 || x > self.crosslines as f64 - 1.0
                {
                    return Err(Error::InvalidLayout(format!(
                        "river vertex ({i}, {x}) outside the grid"
                    )));
                }
            }
        }
        for (i, p) in self.class_params.iter().enumerate() {
            if !(p.amplitude.is_finite()
                && p.avo_gradient > -1.0
                && p.avo_gradient.is_finite()
                && p.peak_frequency_hz > 0.0)
            {
                return Err(Error::InvalidLayout(format!("bad parameters for class {i}")));
            }
        }
        Ok(())
    }

    /// Facies class of one cell under the layout precedence.
    pub fn class_of(&self, inline: usize, crossline: usize) -> usize {
        let (pi, px) = (inline as f64, crossline as f64);
        if let Some(r) = &self.river {
            let half = r.width / 2.0;
            let near = r
                .points
                .windows(2)
                .any(|seg| point_segment_distance(pi, px, seg[0], seg[1]) <= half);
            if near {
                return r.class;
            }
        }
        for d in &self.discs {
            let (dy, dx) = (pi - d.center_inline, px - d.center_crossline);
            if dy * dy + dx * dx <= d.radius * d.radius {
                return d.class;
            }
        }
        for b in &self.bands {
            if (b.first_inline..=b.last_inline).contains(&inline) {
                return b.class;
            }
        }
        self.background_class
    }
}

fn point_segment_distance(py: f64, px: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vy, vx) = (b.0 - a.0, b.1 - a.1);
    let len2 = vy * vy + vx * vx;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((py - a.0) * vy + (px - a.1) * vx) / len2).clamp(0.0, 1.0)
    };
    let (cy, cx) = (a.0 + t * vy, a.1 + t * vx);
    ((py - cy) * (py - cy) + (px - cx) * (px - cx)).sqrt()
}

/// Default layout: three background bands, six caves, one river strip.
/// Classes 0..2 are the bands, 3 the caves, 4 the river. Classes 0 and 1
/// share amplitude and frequency and differ only in AVO gradient, so their
/// stacked responses are indistinguishable after standardization.
pub fn physical_model(inlines: usize, crosslines: usize, seed: u64) -> ModelLayout {
    let fi = |f: f64| f * inlines.saturating_sub(1) as f64;
    let fx = |f: f64| f * crosslines.saturating_sub(1) as f64;
    let radius = (0.075 * inlines.min(crosslines) as f64).clamp(2.0, 4.0);
    // Centers are nudged inward so every disc satisfies the inside-the-grid
    // layout invariant; discs that cannot fit at all are dropped.
    let disc = |fin: f64, fxn: f64, r: f64| -> Option<Disc> {
        let place = |c: f64, extent: usize| {
            let (lo, hi) = (r - 0.5, extent as f64 - 0.5 - r);
            (lo <= hi).then(|| c.clamp(lo, hi))
        };
        Some(Disc {
            center_inline: place(fi(fin), inlines)?,
            center_crossline: place(fx(fxn), crosslines)?,
            radius: r,
            class: 3,
        })
    };
    let third = (inlines / 3).max(1);
    let cap = inlines.saturating_sub(1);
    ModelLayout {
        inlines,
        crosslines,
        background_class: 2,
        bands: vec![
            Band { first_inline: 0, last_inline: (third - 1).min(cap), class: 0 },
            Band { first_inline: third.min(cap), last_inline: (2 * third - 1).min(cap), class: 1 },
            Band { first_inline: (2 * third).min(cap), last_inline: cap, class: 2 },
        ],
        discs: [
            disc(0.18, 0.20, radius),
            disc(0.15, 0.75, radius * 0.8),
            disc(0.50, 0.15, radius * 0.9),
            disc(0.48, 0.85, radius),
            disc(0.82, 0.25, radius * 0.7),
            disc(0.85, 0.70, radius),
        ]
        .into_iter()
        .flatten()
        .collect(),
        river: Some(RiverStrip {
            points: vec![
                (fi(0.0), fx(0.10)),
                (fi(0.30), fx(0.30)),
                (fi(0.62), fx(0.45)),
                (fi(1.0), fx(0.78)),
            ],
            width: 2.0,
            class: 4,
        }),
        class_params: vec![
            // bands: 0 and 1 separable only through the offset gradient
            ClassParams { amplitude: 1.0, avo_gradient: 0.0, peak_frequency_hz: 30.0 },
            ClassParams { amplitude: 1.0, avo_gradient: 0.9, peak_frequency_hz: 30.0 },
            ClassParams { amplitude: 0.6, avo_gradient: 0.3, peak_frequency_hz: 45.0 },
            // caves
            ClassParams { amplitude: 1.3, avo_gradient: -0.5, peak_frequency_hz: 22.0 },
            // river
            ClassParams { amplitude: 0.8, avo_gradient: 0.5, peak_frequency_hz: 60.0 },
        ],
        noise_sigma: 0.0,
        seed,
    }
}

/// Zero-phase Ricker wavelet at time `tau_s` seconds for peak frequency
/// `f_hz`: `(1 - 2 pi^2 f^2 tau^2) exp(-pi^2 f^2 tau^2)`.
pub fn ricker(tau_s: f64, f_hz: f64) -> f64 {
    let a = std::f64::consts::PI * std::f64::consts::PI * f_hz * f_hz * tau_s * tau_s;
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Label grid aligned with a survey, inline-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaciesMap {
    pub inlines: usize,
    pub crosslines: usize,
    labels: Vec<usize>,
}

impl FaciesMap {
    pub fn new(inlines: usize, crosslines: usize, labels: Vec<usize>) -> Result<FaciesMap> {
        if labels.len() != inlines * crosslines {
            return Err(Error::ShapeMismatch {
                context: "FaciesMap",
                detail: format!("{} labels for {inlines}x{crosslines}", labels.len()),
            });
        }
        Ok(FaciesMap {
            inlines,
            crosslines,
            labels,
        })
    }

    /// Builds a map from clustering output keyed by (inline, crossline).
    /// Every cell must appear exactly once.
    pub fn from_keyed_labels(
        inlines: usize,
        crosslines: usize,
        keys: &[(usize, usize)],
        labels: &[usize],
    ) -> Result<FaciesMap> {
        if keys.len() != labels.len() || keys.len() != inlines * crosslines {
            return Err(Error::ShapeMismatch {
                context: "FaciesMap",
                detail: format!(
                    "{} keys, {} labels for {inlines}x{crosslines}",
                    keys.len(),
                    labels.len()
                ),
            });
        }
        let mut grid = vec![usize::MAX; inlines * crosslines];
        for (&(il, xl), &l) in keys.iter().zip(labels) {
            if il >= inlines || xl >= crosslines || grid[il * crosslines + xl] != usize::MAX {
                return Err(Error::ShapeMismatch {
                    context: "FaciesMap",
                    detail: format!("bad or duplicate key ({il}, {xl})"),
                });
            }
            grid[il * crosslines + xl] = l;
        }
        FaciesMap::new(inlines, crosslines, grid)
    }

    pub fn get(&self, inline: usize, crossline: usize) -> usize {
        self.labels[inline * self.crosslines + crossline]
    }

    /// Inline-major labels.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn max_label(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Generates full-length gathers: the wavelet sits at the trace middle
/// (the horizon), with half a window of context on either side. Noise is
/// drawn from a per-cell stream so generation order never matters.
pub fn generate_cube(
    layout: &ModelLayout,
    dt_ms: f64,
    window_ms: f64,
    offsets: usize,
) -> Result<(GatherCube, FaciesMap)> {
    layout.validate()?;
    let h = window_samples(window_ms, dt_ms)?;
    if offsets < 2 {
        return Err(Error::InvalidLayout(format!(
            "need at least 2 offsets, got {offsets}"
        )));
    }
    let trace_samples = 2 * h;
    let horizon_sample = h;
    let (inls, xls) = (layout.inlines, layout.crosslines);
    let mut data = Vec::with_capacity(inls * xls * offsets * trace_samples);
    let mut labels = Vec::with_capacity(inls * xls);
    let theta_step = MAX_INCIDENCE_DEG.to_radians() / (offsets - 1) as f64;
    let noise = if layout.noise_sigma > 0.0 {
        Some(Normal::new(0.0, layout.noise_sigma).expect("validated sigma"))
    } else {
        None
    };
    for il in 0..inls {
        for xl in 0..xls {
            let class = layout.class_of(il, xl);
            labels.push(class);
            let p = layout.class_params[class];
            let cell = (il * xls + xl) as u64;
            let mut cell_rng = rng::seeded(layout.seed, stream::SYNTH | (cell << 16));
            for o in 0..offsets {
                let sin2 = (o as f64 * theta_step).sin().powi(2);
                let amp = p.amplitude * (1.0 + p.avo_gradient * sin2);
                for s in 0..trace_samples {
                    let tau = (s as f64 - horizon_sample as f64) * dt_ms / 1000.0;
                    let mut v = amp * ricker(tau, p.peak_frequency_hz);
                    if let Some(n) = &noise {
                        v += n.sample(&mut cell_rng);
                    }
                    data.push(v);
                }
            }
        }
    }
    let cube = GatherCube {
        inlines: inls,
        crosslines: xls,
        offsets,
        samples: trace_samples,
        dt_ms,
        horizon_ms: horizon_sample as f64 * dt_ms,
        window_ms,
        data,
    };
    let map = FaciesMap::new(inls, xls, labels)?;
    Ok((cube, map))
}

/// Windows cut around the horizon plus the aligned label grid.
pub fn generate_survey(
    layout: &ModelLayout,
    dt_ms: f64,
    window_ms: f64,
    offsets: usize,
) -> Result<(SurveyGrid, FaciesMap)> {
    let (cube, map) = generate_cube(layout, dt_ms, window_ms, offsets)?;
    let grid = cut_survey(&cube, Alignment::Centered)?;
    Ok((grid, map))
}

/// Noise level that makes the window-region signal RMS `snr` times the
/// noise standard deviation, measured on a noise-free generation.
pub fn noise_sigma_for_snr(
    layout: &ModelLayout,
    dt_ms: f64,
    window_ms: f64,
    offsets: usize,
    snr: f64,
) -> Result<f64> {
    if !(snr > 0.0) {
        return Err(Error::InvalidLayout(format!("snr must be positive, got {snr}")));
    }
    let quiet = ModelLayout {
        noise_sigma: 0.0,
        ..layout.clone()
    };
    let (grid, _) = generate_survey(&quiet, dt_ms, window_ms, offsets)?;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for w in grid.windows() {
        for v in w.samples.data() {
            sum_sq += v * v;
            count += 1;
        }
    }
    let rms = (sum_sq / count as f64).sqrt();
    if !(rms > 0.0) {
        return Err(Error::DegenerateInput {
            context: "noise_sigma_for_snr",
            detail: "noise-free survey has zero signal".to_string(),
        });
    }
    Ok(rms / snr)
}

/// Permutation-matched clustering quality.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub accuracy: f64,
    /// Indexed by true class; vacuously 1 for classes absent from the
    /// truth map.
    pub per_class_recall: Vec<f64>,
    /// `permutation[predicted] = matched true class`.
    pub permutation: Vec<usize>,
}

/// Scores a predicted map against the truth under the best relabeling of
/// predictions. Exhaustive over permutations, so at most 8 classes.
pub fn score_map(pred: &FaciesMap, truth: &FaciesMap) -> Result<ScoreReport> {
    if pred.inlines != truth.inlines || pred.crosslines != truth.crosslines {
        return Err(Error::ShapeMismatch {
            context: "score_map",
            detail: format!(
                "{}x{} vs {}x{}",
                pred.inlines, pred.crosslines, truth.inlines, truth.crosslines
            ),
        });
    }
    let c = (pred.max_label().max(truth.max_label()) + 1).max(2);
    if c > 8 {
        return Err(Error::InvalidLayout(format!(
            "scoring supports at most 8 classes, got {c}"
        )));
    }
    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        confusion[p][t] += 1;
    }
    let total = pred.labels.len();

    // lexicographically first permutation among those maximizing agreement
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut perm = Vec::with_capacity(c);
    let mut used = vec![false; c];
    fn walk(
        c: usize,
        confusion: &[Vec<usize>],
        perm: &mut Vec<usize>,
        used: &mut [bool],
        hits: usize,
        best: &mut Option<(usize, Vec<usize>)>,
    ) {
        if perm.len() == c {
            if best.as_ref().is_none_or(|(b, _)| hits > *b) {
                *best = Some((hits, perm.clone()));
            }
            return;
        }
        let p = perm.len();
        for t in 0..c {
            if used[t] {
                continue;
            }
            used[t] = true;
            perm.push(t);
            walk(c, confusion, perm, used, hits + confusion[p][t], best);
            perm.pop();
            used[t] = false;
        }
    }
    walk(c, &confusion, &mut perm, &mut used, 0, &mut best);
    let (best_hits, best_perm) = best.expect("at least one permutation");

    let mut true_counts = vec![0usize; c];
    for &t in &truth.labels {
        true_counts[t] += 1;
    }
    let mut matched = vec![0usize; c];
    for (p, &t) in best_perm.iter().enumerate() {
        matched[t] = confusion[p][t];
    }
    let per_class_recall = (0..c)
        .map(|t| {
            if true_counts[t] == 0 {
                1.0
            } else {
                matched[t] as f64 / true_counts[t] as f64
            }
        })
        .collect();
    Ok(ScoreReport {
        accuracy: best_hits as f64 / total as f64,
        per_class_recall,
        permutation: best_perm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::stack_poststack;
    use crate::features::standardize;

    fn tiny_layout() -> ModelLayout {
        ModelLayout {
            inlines: 8,
            crosslines: 8,
            background_class: 0,
            bands: vec![],
            discs: vec![Disc {
                center_inline: 4.0,
                center_crossline: 4.0,
                radius: 2.0,
                class: 1,
            }],
            river: None,
            class_params: vec![
                ClassParams { amplitude: 1.0, avo_gradient: 0.0, peak_frequency_hz: 30.0 },
                ClassParams { amplitude: 0.5, avo_gradient: 0.6, peak_frequency_hz: 50.0 },
            ],
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn ricker_peak_and_zero_crossing() {
        assert_eq!(ricker(0.0, 30.0), 1.0);
        let f = 30.0;
        let tau0 = 1.0 / (std::f64::consts::PI * f * 2.0_f64.sqrt());
        assert!(ricker(tau0, f).abs() < 1e-12);
        assert_eq!(ricker(0.01, f), ricker(-0.01, f));
        assert!(ricker(0.2, f).abs() < 1e-9);
    }

    #[test]
    fn generation_is_deterministic() {
        let mut layout = tiny_layout();
        layout.noise_sigma = 0.1;
        let (a, ma) = generate_cube(&layout, 2.0, 16.0, 4).unwrap();
        let (b, mb) = generate_cube(&layout, 2.0, 16.0, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
    }

    #[test]
    fn noise_free_same_class_cells_are_identical() {
        let layout = tiny_layout();
        let (cube, map) = generate_cube(&layout, 2.0, 16.0, 4).unwrap();
        assert_eq!(map.get(0, 0), 0);
        assert_eq!(map.get(7, 7), 0);
        for o in 0..4 {
            assert_eq!(cube.trace(0, 0, o), cube.trace(7, 7, o));
        }
    }

    #[test]
    fn zero_gradient_makes_offsets_identical() {
        let layout = tiny_layout();
        let (cube, _) = generate_cube(&layout, 2.0, 16.0, 4).unwrap();
        // cell (0,0) is class 0 with G = 0
        let first = cube.trace(0, 0, 0).to_vec();
        for o in 1..4 {
            assert_eq!(cube.trace(0, 0, o), first.as_slice());
        }
        // disc cell has G != 0: offsets must differ
        assert_ne!(cube.trace(4, 4, 0), cube.trace(4, 4, 3));
    }

    #[test]
    fn disc_label_area_approximates_pi_r_squared() {
        for radius in [3.0, 4.0] {
            let layout = ModelLayout {
                inlines: 20,
                crosslines: 20,
                discs: vec![Disc {
                    center_inline: 10.0,
                    center_crossline: 10.0,
                    radius,
                    class: 1,
                }],
                ..tiny_layout()
            };
            let (_, map) = generate_cube(&layout, 2.0, 16.0, 2).unwrap();
            let count = map.labels().iter().filter(|&&l| l == 1).count() as f64;
            let area = std::f64::consts::PI * radius * radius;
            assert!(
                (count - area).abs() < 2.0 * std::f64::consts::PI * radius,
                "radius {radius}: {count} cells vs area {area}"
            );
        }
    }

    #[test]
    fn river_takes_precedence_over_discs_and_bands() {
        let layout = ModelLayout {
            inlines: 10,
            crosslines: 10,
            background_class: 0,
            bands: vec![Band { first_inline: 0, last_inline: 9, class: 1 }],
            discs: vec![Disc {
                center_inline: 5.0,
                center_crossline: 5.0,
                radius: 2.0,
                class: 2,
            }],
            river: Some(RiverStrip {
                points: vec![(5.0, 0.0), (5.0, 9.0)],
                width: 1.0,
                class: 3,
            }),
            class_params: vec![
                ClassParams { amplitude: 1.0, avo_gradient: 0.0, peak_frequency_hz: 30.0 };
                4
            ],
            noise_sigma: 0.0,
            seed: 0,
        };
        assert_eq!(layout.class_of(5, 5), 3); // river over disc
        assert_eq!(layout.class_of(6, 5), 2); // disc over band
        assert_eq!(layout.class_of(0, 0), 1); // band over background
    }

    #[test]
    fn layout_validation_rejects_bad_features() {
        let mut outside = tiny_layout();
        outside.discs[0].center_inline = 7.5; // 7.5 + 2 > 7.5 max
        assert!(outside.validate().is_err());
        let mut bad_class = tiny_layout();
        bad_class.discs[0].class = 9;
        assert!(bad_class.validate().is_err());
        let mut bad_sigma = tiny_layout();
        bad_sigma.noise_sigma = -1.0;
        assert!(bad_sigma.validate().is_err());
        let mut bad_gradient = tiny_layout();
        bad_gradient.class_params[0].avo_gradient = -1.5;
        assert!(bad_gradient.validate().is_err());
    }

    #[test]
    fn default_layout_is_valid_and_uses_all_classes() {
        let layout = physical_model(40, 40, 0);
        layout.validate().unwrap();
        let (_, map) = generate_cube(&layout, 2.0, 16.0, 2).unwrap();
        let mut seen = vec![false; layout.classes()];
        for &l in map.labels() {
            seen[l] = true;
        }
        assert!(seen.iter().all(|&s| s), "class coverage: {seen:?}");
    }

    #[test]
    fn gradient_only_classes_have_equal_poststack_but_different_prestack() {
        // classes 0 and 1 of the default layout differ only in G
        let layout = physical_model(40, 40, 1);
        let (grid, map) = generate_survey(&layout, 2.0, 48.0, 8).unwrap();
        let mut c0 = None;
        let mut c1 = None;
        for il in 0..40 {
            for xl in 0..40 {
                match map.get(il, xl) {
                    0 if c0.is_none() => c0 = Some((il, xl)),
                    1 if c1.is_none() => c1 = Some((il, xl)),
                    _ => {}
                }
            }
        }
        let (w0, w1) = (grid.window(c0.unwrap().0, c0.unwrap().1), grid.window(c1.unwrap().0, c1.unwrap().1));
        let (p0, _) = stack_poststack(w0);
        let (p1, _) = stack_poststack(w1);
        let post_gap: f64 = p0
            .iter()
            .zip(&p1)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(post_gap < 1e-9, "stacked traces should match, gap {post_gap}");
        let (s0, _) = standardize(w0);
        let (s1, _) = standardize(w1);
        let pre_gap: f64 = s0
            .samples
            .data()
            .iter()
            .zip(s1.samples.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(pre_gap > 1e-2, "prestack windows should differ, gap {pre_gap}");
    }

    #[test]
    fn snr_calibration_returns_positive_sigma() {
        let layout = tiny_layout();
        let sigma = noise_sigma_for_snr(&layout, 2.0, 16.0, 4, 10.0).unwrap();
        assert!(sigma > 0.0);
        // doubling the target halves the sigma
        let sigma5 = noise_sigma_for_snr(&layout, 2.0, 16.0, 4, 5.0).unwrap();
        assert!((sigma5 / sigma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn score_identical_maps_is_perfect() {
        let (_, map) = generate_cube(&tiny_layout(), 2.0, 16.0, 2).unwrap();
        let r = score_map(&map, &map).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.per_class_recall.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn score_recovers_a_fixed_relabeling() {
        let truth = FaciesMap::new(2, 3, vec![0, 1, 2, 0, 1, 2]).unwrap();
        let pred = FaciesMap::new(2, 3, vec![2, 0, 1, 2, 0, 1]).unwrap();
        let r = score_map(&pred, &truth).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.permutation, vec![1, 2, 0]);
    }

    #[test]
    fn score_two_classes_is_at_least_half() {
        let mut r = crate::rng::seeded(3, 3);
        use rand::Rng;
        let labels: Vec<usize> = (0..64).map(|_| r.random_range(0..2)).collect();
        let noise: Vec<usize> = (0..64).map(|_| r.random_range(0..2)).collect();
        let a = FaciesMap::new(8, 8, labels).unwrap();
        let b = FaciesMap::new(8, 8, noise).unwrap();
        assert!(score_map(&a, &b).unwrap().accuracy >= 0.5);
    }

    #[test]
    fn score_rejects_shape_mismatch() {
        let a = FaciesMap::new(2, 2, vec![0; 4]).unwrap();
        let b = FaciesMap::new(2, 3, vec![0; 6]).unwrap();
        assert!(score_map(&a, &b).is_err());
    }

    #[test]
    fn keyed_labels_round_trip() {
        let keys = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        let labels = vec![3, 1, 0, 2];
        let map = FaciesMap::from_keyed_labels(2, 2, &keys, &labels).unwrap();
        assert_eq!(map.get(0, 1), 1);
        assert_eq!(map.get(1, 0), 0);
        let dup = vec![(0, 0), (0, 0), (1, 0), (1, 1)];
        assert!(FaciesMap::from_keyed_labels(2, 2, &dup, &labels).is_err());
    }
}
