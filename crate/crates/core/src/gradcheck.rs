//! Central-difference validation of the analytic layer gradients.
//!
//! Every parameter of a sampled layer is perturbed by `±epsilon` and the
//! loss difference is compared against [`crate::cae::backward`]. Sampled
//! configurations are rejected when any pre-activation sits too close to
//! the leaky-ReLU kink or any pooling block has a near-tie, because there
//! the loss is not differentiable and a finite-difference probe is
//! meaningless.

use rand::Rng;

use crate::cae::{backward, corrupt, init_layer, reconstruction_loss, CaeLayer, Routing};
use crate::error::{Error, Result};
use crate::rng::{self, stream, SeedRng};
use crate::tensor::{conv2d_valid, PoolIndices, Tensor};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            trials: 20,
            seed: 0,
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub trials: usize,
    /// Total parameter components compared across all trials.
    pub components: usize,
    pub max_rel_error: f64,
    /// Components whose relative error exceeded the tolerance.
    pub failures: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Margin below which a configuration is considered to sit on a kink or a
/// pooling tie. An `epsilon` weight perturbation moves a pre-activation by
/// at most `epsilon * sum|input|`, well under this.
const KINK_MARGIN: f64 = 1e-3;

pub fn run(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if cfg.trials == 0 || cfg.epsilon <= 0.0 || cfg.tolerance <= 0.0 {
        return Err(Error::InvalidArchitecture(
            "gradient check needs positive trials, epsilon and tolerance".to_string(),
        ));
    }
    let mut report = GradCheckReport {
        trials: cfg.trials,
        components: 0,
        max_rel_error: 0.0,
        failures: 0,
    };
    for trial in 0..cfg.trials {
        let mut r = rng::seeded(cfg.seed, stream::GRADCHECK | ((trial as u64) << 32));
        let (layer, x, xc, placement) = sample_configuration(&mut r)?;
        let routing = match &placement {
            Some(p) => Routing::Fixed(p),
            None => Routing::Recorded,
        };
        check_one(&layer, &x, &xc, routing, cfg, &mut report)?;
    }
    Ok(report)
}

/// Draws a random layer, input and corruption, rejecting draws whose loss
/// surface is non-smooth at the probe point.
fn sample_configuration(
    r: &mut SeedRng,
) -> Result<(CaeLayer, Tensor, Tensor, Option<PoolIndices>)> {
    let c = r.random_range(1..=2usize);
    let k = r.random_range(1..=3usize);
    let n = 3usize;
    let pool = r.random::<f64>() < 0.7;
    // post-conv extents must be even when pooling
    let (h, w) = if pool {
        (
            n - 1 + 2 * r.random_range(2..=4usize),
            n - 1 + 2 * r.random_range(2..=4usize),
        )
    } else {
        (n - 1 + r.random_range(3..=6usize), n - 1 + r.random_range(3..=6usize))
    };
    let mut layer = init_layer(c, n, k, r.random::<u64>());
    layer.pool = pool;
    layer.slope = if r.random::<f64>() < 0.5 { 0.01 } else { 0.1 };
    layer.decoder_identity = r.random::<f64>() < 0.5;
    for b in &mut layer.encoder_bias {
        *b = r.random_range(-0.1..0.1);
    }
    for b in &mut layer.decoder_bias {
        *b = r.random_range(-0.1..0.1);
    }
    let p = if r.random::<f64>() < 0.5 { 0.0 } else { 0.1 };

    for _attempt in 0..200 {
        let x = Tensor::from_vec(
            &[c, h, w],
            (0..c * h * w).map(|_| r.random_range(-1.0..1.0)).collect(),
        )?;
        let xc = corrupt(&x, p, r);
        let placement = if pool && r.random::<f64>() < 0.5 {
            let out = layer.output_shape([c, h, w])?;
            Some(PoolIndices::sample(&out, r))
        } else {
            None
        };
        if probe_is_smooth(&layer, &xc, placement.as_ref())? {
            return Ok((layer, x, xc, placement));
        }
    }
    Err(Error::DegenerateInput {
        context: "gradcheck",
        detail: "could not sample a configuration away from activation kinks".to_string(),
    })
}

/// True when all pre-activations clear the kink margin and every pooling
/// block has a clear winner.
fn probe_is_smooth(
    layer: &CaeLayer,
    xc: &Tensor,
    placement: Option<&PoolIndices>,
) -> Result<bool> {
    let mut pre_pool = conv2d_valid(xc, &layer.filters)?;
    {
        let (maps, h, w) = (pre_pool.dim(0), pre_pool.dim(1), pre_pool.dim(2));
        let data = pre_pool.data_mut();
        for m in 0..maps {
            for v in &mut data[m * h * w..(m + 1) * h * w] {
                *v += layer.encoder_bias[m];
            }
        }
    }
    if pre_pool.data().iter().any(|v| v.abs() < KINK_MARGIN) {
        return Ok(false);
    }
    if layer.pool {
        let (maps, h, w) = (pre_pool.dim(0), pre_pool.dim(1), pre_pool.dim(2));
        for m in 0..maps {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let mut block = [
                        pre_pool.get3(m, 2 * i, 2 * j),
                        pre_pool.get3(m, 2 * i, 2 * j + 1),
                        pre_pool.get3(m, 2 * i + 1, 2 * j),
                        pre_pool.get3(m, 2 * i + 1, 2 * j + 1),
                    ];
                    block.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
                    if block[0] - block[1] < KINK_MARGIN {
                        return Ok(false);
                    }
                }
            }
        }
    }
    if !layer.decoder_identity {
        // reconstruct once to inspect the decoder pre-activations
        let enc_features = {
            let (f, idx) = crate::cae::encode(layer, xc)?;
            if layer.pool {
                let place = placement.or(idx.as_ref()).expect("pooled layer");
                crate::tensor::unpool_with_indices(&f, place)?
            } else {
                f
            }
        };
        let decoder_kernels = transposed_flip(&layer.filters)?;
        let mut pre_recon = crate::tensor::conv2d_full(&enc_features, &decoder_kernels)?;
        let (chn, h, w) = (pre_recon.dim(0), pre_recon.dim(1), pre_recon.dim(2));
        let data = pre_recon.data_mut();
        for m in 0..chn {
            for v in &mut data[m * h * w..(m + 1) * h * w] {
                *v += layer.decoder_bias[m];
            }
        }
        if pre_recon.data().iter().any(|v| v.abs() < KINK_MARGIN) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn transposed_flip(filters: &Tensor) -> Result<Tensor> {
    let flipped = crate::tensor::flip180(filters)?;
    let (c, n, k) = (flipped.dim(0), flipped.dim(1), flipped.dim(3));
    let mut out = Tensor::zeros(&[k, n, n, c]);
    for ch in 0..c {
        for p in 0..n {
            for q in 0..n {
                for kf in 0..k {
                    let idx = out.idx4(kf, p, q, ch);
                    out.data_mut()[idx] = flipped.get4(ch, p, q, kf);
                }
            }
        }
    }
    Ok(out)
}

fn check_one(
    layer: &CaeLayer,
    x: &Tensor,
    xc: &Tensor,
    routing: Routing,
    cfg: &GradCheckConfig,
    report: &mut GradCheckReport,
) -> Result<()> {
    let (grads, _) = backward(layer, x, xc, routing)?;
    let eps = cfg.epsilon;

    let record = |analytic: f64, fd: f64, report: &mut GradCheckReport| {
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
        report.components += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
        }
        if rel > cfg.tolerance {
            report.failures += 1;
        }
    };

    let n_weights = layer.filters.len();
    for i in 0..n_weights {
        let mut probe = layer.clone();
        probe.filters.data_mut()[i] += eps;
        let plus = reconstruction_loss(&probe, x, xc, routing)?;
        probe.filters.data_mut()[i] -= 2.0 * eps;
        let minus = reconstruction_loss(&probe, x, xc, routing)?;
        record(grads.filters.data()[i], (plus - minus) / (2.0 * eps), report);
    }
    for i in 0..layer.encoder_bias.len() {
        let mut probe = layer.clone();
        probe.encoder_bias[i] += eps;
        let plus = reconstruction_loss(&probe, x, xc, routing)?;
        probe.encoder_bias[i] -= 2.0 * eps;
        let minus = reconstruction_loss(&probe, x, xc, routing)?;
        record(grads.encoder_bias[i], (plus - minus) / (2.0 * eps), report);
    }
    for i in 0..layer.decoder_bias.len() {
        let mut probe = layer.clone();
        probe.decoder_bias[i] += eps;
        let plus = reconstruction_loss(&probe, x, xc, routing)?;
        probe.decoder_bias[i] -= 2.0 * eps;
        let minus = reconstruction_loss(&probe, x, xc, routing)?;
        record(grads.decoder_bias[i], (plus - minus) / (2.0 * eps), report);
    }
    Ok(())
}
