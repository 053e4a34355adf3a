//! Denoising convolutional autoencoder with hand-derived gradients.
//!
//! Encoder per layer: valid cross-correlation with the filter bank, one
//! bias per map broadcast over the map, 2x2 max pooling, then leaky ReLU.
//! Decoder: unpooling, full convolution with the *flipped* shared filters
//! (tied weights), one bias per reconstruction channel, then the decoder
//! activation. Training is greedy layer-by-layer with plain SGD on the
//! reconstruction MSE of a corrupted copy against the clean input.
//!
//! Because weights are tied, every filter gradient is the sum of an
//! encoder-path and a decoder-path term; the finite-difference suite in
//! [`crate::gradcheck`] pins both.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::tensor::{
    conv2d_full, conv2d_valid, flip180, leaky_relu, leaky_relu_grad, maxpool2x2,
    unpool_with_indices, unpool2x2, PoolIndices, Tensor, UnpoolMode,
};

/// One autoencoder layer: shared filters plus per-map encoder bias and
/// per-channel decoder bias.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeLayer {
    /// Filter bank `[in_channels, n, n, maps]`, shared by encoder and decoder.
    pub filters: Tensor,
    /// One bias per feature map, broadcast over the whole map.
    pub encoder_bias: Vec<f64>,
    /// One bias per reconstruction channel.
    pub decoder_bias: Vec<f64>,
    /// Negative slope of the leaky ReLU.
    pub slope: f64,
    /// Whether this layer max-pools (and the decoder unpools).
    pub pool: bool,
    /// Reconstruct with identity activation instead of leaky ReLU.
    pub decoder_identity: bool,
}

/// Gradients of one layer's parameters, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub filters: Tensor,
    pub encoder_bias: Vec<f64>,
    pub decoder_bias: Vec<f64>,
}

/// Decoder activation policy when building a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderActivation {
    /// Identity on the layer that reconstructs raw amplitudes (layer 0),
    /// leaky ReLU on deeper layers.
    Auto,
    Identity,
    LeakyRelu,
}

/// Spec of one encoder layer when building a model.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub kernel_size: usize,
    pub maps: usize,
    /// `None` resolves automatically: pool iff both post-conv extents are even.
    pub pool: Option<bool>,
}

/// Ordered stack of layers plus the input window contract.
#[derive(Debug, Clone, PartialEq)]
pub struct CaeModel {
    pub layers: Vec<CaeLayer>,
    /// `[channels, height, width]` of one input window.
    pub input_shape: [usize; 3],
    /// Default unpooling behaviour during training reconstruction.
    pub unpool_mode: UnpoolMode,
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub corruption_prob: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            epochs: 30,
            corruption_prob: 0.05,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArchitecture(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.corruption_prob) {
            return Err(Error::InvalidArchitecture(format!(
                "corruption probability must be in [0,1), got {}",
                self.corruption_prob
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidArchitecture(
                "epochs and batch size must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Fan-balanced uniform initialization: weights from `[-s, s]` with
/// `s = sqrt(6 / (fan_in + fan_out))`, `fan_in = c*n*n`, `fan_out = k*n*n`;
/// biases start at zero.
pub fn init_layer(in_channels: usize, kernel_size: usize, maps: usize, seed: u64) -> CaeLayer {
    let mut r = rng::seeded(seed, stream::INIT);
    init_layer_with_rng(in_channels, kernel_size, maps, &mut r)
}

fn init_layer_with_rng<R: Rng>(
    in_channels: usize,
    kernel_size: usize,
    maps: usize,
    rng: &mut R,
) -> CaeLayer {
    assert!(
        in_channels >= 1 && maps >= 1 && kernel_size >= 1 && kernel_size % 2 == 1,
        "layer extents must be positive with odd kernel size"
    );
    let (c, n, k) = (in_channels, kernel_size, maps);
    let fan_in = (c * n * n) as f64;
    let fan_out = (k * n * n) as f64;
    let s = (6.0 / (fan_in + fan_out)).sqrt();
    let weights: Vec<f64> = (0..c * n * n * k).map(|_| rng.random_range(-s..s)).collect();
    CaeLayer {
        filters: Tensor::from_vec(&[c, n, n, k], weights).expect("init shape is consistent"),
        encoder_bias: vec![0.0; k],
        decoder_bias: vec![0.0; c],
        slope: 0.01,
        pool: true,
        decoder_identity: false,
    }
}

impl CaeLayer {
    pub fn in_channels(&self) -> usize {
        self.filters.dim(0)
    }

    pub fn kernel_size(&self) -> usize {
        self.filters.dim(1)
    }

    pub fn maps(&self) -> usize {
        self.filters.dim(3)
    }

    /// Shape of this layer's feature output for the given input shape.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        let n = self.kernel_size();
        if c != self.in_channels() {
            return Err(Error::InvalidArchitecture(format!(
                "layer expects {} channels, input has {c}",
                self.in_channels()
            )));
        }
        if h < n || w < n {
            return Err(Error::InvalidArchitecture(format!(
                "{n}x{n} kernel exceeds {h}x{w} input"
            )));
        }
        let (ch, cw) = (h - n + 1, w - n + 1);
        if self.pool {
            if ch % 2 != 0 || cw % 2 != 0 {
                return Err(Error::InvalidArchitecture(format!(
                    "pooled layer needs even post-conv extents, got {ch}x{cw}"
                )));
            }
            Ok([self.maps(), ch / 2, cw / 2])
        } else {
            Ok([self.maps(), ch, cw])
        }
    }
}

impl CaeModel {
    /// Builds and initializes a model. A layer with `pool: None` pools only
    /// when its post-conv extents are even, so window sizes that cannot
    /// halve cleanly degrade loudly (the resolved flags are part of the
    /// model) instead of truncating data.
    pub fn init(
        input_shape: [usize; 3],
        specs: &[LayerSpec],
        slope: f64,
        decoder: DecoderActivation,
        unpool_mode: UnpoolMode,
        seed: u64,
    ) -> Result<CaeModel> {
        if specs.is_empty() {
            return Err(Error::InvalidArchitecture("no layers".to_string()));
        }
        if !(0.0 < slope && slope < 1.0) {
            return Err(Error::InvalidArchitecture(format!(
                "activation slope must be in (0,1), got {slope}"
            )));
        }
        let mut init_rng = rng::seeded(seed, stream::INIT);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape;
        for (li, spec) in specs.iter().enumerate() {
            if spec.kernel_size % 2 == 0 || spec.kernel_size == 0 || spec.maps == 0 {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {li}: kernel size must be odd and positive, maps positive"
                )));
            }
            if shape[1] < spec.kernel_size || shape[2] < spec.kernel_size {
                return Err(Error::InvalidArchitecture(format!(
                    "layer {li}: {0}x{0} kernel exceeds {1}x{2} input",
                    spec.kernel_size, shape[1], shape[2]
                )));
            }
            let (ch, cw) = (shape[1] - spec.kernel_size + 1, shape[2] - spec.kernel_size + 1);
            let pool = spec.pool.unwrap_or(ch % 2 == 0 && cw % 2 == 0);
            let mut layer = init_layer_with_rng(shape[0], spec.kernel_size, spec.maps, &mut init_rng);
            layer.slope = slope;
            layer.pool = pool;
            layer.decoder_identity = match decoder {
                DecoderActivation::Auto => li == 0,
                DecoderActivation::Identity => true,
                DecoderActivation::LeakyRelu => false,
            };
            shape = layer.output_shape(shape)?;
            layers.push(layer);
        }
        Ok(CaeModel {
            layers,
            input_shape,
            unpool_mode,
        })
    }

    /// Per-layer feature shapes; errors when the chain is inconsistent.
    pub fn feature_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shape = self.input_shape;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(shape)?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Length of the flattened bottleneck feature vector.
    pub fn feature_len(&self) -> Result<usize> {
        let shapes = self.feature_shapes()?;
        let last = shapes.last().expect("init rejects empty models");
        Ok(last.iter().product())
    }
}

/// Encoder step: valid convolution, per-map bias, optional pooling, then
/// leaky ReLU. Returns the activations and (when pooled) the argmax switches.
pub fn encode(layer: &CaeLayer, x: &Tensor) -> Result<(Tensor, Option<PoolIndices>)> {
    let trace = encode_trace(layer, x)?;
    Ok((trace.features, trace.pool_indices))
}

struct EncodeTrace {
    /// conv + bias, before pooling
    pre_pool: Tensor,
    pool_indices: Option<PoolIndices>,
    /// pooled (or pre_pool when the layer does not pool)
    pre_act: Tensor,
    features: Tensor,
}

fn encode_trace(layer: &CaeLayer, x: &Tensor) -> Result<EncodeTrace> {
    let mut pre_pool = conv2d_valid(x, &layer.filters)?;
    add_map_bias(&mut pre_pool, &layer.encoder_bias);
    let (pre_act, pool_indices) = if layer.pool {
        let (pooled, idx) = maxpool2x2(&pre_pool)?;
        (pooled, Some(idx))
    } else {
        (pre_pool.clone(), None)
    };
    let features = leaky_relu(&pre_act, layer.slope);
    Ok(EncodeTrace {
        pre_pool,
        pool_indices,
        pre_act,
        features,
    })
}

/// Decoder step: unpool each map, fully convolve with the flipped shared
/// filters, add the per-channel bias, then apply the decoder activation.
pub fn decode<R: Rng>(
    layer: &CaeLayer,
    features: &Tensor,
    indices: Option<&PoolIndices>,
    mode: UnpoolMode,
    rng: &mut R,
) -> Result<Tensor> {
    let unpooled = if layer.pool {
        unpool2x2(features, mode, indices, rng)?
    } else {
        features.clone()
    };
    decode_from_unpooled(layer, &unpooled).map(|t| t.1)
}

/// (pre-activation reconstruction, reconstruction)
fn decode_from_unpooled(layer: &CaeLayer, unpooled: &Tensor) -> Result<(Tensor, Tensor)> {
    let decoder_kernels = transpose_filter_axes(&flip180(&layer.filters)?);
    let mut pre_recon = conv2d_full(unpooled, &decoder_kernels)?;
    add_map_bias(&mut pre_recon, &layer.decoder_bias);
    let recon = if layer.decoder_identity {
        pre_recon.clone()
    } else {
        leaky_relu(&pre_recon, layer.slope)
    };
    Ok((pre_recon, recon))
}

/// Swaps the channel and map axes of a filter bank:
/// `[c,n,n,k] -> [k,n,n,c]` with `out[k,p,q,c] = in[c,p,q,k]`.
fn transpose_filter_axes(kernels: &Tensor) -> Tensor {
    let (c, n, k) = (kernels.dim(0), kernels.dim(1), kernels.dim(3));
    let mut out = Tensor::zeros(&[k, n, n, c]);
    for ch in 0..c {
        for p in 0..n {
            for q in 0..n {
                for kf in 0..k {
                    let idx = out.idx4(kf, p, q, ch);
                    out.data_mut()[idx] = kernels.get4(ch, p, q, kf);
                }
            }
        }
    }
    out
}

fn add_map_bias(t: &mut Tensor, bias: &[f64]) {
    let (maps, h, w) = (t.dim(0), t.dim(1), t.dim(2));
    debug_assert_eq!(maps, bias.len());
    let data = t.data_mut();
    for (m, &b) in bias.iter().enumerate() {
        for v in &mut data[m * h * w..(m + 1) * h * w] {
            *v += b;
        }
    }
}

/// Denoising corruption: zeroes each entry independently with probability `p`.
pub fn corrupt<R: Rng>(x: &Tensor, p: f64, rng: &mut R) -> Tensor {
    assert!((0.0..1.0).contains(&p), "corruption probability in [0,1)");
    if p == 0.0 {
        return x.clone();
    }
    x.map(|v| if rng.random::<f64>() < p { 0.0 } else { v })
}

/// Mean squared error `L = 1/(2n) * sum (x - z)^2`, where `n` is the number
/// of examples: the leading extent for rank-4 batches, 1 otherwise.
pub fn mse_loss(x: &Tensor, z: &Tensor) -> Result<f64> {
    if x.shape() != z.shape() {
        return Err(Error::ShapeMismatch {
            context: "mse_loss",
            detail: format!("{:?} vs {:?}", x.shape(), z.shape()),
        });
    }
    let n = if x.rank() == 4 { x.dim(0) } else { 1 } as f64;
    let sum: f64 = x
        .data()
        .iter()
        .zip(z.data())
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum();
    Ok(sum / (2.0 * n))
}

/// Unpooling placement used for one reconstruction.
#[derive(Debug, Clone, Copy)]
pub enum Routing<'a> {
    /// Place values where pooling found them (the argmax switches).
    Recorded,
    /// Use an externally sampled placement, held fixed for the step.
    Fixed(&'a PoolIndices),
}

/// Reconstruction loss of one window through one layer with everything
/// random held fixed: the corrupted input and the unpool placement are
/// supplied, not drawn. This is the function the finite-difference suite
/// differentiates.
pub fn reconstruction_loss(
    layer: &CaeLayer,
    x_clean: &Tensor,
    x_corrupt: &Tensor,
    routing: Routing,
) -> Result<f64> {
    let enc = encode_trace(layer, x_corrupt)?;
    let unpooled = route_unpooled(layer, &enc, routing)?;
    let (_, recon) = decode_from_unpooled(layer, &unpooled)?;
    mse_loss(x_clean, &recon)
}

fn route_unpooled(layer: &CaeLayer, enc: &EncodeTrace, routing: Routing) -> Result<Tensor> {
    if !layer.pool {
        return Ok(enc.features.clone());
    }
    let placement = match routing {
        Routing::Recorded => enc
            .pool_indices
            .as_ref()
            .expect("pooled layer records indices"),
        Routing::Fixed(idx) => idx,
    };
    unpool_with_indices(&enc.features, placement)
}

/// Analytic gradients of [`reconstruction_loss`] with respect to the
/// layer's filters and both biases. The filter gradient sums the encoder
/// and decoder contributions because the weights are tied.
pub fn backward(
    layer: &CaeLayer,
    x_clean: &Tensor,
    x_corrupt: &Tensor,
    routing: Routing,
) -> Result<(LayerGradients, f64)> {
    if x_clean.shape() != x_corrupt.shape() {
        return Err(Error::ShapeMismatch {
            context: "backward",
            detail: format!("{:?} vs {:?}", x_clean.shape(), x_corrupt.shape()),
        });
    }
    let (c, n, k) = (
        layer.in_channels(),
        layer.kernel_size(),
        layer.maps(),
    );
    let enc = encode_trace(layer, x_corrupt)?;
    let unpooled = route_unpooled(layer, &enc, routing)?;
    let (pre_recon, recon) = decode_from_unpooled(layer, &unpooled)?;
    let loss = mse_loss(x_clean, &recon)?;

    // dL/dz for the 1/(2n) convention with n = 1.
    let g_z = recon.zip_map(x_clean, |z, x| z - x)?;
    let g_r = if layer.decoder_identity {
        g_z
    } else {
        g_z.zip_map(&leaky_relu_grad(&pre_recon, layer.slope), |g, d| g * d)?
    };

    // Decoder bias: one sum per reconstruction channel.
    let (rh, rw) = (g_r.dim(1), g_r.dim(2));
    let mut d_dec_bias = vec![0.0; c];
    for (ch, db) in d_dec_bias.iter_mut().enumerate() {
        *db = g_r.data()[ch * rh * rw..(ch + 1) * rh * rw].iter().sum();
    }

    // Adjoint of the full convolution with flipped tied filters is exactly
    // the encoder's valid correlation, so the filter bank doubles as its
    // own backward operator.
    let g_unpooled = conv2d_valid(&g_r, &layer.filters)?;

    // Decoder-path filter gradient:
    // dW[c,p,q,k] += sum_{a,b} unpooled[k](a,b) * g_r[c](a+p, b+q).
    let mut d_filters = Tensor::zeros(layer.filters.shape());
    let (uh, uw) = (unpooled.dim(1), unpooled.dim(2));
    for ch in 0..c {
        for p in 0..n {
            for q in 0..n {
                for kf in 0..k {
                    let mut acc = 0.0;
                    for a in 0..uh {
                        for b in 0..uw {
                            acc += unpooled.get3(kf, a, b) * g_r.get3(ch, a + p, b + q);
                        }
                    }
                    let idx = d_filters.idx4(ch, p, q, kf);
                    d_filters.data_mut()[idx] += acc;
                }
            }
        }
    }

    // Back through unpooling: each feature cell receives the gradient of
    // the one block position it was routed to.
    let g_features = if layer.pool {
        let placement = match routing {
            Routing::Recorded => enc.pool_indices.as_ref().expect("pooled layer"),
            Routing::Fixed(idx) => idx,
        };
        let (fk, fh, fw) = (
            enc.features.dim(0),
            enc.features.dim(1),
            enc.features.dim(2),
        );
        let mut g = Tensor::zeros(&[fk, fh, fw]);
        for kf in 0..fk {
            for i in 0..fh {
                for j in 0..fw {
                    let off = placement.offset_at(kf, i, j) as usize;
                    let v = g_unpooled.get3(kf, 2 * i + off / 2, 2 * j + off % 2);
                    g.set3(kf, i, j, v);
                }
            }
        }
        g
    } else {
        g_unpooled
    };

    let g_pre_act = g_features.zip_map(&leaky_relu_grad(&enc.pre_act, layer.slope), |g, d| g * d)?;

    // Back through pooling: route to the argmax positions only.
    let g_pre_pool = if layer.pool {
        let idx = enc.pool_indices.as_ref().expect("pooled layer");
        let (pk, ph, pw) = (g_pre_act.dim(0), g_pre_act.dim(1), g_pre_act.dim(2));
        let mut g = Tensor::zeros(enc.pre_pool.shape());
        for kf in 0..pk {
            for i in 0..ph {
                for j in 0..pw {
                    let off = idx.offset_at(kf, i, j) as usize;
                    g.set3(kf, 2 * i + off / 2, 2 * j + off % 2, g_pre_act.get3(kf, i, j));
                }
            }
        }
        g
    } else {
        g_pre_act
    };

    // Encoder bias: one sum per map.
    let (gh, gw) = (g_pre_pool.dim(1), g_pre_pool.dim(2));
    let mut d_enc_bias = vec![0.0; k];
    for (kf, db) in d_enc_bias.iter_mut().enumerate() {
        *db = g_pre_pool.data()[kf * gh * gw..(kf + 1) * gh * gw].iter().sum();
    }

    // Encoder-path filter gradient:
    // dW[c,p,q,k] += sum_{i,j} g_pre_pool[k](i,j) * x_corrupt[c](i+p, j+q).
    for ch in 0..c {
        for p in 0..n {
            for q in 0..n {
                for kf in 0..k {
                    let mut acc = 0.0;
                    for i in 0..gh {
                        for j in 0..gw {
                            acc += g_pre_pool.get3(kf, i, j) * x_corrupt.get3(ch, i + p, j + q);
                        }
                    }
                    let idx = d_filters.idx4(ch, p, q, kf);
                    d_filters.data_mut()[idx] += acc;
                }
            }
        }
    }

    Ok((
        LayerGradients {
            filters: d_filters,
            encoder_bias: d_enc_bias,
            decoder_bias: d_dec_bias,
        },
        loss,
    ))
}

/// Greedy layer-wise training. Layer 0 learns to reconstruct its corrupted
/// input; its clean encodings then become the next layer's training set.
/// Returns the trained model and the per-epoch mean loss of each layer.
///
/// The SGD step divides the accumulated gradient by batch size times the
/// scalar entries per window, i.e. it descends the per-entry mean of
/// [`mse_loss`]. The per-window sum grows with window area, so a fixed
/// learning rate (0.02) only remains stable under this normalization;
/// reported losses use the same per-entry units.
pub fn train_layerwise(
    mut model: CaeModel,
    data: &[Tensor],
    cfg: &TrainConfig,
) -> Result<(CaeModel, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for x in data {
        if x.shape() != model.input_shape {
            return Err(Error::ShapeMismatch {
                context: "train_layerwise",
                detail: format!(
                    "window shape {:?} does not match model input {:?}",
                    x.shape(),
                    model.input_shape
                ),
            });
        }
    }
    model.feature_shapes()?;

    let mut history: Vec<Vec<f64>> = Vec::with_capacity(model.layers.len());
    let mut inputs: Vec<Tensor> = data.to_vec();
    let mut shape = model.input_shape;
    let n_layers = model.layers.len();
    for li in 0..n_layers {
        let layer_stream = (li as u64) << 32;
        let mut corrupt_rng = rng::seeded(cfg.seed, stream::CORRUPT | layer_stream);
        let mut unpool_rng = rng::seeded(cfg.seed, stream::UNPOOL | layer_stream);
        let layer = &mut model.layers[li];
        let out_shape = layer.output_shape(shape)?;
        let entries: usize = shape.iter().product();
        let mut losses = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let mut epoch_loss = 0.0;
            for chunk in inputs.chunks(cfg.batch_size) {
                let mut acc: Option<LayerGradients> = None;
                for x in chunk {
                    let xc = corrupt(x, cfg.corruption_prob, &mut corrupt_rng);
                    let sampled;
                    let routing = match (model.unpool_mode, layer.pool) {
                        (UnpoolMode::Random, true) => {
                            sampled = PoolIndices::sample(&out_shape, &mut unpool_rng);
                            Routing::Fixed(&sampled)
                        }
                        _ => Routing::Recorded,
                    };
                    let (grads, loss) = backward(layer, x, &xc, routing)?;
                    epoch_loss += loss;
                    acc = Some(match acc {
                        None => grads,
                        Some(mut a) => {
                            a.filters = a.filters.zip_map(&grads.filters, |x, y| x + y)?;
                            for (s, g) in a.encoder_bias.iter_mut().zip(&grads.encoder_bias) {
                                *s += g;
                            }
                            for (s, g) in a.decoder_bias.iter_mut().zip(&grads.decoder_bias) {
                                *s += g;
                            }
                            a
                        }
                    });
                }
                let acc = acc.expect("chunks are non-empty");
                let step = cfg.learning_rate / (chunk.len() * entries) as f64;
                layer.filters = layer
                    .filters
                    .zip_map(&acc.filters, |w, g| w - step * g)?;
                for (b, g) in layer.encoder_bias.iter_mut().zip(&acc.encoder_bias) {
                    *b -= step * g;
                }
                for (b, g) in layer.decoder_bias.iter_mut().zip(&acc.decoder_bias) {
                    *b -= step * g;
                }
            }
            let mean = epoch_loss / (inputs.len() * entries) as f64;
            if !mean.is_finite() {
                return Err(Error::NonFiniteLoss { layer: li, epoch });
            }
            losses.push(mean);
        }
        history.push(losses);
        // Clean (uncorrupted) encodings feed the next layer.
        if li + 1 < n_layers {
            let layer = &model.layers[li];
            inputs = inputs
                .iter()
                .map(|x| encode(layer, x).map(|(f, _)| f))
                .collect::<Result<Vec<_>>>()?;
        }
        shape = out_shape;
    }
    Ok((model, history))
}

/// Runs the encoder stack only and flattens the deepest feature maps
/// (map-major, then row, then column) into one vector.
pub fn extract_features(model: &CaeModel, x: &Tensor) -> Result<Vec<f64>> {
    if x.shape() != model.input_shape {
        return Err(Error::ShapeMismatch {
            context: "extract_features",
            detail: format!(
                "window shape {:?} does not match model input {:?}",
                x.shape(),
                model.input_shape
            ),
        });
    }
    let mut current = x.clone();
    for layer in &model.layers {
        current = encode(layer, &current)?.0;
    }
    Ok(current.data().to_vec())
}

/// Reconstruction of one window through the full stack: encode through all
/// layers, then decode back with recorded switches. Exposed for inspection
/// tools; training itself is per-layer.
pub fn reconstruct(model: &CaeModel, x: &Tensor) -> Result<Tensor> {
    let mut current = x.clone();
    let mut stack = Vec::new();
    for layer in &model.layers {
        let enc = encode_trace(layer, &current)?;
        current = enc.features.clone();
        stack.push(enc);
    }
    let mut recon = current;
    let mut dummy = rng::seeded(0, 0);
    for (layer, enc) in model.layers.iter().zip(&stack).rev() {
        recon = decode(
            layer,
            &recon,
            enc.pool_indices.as_ref(),
            UnpoolMode::Recorded,
            &mut dummy,
        )?;
    }
    Ok(recon)
}
