//! Key-value run configuration. Every pipeline knob lives here with its
//! default; unknown keys are rejected so typos fail loudly.

use crate::cae::{DecoderActivation, LayerSpec, TrainConfig};
use crate::clustering::{ClusterConfig, ClusterMode};
use crate::error::{Error, Result};
use crate::features::Alignment;
use crate::tensor::UnpoolMode;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // survey
    pub inlines: usize,
    pub crosslines: usize,
    pub offsets: usize,
    pub dt_ms: f64,
    pub window_ms: f64,
    pub snr: f64,
    pub alignment: Alignment,
    // autoencoder
    pub filter_size: usize,
    pub maps: usize,
    pub layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub corruption_prob: f64,
    pub slope: f64,
    pub unpool: UnpoolMode,
    pub decoder_activation: DecoderActivation,
    // clustering
    pub cluster_mode: ClusterMode,
    pub clusters: usize,
    pub fuzzifier: f64,
    pub cluster_max_iter: usize,
    pub cluster_tol: f64,
    // baselines
    pub pca_variance: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inlines: 40,
            crosslines: 40,
            offsets: 8,
            dt_ms: 2.0,
            window_ms: 48.0,
            snr: 10.0,
            alignment: Alignment::Centered,
            filter_size: 3,
            maps: 10,
            layers: 2,
            learning_rate: 0.02,
            epochs: 30,
            batch_size: 1,
            corruption_prob: 0.05,
            slope: 0.01,
            unpool: UnpoolMode::Random,
            decoder_activation: DecoderActivation::Auto,
            cluster_mode: ClusterMode::Hard,
            clusters: 5,
            fuzzifier: 2.0,
            cluster_max_iter: 300,
            cluster_tol: 1e-6,
            pca_variance: 0.9,
            seed: 0,
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfigValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are ignored; later assignments win.
    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::UnknownConfigKey(format!("not key=value: {line:?}")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| invalid(key, value, "not a number"))
        }
        match key {
            "inlines" => self.inlines = num(key, value)?,
            "crosslines" => self.crosslines = num(key, value)?,
            "offsets" => self.offsets = num(key, value)?,
            "dt_ms" => self.dt_ms = num(key, value)?,
            "window_ms" => self.window_ms = num(key, value)?,
            "snr" => self.snr = num(key, value)?,
            "alignment" => {
                self.alignment = match value {
                    "centered" => Alignment::Centered,
                    "below" => Alignment::Below,
                    _ => return Err(invalid(key, value, "expected centered or below")),
                }
            }
            "filter_size" => self.filter_size = num(key, value)?,
            "maps" => self.maps = num(key, value)?,
            "layers" => self.layers = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "corruption_prob" => self.corruption_prob = num(key, value)?,
            "slope" => self.slope = num(key, value)?,
            "unpool" => {
                self.unpool = match value {
                    "recorded" => UnpoolMode::Recorded,
                    "random" => UnpoolMode::Random,
                    _ => return Err(invalid(key, value, "expected recorded or random")),
                }
            }
            "decoder_activation" => {
                self.decoder_activation = match value {
                    "auto" => DecoderActivation::Auto,
                    "identity" => DecoderActivation::Identity,
                    "leaky" => DecoderActivation::LeakyRelu,
                    _ => return Err(invalid(key, value, "expected auto, identity or leaky")),
                }
            }
            "cluster_mode" => {
                self.cluster_mode = match value {
                    "hard" => ClusterMode::Hard,
                    "fuzzy" => ClusterMode::Fuzzy,
                    _ => return Err(invalid(key, value, "expected hard or fuzzy")),
                }
            }
            "clusters" => self.clusters = num(key, value)?,
            "fuzzifier" => self.fuzzifier = num(key, value)?,
            "cluster_max_iter" => self.cluster_max_iter = num(key, value)?,
            "cluster_tol" => self.cluster_tol = num(key, value)?,
            "pca_variance" => self.pca_variance = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::UnknownConfigKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_ms", self.dt_ms),
            ("window_ms", self.window_ms),
            ("snr", self.snr),
            ("learning_rate", self.learning_rate),
            ("fuzzifier", self.fuzzifier),
            ("cluster_tol", self.cluster_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(key, &v.to_string(), "must be positive"));
            }
        }
        if self.filter_size % 2 == 0 || self.filter_size == 0 {
            return Err(invalid(
                "filter_size",
                &self.filter_size.to_string(),
                "must be odd",
            ));
        }
        if !(0.0..1.0).contains(&self.corruption_prob) {
            return Err(invalid(
                "corruption_prob",
                &self.corruption_prob.to_string(),
                "must lie in [0, 1)",
            ));
        }
        if !(0.0 < self.slope && self.slope < 1.0) {
            return Err(invalid("slope", &self.slope.to_string(), "must lie in (0, 1)"));
        }
        if !(0.0 < self.pca_variance && self.pca_variance <= 1.0) {
            return Err(invalid(
                "pca_variance",
                &self.pca_variance.to_string(),
                "must lie in (0, 1]",
            ));
        }
        let counts = [
            ("inlines", self.inlines),
            ("crosslines", self.crosslines),
            ("maps", self.maps),
            ("layers", self.layers),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("cluster_max_iter", self.cluster_max_iter),
        ];
        for (key, v) in counts {
            if v == 0 {
                return Err(invalid(key, "0", "must be at least 1"));
            }
        }
        if self.offsets < 2 {
            return Err(invalid(
                "offsets",
                &self.offsets.to_string(),
                "need at least 2 offsets",
            ));
        }
        if self.clusters < 2 {
            return Err(invalid(
                "clusters",
                &self.clusters.to_string(),
                "need at least 2 clusters",
            ));
        }
        Ok(())
    }

    /// Serialization of every knob; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("inlines", self.inlines.to_string());
        kv("crosslines", self.crosslines.to_string());
        kv("offsets", self.offsets.to_string());
        kv("dt_ms", self.dt_ms.to_string());
        kv("window_ms", self.window_ms.to_string());
        kv("snr", self.snr.to_string());
        kv(
            "alignment",
            match self.alignment {
                Alignment::Centered => "centered",
                Alignment::Below => "below",
            }
            .to_string(),
        );
        kv("filter_size", self.filter_size.to_string());
        kv("maps", self.maps.to_string());
        kv("layers", self.layers.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("corruption_prob", self.corruption_prob.to_string());
        kv("slope", self.slope.to_string());
        kv(
            "unpool",
            match self.unpool {
                UnpoolMode::Recorded => "recorded",
                UnpoolMode::Random => "random",
            }
            .to_string(),
        );
        kv(
            "decoder_activation",
            match self.decoder_activation {
                DecoderActivation::Auto => "auto",
                DecoderActivation::Identity => "identity",
                DecoderActivation::LeakyRelu => "leaky",
            }
            .to_string(),
        );
        kv(
            "cluster_mode",
            match self.cluster_mode {
                ClusterMode::Hard => "hard",
                ClusterMode::Fuzzy => "fuzzy",
            }
            .to_string(),
        );
        kv("clusters", self.clusters.to_string());
        kv("fuzzifier", self.fuzzifier.to_string());
        kv("cluster_max_iter", self.cluster_max_iter.to_string());
        kv("cluster_tol", self.cluster_tol.to_string());
        kv("pca_variance", self.pca_variance.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    /// One identical spec per layer; pooling resolved per layer from the
    /// window geometry.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec {
                kernel_size: self.filter_size,
                maps: self.maps,
                pool: None,
            };
            self.layers
        ]
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            corruption_prob: self.corruption_prob,
            batch_size: self.batch_size,
            seed: self.seed,
        }
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            clusters: self.clusters,
            fuzzifier: self.fuzzifier,
            max_iter: self.cluster_max_iter,
            tol: self.cluster_tol,
            seed: self.seed,
            mode: self.cluster_mode,
        }
    }
}
