//! Run configuration: `key = value` lines grouped under `[section]` headers,
//! with `#` starting a comment. Every key is optional and unknown sections or
//! keys are rejected.
//!
//! ```text
//! [model]
//! latent_dim = 100          # generator input size
//! width_scale = 1.0         # multiplies every layer width
//! leaky_slope = 0.2
//! dropout = 0.4
//! tabular_hidden = 64,64    # hidden widths of the tabular GAN
//!
//! [train]
//! n_sample = 64             # real and fake rows per discriminator update
//! steps = 2000
//! prior = standard_normal   # or uniform01
//! learning_rate = 0.0002
//! beta1 = 0.5
//! beta2 = 0.999
//! epsilon = 1e-8
//! d_updates = 1
//! g_updates = 1
//! label_smoothing = 0.0
//! label_noise = 0.0
//! checkpoint_every = 0      # also the sample-grid cadence; 0 disables
//!
//! [inversion]
//! steps = 200
//! learning_rate = 0.05
//! feature_weight = 0.1
//! restarts = 1
//! prior = standard_normal
//!
//! [degradation]
//! sigma = 2.0
//! r = 2.0
//! delta = 5.0
//! q = 80.0
//! integer_scale = false     # draw r from {1..8} when sampling
//!
//! [data]
//! n = 2000
//! anomaly_rate = 0.0
//! kinds = occlusion,missing_feature,degradation
//! features = 8              # transaction columns
//! fraud_rate = 0.05
//! ```

use std::path::Path;

use crate::anomaly::InversionConfig;
use crate::data::AnomalyKind;
use crate::degrade::DegradationParams;
use crate::error::{Error, Result};
use crate::io::read_bytes;
use crate::model::{build_discriminator_with, build_generator_with, ModelSpec, DEFAULT_IMAGE};
use crate::nn::{AdamConfig, DEFAULT_DROPOUT, DEFAULT_LEAKY_SLOPE};
use crate::rng::LatentPrior;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub width_scale: f64,
    pub leaky_slope: f64,
    pub dropout: f64,
    pub tabular_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 100,
            width_scale: 1.0,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            dropout: DEFAULT_DROPOUT,
            tabular_hidden: vec![64, 64],
        }
    }
}

impl ModelConfig {
    pub fn generator(&self) -> Result<ModelSpec> {
        build_generator_with(self.latent_dim, DEFAULT_IMAGE, self.width_scale, self.leaky_slope)
    }

    pub fn discriminator(&self) -> Result<ModelSpec> {
        build_discriminator_with(DEFAULT_IMAGE, self.width_scale, self.leaky_slope, self.dropout)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationConfig {
    pub params: DegradationParams,
    pub integer_scale: bool,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig {
            params: DegradationParams { sigma: 2.0, r: 2.0, delta: 5.0, q: 80.0 },
            integer_scale: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub n: usize,
    pub anomaly_rate: f64,
    pub kinds: Vec<AnomalyKind>,
    pub features: usize,
    pub fraud_rate: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { n: 2000, anomaly_rate: 0.0, kinds: AnomalyKind::ALL.to_vec(), features: 8, fraud_rate: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub adam: AdamConfig,
    pub inversion: InversionConfig,
    pub degradation: DegradationConfig,
    pub data: DataConfig,
}

fn parse<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config { line, msg: format!("bad value {value:?} for {key}") })
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(line, key, s)).collect()
}

fn parse_prior(line: usize, value: &str) -> Result<LatentPrior> {
    value.parse().map_err(|msg| Error::Config { line, msg })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config { line: 0, msg: format!("{} is not UTF-8", path.display()) })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config { line, msg: format!("malformed section header {content:?}") })?
                    .trim();
                if !["model", "train", "inversion", "degradation", "data"].contains(&name) {
                    return Err(Error::Config { line, msg: format!("unknown section [{name}]") });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line, msg: format!("expected key = value, got {content:?}") })?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| Error::Config { line, msg: format!("key {key} outside any section") })?;
            cfg.set(line, sec, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, section: &str, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.train;
        let inv = &mut self.inversion;
        let deg = &mut self.degradation;
        let data = &mut self.data;
        match (section, key) {
            ("model", "latent_dim") => m.latent_dim = parse(line, key, v)?,
            ("model", "width_scale") => m.width_scale = parse(line, key, v)?,
            ("model", "leaky_slope") => m.leaky_slope = parse(line, key, v)?,
            ("model", "dropout") => m.dropout = parse(line, key, v)?,
            ("model", "tabular_hidden") => m.tabular_hidden = parse_list(line, key, v)?,
            ("train", "n_sample") => t.n_sample = parse(line, key, v)?,
            ("train", "steps") => t.steps = parse(line, key, v)?,
            ("train", "prior") => t.prior = parse_prior(line, v)?,
            ("train", "learning_rate") => self.adam.learning_rate = parse(line, key, v)?,
            ("train", "beta1") => self.adam.beta1 = parse(line, key, v)?,
            ("train", "beta2") => self.adam.beta2 = parse(line, key, v)?,
            ("train", "epsilon") => self.adam.epsilon = parse(line, key, v)?,
            ("train", "d_updates") => t.d_updates = parse(line, key, v)?,
            ("train", "g_updates") => t.g_updates = parse(line, key, v)?,
            ("train", "label_smoothing") => t.label_smoothing = parse(line, key, v)?,
            ("train", "label_noise") => t.label_noise = parse(line, key, v)?,
            ("train", "checkpoint_every") => t.checkpoint_every = parse(line, key, v)?,
            ("inversion", "steps") => inv.steps = parse(line, key, v)?,
            ("inversion", "learning_rate") => inv.learning_rate = parse(line, key, v)?,
            ("inversion", "feature_weight") => inv.feature_weight = parse(line, key, v)?,
            ("inversion", "restarts") => inv.restarts = parse(line, key, v)?,
            ("inversion", "prior") => inv.prior = parse_prior(line, v)?,
            ("degradation", "sigma") => deg.params.sigma = parse(line, key, v)?,
            ("degradation", "r") => deg.params.r = parse(line, key, v)?,
            ("degradation", "delta") => deg.params.delta = parse(line, key, v)?,
            ("degradation", "q") => deg.params.q = parse(line, key, v)?,
            ("degradation", "integer_scale") => deg.integer_scale = parse(line, key, v)?,
            ("data", "n") => data.n = parse(line, key, v)?,
            ("data", "anomaly_rate") => data.anomaly_rate = parse(line, key, v)?,
            ("data", "kinds") => data.kinds = parse_list(line, key, v)?,
            ("data", "features") => data.features = parse(line, key, v)?,
            ("data", "fraud_rate") => data.fraud_rate = parse(line, key, v)?,
            _ => return Err(Error::Config { line, msg: format!("unknown key {key} in [{section}]") }),
        }
        Ok(())
    }

    /// Cross-field checks; each section's own validation runs here too.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config { line: 0, msg: e.to_string() };
        self.model.generator().map_err(wrap)?;
        self.model.discriminator().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.adam.validate().map_err(wrap)?;
        self.inversion.validate().map_err(wrap)?;
        self.degradation.params.validate().map_err(wrap)?;
        Ok(())
    }
}
