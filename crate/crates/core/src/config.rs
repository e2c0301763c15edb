//! Distillation hyperparameters and their text form.
//!
//! The config file is TOML with one section per concern. Every key has a
//! default, so an empty file is a valid config.
//!
//! ```toml
//! seed = 0
//!
//! [loss]
//! variant = "coss"     # coss | co_only | ss_only | bn
//! lambda = 1.0
//! beta = 1.0
//!
//! [neighbors]
//! k = 4
//! pool = 16
//!
//! [train]
//! batch_size = 64
//! epochs = 50
//! lr = 0.05
//! momentum = 0.9
//! weight_decay = 0.0
//! schedule = "constant"  # constant | cosine
//!
//! [augment]
//! sigma = 0.05         # relative to each input dimension's std
//!
//! [student]
//! hidden = [32]
//! output_dim = 8
//! activation = "relu"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio;
use crate::error::{Error, Result};
use crate::loss::CossObjective;
use crate::model::{Activation, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Feature plus weighted space similarity.
    Coss,
    /// Feature similarity only (space term logged, never differentiated).
    CoOnly,
    /// Space similarity only.
    SsOnly,
    /// Batch-normalized student regressed onto raw teacher embeddings.
    Bn,
}

impl LossVariant {
    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Coss => "coss",
            LossVariant::CoOnly => "co_only",
            LossVariant::SsOnly => "ss_only",
            LossVariant::Bn => "bn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine decay from `lr` to 0 over all steps.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub lambda: f64,
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Coss,
            lambda: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborConfig {
    pub k: usize,
    pub pool: usize,
}

impl Default for NeighborConfig {
    fn default() -> Self {
        Self { k: 4, pool: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 50,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            schedule: LrSchedule::Constant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Noise standard deviation as a fraction of each input dimension's std.
    pub sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { sigma: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            output_dim: 8,
            activation: Activation::Relu,
        }
    }
}

impl StudentConfig {
    pub fn model_spec(&self, input_dim: usize) -> ModelSpec {
        ModelSpec::mlp(input_dim, &self.hidden, self.output_dim, self.activation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub seed: u64,
    pub loss: LossConfig,
    pub neighbors: NeighborConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub student: StudentConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            loss: LossConfig::default(),
            neighbors: NeighborConfig::default(),
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            student: StudentConfig::default(),
        }
    }
}

fn require(cond: bool, invariant: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::config(invariant))
    }
}

impl DistillConfig {
    /// Checks every invariant; the error names the first one violated.
    pub fn validate(&self) -> Result<()> {
        let l = &self.loss;
        require(l.lambda >= 0.0 && l.lambda.is_finite(), "lambda ≥ 0")?;
        require(l.beta > 0.0 && l.beta.is_finite(), "beta > 0")?;
        require(self.neighbors.pool >= 1, "pool ≥ 1")?;
        require(self.neighbors.k <= self.neighbors.pool, "k ≤ pool")?;
        let t = &self.train;
        require(t.batch_size >= 1, "batch_size ≥ 1")?;
        require(t.epochs >= 1, "epochs ≥ 1")?;
        require(t.lr >= 0.0 && t.lr.is_finite(), "lr ≥ 0")?;
        require((0.0..1.0).contains(&t.momentum), "0 ≤ momentum < 1")?;
        require(t.weight_decay >= 0.0 && t.weight_decay.is_finite(), "weight_decay ≥ 0")?;
        require(self.augment.sigma >= 0.0 && self.augment.sigma.is_finite(), "aug_sigma ≥ 0")?;
        require(self.student.output_dim >= 1, "student.output_dim ≥ 1")?;
        require(self.student.hidden.iter().all(|&h| h >= 1), "student hidden widths ≥ 1")?;
        if l.variant == LossVariant::Bn {
            require(
                t.batch_size * (1 + self.neighbors.k) >= 2,
                "bn variant requires batch_size·(1+k) ≥ 2",
            )?;
        }
        Ok(())
    }

    /// The similarity objective a variant trains with. `None` for the BN variant.
    pub fn objective(&self) -> Option<CossObjective> {
        let beta = self.loss.beta;
        match self.loss.variant {
            LossVariant::Coss => Some(CossObjective {
                co_weight: 1.0,
                lambda: self.loss.lambda,
                beta,
            }),
            LossVariant::CoOnly => Some(CossObjective {
                co_weight: 1.0,
                lambda: 0.0,
                beta,
            }),
            LossVariant::SsOnly => Some(CossObjective {
                co_weight: 0.0,
                lambda: 1.0,
                beta,
            }),
            LossVariant::Bn => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = binio::read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::config(format!("{} is not UTF-8", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Hash of the canonical (key-sorted) form, so it ignores key order in the file.
    pub fn hash(&self) -> String {
        hash_value(&serde_json::to_value(self).expect("config always serializes"))
    }

    /// Hash with one dotted key removed, e.g. `"loss.variant"`: equal across
    /// runs that differ only in that key.
    pub fn hash_without(&self, dotted_key: &str) -> String {
        let mut v = serde_json::to_value(self).expect("config always serializes");
        let mut parts: Vec<&str> = dotted_key.split('.').collect();
        let last = parts.pop().unwrap_or_default();
        let mut cur = &mut v;
        for p in parts {
            cur = &mut cur[p];
        }
        if let Some(obj) = cur.as_object_mut() {
            obj.remove(last);
        }
        hash_value(&v)
    }
}

fn hash_value(v: &serde_json::Value) -> String {
    // serde_json maps are BTreeMaps here, so serialization is key-sorted.
    let canonical = serde_json::to_string(v).expect("json value serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
