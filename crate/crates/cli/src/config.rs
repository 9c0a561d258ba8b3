//! Run configuration: one TOML file with flat sections, unknown keys rejected.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use reidlab_core::dataset::{SplitSpec, SyntheticSpec};
use reidlab_core::descriptor::DescriptorConfig;
use reidlab_core::distill::SweepSpec;
use reidlab_core::neural::{MlpSpec, TrainConfig};
use reidlab_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SNAPSHOT_NAME: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: SyntheticSpec,
    pub split: SplitSpec,
    pub images: ImageSection,
    pub descriptor: DescriptorConfig,
    pub metric: MetricSection,
    pub protocol: ProtocolSection,
    pub deep: DeepSection,
    pub teacher: NetSection,
    pub student: NetSection,
    pub train: TrainSection,
    pub distill: DistillSection,
    pub sweep: SweepSpec,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("run"),
            data: SyntheticSpec::default(),
            split: SplitSpec::default(),
            images: ImageSection::default(),
            descriptor: DescriptorConfig::default(),
            metric: MetricSection::default(),
            protocol: ProtocolSection::default(),
            deep: DeepSection::default(),
            teacher: NetSection {
                hidden_widths: vec![128, 64],
                width_multiplier: 1.0,
            },
            student: NetSection {
                hidden_widths: vec![128, 64],
                width_multiplier: 0.25,
            },
            train: TrainSection::default(),
            distill: DistillSection::default(),
            sweep: SweepSpec::default(),
            bench: BenchSection::default(),
        }
    }
}

/// Image corpus for the hand-crafted branch. Identity, record and camera
/// counts come from `[data]`; the deviations here are channel fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSection {
    pub enabled: bool,
    pub height: usize,
    pub width: usize,
    pub intra_class_stddev: f64,
    pub camera_shift_stddev: f64,
}

impl Default for ImageSection {
    fn default() -> Self {
        Self {
            enabled: true,
            height: 64,
            width: 32,
            intra_class_stddev: 0.06,
            camera_shift_stddev: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    /// PCA output dimension applied to hand-crafted features before metric
    /// learning; 0 disables the projection.
    pub pca_dim: usize,
    pub xqda_max_dim: usize,
    /// Absent means the trace-scaled default.
    pub ridge: Option<f64>,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self {
            pca_dim: 64,
            xqda_max_dim: 100,
            ridge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub exclude_same_camera_positives: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            exclude_same_camera_positives: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeepInput {
    /// The synthetic feature vectors from `gen-data`.
    Raw,
    /// PCA-projected hand-crafted descriptors from `extract` + `fit-metric`.
    Handcrafted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepSection {
    pub input: DeepInput,
}

impl Default for DeepSection {
    fn default() -> Self {
        Self { input: DeepInput::Raw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden_widths: Vec<usize>,
    pub width_multiplier: f64,
}

impl NetSection {
    pub fn spec(&self, input_dim: usize, num_classes: usize) -> MlpSpec {
        MlpSpec {
            input_dim,
            hidden_widths: self.hidden_widths.clone(),
            num_classes,
            width_multiplier: self.width_multiplier,
        }
    }
}

/// Everything in [`TrainConfig`] except the seed, which is derived per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_every_steps: u64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub shuffle: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            batch_size: 16,
            epochs: 40,
            ..TrainSection::from(TrainConfig::default())
        }
    }
}

impl From<TrainConfig> for TrainSection {
    fn from(c: TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            decay_factor: c.decay_factor,
            decay_every_steps: c.decay_every_steps,
            momentum: c.momentum,
            batch_size: c.batch_size,
            epochs: c.epochs,
            shuffle: c.shuffle,
        }
    }
}

impl TrainSection {
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            decay_factor: self.decay_factor,
            decay_every_steps: self.decay_every_steps,
            momentum: self.momentum,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            shuffle: self.shuffle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    pub temperature: f64,
    pub lambda: f64,
    pub rescale_soft_term: bool,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            temperature: 3.0,
            lambda: 0.0001,
            rescale_soft_term: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub warmup: usize,
    pub repetitions: usize,
    /// Number of query records timed per repetition (cycled if larger than
    /// the query set).
    pub items: usize,
    /// Also time a multi-threaded pass, written alongside the main result.
    pub parallel: bool,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            warmup: 20,
            repetitions: 3,
            items: 200,
            parallel: false,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| crate::commands::io_err(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.split.validate()?;
        self.descriptor.validate()?;
        self.train.with_seed(0).validate()?;
        self.sweep.validate()?;
        for (role, net) in [("teacher", &self.teacher), ("student", &self.student)] {
            if !(net.width_multiplier > 0.0 && net.width_multiplier.is_finite()) {
                return Err(Error::Config(format!("{role}.width_multiplier must be positive")));
            }
        }
        if self.distill.temperature < 1.0 || self.distill.lambda < 0.0 {
            return Err(Error::Config("distill needs temperature >= 1 and lambda >= 0".into()));
        }
        if self.bench.repetitions < reidlab_core::bench::MIN_REPETITIONS || self.bench.items == 0 {
            return Err(Error::Config(format!(
                "bench needs at least {} repetitions and one item",
                reidlab_core::bench::MIN_REPETITIONS
            )));
        }
        if self.deep.input == DeepInput::Handcrafted && !self.images.enabled {
            return Err(Error::Config(
                "deep.input = \"handcrafted\" requires images.enabled".into(),
            ));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write_snapshot(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| crate::commands::io_err(&self.out, e))?;
        let path = self.out.join(SNAPSHOT_NAME);
        fs::write(&path, self.to_toml()?).map_err(|e| crate::commands::io_err(&path, e))
    }

    /// Seed of a named stage: the first eight bytes of
    /// `sha256(seed_le || stage)`, little-endian.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }

    /// Hash of each top-level section's TOML rendering.
    pub fn section_hashes(&self) -> Result<BTreeMap<String, String>> {
        let value = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let table = value
            .as_table()
            .ok_or_else(|| Error::Config("config did not serialise to a table".into()))?;
        table
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, v)| {
                let text = toml::to_string(v).unwrap_or_else(|_| v.to_string());
                Ok((k.clone(), sha256_hex(text.as_bytes())))
            })
            .collect()
    }

    pub fn dataset_hash(&self) -> Result<String> {
        let text = toml::to_string(&self.data).map_err(|e| Error::Config(e.to_string()))?;
        Ok(sha256_hex(text.as_bytes()))
    }
}

pub fn stage_seed(global: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
