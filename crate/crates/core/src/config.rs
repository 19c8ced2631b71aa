//! TOML run configuration shared by every CLI subcommand.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapters::{LoraSpec, StageConfig};
use crate::data::{load_dataset, make_synthetic_corpus, CorpusSpec, Modality, MultimodalSample, Task};
use crate::error::{Error, Result};
use crate::eval::AblationSettings;
use crate::model::{EncoderConfig, ModelConfig};
use crate::rng::SeedTree;
use crate::train::TwoStagePlan;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub data: DataPaths,
    pub synthetic: SyntheticSection,
    pub pretrain: StageSection,
    pub instruct: StageSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub ablation: Option<AblationSettings>,
}

/// Dataset files. Missing entries fall back to synthetic corpora.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    /// Caption-only pre-training set; defaults to the captions in `train`.
    pub pretrain: Option<PathBuf>,
    pub eval: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub train: BTreeMap<String, usize>,
    pub eval: BTreeMap<String, usize>,
    pub slices: usize,
    pub out_dir: PathBuf,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let counts = |n: usize| Task::ALL.iter().map(|t| (t.as_str().to_string(), n)).collect();
        SyntheticSection { train: counts(50), eval: counts(10), slices: 4, out_dir: PathBuf::from("data") }
    }
}

/// Overrides on top of a stage preset; anything left out keeps the preset value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageSection {
    pub frozen: Option<BTreeSet<String>>,
    pub lora: Option<LoraSpec>,
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seq_cap: Option<usize>,
    pub grad_clip: Option<f64>,
}

impl StageSection {
    pub fn apply(&self, mut base: StageConfig, batch_divisor: usize) -> StageConfig {
        if let Some(f) = &self.frozen {
            base.frozen = f.clone();
        }
        if self.lora.is_some() {
            base.lora = self.lora.clone();
        }
        base.lr = self.lr.unwrap_or(base.lr);
        base.epochs = self.epochs.unwrap_or(base.epochs);
        base.batch_size = self.batch_size.unwrap_or((base.batch_size / batch_divisor.max(1)).max(1));
        base.seq_cap = self.seq_cap.unwrap_or(base.seq_cap);
        base.grad_clip = self.grad_clip.or(base.grad_clip);
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Preset batch sizes are divided by this unless set explicitly.
    pub batch_divisor: usize,
    pub one_stage: bool,
    pub checkpoint: PathBuf,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { batch_divisor: 1, one_stage: false, checkpoint: PathBuf::from("model.mmck") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub max_new: usize,
    pub tasks: Option<Vec<Task>>,
    pub report: Option<PathBuf>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { max_new: 48, tasks: None, report: None }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data.train, &mut cfg.data.pretrain, &mut cfg.data.eval].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.synthetic.out_dir.is_relative() {
            cfg.synthetic.out_dir = base.join(&cfg.synthetic.out_dir);
        }
        if cfg.train.checkpoint.is_relative() {
            cfg.train.checkpoint = base.join(&cfg.train.checkpoint);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn plan(&self) -> TwoStagePlan {
        let d = self.train.batch_divisor;
        TwoStagePlan {
            pretrain: self.pretrain.apply(StageConfig::pretrain(), d),
            instruct: self.instruct.apply(StageConfig::instruct(), d),
            one_stage: self.train.one_stage,
        }
    }

    fn image_size(&self) -> usize {
        match &self.model.encoder {
            EncoderConfig::TwoD(c) | EncoderConfig::Slices(c) => c.image_size,
            EncoderConfig::ThreeD(c) => c.volume[1],
        }
    }

    fn slices(&self) -> usize {
        match &self.model.encoder {
            EncoderConfig::ThreeD(c) => c.volume[0],
            _ => self.synthetic.slices,
        }
    }

    pub fn corpus_spec(&self, counts: &BTreeMap<String, usize>) -> Result<CorpusSpec> {
        let counts = counts
            .iter()
            .map(|(k, &n)| k.parse::<Task>().map(|t| (t, n)).map_err(|_| Error::Config(format!("unknown task `{k}` in [synthetic]"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(CorpusSpec::new(&counts, self.image_size(), self.model.encoder.modality(), self.slices()))
    }

    fn split(&self, path: &Option<PathBuf>, counts: &BTreeMap<String, usize>, seed: u64, name: &str) -> Result<Vec<MultimodalSample>> {
        match path {
            Some(p) => load_dataset(p),
            None => Ok(make_synthetic_corpus(&self.corpus_spec(counts)?, SeedTree::new(seed).derive(name))?.samples),
        }
    }

    pub fn train_data(&self, seed: u64) -> Result<Vec<MultimodalSample>> {
        self.split(&self.data.train, &self.synthetic.train, seed, "data.train")
    }

    pub fn eval_data(&self, seed: u64) -> Result<Vec<MultimodalSample>> {
        self.split(&self.data.eval, &self.synthetic.eval, seed, "data.eval")
    }

    pub fn pretrain_data(&self, train: &[MultimodalSample]) -> Result<Vec<MultimodalSample>> {
        match &self.data.pretrain {
            Some(p) => load_dataset(p),
            None => Ok(train.iter().filter(|s| s.task == Task::Caption).cloned().collect()),
        }
    }

    pub fn modality(&self) -> Modality {
        self.model.encoder.modality()
    }
}
