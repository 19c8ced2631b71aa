//! Side-by-side training runs along one comparison axis.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate, MetricReport};
use crate::adapters::{LoraSpec, StageConfig};
use crate::data::{make_synthetic_corpus, CorpusSpec, Modality, MultimodalSample, Task};
use crate::error::{Error, Result};
use crate::model::{ConnectorKind, ConnectorSettings, Encoder2DConfig, Encoder3DConfig, EncoderConfig, MedVlm, ModelConfig};
use crate::rng::SeedTree;
use crate::train::{run_two_stage, transfer_2d_to_3d, TwoStagePlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    EncoderFreeze,
    LlmStrategy,
    Init3d,
    StageCount,
    ConnectorKind,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 5] = [
        AblationAxis::EncoderFreeze,
        AblationAxis::LlmStrategy,
        AblationAxis::Init3d,
        AblationAxis::StageCount,
        AblationAxis::ConnectorKind,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationAxis::EncoderFreeze => "encoder_freeze",
            AblationAxis::LlmStrategy => "llm_strategy",
            AblationAxis::Init3d => "init_3d",
            AblationAxis::StageCount => "stage_count",
            AblationAxis::ConnectorKind => "connector_kind",
        }
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation axis `{s}`")))
    }
}

/// Shared setup of every ablation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationSettings {
    /// 2D baseline; volumetric variants reuse its encoder width and LM.
    pub model: ModelConfig,
    pub slices: usize,
    /// Slab depth of the 3D encoder's patches.
    pub patch_depth: usize,
    pub train_samples: usize,
    pub eval_samples: usize,
    pub pretrain: StageConfig,
    pub instruct: StageConfig,
    pub lora_rank: usize,
    /// Adapter rate of the LoRA* run; ten times the instruct rate when unset.
    pub lora_star_lr: Option<f64>,
    pub max_new: usize,
    pub seed: u64,
}

impl Default for AblationSettings {
    fn default() -> Self {
        let model = ModelConfig {
            encoder: EncoderConfig::TwoD(Encoder2DConfig { image_size: 32, patch_size: 8, ..Default::default() }),
            ..Default::default()
        };
        AblationSettings {
            model,
            slices: 4,
            patch_depth: 2,
            train_samples: 300,
            eval_samples: 64,
            pretrain: StageConfig { batch_size: 8, ..StageConfig::pretrain() },
            instruct: StageConfig { batch_size: 8, epochs: 15, lr: 3e-4, grad_clip: Some(1.0), ..StageConfig::instruct() },
            lora_rank: 8,
            lora_star_lr: None,
            max_new: 48,
            seed: 0,
        }
    }
}

impl AblationSettings {
    fn encoder2d(&self) -> Result<Encoder2DConfig> {
        match &self.model.encoder {
            EncoderConfig::TwoD(c) | EncoderConfig::Slices(c) => Ok(c.clone()),
            EncoderConfig::ThreeD(_) => Err(Error::Config("ablation base model must use a 2D encoder".into())),
        }
    }

    fn corpus(&self, modality: Modality, total: usize, seed: u64) -> Result<Vec<MultimodalSample>> {
        let per = total / Task::ALL.len();
        let extra = total % Task::ALL.len();
        let counts: Vec<(Task, usize)> = Task::ALL.iter().enumerate().map(|(i, &t)| (t, per + usize::from(i < extra))).collect();
        let spec = CorpusSpec::new(&counts, self.encoder2d()?.image_size, modality, self.slices);
        Ok(make_synthetic_corpus(&spec, seed)?.samples)
    }

    fn volumetric(&self, kind: &str) -> Result<ModelConfig> {
        let enc = self.encoder2d()?;
        let mut cfg = self.model.clone();
        let tokens = enc.num_tokens();
        match kind {
            "3d" => {
                cfg.encoder = EncoderConfig::ThreeD(Encoder3DConfig {
                    volume: [self.slices, enc.image_size, enc.image_size],
                    patch: [self.patch_depth, enc.patch_size, enc.patch_size],
                    depth: enc.depth,
                    heads: enc.heads,
                    width: enc.width,
                    use_pos_embed: enc.use_pos_embed,
                });
                cfg.connector = ConnectorSettings { kind: ConnectorKind::Mlp, ..cfg.connector };
            }
            "2d+avg" => {
                cfg.encoder = EncoderConfig::Slices(enc);
                cfg.connector = ConnectorSettings { kind: ConnectorKind::AvgPool, ..cfg.connector };
            }
            _ => {
                cfg.encoder = EncoderConfig::Slices(enc);
                cfg.connector = ConnectorSettings { kind: ConnectorKind::AttnCompress, l_attn: tokens, ..cfg.connector };
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub report: MetricReport,
    pub train_secs: f64,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Fixed-width table: one row per configuration, one column per task.
    pub fn to_text(&self) -> String {
        let tasks: Vec<Task> = Task::ALL
            .into_iter()
            .filter(|t| self.rows.iter().any(|r| r.report.get(*t).is_some()))
            .collect();
        let mut out = format!("axis {}\n{:<14}", self.axis.as_str(), "config");
        for t in &tasks {
            let _ = write!(out, " {:>17}", t.as_str());
        }
        out.push_str(&format!(" {:>10} {:>8}\n", "final_loss", "secs"));
        for r in &self.rows {
            let _ = write!(out, "{:<14}", r.label);
            for t in &tasks {
                match r.report.get(*t) {
                    Some(v) => {
                        let _ = write!(out, " {v:>17.4}");
                    }
                    None => out.push_str(&format!(" {:>17}", "-")),
                }
            }
            let loss = r.final_loss.map(|l| format!("{l:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, " {loss:>10} {:>8.1}", r.train_secs);
        }
        out
    }
}

struct Run {
    label: &'static str,
    model: ModelConfig,
    plan: TwoStagePlan,
    /// Checkpoint-transfer source config, trained first on 2D data.
    init_from_2d: bool,
}

/// Trains every configuration of `axis` on the same seeded corpora and
/// evaluates each on one held-out split. No ordering is asserted.
pub fn run_ablation(axis: AblationAxis, settings: &AblationSettings) -> Result<AblationTable> {
    let seeds = SeedTree::new(settings.seed);
    let base_plan = TwoStagePlan { pretrain: settings.pretrain.clone(), instruct: settings.instruct.clone(), one_stage: false };
    let volumetric = matches!(axis, AblationAxis::Init3d | AblationAxis::ConnectorKind);
    let modality = if volumetric { Modality::ThreeD } else { Modality::TwoD };
    let with = |label, model: ModelConfig, edit: &dyn Fn(&mut TwoStagePlan)| {
        let mut plan = base_plan.clone();
        edit(&mut plan);
        Run { label, model, plan, init_from_2d: false }
    };

    let runs: Vec<Run> = match axis {
        AblationAxis::EncoderFreeze => vec![
            with("frozen", settings.model.clone(), &|p| {
                p.instruct.frozen.insert("encoder".into());
            }),
            with("unfrozen", settings.model.clone(), &|_| {}),
        ],
        AblationAxis::LlmStrategy => {
            let star = settings.lora_star_lr.unwrap_or(10.0 * settings.instruct.lr);
            let r = settings.lora_rank;
            vec![
                with("frozen", settings.model.clone(), &|p| {
                    p.instruct.frozen.extend(["lm".to_string(), "embed".to_string()]);
                }),
                with("lora", settings.model.clone(), &|p| {
                    p.instruct.frozen.extend(["lm".to_string(), "embed".to_string()]);
                    p.instruct.lora = Some(LoraSpec::new(r));
                }),
                with("full", settings.model.clone(), &|_| {}),
                with("lora*", settings.model.clone(), &|p| {
                    p.instruct.frozen.extend(["lm".to_string(), "embed".to_string()]);
                    p.instruct.lora = Some(LoraSpec { lr_override: Some(star), ..LoraSpec::new(r) });
                }),
            ]
        }
        AblationAxis::StageCount => vec![
            with("one_stage", settings.model.clone(), &|p| p.one_stage = true),
            with("two_stage", settings.model.clone(), &|_| {}),
        ],
        AblationAxis::ConnectorKind => vec![
            with("3d", settings.volumetric("3d")?, &|_| {}),
            with("2d+avg", settings.volumetric("2d+avg")?, &|_| {}),
            with("2d+attn", settings.volumetric("2d+attn")?, &|_| {}),
        ],
        AblationAxis::Init3d => vec![
            with("scratch", settings.volumetric("2d+avg")?, &|_| {}),
            Run { init_from_2d: true, ..with("from_2d", settings.volumetric("2d+avg")?, &|_| {}) },
        ],
    };

    let train = settings.corpus(modality, settings.train_samples, seeds.derive("train"))?;
    let held_out = settings.corpus(modality, settings.eval_samples, seeds.derive("eval"))?;
    let captions: Vec<MultimodalSample> = train.iter().filter(|s| s.task == Task::Caption).cloned().collect();

    let source_2d = if runs.iter().any(|r| r.init_from_2d) {
        let data2d = settings.corpus(Modality::TwoD, settings.train_samples, seeds.derive("train"))?;
        let caps2d: Vec<MultimodalSample> = data2d.iter().filter(|s| s.task == Task::Caption).cloned().collect();
        let mut m = MedVlm::<f32>::new(&settings.model, seeds.derive("model"))?;
        log::info!("{}: training 2D source model", axis.as_str());
        Some(run_two_stage(&mut m, &caps2d, &data2d, &base_plan, seeds.derive("run.2d"))?.checkpoint)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(runs.len());
    for run in runs {
        log::info!("{}: running `{}`", axis.as_str(), run.label);
        let start = Instant::now();
        let mut model = MedVlm::<f32>::new(&run.model, seeds.derive("model"))?;
        if run.init_from_2d {
            let ck = source_2d.as_ref().expect("source trained above");
            let rep = transfer_2d_to_3d(ck, &mut model)?;
            log::info!("transferred {} tensors, {} fresh", rep.loaded.len(), rep.fresh.len());
        }
        let out = run_two_stage(&mut model, &captions, &train, &run.plan, seeds.derive("run"))?;
        let train_secs = start.elapsed().as_secs_f64();
        let report = evaluate(&model, &held_out, None, settings.max_new)?;
        rows.push(AblationRow { label: run.label.to_string(), report, train_secs, final_loss: out.instruct.last_loss() });
    }
    Ok(AblationTable { axis, rows })
}
