//! Stage-wise training: masked next-token loss, AdamW, checkpoints and
//! 2D-to-3D initialization transfer.

pub mod checkpoint;
pub mod loss;
pub mod optim;
pub mod transfer;

use std::sync::mpsc::sync_channel;
use std::thread;

use rand::seq::SliceRandom;

pub use checkpoint::{load_checkpoint, model_from_checkpoint, save_checkpoint, Checkpoint, LoadMode, LoadReport};
pub use loss::masked_next_token_loss;
pub use optim::{AdamW, AdamWConfig};
pub use transfer::{transfer_2d_to_3d, TransferReport};

use crate::adapters::{has_adapters, lora_inject, lora_merge, set_trainable, StageConfig};
use crate::data::{build_batch, Batch, Modality, MultimodalSample, Task};
use crate::error::{Error, Result};
use crate::model::MedVlm;
use crate::param::Module;
use crate::rng::SeedTree;
use crate::tensor::{no_grad, Elem};

/// Batches prepared ahead of the optimizer.
const QUEUE_DEPTH: usize = 2;

#[derive(Debug, Clone)]
pub struct StageReport {
    pub checkpoint: Checkpoint,
    /// Mean row loss of every optimizer step, in order.
    pub losses: Vec<f64>,
}

impl StageReport {
    pub fn first_loss(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

fn check_modalities<E: Elem>(model: &MedVlm<E>, data: &[MultimodalSample]) -> Result<()> {
    let want = model.cfg.encoder.modality();
    match data.iter().position(|s| s.modality() != want && s.modality() != Modality::None) {
        Some(i) => Err(Error::validation(format!(
            "sample {i} is `{}` but the model encodes `{}` images",
            data[i].modality().as_str(),
            want.as_str()
        ))),
        None => Ok(()),
    }
}

/// Forward and backward of one batch; gradients are averaged over rows.
fn batch_backward<E: Elem>(model: &MedVlm<E>, batch: &Batch) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for r in 0..batch.len() {
        let len = batch.lengths[r];
        let ids = &batch.token_ids[r][..len];
        let logits = model.forward_row(batch.images[r].as_ref(), ids)?;
        let loss = masked_next_token_loss(&logits, ids, &batch.loss_mask[r][..len])?;
        total += loss.item()?.to_f64().unwrap_or(f64::NAN);
        loss.mul_scalar(scale).backward()?;
    }
    Ok(total * scale)
}

/// Runs one stage: injects adapters if the stage asks for them, applies the
/// frozen set, then `epochs` shuffled passes of AdamW steps.
pub fn train_stage<E: Elem>(model: &mut MedVlm<E>, data: &[MultimodalSample], stage: &StageConfig, seed: u64) -> Result<StageReport> {
    if data.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if stage.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    check_modalities(model, data)?;
    let seeds = SeedTree::new(seed).child(stage.name.as_str());
    if let Some(spec) = &stage.lora {
        if !has_adapters(model) {
            let n = lora_inject(model, spec, &seeds.child("lora"))?;
            log::info!("{}: adapters on {n} linear layers", stage.name.as_str());
        }
    }
    set_trainable(model, stage)?;
    model.zero_grads();
    let mut opt = AdamW::new(AdamWConfig { grad_clip: stage.grad_clip, ..Default::default() });
    let l_img = model.image_tokens();
    let mut losses = Vec::new();
    for epoch in 0..stage.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut seeds.rng(&format!("shuffle.{epoch}")));
        let chunks: Vec<Vec<usize>> = order.chunks(stage.batch_size).map(|c| c.to_vec()).collect();
        let base = losses.len();
        thread::scope(|s| -> Result<()> {
            let (tx, rx) = sync_channel::<Result<Batch>>(QUEUE_DEPTH);
            let cap = stage.seq_cap;
            let chunks = &chunks;
            s.spawn(move || {
                for c in chunks {
                    let refs: Vec<&MultimodalSample> = c.iter().map(|&i| &data[i]).collect();
                    if tx.send(build_batch(&refs, l_img, cap)).is_err() {
                        break;
                    }
                }
            });
            for (b, batch) in rx.iter().enumerate() {
                let step = base + b;
                let wrap = |e: Error| Error::Batch { batch: step, source: Box::new(e) };
                let batch = batch.map_err(wrap)?;
                let loss = batch_backward(model, &batch).map_err(wrap)?;
                opt.step(model, &|p| stage.lr_for(p)).map_err(wrap)?;
                model.zero_grads();
                log::debug!("{} epoch {epoch} step {step}: loss {loss:.4}", stage.name.as_str());
                losses.push(loss);
            }
            Ok(())
        })?;
        log::info!(
            "{} epoch {epoch}: mean loss {:.4}",
            stage.name.as_str(),
            losses[base..].iter().sum::<f64>() / (losses.len() - base).max(1) as f64
        );
    }
    Ok(StageReport { checkpoint: Checkpoint::from_model(model, seed, stage.name.as_str()), losses })
}

/// Mean masked loss over `data` without touching gradients.
pub fn mean_loss<E: Elem>(model: &MedVlm<E>, data: &[MultimodalSample], seq_cap: usize) -> Result<f64> {
    no_grad(|| {
        let mut total = 0.0;
        for s in data {
            let batch = build_batch(&[s], model.image_tokens(), seq_cap)?;
            let len = batch.lengths[0];
            let ids = &batch.token_ids[0][..len];
            let logits = model.forward_row(s.image.as_ref(), ids)?;
            total += masked_next_token_loss(&logits, ids, &batch.loss_mask[0][..len])?.item()?.to_f64().unwrap_or(f64::NAN);
        }
        Ok(total / data.len().max(1) as f64)
    })
}

#[derive(Debug, Clone)]
pub struct TwoStagePlan {
    pub pretrain: StageConfig,
    pub instruct: StageConfig,
    /// Skip connector-only pre-training and instruction-tune from initialization.
    pub one_stage: bool,
}

impl Default for TwoStagePlan {
    fn default() -> Self {
        TwoStagePlan { pretrain: StageConfig::pretrain(), instruct: StageConfig::instruct(), one_stage: false }
    }
}

#[derive(Debug, Clone)]
pub struct TwoStageReport {
    pub pretrain: Option<StageReport>,
    pub instruct: StageReport,
    /// Final weights, adapters merged.
    pub checkpoint: Checkpoint,
}

/// Connector-only alignment on captions, then instruction tuning from the
/// aligned weights. Adapters added by the second stage are merged at the end.
pub fn run_two_stage<E: Elem>(
    model: &mut MedVlm<E>,
    pretrain_data: &[MultimodalSample],
    instruct_data: &[MultimodalSample],
    plan: &TwoStagePlan,
    seed: u64,
) -> Result<TwoStageReport> {
    let seeds = SeedTree::new(seed);
    let pretrain = if plan.one_stage {
        None
    } else {
        if let Some(i) = pretrain_data.iter().position(|s| s.task != Task::Caption) {
            return Err(Error::validation(format!(
                "pre-training data must be captions only; sample {i} is `{}`",
                pretrain_data[i].task.as_str()
            )));
        }
        Some(train_stage(model, pretrain_data, &plan.pretrain, seeds.derive("pretrain"))?)
    };
    let instruct = train_stage(model, instruct_data, &plan.instruct, seeds.derive("instruct"))?;
    lora_merge(model)?;
    let checkpoint = Checkpoint::from_model(model, seed, plan.instruct.name.as_str());
    Ok(TwoStageReport { pretrain, instruct, checkpoint })
}
