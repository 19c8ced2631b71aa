//! Row layout: `[BOS, IMG × L_img, prompt, response, EOS, PAD …]`.
//!
//! The loss mask is 1 exactly on response tokens and the closing EOS.
//! Rows longer than the cap lose the tail of their response (and the EOS).

use super::sample::{ImagePayload, Modality, MultimodalSample};
use super::tokenizer::{encode_text, BOS, EOS, IMG, PAD};
use crate::error::{Error, Result};

pub const DEFAULT_SEQ_CAP: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Vec<Option<ImagePayload>>,
    /// `B × T`, padded with [`PAD`].
    pub token_ids: Vec<Vec<usize>>,
    /// `B × T` of 0/1.
    pub loss_mask: Vec<Vec<u8>>,
    /// Unpadded length of each row.
    pub lengths: Vec<usize>,
    pub image_tokens: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.token_ids.first().map(|r| r.len()).unwrap_or(0)
    }
}

/// Prompt part of a row: `[BOS, IMG × l_img, prompt]`.
pub fn prompt_ids(sample: &MultimodalSample, l_img: usize) -> Vec<usize> {
    let l_img = if sample.image.is_some() { l_img } else { 0 };
    let mut ids = Vec::with_capacity(1 + l_img + sample.prompt.len());
    ids.push(BOS);
    ids.extend(std::iter::repeat_n(IMG, l_img));
    ids.extend(encode_text(sample.prompt.as_bytes()));
    ids
}

/// One unpadded row and its loss mask. `index` only labels errors.
pub fn build_row(sample: &MultimodalSample, l_img: usize, cap: usize, index: usize) -> Result<(Vec<usize>, Vec<u8>)> {
    let mut ids = prompt_ids(sample, l_img);
    let fixed = ids.len();
    let response = encode_text(sample.response.as_bytes());
    let full = fixed + response.len() + 1;
    if full > cap && fixed >= cap {
        return Err(Error::SampleTooLong { index, needed: fixed, cap });
    }
    let mut mask = vec![0u8; fixed];
    if full <= cap {
        ids.extend(&response);
        ids.push(EOS);
        mask.resize(full, 1);
    } else {
        ids.extend(&response[..cap - fixed]);
        mask.resize(cap, 1);
    }
    Ok((ids, mask))
}

/// Lays out and pads `samples`, which must share one image modality.
pub fn build_batch(samples: &[&MultimodalSample], l_img: usize, cap: usize) -> Result<Batch> {
    let modality = samples.first().map(|s| s.modality()).unwrap_or(Modality::None);
    if let Some(s) = samples.iter().find(|s| s.modality() != modality) {
        return Err(Error::validation(format!(
            "batch mixes modalities `{}` and `{}`",
            modality.as_str(),
            s.modality().as_str()
        )));
    }
    let rows = samples
        .iter()
        .enumerate()
        .map(|(i, s)| build_row(s, l_img, cap, i))
        .collect::<Result<Vec<_>>>()?;
    let width = rows.iter().map(|(ids, _)| ids.len()).max().unwrap_or(0);
    let mut batch = Batch {
        images: samples.iter().map(|s| s.image.clone()).collect(),
        token_ids: Vec::with_capacity(rows.len()),
        loss_mask: Vec::with_capacity(rows.len()),
        lengths: Vec::with_capacity(rows.len()),
        image_tokens: if modality == Modality::None { 0 } else { l_img },
    };
    for (mut ids, mut mask) in rows {
        batch.lengths.push(ids.len());
        ids.resize(width, PAD);
        mask.resize(width, 0);
        batch.token_ids.push(ids);
        batch.loss_mask.push(mask);
    }
    Ok(batch)
}
