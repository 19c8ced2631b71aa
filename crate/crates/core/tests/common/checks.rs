//! Measurements shared by the integration tests and the acceptance harness.
//! Each returns raw numbers; callers decide what passes.

use std::collections::{BTreeMap, BTreeSet};

use medvl::adapters::{lora_inject, lora_merge, LoraSpec, StageConfig};
use medvl::data::{
    make_synthetic_corpus, CorpusSpec, Image2D, ImagePayload, MultimodalSample, Task, Volume3D, BOS, IMG,
};
use medvl::model::{ConnectorKind, EncoderConfig};
use medvl::rng::SeedTree;
use medvl::train::{train_stage, transfer_2d_to_3d, Checkpoint};
use medvl::{MedVlm, Module, ModelConfig};
use rand::Rng;

use super::{normal, random_ids, rng, tiny_2d, tiny_slices};

pub fn corpus(cfg: &ModelConfig, counts: &[(Task, usize)], seed: u64) -> Vec<MultimodalSample> {
    let (size, slices) = match &cfg.encoder {
        EncoderConfig::TwoD(c) | EncoderConfig::Slices(c) => (c.image_size, 4),
        EncoderConfig::ThreeD(c) => (c.volume[1], c.volume[0]),
    };
    make_synthetic_corpus(&CorpusSpec::new(counts, size, cfg.encoder.modality(), slices), seed).unwrap().samples
}

pub fn mixed(n_each: usize) -> Vec<(Task, usize)> {
    Task::ALL.iter().map(|&t| (t, n_each)).collect()
}

fn group(name: &str) -> String {
    name.split('.').next().unwrap_or(name).to_string()
}

/// Per namespace: how many parameter tensors differ bytewise.
pub fn changed_by_group<M: Module>(before: &[(String, Vec<f32>)], after: &M) -> BTreeMap<String, usize> {
    let now: BTreeMap<String, Vec<f32>> = after.snapshot().into_iter().collect();
    let mut out = BTreeMap::new();
    for (name, old) in before {
        let same = now[name].iter().zip(old).all(|(a, b)| a.to_bits() == b.to_bits());
        *out.entry(group(name)).or_insert(0) += usize::from(!same);
    }
    out
}

pub struct FreezeOutcome {
    pub after_pretrain: BTreeMap<String, usize>,
    pub after_instruct: BTreeMap<String, usize>,
}

pub fn freeze_run() -> FreezeOutcome {
    let cfg = tiny_2d();
    let mut m = MedVlm::<f32>::new(&cfg, 5).unwrap();
    let caps = corpus(&cfg, &[(Task::Caption, 16)], 1);
    let before = m.snapshot();
    train_stage(&mut m, &caps, &StageConfig { batch_size: 4, ..StageConfig::pretrain() }, 2).unwrap();
    let after_pretrain = changed_by_group(&before, &m);

    let data = corpus(&cfg, &mixed(3), 3);
    let before = m.snapshot();
    train_stage(&mut m, &data, &StageConfig { batch_size: 4, epochs: 1, lr: 1e-3, ..StageConfig::instruct() }, 4).unwrap();
    FreezeOutcome { after_pretrain, after_instruct: changed_by_group(&before, &m) }
}

pub fn random_image(r: &mut impl Rng, size: usize) -> Image2D {
    Image2D::new(size, size, 3, (0..size * size * 3).map(|_| r.random::<f32>()).collect()).unwrap()
}

/// `[BOS, IMG×L, text…]` with `text_len` random text ids.
pub fn random_row(r: &mut impl Rng, l_img: usize, text_len: usize) -> Vec<usize> {
    let mut ids = vec![BOS];
    ids.extend(std::iter::repeat_n(IMG, l_img));
    ids.extend((0..text_len).map(|_| r.random_range(4..260)));
    ids
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max)
}

pub struct LoraOutcome {
    pub neutral_delta: f64,
    pub merge_delta: f64,
    pub adapted_linears: usize,
}

/// Injection neutrality and merge equivalence over `inputs` random rows.
pub fn lora_run(inputs: usize) -> LoraOutcome {
    let cfg = tiny_2d();
    let base = MedVlm::<f32>::new(&cfg, 8).unwrap();
    let mut adapted = base.clone();
    let adapted_linears = lora_inject(&mut adapted, &LoraSpec::new(4), &SeedTree::new(9)).unwrap();

    let mut r = rng(10);
    let rows: Vec<(ImagePayload, Vec<usize>)> = (0..inputs)
        .map(|_| {
            let len = r.random_range(1..12);
            (ImagePayload::Image(random_image(&mut r, 32)), random_row(&mut r, base.image_tokens(), len))
        })
        .collect();
    let logits = |m: &MedVlm, img: &ImagePayload, ids: &[usize]| medvl::no_grad(|| m.forward_row(Some(img), ids).unwrap().data().to_vec());

    let neutral_delta = rows.iter().map(|(img, ids)| max_abs_diff(&logits(&base, img, ids), &logits(&adapted, img, ids))).fold(0.0, f64::max);

    // Give the adapters a real update before merging.
    adapted.visit_mut(&mut |p| {
        if p.is_adapter() {
            let v = normal(&mut r, p.data().len(), 0.05).into_iter().map(|x| x as f32).collect();
            p.set_data(v).unwrap();
        }
    });
    let unmerged: Vec<Vec<f32>> = rows.iter().map(|(img, ids)| logits(&adapted, img, ids)).collect();
    lora_merge(&mut adapted).unwrap();
    let merge_delta = rows.iter().zip(&unmerged).map(|((img, ids), u)| max_abs_diff(&logits(&adapted, img, ids), u)).fold(0.0, f64::max);
    LoraOutcome { neutral_delta, merge_delta, adapted_linears }
}

/// Max |logit difference| between a trained 2D model on a gray image and a
/// transferred 2D+Avg model on an N-copy volume of that image.
pub fn transfer_run(copies: usize) -> f64 {
    let cfg2 = tiny_2d();
    let mut m2 = MedVlm::<f32>::new(&cfg2, 11).unwrap();
    let data = corpus(&cfg2, &mixed(2), 12);
    train_stage(&mut m2, &data, &StageConfig { batch_size: 4, epochs: 1, lr: 1e-3, ..StageConfig::instruct() }, 13).unwrap();
    let ck = Checkpoint::from_model(&m2, 11, "instruct");

    let cfg3 = tiny_slices(ConnectorKind::AvgPool);
    let mut m3 = MedVlm::<f32>::new(&cfg3, 99).unwrap();
    transfer_2d_to_3d(&ck, &mut m3).unwrap();

    let mut r = rng(14);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let plane: Vec<f32> = (0..32 * 32).map(|_| r.random::<f32>()).collect();
        let rgb: Vec<f32> = plane.iter().flat_map(|&v| [v, v, v]).collect();
        let img = ImagePayload::Image(Image2D::new(32, 32, 3, rgb).unwrap());
        let vol = ImagePayload::Volume(Volume3D::repeated(&plane, copies, 32, 32).unwrap());
        let ids = random_row(&mut r, m2.image_tokens(), 6);
        let a = medvl::no_grad(|| m2.forward_row(Some(&img), &ids).unwrap());
        let b = medvl::no_grad(|| m3.forward_row(Some(&vol), &ids).unwrap());
        worst = worst.max(max_abs_diff(a.data(), b.data()));
    }
    worst
}

pub struct CausalityOutcome {
    pub prefix_delta: f64,
    pub decode_mismatches: usize,
}

/// Suffix perturbation and cached-vs-replay decoding on `inputs` random inputs.
pub fn causality_run(inputs: usize) -> CausalityOutcome {
    let cfg = tiny_2d();
    let mut m = MedVlm::<f32>::new(&cfg, 21).unwrap();
    let data = corpus(&cfg, &mixed(2), 22);
    train_stage(&mut m, &data, &StageConfig { batch_size: 4, epochs: 1, lr: 1e-3, ..StageConfig::instruct() }, 23).unwrap();
    let vocab = cfg.lm.vocab_size;

    let mut r = rng(24);
    let mut prefix_delta = 0.0f64;
    let mut decode_mismatches = 0;
    for i in 0..inputs {
        let img = ImagePayload::Image(random_image(&mut r, 32));
        let text = r.random_range(2..20);
        let ids = random_row(&mut r, m.image_tokens(), text);
        let cut = r.random_range(1 + m.image_tokens()..ids.len());
        let mut perturbed = ids.clone();
        for t in &mut perturbed[cut..] {
            *t = r.random_range(4..260);
        }
        let a = medvl::no_grad(|| m.forward_row(Some(&img), &ids).unwrap());
        let b = medvl::no_grad(|| m.forward_row(Some(&img), &perturbed).unwrap());
        prefix_delta = prefix_delta.max(max_abs_diff(&a.data()[..cut * vocab], &b.data()[..cut * vocab]));

        let sample = if i % 2 == 0 {
            data[i % data.len()].clone()
        } else {
            let prompt: String = random_ids(&mut r, 5).iter().map(|&c| char::from(b'a' + (c % 26) as u8)).collect();
            MultimodalSample { image: Some(img), prompt, response: String::new(), task: Task::VqaShort }
        };
        if m.generate(&sample, 24).unwrap() != m.generate_replay(&sample, 24).unwrap() {
            decode_mismatches += 1;
        }
    }
    CausalityOutcome { prefix_delta, decode_mismatches }
}

pub fn namespaces<M: Module>(m: &M) -> BTreeSet<String> {
    m.param_names().iter().map(|n| group(n)).collect()
}
