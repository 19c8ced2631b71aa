mod common;

use std::collections::BTreeSet;

use common::checks::{self, corpus, mixed};
use common::{rng, tiny_2d};
use medvl::adapters::{StageConfig, StageName};
use medvl::data::Task;
use medvl::eval::{box_iou, evaluate, exact_match, run_ablation, token_f1, AblationAxis, AblationSettings};
use medvl::model::{ConnectorKind, Encoder2DConfig, EncoderConfig};
use medvl::train::{run_two_stage, train_stage, Checkpoint, LoadMode, TwoStagePlan};
use medvl::{MedVlm, Module};
use rand::Rng;

#[test]
fn pretrain_touches_only_the_connector_and_instruct_touches_everything() {
    let out = checks::freeze_run();
    for g in ["encoder2d", "lm", "embed"] {
        assert_eq!(out.after_pretrain[g], 0, "{g} changed during pre-training");
    }
    assert!(out.after_pretrain["connector"] >= 1);
    for (g, n) in &out.after_instruct {
        assert!(*n >= 1, "{g} unchanged after instruction tuning");
    }
}

#[test]
fn lora_is_neutral_at_injection_and_merges_exactly() {
    let out = checks::lora_run(100);
    assert!(out.adapted_linears > 0);
    assert!(out.neutral_delta < 1e-7, "injection moved logits by {}", out.neutral_delta);
    assert!(out.merge_delta < 1e-5, "merge moved logits by {}", out.merge_delta);
}

#[test]
fn lora_presets_carry_their_rates() {
    assert_eq!(StageConfig::instruct().lr, 2e-5);
    assert_eq!(StageConfig::instruct_lora(8).lr, 2e-5);
    assert_eq!(StageConfig::instruct_lora_star(8).lora.unwrap().lr_override, Some(2e-4));
    assert_eq!(StageConfig::pretrain().name, StageName::Pretrain);
}

#[test]
fn transferred_slice_model_matches_2d_model_on_copied_volume() {
    let worst = checks::transfer_run(4);
    assert!(worst < 1e-5, "logit gap {worst}");
}

#[test]
fn prefix_logits_ignore_the_suffix_and_cached_decoding_matches_replay() {
    let out = checks::causality_run(50);
    assert!(out.prefix_delta < 1e-6, "prefix moved by {}", out.prefix_delta);
    assert_eq!(out.decode_mismatches, 0);
}

fn tiny_plan() -> TwoStagePlan {
    TwoStagePlan {
        pretrain: StageConfig { batch_size: 4, ..StageConfig::pretrain() },
        instruct: StageConfig { batch_size: 4, epochs: 1, lr: 1e-3, ..StageConfig::instruct() },
        one_stage: false,
    }
}

fn trained_checkpoint(seed: u64) -> Checkpoint {
    let cfg = tiny_2d();
    let data = corpus(&cfg, &mixed(2), 30);
    let caps: Vec<_> = data.iter().filter(|s| s.task == Task::Caption).cloned().collect();
    let mut m = MedVlm::<f32>::new(&cfg, seed).unwrap();
    run_two_stage(&mut m, &caps, &data, &tiny_plan(), seed).unwrap().checkpoint
}

#[test]
fn same_seed_gives_identical_checkpoint_bytes() {
    assert_eq!(trained_checkpoint(7).to_bytes(), trained_checkpoint(7).to_bytes());
    assert_ne!(trained_checkpoint(7).to_bytes(), trained_checkpoint(8).to_bytes());
}

#[test]
fn checkpoint_round_trip_preserves_logits_bitwise() {
    let ck = trained_checkpoint(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mmck");
    ck.save(&path).unwrap();
    let original = medvl::train::model_from_checkpoint::<f32>(&ck).unwrap();
    let loaded = medvl::train::model_from_checkpoint::<f32>(&Checkpoint::load(&path).unwrap()).unwrap();
    let mut r = rng(4);
    for _ in 0..5 {
        let img = medvl::data::ImagePayload::Image(checks::random_image(&mut r, 32));
        let ids = checks::random_row(&mut r, original.image_tokens(), 7);
        let a = original.forward_row(Some(&img), &ids).unwrap();
        let b = loaded.forward_row(Some(&img), &ids).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn strict_load_rejects_a_different_architecture_without_touching_the_model() {
    let ck = trained_checkpoint(3);
    let mut cfg = tiny_2d();
    cfg.lm.width = 48;
    let mut other = MedVlm::<f32>::new(&cfg, 1).unwrap();
    let before = other.snapshot();
    assert!(ck.apply(&mut other, LoadMode::Strict).is_err());
    assert_eq!(before, other.snapshot());
}

#[test]
fn caption_overfit_drops_loss_below_a_fifth() {
    let cfg = tiny_2d();
    let caps = corpus(&cfg, &[(Task::Caption, 64)], 40);
    let mut m = MedVlm::<f32>::new(&cfg, 41).unwrap();
    let stage = StageConfig { batch_size: 4, epochs: 13, lr: 1e-3, ..StageConfig::instruct() };
    let rep = train_stage(&mut m, &caps, &stage, 42).unwrap();
    assert!(rep.losses.len() >= 200);
    let first = rep.first_loss().unwrap();
    let tail: f64 = rep.losses[rep.losses.len() - 16..].iter().sum::<f64>() / 16.0;
    assert!(tail < 0.2 * first, "loss {first} -> {tail}");
}

#[test]
fn evaluation_leaves_weights_and_gradients_alone() {
    let cfg = tiny_2d();
    let m = MedVlm::<f32>::new(&cfg, 50).unwrap();
    let data = corpus(&cfg, &mixed(1), 51);
    let before = m.snapshot();
    evaluate(&m, &data, None, 8).unwrap();
    assert_eq!(before, m.snapshot());
    let mut any_grad = false;
    m.visit(&mut |p| any_grad |= p.grad().is_some_and(|g| g.iter().any(|v| *v != 0.0)));
    assert!(!any_grad);
}

fn oracle_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let area = |r: [f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

fn oracle_f1(p: &str, r: &str) -> f64 {
    let p: Vec<String> = p.to_lowercase().split_whitespace().map(String::from).collect();
    let mut rest: Vec<String> = r.to_lowercase().split_whitespace().map(String::from).collect();
    let (np, nr) = (p.len(), rest.len());
    if np == 0 && nr == 0 {
        return 1.0;
    }
    let mut common = 0;
    for t in &p {
        if let Some(i) = rest.iter().position(|x| x == t) {
            rest.swap_remove(i);
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let (prec, rec) = (common as f64 / np as f64, common as f64 / nr as f64);
    2.0 * prec * rec / (prec + rec)
}

#[test]
fn metrics_agree_with_independent_oracles() {
    let mut r = rng(60);
    let words = ["red", "Red", "circle", "square", "a", "two", "large"];
    for _ in 0..1000 {
        let bx = |r: &mut rand_chacha::ChaCha8Rng| {
            let x1 = r.random_range(0..60);
            let y1 = r.random_range(0..60);
            [x1, y1, x1 + r.random_range(0..20), y1 + r.random_range(0..20)]
        };
        let (a, b) = (bx(&mut r), bx(&mut r));
        let fa = a.map(|v| v as f64);
        let fb = b.map(|v| v as f64);
        let text = |v: [i32; 4]| format!("{},{},{},{}", v[0], v[1], v[2], v[3]);
        assert!((box_iou(&text(a), &text(b)) - oracle_iou(fa, fb)).abs() < 1e-12);

        let sentence = |r: &mut rand_chacha::ChaCha8Rng| {
            (0..r.random_range(0..5)).map(|_| words[r.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
        };
        let (p, q) = (sentence(&mut r), sentence(&mut r));
        assert!((token_f1(&p, &q) - oracle_f1(&p, &q)).abs() < 1e-12, "{p:?} vs {q:?}");
        let want = f64::from(u8::from(p.trim().to_lowercase() == q.trim().to_lowercase()));
        assert_eq!(exact_match(&format!("  {p} "), &q), want);
    }
    assert_eq!(box_iou("not a box", "0,0,4,4"), 0.0);
}

fn smoke_settings() -> AblationSettings {
    let mut s = AblationSettings::default();
    s.model.encoder = EncoderConfig::TwoD(Encoder2DConfig { image_size: 32, patch_size: 8, depth: 1, heads: 2, width: 16, ..Default::default() });
    s.model.lm.width = 32;
    s.model.lm.depth = 1;
    s.model.lm.heads = 2;
    s.train_samples = 24;
    s.eval_samples = 8;
    s.instruct.epochs = 1;
    s.lora_rank = 2;
    s.max_new = 8;
    s
}

#[test]
fn every_ablation_axis_produces_a_table() {
    let s = smoke_settings();
    for axis in AblationAxis::ALL {
        let t = run_ablation(axis, &s).unwrap();
        assert!(t.rows.len() >= 2, "{}", axis.as_str());
        let labels: BTreeSet<&str> = t.rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels.len(), t.rows.len());
        assert!(t.to_text().contains(axis.as_str()));
    }
}

#[test]
fn slice_models_with_each_compressor_train() {
    for kind in [ConnectorKind::AvgPool, ConnectorKind::AttnCompress] {
        let cfg = common::tiny_slices(kind);
        let data = corpus(&cfg, &[(Task::Classification, 8)], 70);
        let mut m = MedVlm::<f32>::new(&cfg, 71).unwrap();
        let rep = train_stage(&mut m, &data, &StageConfig { batch_size: 4, epochs: 2, lr: 1e-3, ..StageConfig::instruct() }, 72).unwrap();
        assert!(rep.last_loss().unwrap().is_finite());
    }
}
