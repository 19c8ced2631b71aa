#![allow(dead_code)]

pub mod checks;

use medvl::model::{ConnectorKind, ConnectorSettings, Encoder2DConfig, Encoder3DConfig, EncoderConfig, LmConfig, ModelConfig};
use medvl::nn::Block;
use medvl::model::{Connector, ConnectorConfig};
use medvl::rng::SeedTree;
use medvl::tensor::gradcheck::{check_fn, check_params, GradReport};
use medvl::{Module, Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const H: f64 = 1e-3;
pub const TOL: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| { let z: f64 = StandardNormal.sample(rng); std * z }).collect::<Vec<f64>>()
}

/// Spreads weights out so gradients are far from the finite-difference noise floor.
pub fn randomize<M: Module<f64>>(m: &mut M, rng: &mut ChaCha8Rng, std: f64) {
    m.visit_mut(&mut |p| {
        let n = p.data().len();
        let base = if p.name().ends_with("gamma") { 1.0 } else { 0.0 };
        let v = normal(rng, n, std).into_iter().map(|x| base + x).collect();
        p.set_data(v).unwrap();
    });
}

/// `Σ out ⊙ R` for a fixed random `R`, so every output entry matters.
pub fn weighted(out: &Tensor<f64>, r: &Tensor<f64>) -> Result<Tensor<f64>> {
    Ok(out.mul(r)?.sum())
}

fn weights_like(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(normal(rng, n, 1.0), shape).unwrap()
}

type OpFn = Box<dyn Fn(&[Tensor<f64>], &mut ChaCha8Rng) -> Box<dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>>>;

struct OpCase {
    name: &'static str,
    shapes: Vec<Vec<usize>>,
    scale: f64,
    build: OpFn,
}

fn op_cases() -> Vec<OpCase> {
    fn case(name: &'static str, shapes: &[&[usize]], scale: f64, out_shape: &'static [usize], f: fn(&[Tensor<f64>]) -> Result<Tensor<f64>>) -> OpCase {
        OpCase {
            name,
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
            scale,
            build: Box::new(move |_, rng| {
                let r = weights_like(rng, out_shape);
                Box::new(move |x| weighted(&f(x)?, &r))
            }),
        }
    }
    vec![
        case("matmul", &[&[3, 4], &[4, 5]], 1.0, &[3, 5], |x| x[0].matmul(&x[1])),
        case("linear", &[&[3, 4], &[5, 4], &[5]], 1.0, &[3, 5], |x| x[0].linear(&x[1], Some(&x[2]))),
        case("add", &[&[3, 4], &[3, 4]], 1.0, &[3, 4], |x| x[0].add(&x[1])),
        case("sub", &[&[3, 4], &[3, 4]], 1.0, &[3, 4], |x| x[0].sub(&x[1])),
        case("mul", &[&[3, 4], &[3, 4]], 1.0, &[3, 4], |x| x[0].mul(&x[1])),
        case("mul_scalar", &[&[3, 4]], 1.0, &[3, 4], |x| Ok(x[0].mul_scalar(1.7))),
        case("sum", &[&[3, 4]], 1.0, &[], |x| Ok(x[0].sum())),
        case("gelu", &[&[3, 4]], 2.0, &[3, 4], |x| Ok(x[0].gelu())),
        case("softmax_rows", &[&[3, 5]], 1.5, &[3, 5], |x| x[0].softmax(1)),
        case("softmax_cols", &[&[3, 5]], 1.5, &[3, 5], |x| x[0].softmax(0)),
        case("layer_norm", &[&[3, 6], &[6], &[6]], 1.0, &[3, 6], |x| x[0].layer_norm(&x[1], &x[2], 1e-5)),
        case("mean_axis0", &[&[3, 2, 4]], 1.0, &[2, 4], |x| x[0].mean_axis(0)),
        case("mean_axis1", &[&[3, 2, 4]], 1.0, &[3, 4], |x| x[0].mean_axis(1)),
        case("reshape", &[&[3, 4]], 1.0, &[2, 6], |x| x[0].reshape(&[2, 6])),
        case("transpose", &[&[3, 4]], 1.0, &[4, 3], |x| x[0].transpose()),
        case("narrow", &[&[5, 3]], 1.0, &[3, 3], |x| x[0].narrow(1, 3)),
        case("embedding", &[&[7, 4]], 1.0, &[5, 4], |x| Tensor::embedding(&x[0], &[1, 3, 3, 6, 0])),
        case("concat", &[&[2, 3], &[4, 3]], 1.0, &[6, 3], |x| Tensor::concat(&[&x[0], &x[1]])),
        case("cross_entropy", &[&[6]], 1.5, &[], |x| x[0].cross_entropy(2)),
        case("cross_entropy_rows", &[&[4, 6]], 1.5, &[], |x| x[0].cross_entropy_rows(&[0, 2, 3], &[1, 5, 0])),
        case("attention", &[&[3, 8], &[5, 8], &[5, 8]], 1.0, &[3, 8], |x| Tensor::attention(&x[0], &x[1], &x[2], 2, false)),
        case("attention_causal", &[&[4, 8], &[4, 8], &[4, 8]], 1.0, &[4, 8], |x| Tensor::attention(&x[0], &x[1], &x[2], 2, true)),
        case("attention_cached_causal", &[&[2, 8], &[5, 8], &[5, 8]], 1.0, &[2, 8], |x| Tensor::attention(&x[0], &x[1], &x[2], 4, true)),
    ]
}

/// Worst finite-difference report per op over `seeds` seeds.
pub fn op_gradients(seeds: u64) -> Vec<(String, GradReport)> {
    let mut out = Vec::new();
    for c in op_cases() {
        let mut worst: Option<GradReport> = None;
        for seed in 0..seeds {
            let mut r = rng(seed * 7919 + 1);
            let inputs: Vec<Vec<f64>> = c.shapes.iter().map(|s| normal(&mut r, s.iter().product(), c.scale)).collect();
            let probe: Vec<Tensor<f64>> = inputs.iter().zip(&c.shapes).map(|(d, s)| Tensor::new(d.clone(), s).unwrap()).collect();
            let f = (c.build)(&probe, &mut r);
            let rep = check_fn(&inputs, &c.shapes, f, H, None, &mut r).unwrap();
            if worst.as_ref().is_none_or(|w| rep.max_rel_err > w.max_rel_err) {
                worst = Some(rep);
            }
        }
        out.push((c.name.to_string(), worst.unwrap()));
    }
    out
}

fn check_module<M: Module<f64>>(
    m: &mut M,
    input_shape: &[usize],
    r: &mut ChaCha8Rng,
    forward: &dyn Fn(&M, &Tensor<f64>) -> Result<Tensor<f64>>,
    out_shape: &[usize],
) -> GradReport {
    let x = normal(r, input_shape.iter().product(), 1.0);
    let w = weights_like(r, out_shape);
    let xt = Tensor::new(x.clone(), input_shape).unwrap();
    let p = check_params(
        m,
        &|m: &M| m.param_tensors(),
        &|m: &mut M, i, d| m.set_param_data(i, d).unwrap(),
        |m: &M| weighted(&forward(m, &xt)?, &w),
        H,
        Some(4),
        r,
    )
    .unwrap();
    let mm: &M = m;
    let xin = check_fn(&[x], &[input_shape.to_vec()], |t| weighted(&forward(mm, &t[0])?, &w), H, Some(12), r).unwrap();
    if xin.max_rel_err > p.max_rel_err {
        xin
    } else {
        p
    }
}

/// Worst report per composite block (parameters and input) over `seeds` seeds.
pub fn block_gradients(seeds: u64) -> Vec<(String, GradReport)> {
    let mut results: Vec<(String, Option<GradReport>)> = ["encoder_block", "lm_block", "cross_attention_compressor", "mlp_projector"]
        .iter()
        .map(|n| (n.to_string(), None))
        .collect();
    let mut keep = |i: usize, rep: GradReport| {
        let slot = &mut results[i].1;
        if slot.as_ref().is_none_or(|w| rep.max_rel_err > w.max_rel_err) {
            *slot = Some(rep);
        }
    };
    for seed in 0..seeds {
        let mut r = rng(seed * 104_729 + 3);
        let tree = SeedTree::new(seed);

        let mut enc = Block::<f64>::new("encoder2d.blocks.0", 8, 2, &tree).unwrap();
        randomize(&mut enc, &mut r, 0.3);
        keep(0, check_module(&mut enc, &[5, 8], &mut r, &|b, x| b.forward(x, false, None), &[5, 8]));

        let mut lm = Block::<f64>::new("lm.blocks.0", 8, 2, &tree).unwrap();
        randomize(&mut lm, &mut r, 0.3);
        keep(1, check_module(&mut lm, &[5, 8], &mut r, &|b, x| b.forward(x, true, None), &[5, 8]));

        let cc = ConnectorConfig { kind: ConnectorKind::AttnCompress, d_in: 8, d_out: 6, l_attn: 3, heads: 2 };
        let mut comp = Connector::<f64>::new(&cc, &tree).unwrap();
        randomize(&mut comp, &mut r, 0.3);
        keep(2, check_module(&mut comp, &[2, 3, 8], &mut r, &|c, x| c.compress_attention(x), &[3, 6]));

        let mc = ConnectorConfig { kind: ConnectorKind::Mlp, ..cc };
        let mut mlp = Connector::<f64>::new(&mc, &tree).unwrap();
        randomize(&mut mlp, &mut r, 0.3);
        keep(3, check_module(&mut mlp, &[4, 8], &mut r, &|c, x| c.project_mlp(x), &[4, 6]));
    }
    results.into_iter().map(|(n, r)| (n, r.unwrap())).collect()
}

/// Small 2D model used by the integration tests.
pub fn tiny_2d() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig::TwoD(Encoder2DConfig { image_size: 32, patch_size: 8, channels: 3, depth: 1, heads: 2, width: 16, use_pos_embed: true }),
        connector: ConnectorSettings::default(),
        lm: LmConfig { width: 32, depth: 2, heads: 2, max_seq: 128, ..Default::default() },
    }
}

pub fn tiny_slices(kind: ConnectorKind) -> ModelConfig {
    let mut cfg = tiny_2d();
    let EncoderConfig::TwoD(e) = cfg.encoder.clone() else { unreachable!() };
    cfg.encoder = EncoderConfig::Slices(e);
    cfg.connector = ConnectorSettings { kind, l_attn: 16, heads: 2 };
    cfg
}

pub fn tiny_3d() -> ModelConfig {
    let mut cfg = tiny_2d();
    cfg.encoder = EncoderConfig::ThreeD(Encoder3DConfig { volume: [4, 32, 32], patch: [2, 8, 8], depth: 1, heads: 2, width: 16, use_pos_embed: true });
    cfg
}

pub fn random_ids(r: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(4..260)).collect()
}
