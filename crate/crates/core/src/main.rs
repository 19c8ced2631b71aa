use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use medvl::config::RunConfig;
use medvl::data::{decode_string, read_image, ImagePayload, MultimodalSample, Task};
use medvl::eval::{evaluate_detailed, run_ablation, AblationAxis, AblationSettings};
use medvl::rng::SeedTree;
use medvl::train::{model_from_checkpoint, run_two_stage, Checkpoint};
use medvl::{Error, MedVlm, Result};

#[derive(Parser)]
#[command(name = "medvl", version, about = "Train and evaluate desk-scale medical vision-language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic train and eval corpora.
    MakeData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-stage training; writes a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Skip the connector-only stage.
        #[arg(long)]
        one_stage: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a checkpoint on the eval split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Answer one prompt about one image file.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "")]
        prompt: String,
    },
    /// Run comparison axes and print one table per axis.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Axis name, or `all`.
        #[arg(long, default_value = "all")]
        axis: String,
        /// Also write the tables as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the tensors stored in a checkpoint.
    InspectCkpt {
        #[command(flatten)]
        common: Common,
        path: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<(RunConfig, u64)> {
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok((cfg, seed))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_model(cfg: &RunConfig, checkpoint: &Option<PathBuf>) -> Result<MedVlm> {
    let path = checkpoint.clone().unwrap_or_else(|| cfg.train.checkpoint.clone());
    model_from_checkpoint(&Checkpoint::load(&path)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::MakeData { common, out } => {
            let (cfg, seed) = load_config(&common)?;
            let dir = out.unwrap_or_else(|| cfg.synthetic.out_dir.clone());
            let seeds = SeedTree::new(seed);
            for (name, counts) in [("train", &cfg.synthetic.train), ("eval", &cfg.synthetic.eval)] {
                let corpus = medvl::data::make_synthetic_corpus(&cfg.corpus_spec(counts)?, seeds.derive(&format!("data.{name}")))?;
                corpus.audit()?;
                corpus.write(&dir, name)?;
                println!("{name}: {} samples -> {}", corpus.samples.len(), dir.join(format!("{name}.jsonl")).display());
            }
        }
        Command::Train { common, one_stage, out } => {
            let (mut cfg, seed) = load_config(&common)?;
            cfg.train.one_stage |= one_stage;
            let seeds = SeedTree::new(seed);
            let train = cfg.train_data(seed)?;
            let pretrain = cfg.pretrain_data(&train)?;
            let mut model = MedVlm::<f32>::new(&cfg.model, seeds.derive("model"))?;
            log::info!("model: {} parameters, {} image tokens", medvl::Module::num_params(&model), model.image_tokens());
            let report = run_two_stage(&mut model, &pretrain, &train, &cfg.plan(), seeds.derive("train"))?;
            if let Some(p) = &report.pretrain {
                println!("pretrain: {} steps, loss {:.4} -> {:.4}", p.losses.len(), p.first_loss().unwrap_or(f64::NAN), p.last_loss().unwrap_or(f64::NAN));
            }
            let i = &report.instruct;
            println!("instruct: {} steps, loss {:.4} -> {:.4}", i.losses.len(), i.first_loss().unwrap_or(f64::NAN), i.last_loss().unwrap_or(f64::NAN));
            let path = out.unwrap_or_else(|| cfg.train.checkpoint.clone());
            report.checkpoint.save(&path)?;
            println!("checkpoint: {}", path.display());
        }
        Command::Eval { common, checkpoint, report } => {
            let (cfg, seed) = load_config(&common)?;
            let model = load_model(&cfg, &checkpoint)?;
            let data = cfg.eval_data(seed)?;
            let (mut rep, _) = evaluate_detailed(&model, &data, cfg.eval.tasks.as_deref(), cfg.eval.max_new)?;
            rep.config_digest = medvl::eval::config_digest(&cfg);
            print!("{}", rep.to_lines());
            if let Some(path) = report.or_else(|| cfg.eval.report.clone()) {
                write_text(&path, &rep.to_json())?;
            }
        }
        Command::Generate { common, checkpoint, image, prompt } => {
            let (cfg, _) = load_config(&common)?;
            let model = load_model(&cfg, &checkpoint)?;
            let img: ImagePayload = read_image(&image, model.cfg.encoder.modality())?;
            let sample = MultimodalSample { image: Some(img), prompt, response: String::new(), task: Task::VqaShort };
            println!("{}", decode_string(&model.generate(&sample, cfg.eval.max_new)?));
        }
        Command::Ablate { common, axis, out } => {
            let (cfg, seed) = load_config(&common)?;
            let axes: Vec<AblationAxis> = if axis == "all" { AblationAxis::ALL.to_vec() } else { vec![axis.parse()?] };
            let settings = AblationSettings { seed, ..cfg.ablation.clone().unwrap_or_default() };
            let mut tables = Vec::new();
            for a in axes {
                let t = run_ablation(a, &settings)?;
                println!("{}", t.to_text());
                tables.push(t);
            }
            if let Some(path) = out {
                write_text(&path, &serde_json::to_string_pretty(&tables).expect("tables serialize"))?;
            }
        }
        Command::InspectCkpt { common: _, path } => {
            let ck = Checkpoint::load(&path)?;
            println!("stage={} seed={}", ck.header.stage, ck.header.seed);
            for t in &ck.tensors {
                println!("{} {:?}", t.name, t.shape);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
