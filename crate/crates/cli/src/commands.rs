use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use mhnn::corpus::io::{group_by_user, load_user_dir, read_jsonl, read_posts, read_threads, write_jsonl};
use mhnn::corpus::{RiskLabel, ThreadInstance, UserLabel, UserRecord};
use mhnn::dataset::{build_dataset as build, Annotations};
use mhnn::gradsuite::{layer_suite, model_suite, render};
use mhnn::models::{top_phrases, DepressionModel, RiskModel};
use mhnn::nn::Checkpoint;
use mhnn::seed::SeedStream;
use mhnn::train::synth::{synth_depression, synth_raw, synth_risk};
use mhnn::train::{
    binary_metrics, clpsych_metrics, predict_threads, predict_users, train_depression, train_risk, EpochLog,
    SelectionConfig, TrainOutcome,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{selection, FileConfig};
use crate::{Common, SelectionArgs, SynthKind, TaskKind, Usage};

struct Ctx {
    cfg: FileConfig,
    seed: Option<u64>,
    out: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> anyhow::Result<Self> {
        let cfg = FileConfig::load(common.config.as_deref())?;
        let seed = common.seed.or(cfg.seed);
        std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
        Ok(Self {
            cfg,
            seed,
            out: common.out.clone(),
        })
    }

    fn required_seed(&self) -> anyhow::Result<u64> {
        self.seed
            .ok_or_else(|| Usage("this command is stochastic; pass --seed or set `seed` in the config".into()).into())
    }

    fn selection(&self, args: &SelectionArgs) -> SelectionConfig {
        selection(self.cfg.depression.selection, args.n_post, args.n_term, args.strategy)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<()> {
        let path = self.out.join(name);
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))
    }

    fn write_rows<T: Serialize>(&self, name: &str, rows: &[T]) -> anyhow::Result<()> {
        Ok(write_jsonl(&self.out.join(name), rows)?)
    }
}

enum Loaded {
    Depression(DepressionModel),
    Risk(RiskModel),
}

fn load_model(path: &Path) -> anyhow::Result<(Checkpoint, Loaded)> {
    let ck = Checkpoint::load(path)?;
    let model = if ck.model_kind == "depression" {
        Loaded::Depression(DepressionModel::from_checkpoint(&ck)?)
    } else if ck.model_kind.starts_with("risk:") {
        Loaded::Risk(RiskModel::from_checkpoint(&ck)?)
    } else {
        bail!("{} holds an unknown model kind {:?}", path.display(), ck.model_kind);
    };
    Ok((ck, model))
}

pub fn build_dataset(common: &Common, corpus: &Path, annotations: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let ctx = Ctx::new(common)?;
    let seed = ctx.required_seed()?;
    let ann_path = annotations
        .or_else(|| ctx.cfg.dataset.annotations.clone())
        .ok_or_else(|| Usage("pass --annotations or set dataset.annotations".into()))?;
    let posts = read_posts(corpus)?;
    let ann = Annotations::load(&ann_path)?;
    let built = build(posts, &ann, &ctx.cfg.dataset, SeedStream::new(seed))?;
    built.write(&ctx.out)?;
    print!("{}", built.report.render());
    Ok(ExitCode::SUCCESS)
}

pub fn synth(common: &Common, kind: SynthKind) -> anyhow::Result<ExitCode> {
    let ctx = Ctx::new(common)?;
    let seed = ctx.required_seed()?;
    let s = &ctx.cfg.synth;
    match kind {
        SynthKind::Depression => {
            let spec = mhnn::train::synth::DepressionSynthSpec { seed, ..s.depression.clone() };
            let data = synth_depression(&spec)?;
            data.write(&ctx.out)?;
            ctx.write_json("spec.json", &spec)?;
            for (name, users) in ["train", "validation", "test"].iter().zip(&data.splits) {
                let pos = users.iter().filter(|u| u.label == UserLabel::Diagnosed).count();
                println!("{name:<12} {pos:>5} diagnosed {:>6} control", users.len() - pos);
            }
        }
        SynthKind::Risk => {
            let spec = mhnn::train::synth::RiskSynthSpec { seed, ..s.risk.clone() };
            let data = synth_risk(&spec)?;
            data.write(&ctx.out)?;
            ctx.write_json("spec.json", &spec)?;
            println!("train {} threads, test {} threads", data.train.len(), data.test.len());
        }
        SynthKind::Raw => {
            let spec = mhnn::train::synth::RawSynthSpec { seed, ..s.raw.clone() };
            let data = synth_raw(&spec)?;
            data.write(&ctx.out)?;
            ctx.write_json("spec.json", &spec)?;
            println!("{} posts, {} annotated claims", data.posts.len(), data.annotations.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_epoch(log: &EpochLog) {
    let score = ["f1", "non_green_f1"]
        .iter()
        .find_map(|k| log.metrics.get(*k).and_then(Value::as_f64).map(|v| format!("  {k} {v:.4}")))
        .unwrap_or_default();
    println!("epoch {:>3}  {:<10}  loss {:.4}{score}", log.epoch, log.split, log.loss);
}

pub fn train(common: &Common, task: TaskKind, data: &Path, epochs: Option<usize>, sel: &SelectionArgs) -> anyhow::Result<ExitCode> {
    let ctx = Ctx::new(common)?;
    let seed = ctx.required_seed()?;
    let seeds = SeedStream::new(seed);
    let on_epoch = |log: &EpochLog| print_epoch(log);
    let (ck, outcome, settings): (Checkpoint, TrainOutcome, Value) = match task {
        TaskKind::Depression => {
            let mut t = ctx.cfg.depression.clone();
            t.selection = ctx.selection(sel);
            if let Some(e) = epochs {
                t.train.epochs = e;
            }
            let train_users = load_user_dir(&data.join("train"))?;
            let val_users = load_user_dir(&data.join("validation"))?;
            let (model, outcome) = train_depression(&train_users, &val_users, &t, &seeds, on_epoch)?;
            (model.to_checkpoint(seed, outcome.best_epoch as u64), outcome, serde_json::to_value(&t)?)
        }
        TaskKind::Risk(variant) => {
            let mut t = ctx.cfg.risk.task(variant);
            if let Some(e) = epochs {
                t.train.epochs = e;
            }
            let encoder = t.model.encoder.build()?;
            let abbr = ctx.cfg.risk.abbreviations()?;
            let threads = read_threads(&data.join("train.jsonl"))?;
            let val_path = data.join("validation.jsonl");
            let val = if val_path.exists() { Some(read_threads(&val_path)?) } else { None };
            let (model, outcome) = train_risk(&threads, val.as_deref(), &t, encoder.as_ref(), &abbr, &seeds, on_epoch)?;
            (model.to_checkpoint(seed, outcome.best_epoch as u64), outcome, serde_json::to_value(&t)?)
        }
    };
    ck.save(&ctx.out.join("checkpoint.json"))?;
    ctx.write_rows("epochs.jsonl", &outcome.logs)?;
    ctx.write_json(
        "train.json",
        &json!({
            "model_kind": ck.model_kind,
            "seed": seed,
            "best_epoch": outcome.best_epoch,
            "best_score": outcome.best_score,
            "task": settings,
        }),
    )?;
    println!("best epoch {} ; checkpoint {}", outcome.best_epoch, ctx.out.join("checkpoint.json").display());
    Ok(ExitCode::SUCCESS)
}

fn depression_users(posts_path: &Path) -> anyhow::Result<Vec<UserRecord>> {
    group_by_user(read_posts(posts_path)?)
        .into_iter()
        .map(|(id, posts)| Ok(UserRecord::new(id, posts, UserLabel::Control, None)?))
        .collect()
}

pub fn evaluate(common: &Common, checkpoint: &Path, data: &Path, split: &str, sel: &SelectionArgs) -> anyhow::Result<ExitCode> {
    let ctx = Ctx::new(common)?;
    let (ck, model) = load_model(checkpoint)?;
    match model {
        Loaded::Depression(m) => {
            let users = load_user_dir(&data.join(split))?;
            let preds = predict_users(&m, &users, &ctx.selection(sel), true)?;
            let gold: Vec<UserLabel> = users.iter().map(|u| u.label).collect();
            let pred: Vec<UserLabel> = preds.iter().map(|p| p.pred).collect();
            let metrics = binary_metrics(&gold, &pred, &UserLabel::Diagnosed)?;
            ctx.write_rows("predictions.jsonl", &preds)?;
            ctx.write_json("report.json", &json!({"model_kind": ck.model_kind, "split": split, "metrics": metrics}))?;
            print!("{}", metrics.render());
        }
        Loaded::Risk(m) => {
            let encoder = m.config.encoder.build()?;
            let threads = read_threads(&data.join(format!("{split}.jsonl")))?;
            let preds = predict_threads(&m, &threads, encoder.as_ref(), &ctx.cfg.risk.abbreviations()?)?;
            let gold = preds
                .iter()
                .map(|p| p.gold.with_context(|| format!("thread {} has no label", p.post_id)))
                .collect::<anyhow::Result<Vec<RiskLabel>>>()?;
            let pred: Vec<RiskLabel> = preds.iter().map(|p| p.pred).collect();
            let report = clpsych_metrics(&gold, &pred)?;
            ctx.write_rows("predictions.jsonl", &preds)?;
            ctx.write_json("report.json", &json!({"model_kind": ck.model_kind, "split": split, "report": report}))?;
            print!("{}", report.render());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn labels<T: serde::de::DeserializeOwned>(rows: &[Value]) -> Option<(Vec<T>, Vec<T>)> {
    let pick = |r: &Value, k: &str| r.get(k).cloned().and_then(|v| serde_json::from_value::<T>(v).ok());
    rows.iter().map(|r| Some((pick(r, "gold")?, pick(r, "pred")?))).collect::<Option<Vec<_>>>().map(|v| v.into_iter().unzip())
}

pub fn evaluate_predictions(common: &Common, path: &Path) -> anyhow::Result<ExitCode> {
    let ctx = Ctx::new(common)?;
    let rows: Vec<Value> = read_jsonl(path)?;
    if rows.is_empty() {
        bail!("{} holds no predictions", path.display());
    }
    if let Some((gold, pred)) = labels::<RiskLabel>(&rows) {
        let report = clpsych_metrics(&gold, &pred)?;
        ctx.write_json("report.json", &json!({"predictions": path, "report": report}))?;
        print!("{}", report.render());
    } else if let Some((gold, pred)) = labels::<UserLabel>(&rows) {
        let metrics = binary_metrics(&gold, &pred, &UserLabel::Diagnosed)?;
        ctx.write_json("report.json", &json!({"predictions": path, "metrics": metrics}))?;
        print!("{}", metrics.render());
    } else {
        bail!("{}: every row needs `gold` and `pred` risk or user labels", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn predict(common: &Common, checkpoint: &Path, input: &Path, sel: &SelectionArgs) -> anyhow::Result<ExitCode> {
    let ctx = Ctx::new(common)?;
    let (_, model) = load_model(checkpoint)?;
    let n = match model {
        Loaded::Depression(m) => {
            let users = depression_users(input)?;
            let preds = predict_users(&m, &users, &ctx.selection(sel), false)?;
            ctx.write_rows("predictions.jsonl", &preds)?;
            preds.len()
        }
        Loaded::Risk(m) => {
            let encoder = m.config.encoder.build()?;
            let threads: Vec<ThreadInstance> = read_threads(input)?;
            let preds = predict_threads(&m, &threads, encoder.as_ref(), &ctx.cfg.risk.abbreviations()?)?;
            ctx.write_rows("predictions.jsonl", &preds)?;
            preds.len()
        }
    };
    println!("{n} predictions written to {}", ctx.out.join("predictions.jsonl").display());
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(common: &Common, task: &str) -> anyhow::Result<ExitCode> {
    let ctx = Ctx::new(common)?;
    let seed = ctx.seed.unwrap_or(0);
    let g = &ctx.cfg.gradcheck;
    let mut rows = Vec::new();
    if matches!(task, "all" | "layers") {
        rows.extend(layer_suite(seed, g.configs));
    }
    let (dep, risk) = (matches!(task, "all" | "depression"), matches!(task, "all" | "risk"));
    if dep || risk {
        rows.extend(model_suite(seed, g.model_configs, dep, risk)?);
    }
    ctx.write_json("gradcheck.json", &rows)?;
    print!("{}", render(&rows));
    Ok(if rows.iter().all(|r| r.passed()) { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn explain(common: &Common, checkpoint: &Path, data: &Path, split: &str, m: usize, sel: &SelectionArgs) -> anyhow::Result<ExitCode> {
    let ctx = Ctx::new(common)?;
    let (_, model) = load_model(checkpoint)?;
    let Loaded::Depression(model) = model else {
        bail!("phrase explanations need a depression checkpoint");
    };
    let users: Vec<UserRecord> = load_user_dir(&data.join(split))?
        .into_iter()
        .filter(|u| u.label == UserLabel::Diagnosed)
        .collect();
    let phrases = top_phrases(&model, &users, &ctx.selection(sel), m)?;
    ctx.write_json("phrases.json", &phrases)?;
    println!("{:>8}  {:<12} {:<14} phrase", "score", "user", "post");
    for p in &phrases {
        println!("{:>8.4}  {:<12} {:<14} {}", p.score, p.user_id, p.post_id, p.window);
    }
    Ok(ExitCode::SUCCESS)
}
