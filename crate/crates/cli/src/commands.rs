//! Subcommand implementations.

use std::path::{Path, PathBuf};

use serde::Serialize;

use jamwatch_core::bench::time_pipeline;
use jamwatch_core::detector::{
    decide, default_grid, score, sweep, train, zero_error_interval, Hypothesis, ScoreKind,
    TrainLoss,
};
use jamwatch_core::error::{Error, Result};
use jamwatch_core::io;
use jamwatch_core::iqsim::{frame_seed, gen_corpus, IQFrame, Label, LabelCounts};
use jamwatch_core::models::{self, ModelDescriptor, ModelKind};
use jamwatch_core::nn::Network;
use jamwatch_core::spectrogram::{build_spectrogram, neg_log, Spectrogram};

use crate::config::{ExperimentConfig, Scale};

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

fn guard_overwrite(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Argument(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn split_counts(cfg: &ExperimentConfig, split: &str) -> LabelCounts {
    match split {
        "train" => cfg.splits.train,
        "val" => cfg.splits.val,
        _ => cfg.splits.test,
    }
}

/// Per-split corpus seeds derive from the experiment seed and the split
/// position, so splits never share frames.
fn split_seed(cfg: &ExperimentConfig, split: &str) -> u64 {
    let salt = match split {
        "train" => 1,
        "val" => 2,
        _ => 3,
    };
    frame_seed(cfg.seed, salt)
}

fn echo_config(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    io::write_json(&cfg.out_dir.join("config.json"), cfg)
}

pub fn simulate(cfg: &ExperimentConfig, layout: io::CorpusLayout, force: bool) -> Result<()> {
    let iq_dir = cfg.out_dir.join("iq");
    guard_overwrite(&iq_dir, force)?;
    echo_config(cfg)?;
    let hash = cfg.hash();
    for split in SPLITS {
        let counts = split_counts(cfg, split);
        let (frames, manifest) = gen_corpus(&cfg.scenario, counts, split_seed(cfg, split))?;
        io::write_iq_corpus(
            &iq_dir.join(split),
            &frames,
            &manifest,
            layout,
            Some(hash.clone()),
        )?;
        println!(
            "simulate: {split}: {} frames (empty {}, active {}, jammed {})",
            counts.total(),
            counts.empty,
            counts.active,
            counts.jammed
        );
    }
    Ok(())
}

fn frames_to_dataset(cfg: &ExperimentConfig, frames: &[IQFrame]) -> Result<Vec<Spectrogram>> {
    frames
        .iter()
        .map(|f| {
            let s = build_spectrogram(f, cfg.spectrogram.window, cfg.spectrogram.rows)?;
            neg_log(&s, cfg.spectrogram.epsilon)
        })
        .collect()
}

pub fn spectrogram(cfg: &ExperimentConfig, force: bool) -> Result<()> {
    let data_dir = cfg.out_dir.join("data");
    guard_overwrite(&data_dir, force)?;
    std::fs::create_dir_all(&data_dir)?;
    echo_config(cfg)?;
    let hash = cfg.hash();
    for split in SPLITS {
        let iq_dir = cfg.out_dir.join("iq").join(split);
        let (frames, _) = io::read_iq_corpus(&iq_dir)?;
        let specs = frames_to_dataset(cfg, &frames)?;
        let path = data_dir.join(format!("{split}.sgd"));
        io::write_dataset(&path, &specs, Some(hash.clone()))?;
        println!(
            "spectrogram: {split}: {} matrices of {}x{} -> {}",
            specs.len(),
            cfg.spectrogram.rows,
            cfg.spectrogram.window,
            path.display()
        );
    }
    Ok(())
}

fn descriptor_for(cfg: &ExperimentConfig) -> Result<ModelDescriptor> {
    let (rows, cols) = (cfg.spectrogram.rows, cfg.spectrogram.window);
    match cfg.scale {
        Scale::Full => match cfg.model_kind {
            ModelKind::Cae => models::cae_descriptor(rows, cols, cfg.seed),
            ModelKind::Cnn => models::cnn_descriptor(rows, cols, cfg.seed),
        },
        Scale::Desk => models::scaled_descriptor(cfg.model_kind, rows, cols, cfg.seed),
    }
}

#[derive(Serialize)]
struct TrainSummary {
    model_kind: ModelKind,
    best_epoch: usize,
    stopped_epoch: usize,
    best_val_loss: f64,
    epochs_run: usize,
    config_hash: String,
}

pub fn train_cmd(cfg: &ExperimentConfig, force: bool) -> Result<()> {
    let ckpt = cfg.out_dir.join("model.nnc");
    guard_overwrite(&ckpt, force)?;
    echo_config(cfg)?;
    let data_dir = cfg.out_dir.join("data");
    let (train_set, _) = io::read_dataset(&data_dir.join("train.sgd"))?;
    let (val_set, _) = io::read_dataset(&data_dir.join("val.sgd"))?;

    let descriptor = descriptor_for(cfg)?;
    let mut net = descriptor.build()?;
    let loss = match cfg.model_kind {
        ModelKind::Cae => TrainLoss::MseSelfTarget,
        ModelKind::Cnn => TrainLoss::BceLabels,
    };
    println!(
        "train: {} ({:?} scale), {} parameters, {} train / {} val samples",
        cfg.model_kind.as_str(),
        cfg.scale,
        net.param_count(),
        train_set.len(),
        val_set.len()
    );
    let report = train(&mut net, &train_set, &val_set, &cfg.training, loss)?;
    println!(
        "train: stopped at epoch {} (best epoch {}, val loss {:.6})",
        report.stopped_epoch, report.best_epoch, report.best_val_loss
    );

    let hash = cfg.hash();
    io::save_checkpoint(&ckpt, &net, &descriptor, Some(hash.clone()))?;
    io::write_loss_csv(&cfg.out_dir.join("loss.csv"), &report)?;
    io::write_json(
        &cfg.out_dir.join("train_summary.json"),
        &TrainSummary {
            model_kind: cfg.model_kind,
            best_epoch: report.best_epoch,
            stopped_epoch: report.stopped_epoch,
            best_val_loss: report.best_val_loss,
            epochs_run: report.epochs.len(),
            config_hash: hash,
        },
    )?;
    println!("train: checkpoint -> {}", ckpt.display());
    Ok(())
}

fn scores_by_hypothesis(
    net: &Network,
    kind: ModelKind,
    set: &[Spectrogram],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut h0 = Vec::new();
    let mut h1 = Vec::new();
    for s in set {
        let v = score(net, kind, s)?;
        match s.label {
            Some(Label::Jammed) => h1.push(v),
            Some(_) => h0.push(v),
            None => {
                return Err(Error::Argument(
                    "evaluation data must carry labels".into(),
                ))
            }
        }
    }
    Ok((h0, h1))
}

#[derive(Serialize)]
struct EvalSummary {
    model_kind: ModelKind,
    score_kind: ScoreKind,
    n_trusted: usize,
    n_jammed: usize,
    mean_trusted_score: f64,
    mean_jammed_score: f64,
    mean_score_ratio: f64,
    max_trusted_score: f64,
    min_jammed_score: f64,
    zero_error_interval: Option<(f64, f64)>,
    tau: Option<f64>,
    accuracy_at_tau: Option<f64>,
    config_hash: String,
}

pub struct EvalOpts {
    pub checkpoint: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub tau: Option<f64>,
    /// Calibrate tau as max validation score times this margin.
    pub calibrate_margin: Option<f64>,
    pub force: bool,
}

pub fn eval(cfg: &ExperimentConfig, opts: &EvalOpts) -> Result<()> {
    let sweep_path = cfg.out_dir.join("sweep.csv");
    guard_overwrite(&sweep_path, opts.force)?;
    echo_config(cfg)?;
    let ckpt = opts
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("model.nnc"));
    let data_path = opts
        .data
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("data").join("test.sgd"));
    let (net, header) = io::load_checkpoint(&ckpt)?;
    let kind = header.descriptor.kind;
    let (test_set, _) = io::read_dataset(&data_path)?;

    let (h0, h1) = scores_by_hypothesis(&net, kind, &test_set)?;
    let score_kind = ScoreKind::for_model(kind);
    let grid = default_grid(&h0, &h1, score_kind);
    let curve = sweep(&h0, &h1, &grid, score_kind)?;
    io::write_sweep_csv(&sweep_path, &curve)?;

    let tau = match (opts.tau, opts.calibrate_margin) {
        (Some(t), _) => Some(t),
        (None, Some(margin)) => {
            let (val_set, _) = io::read_dataset(&cfg.out_dir.join("data").join("val.sgd"))?;
            let mut worst = f64::NEG_INFINITY;
            for s in &val_set {
                worst = worst.max(score(&net, kind, s)?);
            }
            Some(worst * margin)
        }
        (None, None) => match kind {
            ModelKind::Cnn => Some(0.5),
            ModelKind::Cae => None,
        },
    };
    let accuracy = tau.map(|t| {
        let hits = h0.iter().filter(|&&s| decide(s, t) == Hypothesis::H0).count()
            + h1.iter().filter(|&&s| decide(s, t) == Hypothesis::H1).count();
        hits as f64 / (h0.len() + h1.len()) as f64
    });

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let summary = EvalSummary {
        model_kind: kind,
        score_kind,
        n_trusted: h0.len(),
        n_jammed: h1.len(),
        mean_trusted_score: mean(&h0),
        mean_jammed_score: mean(&h1),
        mean_score_ratio: mean(&h1) / mean(&h0),
        max_trusted_score: curve.max_h0_score,
        min_jammed_score: curve.min_h1_score,
        zero_error_interval: zero_error_interval(&curve),
        tau,
        accuracy_at_tau: accuracy,
        config_hash: cfg.hash(),
    };
    io::write_json(&cfg.out_dir.join("eval_summary.json"), &summary)?;
    println!(
        "eval: {} trusted / {} jammed, mean score ratio {:.2}",
        summary.n_trusted, summary.n_jammed, summary.mean_score_ratio
    );
    match summary.zero_error_interval {
        Some((lo, hi)) => println!("eval: zero-error threshold interval ({lo:.6e}, {hi:.6e}]"),
        None => println!("eval: no zero-error threshold interval"),
    }
    if let (Some(t), Some(a)) = (tau, accuracy) {
        println!("eval: accuracy {a:.4} at tau {t:.6e}");
    }
    println!("eval: sweep -> {}", sweep_path.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchSummary {
    model_kind: ModelKind,
    trials: usize,
    p50_ms: f64,
    p95_ms: f64,
    p99_ms: f64,
    config_hash: String,
}

pub struct BenchOpts {
    pub checkpoint: Option<PathBuf>,
    pub iq_dir: Option<PathBuf>,
    pub trials: usize,
    pub pool: usize,
    pub tau: f64,
    pub force: bool,
}

pub fn bench(cfg: &ExperimentConfig, opts: &BenchOpts) -> Result<()> {
    let latency_path = cfg.out_dir.join("latency.csv");
    guard_overwrite(&latency_path, opts.force)?;
    echo_config(cfg)?;
    let ckpt = opts
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("model.nnc"));
    let (net, header) = io::load_checkpoint(&ckpt)?;
    let kind = header.descriptor.kind;

    // Frame pool: recorded corpus if given, otherwise synthesized frames
    // cycled per trial (generation happens outside the timed section).
    let frames: Vec<IQFrame> = match &opts.iq_dir {
        Some(dir) => io::read_iq_corpus(dir)?.0,
        None => {
            let labels = [Label::EmptyChannel, Label::ActiveChannel, Label::Jammed];
            (0..opts.pool.max(1))
                .map(|i| {
                    jamwatch_core::iqsim::gen_frame(
                        &cfg.scenario,
                        labels[i % labels.len()],
                        frame_seed(cfg.seed, 1000 + i),
                    )
                })
                .collect::<Result<_>>()?
        }
    };
    if frames.is_empty() {
        return Err(Error::Argument("bench needs at least one frame".into()));
    }

    println!(
        "bench: {} ({} parameters), {} trials over {} frames",
        kind.as_str(),
        net.param_count(),
        opts.trials,
        frames.len()
    );
    let report = time_pipeline(
        &net,
        kind,
        |t| Ok(frames[t % frames.len()].clone()),
        opts.trials,
        cfg.spectrogram.window,
        cfg.spectrogram.rows,
        cfg.spectrogram.epsilon,
        opts.tau,
    )?;
    io::write_latency_csv(&latency_path, &report)?;
    io::write_json(
        &cfg.out_dir.join("bench_summary.json"),
        &BenchSummary {
            model_kind: kind,
            trials: opts.trials,
            p50_ms: report.p50,
            p95_ms: report.p95,
            p99_ms: report.p99,
            config_hash: cfg.hash(),
        },
    )?;
    println!(
        "bench: p50 {:.3} ms, p95 {:.3} ms, p99 {:.3} ms",
        report.p50, report.p95, report.p99
    );
    println!(
        "bench: informational reference points from the original lab \
         workstation (Xeon w7-2495X): cae p95 48 ms, cnn p95 46 ms"
    );
    println!("bench: latency -> {}", latency_path.display());
    Ok(())
}

pub fn describe(cfg: &ExperimentConfig, checkpoint: Option<PathBuf>) -> Result<()> {
    let ckpt = checkpoint.unwrap_or_else(|| cfg.out_dir.join("model.nnc"));
    let (net, header) = io::load_checkpoint(&ckpt)?;
    println!(
        "{} checkpoint {} (seed {})",
        header.descriptor.kind.as_str(),
        ckpt.display(),
        header.descriptor.seed
    );
    if let Some(hash) = &header.config_hash {
        println!("config hash: {hash}");
    }
    print!("{}", models::describe(&net));
    Ok(())
}
