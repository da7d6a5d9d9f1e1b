//! `mrasc train`: run one model kind over every cross-validation fold.

use std::path::{Path, PathBuf};

use clap::Args;
use mrasc::corpus::{grouped_stratified_folds, RecordingMeta};
use mrasc::dsp::store::load_store;
use mrasc::dsp::{MelSegment, ResolutionStats};
use mrasc::nn::checkpoint::save_checkpoint;
use mrasc::train::experiment::{
    fold_subsets, prepare_fold, train_model_on_fold, ExperimentConfig, ModelKind,
};
use mrasc::train::{TrainConfig, TrainError};

use super::{runtime, validation};
use crate::config::{claim_run_dir, run_dir_for, RunConfig};
use crate::CliError;

#[derive(Args)]
pub struct TrainArgs {
    /// Segment store directory (from `mrasc extract`)
    #[arg(long)]
    segments: PathBuf,
    /// Parent directory for the run
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    folds: usize,
    /// `multires` or `single:<fft>`
    #[arg(long)]
    model: String,
    /// Resolution-dropout count for the fusion model
    #[arg(long, default_value_t = 0)]
    resdrop: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Stack channel counts, e.g. 16,32,64,64
    #[arg(long, default_value = "16,32,64,64")]
    channels: String,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value = "512,1024,2048,4096,8192")]
    resolutions: String,
    #[arg(long, default_value_t = 44_100)]
    sample_rate: u32,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

/// Reconstruct per-recording metadata from the store's original segments;
/// enough structure for fold planning.
pub fn metas_from_segments(segments: &[MelSegment]) -> Vec<RecordingMeta> {
    let mut seen = std::collections::BTreeSet::new();
    let mut metas = Vec::new();
    for seg in segments.iter().filter(|s| s.augmentation == "none") {
        if seen.insert(seg.source_path.clone()) {
            metas.push(RecordingMeta {
                path: seg.source_path.clone(),
                class_label: seg.class_label.clone(),
                location_id: seg.location_id.clone(),
                duration_s: 0.0,
            });
        }
    }
    metas
}

pub fn stats_csv(stats: &[ResolutionStats]) -> String {
    let mut out = String::from("fft_size,mean,std\n");
    for s in stats {
        out.push_str(&format!("{},{:e},{:e}\n", s.fft_size, s.mean, s.std));
    }
    out
}

pub fn parse_stats_csv(text: &str) -> Result<Vec<ResolutionStats>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("fft_size,mean,std") => {}
        other => return Err(format!("bad stats header {other:?}")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let parts: Vec<&str> = l.split(',').collect();
            if parts.len() != 3 {
                return Err(format!("bad stats row `{l}`"));
            }
            Ok(ResolutionStats {
                fft_size: parts[0].parse().map_err(|_| format!("bad fft in `{l}`"))?,
                mean: parts[1].parse().map_err(|_| format!("bad mean in `{l}`"))?,
                std: parts[2].parse().map_err(|_| format!("bad std in `{l}`"))?,
            })
        })
        .collect()
}

pub fn parse_channels(s: &str) -> Result<[usize; 4], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("bad channel `{v}`")))
        .collect::<Result<_, _>>()?;
    if parts.len() != 4 {
        return Err(format!("--channels needs 4 entries, got {}", parts.len()));
    }
    Ok([parts[0], parts[1], parts[2], parts[3]])
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let kind = ModelKind::parse(&args.model)
        .ok_or_else(|| validation(format!("--model must be multires or single:<fft>, got `{}`", args.model)))?;

    let mut cfg = RunConfig::from_defaults(&[
        ("segments", args.segments.display().to_string()),
        ("folds", args.folds.to_string()),
        ("model", args.model.clone()),
        ("resdrop", args.resdrop.to_string()),
        ("seed", args.seed.to_string()),
        ("channels", args.channels.clone()),
        ("epochs", args.epochs.to_string()),
        ("lr", format!("{:e}", args.lr)),
        ("lr_min", format!("{:e}", 5e-6)),
        ("lr_decay", "0.9".into()),
        ("plateau_epochs", "3".into()),
        ("batch_size", args.batch_size.to_string()),
        ("noise_sigma", args.noise_sigma.to_string()),
        ("resolutions", args.resolutions.clone()),
        ("sample_rate", args.sample_rate.to_string()),
    ]);
    if let Some(path) = &args.config {
        cfg.merge_file(path).map_err(CliError::Validation)?;
    }

    let folds: usize = cfg.parse("folds").map_err(CliError::Validation)?;
    let seed: u64 = cfg.parse("seed").map_err(CliError::Validation)?;
    let channels = parse_channels(cfg.require("channels").map_err(CliError::Validation)?)
        .map_err(CliError::Validation)?;
    let ffts = cfg.parse_list("resolutions").map_err(CliError::Validation)?;
    let sample_rate: u32 = cfg.parse("sample_rate").map_err(CliError::Validation)?;

    let segments = load_store(&args.segments, sample_rate).map_err(validation)?;
    let metas = metas_from_segments(&segments);
    if metas.is_empty() {
        return Err(validation("store holds no original segments"));
    }
    let mut class_names: Vec<String> = metas.iter().map(|m| m.class_label.clone()).collect();
    class_names.sort();
    class_names.dedup();
    cfg.set("classes", class_names.join(","));

    let plan = grouped_stratified_folds(&metas, folds, seed).map_err(validation)?;

    let exp = ExperimentConfig {
        seed,
        sample_rate,
        fold_count: folds,
        ffts,
        channels,
        resdrop_k: cfg.parse("resdrop").map_err(CliError::Validation)?,
        train: TrainConfig {
            lr0: cfg.parse("lr").map_err(CliError::Validation)?,
            lr_min: cfg.parse("lr_min").map_err(CliError::Validation)?,
            lr_decay: cfg.parse("lr_decay").map_err(CliError::Validation)?,
            plateau_epochs: cfg.parse("plateau_epochs").map_err(CliError::Validation)?,
            batch_size: cfg.parse("batch_size").map_err(CliError::Validation)?,
            max_epochs: cfg.parse("epochs").map_err(CliError::Validation)?,
            noise_sigma: cfg.parse("noise_sigma").map_err(CliError::Validation)?,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };

    let run_dir = run_dir_for(&args.out, "train", &cfg);
    claim_run_dir(&run_dir, &cfg, args.force).map_err(CliError::Validation)?;
    println!("run directory: {}", run_dir.display());

    let mut metrics = String::from("fold,model,raw_acc,grouped_acc\n");
    let mut grouped_accs = Vec::new();
    let mut raw_accs = Vec::new();
    for fold in 0..folds {
        let subsets = fold_subsets(&segments, &plan, fold);
        let prepared = prepare_fold(fold, &subsets).map_err(|e| match e {
            mrasc::train::experiment::ExperimentError::Train(TrainError::IncompleteTuples(m)) => {
                validation(format!("incomplete store: {m}"))
            }
            other => runtime(other),
        })?;
        let outcome = train_model_on_fold(&prepared, &exp, &kind, &class_names).map_err(
            |e| match e {
                mrasc::train::experiment::ExperimentError::Train(
                    TrainError::IncompleteTuples(m),
                ) => validation(format!("incomplete store: {m}")),
                other => runtime(other),
            },
        )?;

        write_fold_outputs(&run_dir, fold, &outcome, &prepared.stats, &class_names)
            .map_err(runtime)?;
        println!(
            "fold {fold}: raw {:.4}, grouped {:.4}",
            outcome.raw.accuracy, outcome.grouped.accuracy
        );
        metrics.push_str(&format!(
            "{fold},{},{:.6},{:.6}\n",
            kind.name(),
            outcome.raw.accuracy,
            outcome.grouped.accuracy
        ));
        raw_accs.push(outcome.raw.accuracy);
        grouped_accs.push(outcome.grouped.accuracy);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    metrics.push_str(&format!(
        "mean,{},{:.6},{:.6}\n",
        kind.name(),
        mean(&raw_accs),
        mean(&grouped_accs)
    ));
    metrics.push_str(&format!(
        "std,{},{:.6},{:.6}\n",
        kind.name(),
        std(&raw_accs),
        std(&grouped_accs)
    ));
    std::fs::write(run_dir.join("metrics.csv"), &metrics).map_err(runtime)?;
    println!(
        "grouped accuracy: mean {:.4}, std {:.4}",
        mean(&grouped_accs),
        std(&grouped_accs)
    );
    Ok(())
}

fn write_fold_outputs(
    run_dir: &Path,
    fold: usize,
    outcome: &mrasc::train::experiment::FoldModelOutcome,
    stats: &[ResolutionStats],
    class_names: &[String],
) -> Result<(), Box<dyn std::error::Error>> {
    let mut model = outcome.model.clone();
    let entries = model.checkpoint_entries();
    let named: Vec<(String, &mrasc::nn::Param<f32>)> =
        entries.iter().map(|(n, p)| (n.clone(), p)).collect();
    save_checkpoint(run_dir.join(format!("fold{fold}.mrw")), &named)?;
    std::fs::write(
        run_dir.join(format!("history_f{fold}.csv")),
        outcome.history.to_csv(),
    )?;
    std::fs::write(run_dir.join(format!("stats_f{fold}.csv")), stats_csv(stats))?;
    std::fs::write(
        run_dir.join(format!("confusion_f{fold}.csv")),
        mrasc::train::experiment::confusion_csv(class_names, &outcome.grouped.confusion),
    )?;
    Ok(())
}
