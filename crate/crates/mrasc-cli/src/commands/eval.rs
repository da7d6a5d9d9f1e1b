//! `mrasc eval`: evaluate trained runs on their test folds.

use std::path::{Path, PathBuf};

use clap::Args;
use mrasc::corpus::grouped_stratified_folds;
use mrasc::dsp::store::load_store;
use mrasc::dsp::{apply_standardization, MelSegment};
use mrasc::model::MultiResModel;
use mrasc::nn::checkpoint::load_checkpoint;
use mrasc::train::experiment::{
    confusion_csv, fold_subsets, model_config, ExperimentConfig, ModelKind,
};
use mrasc::train::{
    build_samples, ensemble_grouped_single, evaluate_grouped, evaluate_raw, SampleSet,
};

use super::{runtime, validation};
use crate::config::{RunConfig, RUNCONFIG_NAME};
use crate::CliError;

#[derive(Args)]
pub struct EvalArgs {
    /// Run directory; ensemble mode takes five comma-separated single runs
    #[arg(long, value_delimiter = ',')]
    run: Vec<PathBuf>,
    /// raw | grouped | ensemble
    #[arg(long)]
    mode: String,
    /// Segment store (defaults to the one recorded in the run config)
    #[arg(long)]
    segments: Option<PathBuf>,
    /// Output directory (defaults to the first run directory)
    #[arg(long)]
    out: Option<PathBuf>,
}

struct LoadedRun {
    dir: PathBuf,
    cfg: RunConfig,
    kind: ModelKind,
}

fn load_run(dir: &Path) -> Result<LoadedRun, CliError> {
    let marker = dir.join(RUNCONFIG_NAME);
    if !marker.exists() {
        return Err(validation(format!("no run at {}", dir.display())));
    }
    let mut cfg = RunConfig::default();
    cfg.merge_file(&marker).map_err(CliError::Validation)?;
    let model = cfg.require("model").map_err(CliError::Validation)?;
    let kind = ModelKind::parse(model)
        .ok_or_else(|| validation(format!("run config has bad model `{model}`")))?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        cfg,
        kind,
    })
}

fn test_set_for_fold(
    run: &LoadedRun,
    segments: &[MelSegment],
    class_names: &[String],
    fold: usize,
    folds: usize,
    seed: u64,
    ffts: &[usize],
) -> Result<SampleSet, CliError> {
    let metas = super::train::metas_from_segments(segments);
    let plan = grouped_stratified_folds(&metas, folds, seed).map_err(validation)?;
    let subsets = fold_subsets(segments, &plan, fold);
    let stats_text = std::fs::read_to_string(run.dir.join(format!("stats_f{fold}.csv")))
        .map_err(|e| runtime(format!("missing fold stats: {e}")))?;
    let stats = super::train::parse_stats_csv(&stats_text).map_err(CliError::Validation)?;
    let mut test_segs = subsets.test;
    apply_standardization(&mut test_segs, &stats).map_err(validation)?;
    build_samples(&test_segs, ffts, class_names).map_err(validation)
}

fn restore_model(
    run: &LoadedRun,
    fold: usize,
    exp: &ExperimentConfig,
    classes: usize,
) -> Result<MultiResModel<f32>, CliError> {
    let mcfg = model_config(&run.kind, exp, classes);
    let mut model = MultiResModel::new(mcfg, 0).map_err(runtime)?;
    let entries = load_checkpoint(run.dir.join(format!("fold{fold}.mrw"))).map_err(runtime)?;
    model.restore(&entries).map_err(validation)?;
    Ok(model)
}

pub fn run(args: EvalArgs) -> Result<(), CliError> {
    if args.run.is_empty() {
        return Err(validation("--run requires at least one run directory"));
    }
    let mode = args.mode.as_str();
    if !["raw", "grouped", "ensemble"].contains(&mode) {
        return Err(validation(format!(
            "--mode must be raw, grouped or ensemble, got `{mode}`"
        )));
    }
    let runs: Vec<LoadedRun> = args
        .run
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<_, _>>()?;
    if mode == "ensemble" {
        if runs.len() < 2 || !runs.iter().all(|r| matches!(r.kind, ModelKind::Single(_))) {
            return Err(validation(
                "ensemble mode requires multiple single-resolution runs",
            ));
        }
    } else if runs.len() != 1 {
        return Err(validation(format!("--mode {mode} takes exactly one run")));
    }

    let head = &runs[0];
    for other in &runs[1..] {
        for key in ["folds", "seed", "segments", "classes", "sample_rate"] {
            if head.cfg.get(key) != other.cfg.get(key) {
                return Err(validation(format!(
                    "run {} disagrees with {} on `{key}`",
                    other.dir.display(),
                    head.dir.display()
                )));
            }
        }
    }

    let store_dir = match &args.segments {
        Some(dir) => dir.clone(),
        None => PathBuf::from(head.cfg.require("segments").map_err(CliError::Validation)?),
    };
    let folds: usize = head.cfg.parse("folds").map_err(CliError::Validation)?;
    let seed: u64 = head.cfg.parse("seed").map_err(CliError::Validation)?;
    let sample_rate: u32 = head.cfg.parse("sample_rate").map_err(CliError::Validation)?;
    let class_names: Vec<String> = head
        .cfg
        .require("classes")
        .map_err(CliError::Validation)?
        .split(',')
        .map(str::to_string)
        .collect();
    let all_ffts = head.cfg.parse_list("resolutions").map_err(CliError::Validation)?;
    let channels =
        super::train::parse_channels(head.cfg.require("channels").map_err(CliError::Validation)?)
            .map_err(CliError::Validation)?;
    let exp = ExperimentConfig {
        seed,
        sample_rate,
        fold_count: folds,
        ffts: all_ffts.clone(),
        channels,
        resdrop_k: head.cfg.parse("resdrop").unwrap_or(0),
        ..ExperimentConfig::default()
    };

    let segments = load_store(&store_dir, sample_rate).map_err(validation)?;
    let out_dir = args.out.clone().unwrap_or_else(|| head.dir.clone());
    std::fs::create_dir_all(&out_dir).map_err(runtime)?;

    let mut csv = String::from("fold,model,raw_acc,grouped_acc\n");
    let mut raw_accs: Vec<f64> = Vec::new();
    let mut grouped_accs: Vec<f64> = Vec::new();
    let label = if mode == "ensemble" {
        "ensemble".to_string()
    } else {
        runs[0].kind.name()
    };
    for fold in 0..folds {
        let (raw_acc, grouped_acc, confusion) = if mode == "ensemble" {
            let mut models = Vec::new();
            let mut sets = Vec::new();
            for run in &runs {
                let ffts = run.kind.ffts(&all_ffts);
                models.push(restore_model(run, fold, &exp, class_names.len())?);
                sets.push(test_set_for_fold(
                    run,
                    &segments,
                    &class_names,
                    fold,
                    folds,
                    seed,
                    &ffts,
                )?);
            }
            let model_refs: Vec<&MultiResModel<f32>> = models.iter().collect();
            let set_refs: Vec<&SampleSet> = sets.iter().collect();
            let grouped = ensemble_grouped_single(&model_refs, &set_refs).map_err(validation)?;
            (None, grouped.accuracy, grouped.confusion)
        } else {
            let run = &runs[0];
            let ffts = run.kind.ffts(&all_ffts);
            let model = restore_model(run, fold, &exp, class_names.len())?;
            let set = test_set_for_fold(run, &segments, &class_names, fold, folds, seed, &ffts)?;
            if mode == "raw" {
                let raw = evaluate_raw(&model, &set).map_err(runtime)?;
                (Some(raw.accuracy), f64::NAN, raw.confusion)
            } else {
                let grouped = evaluate_grouped(&model, &set).map_err(runtime)?;
                (None, grouped.accuracy, grouped.confusion)
            }
        };
        let raw_field = raw_acc.map_or(String::new(), |r| format!("{r:.6}"));
        let grouped_field = if grouped_acc.is_nan() {
            String::new()
        } else {
            format!("{grouped_acc:.6}")
        };
        csv.push_str(&format!("{fold},{label},{raw_field},{grouped_field}\n"));
        if let Some(r) = raw_acc {
            raw_accs.push(r);
        }
        if !grouped_acc.is_nan() {
            grouped_accs.push(grouped_acc);
        }
        std::fs::write(
            out_dir.join(format!("eval_{mode}_confusion_f{fold}.csv")),
            confusion_csv(&class_names, &confusion),
        )
        .map_err(runtime)?;
    }
    let summarize = |v: &[f64]| -> (String, String) {
        if v.is_empty() {
            return (String::new(), String::new());
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        (format!("{mean:.6}"), format!("{std:.6}"))
    };
    let (raw_mean, raw_std) = summarize(&raw_accs);
    let (grp_mean, grp_std) = summarize(&grouped_accs);
    csv.push_str(&format!("mean,{label},{raw_mean},{grp_mean}\n"));
    csv.push_str(&format!("std,{label},{raw_std},{grp_std}\n"));
    let out_file = out_dir.join(format!("eval_{mode}.csv"));
    std::fs::write(&out_file, &csv).map_err(runtime)?;
    print!("{csv}");
    println!("written to {}", out_file.display());
    Ok(())
}
