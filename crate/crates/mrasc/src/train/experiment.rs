//! End-to-end experiment pipeline: augmentation jobs, segment extraction,
//! grouped-stratified fold runs and the single/multi-resolution comparison.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::{
    build_samples, ensemble_grouped_single, evaluate_grouped, evaluate_raw, train, SampleSet,
    TrainConfig, TrainError, TrainHistory,
};
use crate::augment::{
    draw_factor, pitch_shift, plan_remixes, remix_pair, split_shuffle_remix, time_stretch,
    AugmentConfig, AugmentError,
};
use crate::corpus::{
    grouped_stratified_folds, normalize_peak, read_audio, CorpusError, FoldPlan,
    RecordingMeta,
};
use crate::dsp::{
    apply_standardization, extract_segments, standardize, DspError, MelSegment,
    ResolutionProfile, SegmentSource, SegmentTuple,
};
use crate::model::{ModelError, MultiResConfig, MultiResModel, StackConfig};
use crate::synth::oracle::{identifiability_check, OracleSpec};
use crate::synth::SynthError;
use crate::util::{derive_seed, parallel_map};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Full experiment configuration: extraction, architecture and training.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub sample_rate: u32,
    pub fold_count: usize,
    pub n_segments: usize,
    pub ffts: Vec<usize>,
    pub channels: [usize; 4],
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    /// add time-stretched, pitch-shifted and place-remixed copies
    pub augmented: bool,
    pub resdrop_k: usize,
    /// reject the corpus before training if the oracle pair checks fail
    pub identifiability: Option<OracleSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            sample_rate: 44_100,
            fold_count: 4,
            n_segments: 10,
            ffts: vec![512, 1024, 2048, 4096, 8192],
            channels: [16, 32, 64, 64],
            train: TrainConfig::default(),
            augment: AugmentConfig::default(),
            augmented: true,
            resdrop_k: 0,
            identifiability: None,
        }
    }
}

/// One clip to extract segments from: an original recording or an
/// augmented variant of one or two recordings.
#[derive(Debug, Clone)]
pub struct SourceJob {
    /// segment source id: the recording path, or a synthetic remix id
    pub id: String,
    pub class_label: String,
    /// location key; remixes join both locations with `|`
    pub location_id: String,
    /// none | stretch | pitch | remix
    pub method: String,
    /// recording paths to load (two for remixes)
    pub input_paths: Vec<String>,
}

/// Expand a manifest into extraction jobs: every original, plus (when
/// `augmented`) one time-stretched and one pitch-shifted copy per file and
/// the pairwise place remixes of every class.
pub fn augmentation_jobs(
    metas: &[RecordingMeta],
    augmented: bool,
    seed: u64,
) -> Result<Vec<SourceJob>, ExperimentError> {
    let mut jobs = Vec::new();
    for meta in metas {
        jobs.push(SourceJob {
            id: meta.path.clone(),
            class_label: meta.class_label.clone(),
            location_id: meta.location_id.clone(),
            method: "none".into(),
            input_paths: vec![meta.path.clone()],
        });
    }
    if !augmented {
        return Ok(jobs);
    }
    for meta in metas {
        for method in ["stretch", "pitch"] {
            jobs.push(SourceJob {
                id: format!("{method}:{}", meta.path),
                class_label: meta.class_label.clone(),
                location_id: meta.location_id.clone(),
                method: method.into(),
                input_paths: vec![meta.path.clone()],
            });
        }
    }
    // place remixes per class: C(L, 2) location pairs, one seeded file each
    let mut by_class: BTreeMap<&str, BTreeMap<&str, Vec<&str>>> = BTreeMap::new();
    for meta in metas {
        by_class
            .entry(&meta.class_label)
            .or_default()
            .entry(&meta.location_id)
            .or_default()
            .push(&meta.path);
    }
    let mut location_of: BTreeMap<&str, &str> = BTreeMap::new();
    for meta in metas {
        location_of.insert(&meta.path, &meta.location_id);
    }
    for (class, locations) in &by_class {
        if locations.len() < 2 {
            continue; // single-location class: nothing to remix
        }
        let files: Vec<(String, Vec<String>)> = locations
            .iter()
            .map(|(loc, files)| {
                (loc.to_string(), files.iter().map(|f| f.to_string()).collect())
            })
            .collect();
        for plan in plan_remixes(&files, derive_seed(seed, &["remix-class", class]))? {
            jobs.push(SourceJob {
                id: plan.id(),
                class_label: class.to_string(),
                location_id: format!("{}|{}", plan.location_a, plan.location_b),
                method: "remix".into(),
                input_paths: vec![plan.file_a, plan.file_b],
            });
        }
    }
    Ok(jobs)
}

/// Render one job into aligned segment tuples: load, peak-normalize,
/// apply the variant, split-shuffle-remix, extract.
pub fn extract_job(
    job: &SourceJob,
    cfg: &ExperimentConfig,
    profiles: &[ResolutionProfile],
) -> Result<Vec<SegmentTuple>, ExperimentError> {
    let mut clips = Vec::with_capacity(job.input_paths.len());
    for path in &job.input_paths {
        clips.push(normalize_peak(&read_audio(path)?));
    }
    let clip = match job.method.as_str() {
        "remix" => remix_pair(&clips[0], &clips[1]),
        "stretch" => {
            let rate = draw_factor(
                cfg.augment.stretch_range,
                derive_seed(cfg.seed, &["stretch", &job.id]),
            );
            time_stretch(&clips[0], rate)
        }
        "pitch" => {
            let factor = draw_factor(
                cfg.augment.shift_range,
                derive_seed(cfg.seed, &["pitch", &job.id]),
            );
            pitch_shift(&clips[0], factor)
        }
        _ => clips.swap_remove(0),
    };
    let remixed = split_shuffle_remix(
        &clip,
        cfg.augment.target_segments,
        cfg.augment.crossfade_ms,
        derive_seed(cfg.seed, &["ssr", &job.id]),
    );
    let source = SegmentSource {
        path: job.id.clone(),
        class_label: job.class_label.clone(),
        location_id: job.location_id.clone(),
        augmentation: job.method.clone(),
    };
    Ok(extract_segments(
        &remixed,
        profiles,
        cfg.n_segments,
        derive_seed(cfg.seed, &["extract", &job.id]),
        &source,
    )?)
}

/// Extract every job in parallel. Output order follows job order, so the
/// segment pool is deterministic.
pub fn extract_all(
    jobs: &[SourceJob],
    cfg: &ExperimentConfig,
) -> Result<Vec<MelSegment>, ExperimentError> {
    let profiles: Vec<ResolutionProfile> = cfg
        .ffts
        .iter()
        .map(|&fft| ResolutionProfile::new(fft, cfg.sample_rate))
        .collect::<Result<_, _>>()?;
    let results = parallel_map(jobs, |job| extract_job(job, cfg, &profiles));
    let mut segments = Vec::new();
    for result in results {
        for tuple in result? {
            segments.extend(tuple);
        }
    }
    Ok(segments)
}

/// Train/validation/test segment subsets for one fold.
///
/// Training takes every variant whose locations all sit in training folds;
/// validation and test take only original segments of their fold.
pub struct FoldSubsets {
    pub train: Vec<MelSegment>,
    pub val: Vec<MelSegment>,
    pub test: Vec<MelSegment>,
}

fn fold_of_all(location_id: &str, plan: &FoldPlan) -> Option<Vec<usize>> {
    location_id
        .split('|')
        .map(|loc| plan.fold_of(loc))
        .collect()
}

pub fn fold_subsets(segments: &[MelSegment], plan: &FoldPlan, fold: usize) -> FoldSubsets {
    let val_fold = (fold + 1) % plan.fold_count;
    let mut subsets = FoldSubsets {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for seg in segments {
        let Some(folds) = fold_of_all(&seg.location_id, plan) else {
            continue;
        };
        let is_original = seg.augmentation == "none";
        if folds.iter().all(|&f| f != fold && f != val_fold) {
            subsets.train.push(seg.clone());
        } else if is_original && folds == [fold] {
            subsets.test.push(seg.clone());
        } else if is_original && folds == [val_fold] {
            subsets.val.push(seg.clone());
        }
    }
    subsets
}

/// Accuracy rows of the final comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModelMetrics {
    pub fold: usize,
    pub model: String,
    /// None for the ensemble, which is defined per file only
    pub raw_acc: Option<f64>,
    pub grouped_acc: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub class_names: Vec<String>,
    pub metrics: Vec<FoldModelMetrics>,
    pub histories: Vec<(usize, String, TrainHistory)>,
    /// grouped per-file predictions: (fold, model, (file, predicted, true))
    pub grouped_files: Vec<(usize, String, Vec<(String, usize, usize)>)>,
    /// grouped confusion matrices per (fold, model)
    pub confusions: Vec<(usize, String, Vec<Vec<usize>>)>,
}

impl ExperimentResult {
    pub fn model_names(ffts: &[usize]) -> Vec<String> {
        let mut names: Vec<String> = ffts.iter().map(|f| format!("single:{f}")).collect();
        names.push("ensemble".into());
        names.push("multires".into());
        names
    }

    pub fn mean_grouped(&self, model: &str) -> f64 {
        let vals: Vec<f64> = self
            .metrics
            .iter()
            .filter(|m| m.model == model)
            .map(|m| m.grouped_acc)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    pub fn mean_raw(&self, model: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .metrics
            .iter()
            .filter(|m| m.model == model)
            .filter_map(|m| m.raw_acc)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    pub fn std_grouped(&self, model: &str) -> f64 {
        let vals: Vec<f64> = self
            .metrics
            .iter()
            .filter(|m| m.model == model)
            .map(|m| m.grouped_acc)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len().max(1) as f64).sqrt()
    }

    /// Grouped accuracy of one model over files whose true class is in
    /// `classes`, pooled across folds.
    pub fn grouped_accuracy_on_classes(&self, model: &str, classes: &[&str]) -> f64 {
        let class_ids: Vec<usize> = classes
            .iter()
            .filter_map(|c| self.class_names.iter().position(|n| n == c))
            .collect();
        let mut total = 0usize;
        let mut correct = 0usize;
        for (_, m, files) in &self.grouped_files {
            if m != model {
                continue;
            }
            for (_, pred, truth) in files {
                if class_ids.contains(truth) {
                    total += 1;
                    correct += usize::from(pred == truth);
                }
            }
        }
        correct as f64 / total.max(1) as f64
    }

    /// `fold,model,raw_acc,grouped_acc` rows followed by mean and std
    /// summary rows. Byte-stable for fixed inputs.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("fold,model,raw_acc,grouped_acc\n");
        for m in &self.metrics {
            let raw = m.raw_acc.map_or(String::new(), |r| format!("{r:.6}"));
            out.push_str(&format!(
                "{},{},{},{:.6}\n",
                m.fold, m.model, raw, m.grouped_acc
            ));
        }
        let mut models: Vec<&str> = Vec::new();
        for m in &self.metrics {
            if !models.contains(&m.model.as_str()) {
                models.push(&m.model);
            }
        }
        for model in models {
            let raw = self
                .mean_raw(model)
                .map_or(String::new(), |r| format!("{r:.6}"));
            out.push_str(&format!(
                "mean,{model},{raw},{:.6}\n",
                self.mean_grouped(model)
            ));
            out.push_str(&format!(
                "std,{model},,{:.6}\n",
                self.std_grouped(model)
            ));
        }
        out
    }
}

fn sorted_class_names(metas: &[RecordingMeta]) -> Vec<String> {
    let mut names: Vec<String> = metas.iter().map(|m| m.class_label.clone()).collect();
    names.sort();
    names.dedup();
    names
}

/// Which model an invocation trains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelKind {
    Single(usize),
    MultiRes,
}

impl ModelKind {
    pub fn name(&self) -> String {
        match self {
            Self::Single(fft) => format!("single:{fft}"),
            Self::MultiRes => "multires".to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "multires" {
            return Some(Self::MultiRes);
        }
        s.strip_prefix("single:")
            .and_then(|fft| fft.parse().ok())
            .map(Self::Single)
    }

    pub fn ffts(&self, all: &[usize]) -> Vec<usize> {
        match self {
            Self::Single(fft) => vec![*fft],
            Self::MultiRes => all.to_vec(),
        }
    }
}

/// Standardized segment subsets of one fold, ready for model training.
pub struct PreparedFold {
    pub fold: usize,
    pub stats: Vec<crate::dsp::ResolutionStats>,
    pub train_segs: Vec<MelSegment>,
    pub val_segs: Vec<MelSegment>,
    pub test_segs: Vec<MelSegment>,
}

/// Standardize a fold's subsets with statistics from its training split.
pub fn prepare_fold(
    fold: usize,
    subsets: &FoldSubsets,
) -> Result<PreparedFold, ExperimentError> {
    let mut train_segs = subsets.train.clone();
    let stats = standardize(&mut train_segs)?;
    let mut val_segs = subsets.val.clone();
    apply_standardization(&mut val_segs, &stats)?;
    let mut test_segs = subsets.test.clone();
    apply_standardization(&mut test_segs, &stats)?;
    Ok(PreparedFold {
        fold,
        stats,
        train_segs,
        val_segs,
        test_segs,
    })
}

/// One trained model with its history and test evaluations.
pub struct FoldModelOutcome {
    pub model: MultiResModel<f32>,
    pub history: TrainHistory,
    pub raw: super::RawEvaluation,
    pub grouped: super::GroupedEvaluation,
    pub test_set: SampleSet,
}

/// Build the model configuration a kind implies under an experiment config.
pub fn model_config(
    kind: &ModelKind,
    cfg: &ExperimentConfig,
    classes: usize,
) -> MultiResConfig {
    let mut mcfg = MultiResConfig::new(
        kind.ffts(&cfg.ffts),
        StackConfig::standard(cfg.channels),
        classes,
    );
    mcfg.resdrop_k = match kind {
        ModelKind::Single(_) => 0,
        ModelKind::MultiRes => cfg.resdrop_k,
    };
    mcfg
}

/// Train and evaluate one model kind on a prepared fold. Seeds derive from
/// `(experiment seed, fold, model name)`, so runs are independent and
/// reproducible per model.
pub fn train_model_on_fold(
    prepared: &PreparedFold,
    cfg: &ExperimentConfig,
    kind: &ModelKind,
    class_names: &[String],
) -> Result<FoldModelOutcome, ExperimentError> {
    let name = kind.name();
    let ffts = kind.ffts(&cfg.ffts);
    let fold = prepared.fold;
    let train_set = build_samples(&prepared.train_segs, &ffts, class_names)?;
    let val_set = build_samples(&prepared.val_segs, &ffts, class_names)?;
    let test_set = build_samples(&prepared.test_segs, &ffts, class_names)?;

    let mut model = MultiResModel::new(
        model_config(kind, cfg, class_names.len()),
        derive_seed(cfg.seed, &["model", &fold.to_string(), &name]),
    )?;
    let mut tcfg = cfg.train.clone();
    tcfg.seed = derive_seed(cfg.seed, &["train", &fold.to_string(), &name]);
    let history = train(&mut model, &train_set, &val_set, &tcfg)?;
    let raw = evaluate_raw(&model, &test_set)?;
    let grouped = evaluate_grouped(&model, &test_set)?;
    Ok(FoldModelOutcome {
        model,
        history,
        raw,
        grouped,
        test_set,
    })
}

/// Train and evaluate every model of one fold. Metric rows land in
/// comparison order: singles ascending, ensemble, multires.
pub fn run_fold(
    fold: usize,
    subsets: &FoldSubsets,
    cfg: &ExperimentConfig,
    class_names: &[String],
    result: &mut ExperimentResult,
    mut checkpoint_sink: Option<&mut dyn FnMut(&str, &mut MultiResModel<f32>)>,
) -> Result<(), ExperimentError> {
    let prepared = prepare_fold(fold, subsets)?;

    let mut single_models: Vec<MultiResModel<f32>> = Vec::new();
    let mut single_tests: Vec<SampleSet> = Vec::new();
    let mut kinds: Vec<ModelKind> = cfg.ffts.iter().map(|&f| ModelKind::Single(f)).collect();
    kinds.push(ModelKind::MultiRes);

    for kind in kinds {
        if kind == ModelKind::MultiRes {
            // the ensemble row sits between the singles and the fusion model
            let model_refs: Vec<&MultiResModel<f32>> = single_models.iter().collect();
            let set_refs: Vec<&SampleSet> = single_tests.iter().collect();
            let ensemble = ensemble_grouped_single(&model_refs, &set_refs)?;
            result.metrics.push(FoldModelMetrics {
                fold,
                model: "ensemble".into(),
                raw_acc: None,
                grouped_acc: ensemble.accuracy,
            });
            result
                .grouped_files
                .push((fold, "ensemble".into(), ensemble.files));
            result
                .confusions
                .push((fold, "ensemble".into(), ensemble.confusion));
        }
        let name = kind.name();
        let mut outcome = train_model_on_fold(&prepared, cfg, &kind, class_names)?;
        result.metrics.push(FoldModelMetrics {
            fold,
            model: name.clone(),
            raw_acc: Some(outcome.raw.accuracy),
            grouped_acc: outcome.grouped.accuracy,
        });
        result.histories.push((fold, name.clone(), outcome.history));
        result
            .grouped_files
            .push((fold, name.clone(), outcome.grouped.files));
        result
            .confusions
            .push((fold, name.clone(), outcome.grouped.confusion));
        if let Some(sink) = checkpoint_sink.as_mut() {
            sink(&name, &mut outcome.model);
        }
        if let ModelKind::Single(_) = kind {
            single_models.push(outcome.model);
            single_tests.push(outcome.test_set);
        }
    }
    Ok(())
}

/// The full protocol: fold plan, identifiability gate, augmentation,
/// extraction, and all per-fold single/multi trainings.
pub fn run_experiment(
    metas: &[RecordingMeta],
    cfg: &ExperimentConfig,
) -> Result<ExperimentResult, ExperimentError> {
    let class_names = sorted_class_names(metas);
    let plan = grouped_stratified_folds(metas, cfg.fold_count, cfg.seed)?;
    if let Some(oracle) = &cfg.identifiability {
        identifiability_check(metas, oracle, 0.95)?;
    }
    let jobs = augmentation_jobs(metas, cfg.augmented, cfg.seed)?;
    let segments = extract_all(&jobs, cfg)?;

    let mut result = ExperimentResult {
        class_names: class_names.clone(),
        ..Default::default()
    };
    for fold in 0..cfg.fold_count {
        let subsets = fold_subsets(&segments, &plan, fold);
        run_fold(fold, &subsets, cfg, &class_names, &mut result, None)?;
    }
    Ok(result)
}

/// Write one grouped confusion matrix as a CSV grid with class headers.
pub fn confusion_csv(class_names: &[String], confusion: &[Vec<usize>]) -> String {
    let mut out = String::from("true\\predicted");
    for name in class_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (c, row) in confusion.iter().enumerate() {
        out.push_str(&class_names[c]);
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Persist experiment outputs under a directory: metrics CSV, one history
/// CSV per (fold, model) and one grouped confusion CSV per (fold, model).
pub fn write_outputs(result: &ExperimentResult, dir: impl AsRef<Path>) -> std::io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("metrics.csv"), result.metrics_csv())?;
    for (fold, model, history) in &result.histories {
        let name = format!("history_f{fold}_{}.csv", model.replace(':', "_"));
        std::fs::write(dir.join(name), history.to_csv())?;
    }
    for (fold, model, confusion) in &result.confusions {
        let name = format!("confusion_f{fold}_{}.csv", model.replace(':', "_"));
        std::fs::write(dir.join(name), confusion_csv(&result.class_names, confusion))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metas_grid(classes: usize, locs: usize, files: usize) -> Vec<RecordingMeta> {
        let mut metas = Vec::new();
        for c in 0..classes {
            for l in 0..locs {
                for f in 0..files {
                    metas.push(RecordingMeta {
                        path: format!("c{c}_l{l}_f{f}.wav"),
                        class_label: format!("class{c}"),
                        location_id: format!("c{c}_l{l}"),
                        duration_s: 10.0,
                    });
                }
            }
        }
        metas
    }

    #[test]
    fn jobs_without_augmentation_are_the_originals() {
        let metas = metas_grid(2, 4, 2);
        let jobs = augmentation_jobs(&metas, false, 0).unwrap();
        assert_eq!(jobs.len(), 16);
        assert!(jobs.iter().all(|j| j.method == "none"));
    }

    #[test]
    fn augmented_jobs_add_variants_and_remixes() {
        let metas = metas_grid(2, 4, 2);
        let jobs = augmentation_jobs(&metas, true, 0).unwrap();
        // 16 originals + 16 stretch + 16 pitch + 2 classes x C(4,2) remixes
        assert_eq!(jobs.len(), 16 * 3 + 2 * 6);
        let remixes: Vec<&SourceJob> = jobs.iter().filter(|j| j.method == "remix").collect();
        assert_eq!(remixes.len(), 12);
        assert!(remixes.iter().all(|j| j.input_paths.len() == 2));
        assert!(remixes.iter().all(|j| j.location_id.contains('|')));
    }

    #[test]
    fn fold_subsets_respect_leakage_rules() {
        use crate::dsp::{ResolutionProfile, FRAMES_PER_SEGMENT, MEL_BANDS};
        let metas = metas_grid(1, 4, 1);
        let plan = grouped_stratified_folds(&metas, 4, 0).unwrap();
        let seg = |loc: &str, aug: &str| MelSegment {
            values: vec![0.0; MEL_BANDS * FRAMES_PER_SEGMENT],
            profile: ResolutionProfile::new(512, 44_100).unwrap(),
            source_path: format!("{loc}-{aug}.wav"),
            class_label: "class0".into(),
            location_id: loc.into(),
            offset_samples: 0,
            augmentation: aug.into(),
        };
        let locs: Vec<String> = (0..4).map(|l| format!("c0_l{l}")).collect();
        let fold_of: Vec<usize> = locs.iter().map(|l| plan.fold_of(l).unwrap()).collect();
        // train locations for fold 0 are the two outside test(0) and val(1)
        let segments = vec![
            seg(&locs[0], "none"),
            seg(&locs[1], "none"),
            seg(&locs[2], "none"),
            seg(&locs[3], "none"),
            seg(&format!("{}|{}", locs[0], locs[1]), "remix"),
            seg(&format!("{}|{}", locs[2], locs[3]), "remix"),
        ];
        let test_fold = 0;
        let val_fold = 1;
        let subsets = fold_subsets(&segments, &plan, test_fold);
        assert_eq!(subsets.test.len(), 1);
        assert_eq!(subsets.val.len(), 1);
        // originals of the two train locations plus any remix fully inside
        for seg in &subsets.train {
            for loc in seg.location_id.split('|') {
                let f = plan.fold_of(loc).unwrap();
                assert!(f != test_fold && f != val_fold, "leaked {}", seg.location_id);
            }
        }
        // a remix straddling test and train folds must appear nowhere
        let straddle = segments
            .iter()
            .filter(|s| s.augmentation == "remix")
            .filter(|s| {
                let folds: Vec<usize> = s
                    .location_id
                    .split('|')
                    .map(|l| plan.fold_of(l).unwrap())
                    .collect();
                folds.contains(&test_fold) || folds.contains(&val_fold)
            })
            .count();
        let in_any = |needle: &MelSegment| {
            subsets
                .train
                .iter()
                .chain(&subsets.val)
                .chain(&subsets.test)
                .any(|s| s.source_path == needle.source_path)
        };
        for s in segments.iter().filter(|s| s.augmentation == "remix") {
            let folds: Vec<usize> = s
                .location_id
                .split('|')
                .map(|l| plan.fold_of(l).unwrap())
                .collect();
            if folds.contains(&test_fold) || folds.contains(&val_fold) {
                assert!(!in_any(s));
            }
        }
        let _ = (fold_of, straddle);
    }

    #[test]
    fn metrics_csv_is_stable() {
        let mut result = ExperimentResult {
            class_names: vec!["a".into(), "b".into()],
            ..Default::default()
        };
        result.metrics.push(FoldModelMetrics {
            fold: 0,
            model: "single:512".into(),
            raw_acc: Some(0.5),
            grouped_acc: 0.75,
        });
        result.metrics.push(FoldModelMetrics {
            fold: 0,
            model: "ensemble".into(),
            raw_acc: None,
            grouped_acc: 0.8,
        });
        let csv = result.metrics_csv();
        assert!(csv.starts_with("fold,model,raw_acc,grouped_acc\n"));
        assert!(csv.contains("0,single:512,0.500000,0.750000\n"));
        assert!(csv.contains("0,ensemble,,0.800000\n"));
        assert!(csv.contains("mean,single:512,0.500000,0.750000\n"));
        assert_eq!(csv, result.metrics_csv());
    }
}
