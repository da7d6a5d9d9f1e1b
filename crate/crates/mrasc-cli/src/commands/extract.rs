//! `mrasc extract`: render aligned multi-resolution segments to a store.

use std::path::PathBuf;

use clap::Args;
use mrasc::augment::AugmentConfig;
use mrasc::corpus::load_manifest_path;
use mrasc::dsp::store::SegmentStoreWriter;
use mrasc::dsp::ResolutionProfile;
use mrasc::train::experiment::{augmentation_jobs, extract_job, ExperimentConfig};
use mrasc::train::TrainConfig;
use mrasc::util::parallel_map;

use super::{runtime, validation};
use crate::config::{claim_run_dir, RunConfig};
use crate::CliError;

#[derive(Args)]
pub struct ExtractArgs {
    /// Corpus manifest CSV
    #[arg(long)]
    manifest: PathBuf,
    /// Segment store output directory
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated FFT window sizes
    #[arg(long, default_value = "512,1024,2048,4096,8192")]
    resolutions: String,
    /// Aligned tuples per clip
    #[arg(long, default_value_t = 10)]
    segments: usize,
    /// `all`, `none`, or a comma list of stretch,pitch,remix
    #[arg(long, default_value = "all")]
    augment: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 44_100)]
    sample_rate: u32,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    force: bool,
}

pub fn run(args: ExtractArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::from_defaults(&[
        ("manifest", args.manifest.display().to_string()),
        ("resolutions", args.resolutions.clone()),
        ("segments", args.segments.to_string()),
        ("augment", args.augment.clone()),
        ("seed", args.seed.to_string()),
        ("sample_rate", args.sample_rate.to_string()),
        ("aug.noise_sigma", "0.1".into()),
        ("aug.shift_range", "0.1".into()),
        ("aug.stretch_range", "0.1".into()),
        ("aug.target_segments", "10".into()),
        ("aug.crossfade_ms", "10".into()),
    ]);
    if let Some(path) = &args.config {
        cfg.merge_file(path).map_err(CliError::Validation)?;
    }

    let ffts = cfg.parse_list("resolutions").map_err(CliError::Validation)?;
    for &fft in &ffts {
        ResolutionProfile::new(fft, args.sample_rate).map_err(validation)?;
    }
    let methods: Vec<&str> = match cfg.require("augment").map_err(CliError::Validation)? {
        "all" => vec!["stretch", "pitch", "remix"],
        "none" => vec![],
        list => list.split(',').map(str::trim).collect(),
    };
    for m in &methods {
        if !["stretch", "pitch", "remix"].contains(m) {
            return Err(validation(format!("unknown augmentation `{m}`")));
        }
    }

    let metas = load_manifest_path(&args.manifest).map_err(validation)?;
    let seed: u64 = cfg.parse("seed").map_err(CliError::Validation)?;
    let augment = AugmentConfig {
        noise_sigma: cfg.parse("aug.noise_sigma").map_err(CliError::Validation)?,
        shift_range: cfg.parse("aug.shift_range").map_err(CliError::Validation)?,
        stretch_range: cfg.parse("aug.stretch_range").map_err(CliError::Validation)?,
        target_segments: cfg
            .parse("aug.target_segments")
            .map_err(CliError::Validation)?,
        crossfade_ms: cfg.parse("aug.crossfade_ms").map_err(CliError::Validation)?,
    };
    let exp = ExperimentConfig {
        seed,
        sample_rate: args.sample_rate,
        n_segments: cfg.parse("segments").map_err(CliError::Validation)?,
        ffts: ffts.clone(),
        augment,
        augmented: !methods.is_empty(),
        train: TrainConfig::default(),
        ..ExperimentConfig::default()
    };

    let mut jobs = augmentation_jobs(&metas, !methods.is_empty(), seed).map_err(runtime)?;
    jobs.retain(|j| j.method == "none" || methods.contains(&j.method.as_str()));

    claim_run_dir(&args.out, &cfg, args.force).map_err(CliError::Validation)?;
    let profiles: Vec<ResolutionProfile> = ffts
        .iter()
        .map(|&fft| ResolutionProfile::new(fft, args.sample_rate).unwrap())
        .collect();
    let results = parallel_map(&jobs, |job| extract_job(job, &exp, &profiles));

    let mut writer = SegmentStoreWriter::create(&args.out).map_err(runtime)?;
    let mut failures: Vec<String> = Vec::new();
    let mut tuples_written = 0usize;
    for (job, result) in jobs.iter().zip(results) {
        match result {
            Ok(tuples) => {
                tuples_written += tuples.len();
                writer.write_clip(&tuples).map_err(runtime)?;
            }
            Err(err) => failures.push(format!("{}: {err}", job.id)),
        }
    }
    writer.finish().map_err(runtime)?;

    if !failures.is_empty() {
        let log = args.out.join("errors.log");
        std::fs::write(&log, failures.join("\n") + "\n").map_err(runtime)?;
        for f in &failures {
            eprintln!("extract: {f}");
        }
        return Err(runtime(format!(
            "{} of {} clips failed; see {}",
            failures.len(),
            jobs.len(),
            log.display()
        )));
    }
    println!(
        "extracted {tuples_written} tuples x {} resolutions from {} clips into {}",
        ffts.len(),
        jobs.len(),
        args.out.display()
    );
    Ok(())
}
