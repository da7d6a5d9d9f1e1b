//! Scratch probe for throughput and corpus tuning. Not part of the API.

use std::time::Instant;

use mrasc::model::{MultiResConfig, MultiResModel, StackConfig};
use mrasc::nn::{softmax_xent, Mode, Tensor};
use mrasc::synth::{default_scene_specs, generate_clip, oracle};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(String::as_str).unwrap_or("throughput");
    match what {
        "throughput" => throughput(),
        "oracle" => oracle_probe(),
        "experiment" => experiment_probe(&args[2..]),
        "single" => single_probe(&args[2..]),
        "cue" => cue_probe(),
        "bands" => band_probe(),
        other => eprintln!("unknown probe {other}"),
    }
}

/// Per-band statistics of 8192 segments for am_noise vs event_fast: which
/// bands carry a class difference in mean level or temporal spread?
fn band_probe() {
    use mrasc::corpus::normalize_peak;
    use mrasc::dsp::{extract_segments, ResolutionProfile, SegmentSource};
    let mut specs = default_scene_specs();
    let env = |k: &str, d: f64| -> f64 {
        std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
    };
    let amp = env("P_AMP", 0.11);
    let depth = env("P_DEPTH", 0.85);
    let fft = env("P_FFT", 8192.0) as usize;
    for spec in &mut specs {
        spec.location_jitter = 0.03;
        spec.file_jitter = 0.006;
        if let Some(ev) = &mut spec.events {
            ev.amplitude = amp;
        }
        if let Some(am) = &mut spec.am {
            if spec.name == "am_noise" {
                am.depth = depth;
            }
            if spec.name == "event_fast" {
                am.coherence_bands =
                    env("P_COH", am.coherence_bands as f64) as usize;
            }
        }
    }
    let profiles = vec![ResolutionProfile::new(fft, 44_100).unwrap()];
    // per class: mean level and temporal std per band over files/locations
    let mut stats: Vec<(String, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    for spec in &specs[..2] {
        let mut means = vec![Vec::new(); 80];
        let mut stds = vec![Vec::new(); 80];
        for l in 0..8 {
            for f in 0..2 {
                let clip = normalize_peak(&generate_clip(spec, l, f, 7, 44_100));
                let src = SegmentSource::original("x", &spec.name, "loc");
                let tuples = extract_segments(&clip, &profiles, 2, 5, &src).unwrap();
                for tuple in &tuples {
                    let seg = &tuple[0];
                    for m in 0..80 {
                        let row: Vec<f64> =
                            (0..80).map(|t| f64::from(seg.at(m, t))).collect();
                        let mu = row.iter().sum::<f64>() / 80.0;
                        let var =
                            row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 80.0;
                        means[m].push(mu);
                        stds[m].push(var.sqrt());
                    }
                }
            }
        }
        let collapse = |xs: &Vec<Vec<f64>>| -> (Vec<f64>, Vec<f64>) {
            let mu: Vec<f64> = xs
                .iter()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .collect();
            let sd: Vec<f64> = xs
                .iter()
                .zip(&mu)
                .map(|(v, m)| {
                    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
                })
                .collect();
            (mu, sd)
        };
        let (mean_mu, mean_sd) = collapse(&means);
        let (std_mu, std_sd) = collapse(&stds);
        stats.push((spec.name.clone(), mean_mu, mean_sd, std_mu, std_sd));
    }
    let (_, am_mean, am_mean_sd, am_std, am_std_sd) = &stats[0];
    let (_, ev_mean, ev_mean_sd, ev_std, ev_std_sd) = &stats[1];
    println!("band | mean A vs B (z) | temporal-std A vs B (z)");
    let mut worst: Vec<(f64, String)> = Vec::new();
    for m in 0..80 {
        let pooled_mean_sd = (am_mean_sd[m].powi(2) + ev_mean_sd[m].powi(2)).sqrt().max(1e-9);
        let zm = (am_mean[m] - ev_mean[m]) / pooled_mean_sd;
        let pooled_std_sd = (am_std_sd[m].powi(2) + ev_std_sd[m].powi(2)).sqrt().max(1e-9);
        let zs = (am_std[m] - ev_std[m]) / pooled_std_sd;
        worst.push((
            zm.abs().max(zs.abs()),
            format!(
                "band {m:>2}: mean {:+.2} vs {:+.2} (z {zm:+.1}) | std {:.2} vs {:.2} (z {zs:+.1})",
                am_mean[m], ev_mean[m], am_std[m], ev_std[m]
            ),
        ));
    }
    worst.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (_, line) in worst.iter().take(16) {
        println!("{line}");
    }
}

/// Inspect the timing cue as the model sees it: per-band log-mel series
/// of wide-window segments from one fast-event and one slow-event clip.
fn cue_probe() {
    use mrasc::dsp::{extract_segments, ResolutionProfile, SegmentSource};
    let mut specs = default_scene_specs();
    let env = |k: &str, d: f64| -> f64 {
        std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
    };
    let amp = env("P_AMP", 0.055);
    for spec in &mut specs {
        spec.location_jitter = 0.03;
        if let Some(ev) = &mut spec.events {
            ev.amplitude = amp;
        }
    }
    let profiles = vec![ResolutionProfile::new(8192, 44_100).unwrap()];
    for spec in &specs[1..] {
        let clip = generate_clip(spec, 0, 0, 7, 44_100);
        let src = SegmentSource::original("x", &spec.name, "loc");
        let tuples = extract_segments(&clip, &profiles, 1, 3, &src).unwrap();
        let seg = &tuples[0][0];
        // temporal std per Mel band
        let frames = seg.profile.frames_per_segment;
        let mut stds = Vec::new();
        for m in 0..seg.profile.mel_bands {
            let row: Vec<f64> = (0..frames).map(|t| f64::from(seg.at(m, t))).collect();
            let mean = row.iter().sum::<f64>() / frames as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frames as f64;
            stds.push(var.sqrt());
        }
        println!("\n{}: top-8 bands by temporal std:", spec.name);
        let mut order: Vec<usize> = (0..80).collect();
        order.sort_by(|&a, &b| stds[b].total_cmp(&stds[a]));
        for &m in order.iter().take(8) {
            println!("  band {m:>2}: std {:.3}", stds[m]);
        }
        // band trace around the carriers (mel bands of 2.2k / 3.6k)
        for m in [33usize, 42] {
            let row: Vec<String> = (0..frames)
                .step_by(4)
                .map(|t| format!("{:+.1}", seg.at(m, t)))
                .collect();
            println!("  band {m} trace: {}", row.join(" "));
        }
    }
}

fn single_probe(args: &[String]) {
    use mrasc::synth::generate_corpus;
    use mrasc::train::experiment::{augmentation_jobs, extract_all, fold_subsets, ExperimentConfig};
    use mrasc::train::{build_samples, evaluate_grouped, evaluate_raw, train, TrainConfig};
    use mrasc::dsp::{apply_standardization, standardize};
    use mrasc::model::{MultiResConfig, MultiResModel, StackConfig};

    let fft: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(8192);
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(8);
    let c: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let channel_sets = [[2, 4, 6, 6], [4, 6, 8, 8], [4, 8, 12, 12]];
    let channels = channel_sets[c];
    let env = |k: &str, d: f64| -> f64 {
        std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d)
    };
    let loc_jit = env("P_LOCJIT", 0.10);
    let amp = env("P_AMP", 0.055);
    let noise = env("P_NOISE", 0.1);
    println!(
        "single fft {fft}, lr {lr}, epochs {epochs}, channels {channels:?}, locjit {loc_jit}, amp {amp}, noise {noise}"
    );

    let mut specs = default_scene_specs();
    for spec in &mut specs {
        spec.location_jitter = loc_jit;
        spec.file_jitter = loc_jit / 5.0;
        if let Some(ev) = &mut spec.events {
            ev.amplitude = amp;
        }
    }
    let dir = std::env::temp_dir().join(format!("mrasc_probe_corpus_{loc_jit}_{amp}"));
    if !dir.join("manifest.csv").exists() {
        generate_corpus(&specs, 7, 44_100, &dir).unwrap();
    }
    let metas = mrasc::corpus::load_manifest_path(dir.join("manifest.csv")).unwrap();
    let mut cfg = ExperimentConfig {
        seed: 7,
        channels,
        ffts: if fft == 0 { vec![512, 1024, 2048, 4096, 8192] } else { vec![fft] },
        train: TrainConfig {
            lr0: lr,
            lr_min: lr * 0.3,
            max_epochs: epochs,
            noise_sigma: noise,
            seed: 7,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    if fft == 0 {
        cfg.resdrop_k = 0;
    }

    // cache extraction in a scratch store keyed by the fft set
    let plan = mrasc::corpus::grouped_stratified_folds(&metas, 4, cfg.seed).unwrap();
    let tag: String = cfg.ffts.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("-");
    let cache = std::env::temp_dir().join(format!("mrasc_probe_segs_{tag}_{loc_jit}_{amp}"));
    let t0 = Instant::now();
    let segments = if cache.join("index.csv").exists() {
        mrasc::dsp::store::load_store(&cache, 44_100).unwrap()
    } else {
        let jobs = augmentation_jobs(&metas, true, cfg.seed).unwrap();
        let segments = extract_all(&jobs, &cfg).unwrap();
        let mut writer = mrasc::dsp::store::SegmentStoreWriter::create(&cache).unwrap();
        // regroup into per-source tuple lists for the store layout
        let mut by_source: Vec<(String, Vec<Vec<mrasc::dsp::MelSegment>>)> = Vec::new();
        for seg in &segments {
            let key = format!("{}|{}", seg.source_path, seg.augmentation);
            if by_source.last().map(|(k, _)| k != &key).unwrap_or(true) {
                by_source.push((key, Vec::new()));
            }
            let tuples = &mut by_source.last_mut().unwrap().1;
            if tuples
                .last()
                .map(|t: &Vec<mrasc::dsp::MelSegment>| {
                    t[0].offset_samples != seg.offset_samples
                })
                .unwrap_or(true)
            {
                tuples.push(Vec::new());
            }
            tuples.last_mut().unwrap().push(seg.clone());
        }
        for (_, tuples) in &by_source {
            writer.write_clip(tuples).unwrap();
        }
        writer.finish().unwrap();
        segments
    };
    println!("segments ready: {} in {:.1} s", segments.len(), t0.elapsed().as_secs_f64());

    let subsets = fold_subsets(&segments, &plan, 0);
    let mut train_segs = subsets.train.clone();
    let stats = standardize(&mut train_segs).unwrap();
    let mut val_segs = subsets.val.clone();
    apply_standardization(&mut val_segs, &stats).unwrap();
    let mut test_segs = subsets.test.clone();
    apply_standardization(&mut test_segs, &stats).unwrap();

    let class_names: Vec<String> =
        vec!["am_noise".into(), "event_fast".into(), "event_slow".into()];
    let train_set = build_samples(&train_segs, &cfg.ffts, &class_names).unwrap();
    let val_set = build_samples(&val_segs, &cfg.ffts, &class_names).unwrap();
    let test_set = build_samples(&test_segs, &cfg.ffts, &class_names).unwrap();
    println!("train {} val {} test {}", train_set.len(), val_set.len(), test_set.len());

    let mut mcfg = MultiResConfig::new(cfg.ffts.clone(), StackConfig::standard(channels), 3);
    mcfg.resdrop_k = cfg.resdrop_k;
    let mut model = MultiResModel::new(mcfg, 1234).unwrap();
    let t0 = Instant::now();
    let history = train(&mut model, &train_set, &val_set, &cfg.train).unwrap();
    println!("trained in {:.1} s", t0.elapsed().as_secs_f64());
    for e in &history.epochs {
        println!(
            "epoch {:>2} train {:.4} val {:.4} lr {:e}",
            e.epoch, e.train_loss, e.val_loss, e.lr
        );
    }
    let raw = evaluate_raw(&model, &test_set).unwrap();
    let grouped = evaluate_grouped(&model, &test_set).unwrap();
    println!("raw {:.3} grouped {:.3}", raw.accuracy, grouped.accuracy);
    // pair accuracies over grouped files
    let pair_acc = |x: usize, y: usize| {
        let mut tot = 0;
        let mut ok = 0;
        for (_, pred, truth) in &grouped.files {
            if *truth == x || *truth == y {
                tot += 1;
                ok += usize::from(pred == truth);
            }
        }
        ok as f64 / tot.max(1) as f64
    };
    println!("texture-pair (am vs fast) {:.3}", pair_acc(0, 1));
    println!("timing-pair (fast vs slow) {:.3}", pair_acc(1, 2));
}

fn experiment_probe(args: &[String]) {
    use mrasc::synth::generate_corpus;
    use mrasc::train::experiment::{
        augmentation_jobs, extract_all, fold_subsets, run_fold, ExperimentConfig,
        ExperimentResult,
    };
    use mrasc::train::TrainConfig;

    let lr: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let folds_to_run: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let c: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let channel_sets = [[2, 4, 6, 6], [4, 6, 8, 8], [4, 8, 12, 12]];
    let channels = channel_sets[c];
    println!("lr {lr}, epochs {epochs}, folds {folds_to_run}, channels {channels:?}");

    let dir = std::env::temp_dir().join("mrasc_probe_corpus");
    let t0 = Instant::now();
    let metas = if dir.join("manifest.csv").exists() {
        mrasc::corpus::load_manifest_path(dir.join("manifest.csv")).unwrap()
    } else {
        let metas = generate_corpus(&default_scene_specs(), 7, 44_100, &dir).unwrap();
        mrasc::corpus::load_manifest_path(dir.join("manifest.csv")).unwrap()
    };
    println!("corpus ready in {:.1} s ({} files)", t0.elapsed().as_secs_f64(), metas.len());

    let cfg = ExperimentConfig {
        seed: 7,
        channels,
        train: TrainConfig {
            lr0: lr,
            lr_min: lr * 0.5,
            max_epochs: epochs,
            seed: 7,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };

    let t0 = Instant::now();
    let plan = mrasc::corpus::grouped_stratified_folds(&metas, 4, cfg.seed).unwrap();
    let jobs = augmentation_jobs(&metas, true, cfg.seed).unwrap();
    println!("{} extraction jobs", jobs.len());
    let segments = extract_all(&jobs, &cfg).unwrap();
    println!(
        "extracted {} segments in {:.1} s",
        segments.len(),
        t0.elapsed().as_secs_f64()
    );

    let class_names: Vec<String> = {
        let mut v: Vec<String> = metas.iter().map(|m| m.class_label.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut result = ExperimentResult {
        class_names: class_names.clone(),
        ..Default::default()
    };
    for fold in 0..folds_to_run {
        let t0 = Instant::now();
        let subsets = fold_subsets(&segments, &plan, fold);
        println!(
            "fold {fold}: train {} / val {} / test {} segments",
            subsets.train.len(),
            subsets.val.len(),
            subsets.test.len()
        );
        run_fold(fold, &subsets, &cfg, &class_names, &mut result, None).unwrap();
        println!("fold {fold} done in {:.1} s", t0.elapsed().as_secs_f64());
    }
    for m in &result.metrics {
        println!(
            "fold {} {:<12} raw {:>6} grouped {:.3}",
            m.fold,
            m.model,
            m.raw_acc.map_or("-".into(), |r| format!("{r:.3}")),
            m.grouped_acc
        );
    }
    // pair-restricted grouped accuracy (averaged over run folds)
    for model in ExperimentResult::model_names(&cfg.ffts) {
        let timing = result.grouped_accuracy_on_classes(&model, &["event_fast", "event_slow"]);
        let texture = result.grouped_accuracy_on_classes(&model, &["am_noise", "event_fast"]);
        println!("{model:<12} timing-pair {timing:.3}  texture-pair {texture:.3}");
    }
}

fn throughput() {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for channels in [[2usize, 4, 6, 6], [4, 6, 8, 8], [4, 8, 12, 12], [16, 32, 64, 64]] {
        let cfg = MultiResConfig::new(
            vec![512, 1024, 2048, 4096, 8192],
            StackConfig::standard(channels),
            3,
        );
        let mut model = MultiResModel::<f32>::new(cfg, 0).unwrap();
        let inputs: Vec<Tensor<f32>> = (0..5)
            .map(|_| {
                Tensor::from_vec(
                    &[1, 80, 80],
                    (0..6400).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                )
            })
            .collect();
        let mut cache = mrasc::model::MultiResCache::default();
        let mut step_rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        // warmup
        for _ in 0..2 {
            let logits = model
                .forward(&inputs, Mode::Train, &mut step_rng, &mut cache)
                .unwrap();
            let (_, _, d) = softmax_xent(&logits, 0).unwrap();
            model.backward(&d, &cache);
        }
        let reps = 20;
        let t0 = Instant::now();
        for _ in 0..reps {
            let logits = model
                .forward(&inputs, Mode::Train, &mut step_rng, &mut cache)
                .unwrap();
            let (_, _, d) = softmax_xent(&logits, 0).unwrap();
            model.backward(&d, &cache);
        }
        let per = t0.elapsed().as_secs_f64() / reps as f64;
        println!(
            "channels {channels:?}: {:.1} ms/sample fwd+bwd (single thread), {:.2} s per 32-batch, params {}",
            per * 1e3,
            per * 32.0,
            model.param_count(),
        );
    }
}

fn oracle_probe() {
    let specs = default_scene_specs();
    let t0 = Instant::now();
    let mut clips = Vec::new();
    for spec in &specs {
        for l in 0..spec.locations {
            for f in 0..spec.files_per_location {
                clips.push((spec.name.clone(), generate_clip(spec, l, f, 7, 44_100)));
            }
        }
    }
    println!("synthesized {} clips in {:.1} s", clips.len(), t0.elapsed().as_secs_f64());
    let t0 = Instant::now();
    let report = oracle::identifiability_scores(&clips, &oracle::OracleSpec::for_default_corpus());
    println!(
        "oracle in {:.1} s: texture pair {:.3}, timing pair {:.3}",
        t0.elapsed().as_secs_f64(),
        report.texture_pair_accuracy,
        report.timing_pair_accuracy
    );
}
