//! Aligned training samples assembled from segment pools.

use std::collections::BTreeMap;

use super::TrainError;
use crate::dsp::MelSegment;
use crate::nn::Tensor;

/// A set of aligned samples: per sample one input tensor per resolution
/// (narrowest first), a class label, and the source file for grouped
/// evaluation.
#[derive(Debug, Clone, Default)]
pub struct SampleSet {
    pub inputs: Vec<Vec<Tensor<f32>>>,
    pub labels: Vec<usize>,
    /// source file per sample (not the augmentation id), for grouping
    pub files: Vec<String>,
    /// class names indexed by label
    pub class_names: Vec<String>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Group segments into aligned tuples over the requested resolutions.
///
/// Segments sharing `(source_path, augmentation, offset_samples)` form one
/// tuple; every requested resolution must be present in each tuple.
/// `class_names` fixes the label indexing (sorted order recommended).
pub fn build_samples(
    segments: &[MelSegment],
    ffts: &[usize],
    class_names: &[String],
) -> Result<SampleSet, TrainError> {
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    let mut tuples: BTreeMap<(String, String, usize), Vec<&MelSegment>> = BTreeMap::new();
    for seg in segments {
        if !ffts.contains(&seg.profile.fft_size) {
            continue;
        }
        let key = (
            seg.source_path.clone(),
            seg.augmentation.clone(),
            seg.offset_samples,
        );
        if !tuples.contains_key(&key) {
            keys.push(key.clone());
        }
        tuples.entry(key).or_default().push(seg);
    }

    let mut set = SampleSet {
        class_names: class_names.to_vec(),
        ..Default::default()
    };
    let mut missing: Vec<String> = Vec::new();
    for key in keys {
        let members = &tuples[&key];
        let mut inputs = Vec::with_capacity(ffts.len());
        for &fft in ffts {
            match members.iter().find(|s| s.profile.fft_size == fft) {
                Some(seg) => inputs.push(Tensor::from_vec(
                    &[1, seg.profile.mel_bands, seg.profile.frames_per_segment],
                    seg.values.clone(),
                )),
                None => {
                    if missing.len() < 8 {
                        missing.push(format!(
                            "{} (aug {}, offset {}) lacks fft {fft}",
                            key.0, key.1, key.2
                        ));
                    }
                }
            }
        }
        if inputs.len() != ffts.len() {
            continue;
        }
        let class = &members[0].class_label;
        let label = class_names
            .iter()
            .position(|c| c == class)
            .ok_or_else(|| TrainError::IncompleteTuples(format!("unknown class `{class}`")))?;
        set.inputs.push(inputs);
        set.labels.push(label);
        set.files.push(key.0.clone());
    }
    if !missing.is_empty() {
        return Err(TrainError::IncompleteTuples(missing.join("; ")));
    }
    if set.is_empty() {
        return Err(TrainError::EmptySampleSet);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{ResolutionProfile, FRAMES_PER_SEGMENT, MEL_BANDS};

    fn seg(path: &str, class: &str, fft: usize, offset: usize) -> MelSegment {
        MelSegment {
            values: vec![0.5; MEL_BANDS * FRAMES_PER_SEGMENT],
            profile: ResolutionProfile::new(fft, 44_100).unwrap(),
            source_path: path.into(),
            class_label: class.into(),
            location_id: "loc".into(),
            offset_samples: offset,
            augmentation: "none".into(),
        }
    }

    #[test]
    fn groups_by_offset_into_tuples() {
        let segments = vec![
            seg("a.wav", "x", 512, 0),
            seg("a.wav", "x", 1024, 0),
            seg("a.wav", "x", 512, 9),
            seg("a.wav", "x", 1024, 9),
        ];
        let classes = vec!["x".to_string(), "y".to_string()];
        let set = build_samples(&segments, &[512, 1024], &classes).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.inputs[0].len(), 2);
        assert_eq!(set.labels, vec![0, 0]);
        assert_eq!(set.files, vec!["a.wav", "a.wav"]);
    }

    #[test]
    fn missing_resolution_is_reported() {
        let segments = vec![seg("a.wav", "x", 512, 0)];
        let classes = vec!["x".to_string()];
        let err = build_samples(&segments, &[512, 1024], &classes).unwrap_err();
        assert!(matches!(err, TrainError::IncompleteTuples(_)));
    }

    #[test]
    fn single_resolution_subset_ignores_other_ffts() {
        let segments = vec![
            seg("a.wav", "x", 512, 0),
            seg("a.wav", "x", 1024, 0),
        ];
        let classes = vec!["x".to_string()];
        let set = build_samples(&segments, &[1024], &classes).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.inputs[0].len(), 1);
    }
}
