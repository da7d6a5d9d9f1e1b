//! Raw (per-sample) and grouped (per-file) evaluation, plus the
//! single-resolution ensemble.

use std::collections::BTreeMap;


use super::{SampleSet, TrainError};
use crate::model::{MultiResCache, MultiResModel};

/// Inference-mode softmax vectors for every sample, in sample order.
pub fn predict_all(model: &MultiResModel<f32>, set: &SampleSet) -> Vec<Vec<f32>> {
    let workers = crate::util::worker_count();
    if workers <= 1 || set.len() < 16 {
        let mut cache = MultiResCache::default();
        return (0..set.len())
            .map(|i| model.predict(&set.inputs[i], &mut cache).expect("arity fixed"))
            .collect();
    }
    let indices: Vec<usize> = (0..set.len()).collect();
    // one replica per worker comes from cloning inside the closure's
    // thread-local cache; predict is &self so sharing is safe
    crate::util::parallel_map(&indices, |&i| {
        let mut cache = MultiResCache::default();
        model.predict(&set.inputs[i], &mut cache).expect("arity fixed")
    })
}

fn argmax(probs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct RawEvaluation {
    pub accuracy: f64,
    /// confusion[true][predicted]
    pub confusion: Vec<Vec<usize>>,
    pub per_class_accuracy: Vec<f64>,
}

/// Per-sample accuracy: argmax of each softmax vector against the label.
pub fn evaluate_raw(
    model: &MultiResModel<f32>,
    set: &SampleSet,
) -> Result<RawEvaluation, TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptySampleSet);
    }
    let probs = predict_all(model, set);
    Ok(raw_from_probs(&probs, set))
}

pub(crate) fn raw_from_probs(probs: &[Vec<f32>], set: &SampleSet) -> RawEvaluation {
    let k = set.class_names.len();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for (p, &label) in probs.iter().zip(&set.labels) {
        let pred = argmax(p);
        confusion[label][pred] += 1;
        correct += usize::from(pred == label);
    }
    // per-class accuracy is the diagonal over the row total
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                row[c] as f64 / total as f64
            }
        })
        .collect();
    RawEvaluation {
        accuracy: correct as f64 / set.len() as f64,
        confusion,
        per_class_accuracy,
    }
}

#[derive(Debug, Clone)]
pub struct GroupedEvaluation {
    pub accuracy: f64,
    /// (file, predicted label, true label), sorted by file
    pub files: Vec<(String, usize, usize)>,
    pub confusion: Vec<Vec<usize>>,
}

/// Per-file accuracy: average the softmax vectors of a file's samples,
/// then take the argmax.
pub fn evaluate_grouped(
    model: &MultiResModel<f32>,
    set: &SampleSet,
) -> Result<GroupedEvaluation, TrainError> {
    if set.is_empty() {
        return Err(TrainError::EmptySampleSet);
    }
    let probs = predict_all(model, set);
    Ok(grouped_from_probs(&probs, set))
}

pub(crate) fn grouped_from_probs(probs: &[Vec<f32>], set: &SampleSet) -> GroupedEvaluation {
    let k = set.class_names.len();
    let mut by_file: BTreeMap<&str, (Vec<f64>, usize, usize)> = BTreeMap::new();
    for ((p, &label), file) in probs.iter().zip(&set.labels).zip(&set.files) {
        let entry = by_file
            .entry(file.as_str())
            .or_insert_with(|| (vec![0.0; k], 0, label));
        for (acc, &v) in entry.0.iter_mut().zip(p) {
            *acc += f64::from(v);
        }
        entry.1 += 1;
    }
    let mut files = Vec::with_capacity(by_file.len());
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for (file, (sums, count, label)) in by_file {
        let mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
        let mut pred = 0;
        for (i, &p) in mean.iter().enumerate() {
            if p > mean[pred] {
                pred = i;
            }
        }
        confusion[label][pred] += 1;
        correct += usize::from(pred == label);
        files.push((file.to_string(), pred, label));
    }
    GroupedEvaluation {
        accuracy: correct as f64 / files.len() as f64,
        files,
        confusion,
    }
}

/// Average the softmax response over all segments of all single-resolution
/// models for each file, then argmax. All models must evaluate the same
/// file set (same fold), otherwise this is a configuration error.
pub fn ensemble_grouped_single(
    models: &[&MultiResModel<f32>],
    sets: &[&SampleSet],
) -> Result<GroupedEvaluation, TrainError> {
    assert_eq!(models.len(), sets.len());
    if sets.is_empty() || sets[0].is_empty() {
        return Err(TrainError::EmptySampleSet);
    }
    let files_of = |s: &SampleSet| -> std::collections::BTreeSet<String> {
        s.files.iter().cloned().collect()
    };
    let reference = files_of(sets[0]);
    for set in &sets[1..] {
        if files_of(set) != reference {
            return Err(TrainError::FoldMismatch);
        }
    }

    let k = sets[0].class_names.len();
    let mut by_file: BTreeMap<&str, (Vec<f64>, usize, usize)> = BTreeMap::new();
    for (model, set) in models.iter().zip(sets) {
        let probs = predict_all(model, set);
        for ((p, &label), file) in probs.iter().zip(&set.labels).zip(&set.files) {
            let entry = by_file
                .entry(file.as_str())
                .or_insert_with(|| (vec![0.0; k], 0, label));
            for (acc, &v) in entry.0.iter_mut().zip(p) {
                *acc += f64::from(v);
            }
            entry.1 += 1;
        }
    }
    let mut files = Vec::with_capacity(by_file.len());
    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for (file, (sums, count, label)) in by_file {
        let mut pred = 0;
        let mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
        for (i, &p) in mean.iter().enumerate() {
            if p > mean[pred] {
                pred = i;
            }
        }
        confusion[label][pred] += 1;
        correct += usize::from(pred == label);
        files.push((file.to_string(), pred, label));
    }
    Ok(GroupedEvaluation {
        accuracy: correct as f64 / files.len() as f64,
        files,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake_set(files: &[(&str, usize)], classes: usize) -> SampleSet {
        SampleSet {
            inputs: files.iter().map(|_| Vec::new()).collect(),
            labels: files.iter().map(|(_, l)| *l).collect(),
            files: files.iter().map(|(f, _)| f.to_string()).collect(),
            class_names: (0..classes).map(|c| format!("c{c}")).collect(),
        }
    }

    #[test]
    fn grouped_mean_softmax_argmax() {
        // one file with segment softmaxes (0.6, 0.4) and (0.2, 0.8):
        // mean (0.4, 0.6) -> class 1
        let set = fake_set(&[("f.wav", 1), ("f.wav", 1)], 2);
        let probs = vec![vec![0.6, 0.4], vec![0.2, 0.8]];
        let eval = grouped_from_probs(&probs, &set);
        assert_eq!(eval.files, vec![("f.wav".to_string(), 1, 1)]);
        assert_eq!(eval.accuracy, 1.0);
    }

    #[test]
    fn grouped_equals_raw_for_single_segment_files() {
        let set = fake_set(&[("a.wav", 0), ("b.wav", 1), ("c.wav", 0)], 2);
        let probs = vec![vec![0.9, 0.1], vec![0.3, 0.7], vec![0.2, 0.8]];
        let raw = raw_from_probs(&probs, &set);
        let grouped = grouped_from_probs(&probs, &set);
        assert_eq!(raw.accuracy, grouped.accuracy);
    }

    #[test]
    fn grouped_is_order_invariant() {
        let set_a = fake_set(&[("f.wav", 0), ("f.wav", 0), ("g.wav", 1)], 2);
        let probs_a = vec![vec![0.9, 0.1], vec![0.1, 0.9], vec![0.4, 0.6]];
        let set_b = fake_set(&[("f.wav", 0), ("g.wav", 1), ("f.wav", 0)], 2);
        let probs_b = vec![vec![0.1, 0.9], vec![0.4, 0.6], vec![0.9, 0.1]];
        let a = grouped_from_probs(&probs_a, &set_a);
        let b = grouped_from_probs(&probs_b, &set_b);
        assert_eq!(a.accuracy, b.accuracy);
        assert_eq!(a.files, b.files);
    }

    #[test]
    fn confusion_trace_equals_accuracy() {
        let set = fake_set(&[("a", 0), ("b", 1), ("c", 1)], 2);
        let probs = vec![vec![0.8, 0.2], vec![0.6, 0.4], vec![0.1, 0.9]];
        let raw = raw_from_probs(&probs, &set);
        let trace: usize = (0..2).map(|i| raw.confusion[i][i]).sum();
        assert_eq!(trace as f64 / 3.0, raw.accuracy);
        assert_eq!(raw.per_class_accuracy, vec![1.0, 0.5]);
    }

    #[test]
    fn uniform_probs_tie_break_to_first_class() {
        let set = fake_set(&[("a", 2)], 3);
        let probs = vec![vec![1.0 / 3.0; 3]];
        let raw = raw_from_probs(&probs, &set);
        assert_eq!(raw.confusion[2][0], 1); // predicted class 0
        assert_eq!(raw.accuracy, 0.0);
    }
}
