//! Grouped-stratified cross-validation folds.
//!
//! All files of one recording location land in exactly one fold, and within
//! each class the per-fold file counts stay as close to proportional as the
//! location granularity permits.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, RecordingMeta};
use crate::util::derive_seed;

/// Assignment of recording locations to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub fold_count: usize,
    /// location id -> fold index
    pub assignments: BTreeMap<String, usize>,
    /// per fold: class label -> file count
    pub class_histograms: Vec<BTreeMap<String, usize>>,
}

impl FoldPlan {
    pub fn fold_of(&self, location_id: &str) -> Option<usize> {
        self.assignments.get(location_id).copied()
    }

    /// Locations assigned to `fold`, in sorted order.
    pub fn locations_in(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(loc, _)| loc.as_str())
            .collect()
    }

    /// File count of `class` in `fold`.
    pub fn files_in_fold(&self, fold: usize, class: &str) -> usize {
        self.class_histograms[fold].get(class).copied().unwrap_or(0)
    }

    /// Max minus min per-fold file count for one class.
    pub fn class_spread(&self, class: &str) -> usize {
        let counts: Vec<usize> = (0..self.fold_count)
            .map(|f| self.files_in_fold(f, class))
            .collect();
        let max = counts.iter().copied().max().unwrap_or(0);
        let min = counts.iter().copied().min().unwrap_or(0);
        max - min
    }
}

/// Build a grouped-stratified fold plan.
///
/// Per class, locations are shuffled with the seed, ordered by descending
/// file count, and each is placed into the fold currently holding the fewest
/// files of that class (ties broken by fold index). Deterministic for fixed
/// `(metas, fold_count, seed)`.
pub fn grouped_stratified_folds(
    metas: &[RecordingMeta],
    fold_count: usize,
    seed: u64,
) -> Result<FoldPlan, CorpusError> {
    assert!(fold_count >= 2, "need at least 2 folds");

    // class -> location -> file count; BTreeMaps keep the iteration order
    // independent of input order.
    let mut classes: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
    let mut location_class: BTreeMap<&str, &str> = BTreeMap::new();
    for meta in metas {
        if let Some(&first) = location_class.get(meta.location_id.as_str()) {
            if first != meta.class_label {
                return Err(CorpusError::LocationClassClash {
                    location: meta.location_id.clone(),
                    first: first.to_string(),
                    second: meta.class_label.clone(),
                });
            }
        } else {
            location_class.insert(&meta.location_id, &meta.class_label);
        }
        *classes
            .entry(&meta.class_label)
            .or_default()
            .entry(&meta.location_id)
            .or_default() += 1;
    }

    let mut assignments: BTreeMap<String, usize> = BTreeMap::new();
    let mut histograms: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); fold_count];

    for (class, locations) in &classes {
        if locations.len() < fold_count {
            return Err(CorpusError::InfeasibleFolds {
                class: class.to_string(),
                locations: locations.len(),
                folds: fold_count,
            });
        }
        let mut order: Vec<(&str, usize)> =
            locations.iter().map(|(loc, &n)| (*loc, n)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["folds", class]));
        order.shuffle(&mut rng);
        // stable sort: the shuffle decides order among equal counts
        order.sort_by(|a, b| b.1.cmp(&a.1));

        let mut fold_files = vec![0usize; fold_count];
        for (loc, files) in order {
            let fold = (0..fold_count)
                .min_by_key(|&f| (fold_files[f], f))
                .unwrap();
            fold_files[fold] += files;
            assignments.insert(loc.to_string(), fold);
            *histograms[fold].entry(class.to_string()).or_default() += files;
        }
    }

    Ok(FoldPlan {
        fold_count,
        assignments,
        class_histograms: histograms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(path: &str, class: &str, loc: &str) -> RecordingMeta {
        RecordingMeta {
            path: path.to_string(),
            class_label: class.to_string(),
            location_id: loc.to_string(),
            duration_s: 10.0,
        }
    }

    fn grid(classes: usize, locs_per_class: usize, files_per_loc: usize) -> Vec<RecordingMeta> {
        let mut metas = Vec::new();
        for c in 0..classes {
            for l in 0..locs_per_class {
                for f in 0..files_per_loc {
                    metas.push(meta(
                        &format!("c{c}_l{l}_f{f}.wav"),
                        &format!("class{c}"),
                        &format!("c{c}loc{l}"),
                    ));
                }
            }
        }
        metas
    }

    #[test]
    fn four_locations_four_folds_is_one_each() {
        let metas = grid(2, 4, 1);
        let plan = grouped_stratified_folds(&metas, 4, 0).unwrap();
        for fold in 0..4 {
            for class in ["class0", "class1"] {
                assert_eq!(plan.files_in_fold(fold, class), 1);
            }
        }
    }

    #[test]
    fn no_location_in_two_folds() {
        let metas = grid(3, 7, 3);
        let plan = grouped_stratified_folds(&metas, 4, 9).unwrap();
        // every location appears exactly once in assignments, and the
        // histogram totals account for every file
        assert_eq!(plan.assignments.len(), 21);
        let total: usize = (0..4)
            .map(|f| {
                ["class0", "class1", "class2"]
                    .iter()
                    .map(|c| plan.files_in_fold(f, c))
                    .sum::<usize>()
            })
            .sum();
        assert_eq!(total, metas.len());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let metas = grid(4, 6, 2);
        let a = grouped_stratified_folds(&metas, 4, 42).unwrap();
        let b = grouped_stratified_folds(&metas, 4, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_class_named_in_error() {
        let mut metas = grid(1, 4, 1);
        metas.extend(grid(1, 2, 1).into_iter().map(|mut m| {
            m.class_label = "rare".into();
            m.location_id = format!("rare_{}", m.location_id);
            m.path = format!("rare_{}", m.path);
            m
        }));
        let err = grouped_stratified_folds(&metas, 4, 0).unwrap_err();
        match err {
            CorpusError::InfeasibleFolds { class, .. } => assert_eq!(class, "rare"),
            other => panic!("expected InfeasibleFolds, got {other:?}"),
        }
    }
}
