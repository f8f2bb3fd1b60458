//! Fixed test set plus stratified k-fold partition.

use std::collections::BTreeMap;

use gutcheck_nn::layers::permutation;
use gutcheck_nn::stream;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetManifest;
use crate::label::LabelClass;
use crate::Error;

const TEST_STREAM: u64 = 0x7e57;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub k: usize,
    pub test_ids: Vec<String>,
    pub folds: Vec<Vec<String>>,
}

impl SplitPlan {
    /// Ids of every fold except `fold`, in fold order.
    pub fn train_ids(&self, fold: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }

    pub fn non_test_len(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }
}

/// Draws the test set per class, then deals the remaining ids of each class
/// round-robin over `k` folds.
///
/// The dealing cursor carries over from one class to the next, so fold totals
/// also differ by at most one. Classes absent from `test_counts` contribute no
/// test images.
pub fn make_split(
    manifest: &DatasetManifest,
    test_counts: &BTreeMap<LabelClass, usize>,
    k: usize,
    seed: u64,
) -> Result<SplitPlan, Error> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("k must be at least 2, got {k}")));
    }
    if let Some(c) = test_counts.keys().find(|c| !manifest.counts.contains_key(c)) {
        if test_counts[c] > 0 {
            return Err(Error::Capacity {
                class: *c,
                message: format!("{} test images requested but the class has none", test_counts[c]),
            });
        }
    }
    let mut by_class: BTreeMap<LabelClass, Vec<&str>> = BTreeMap::new();
    for e in &manifest.entries {
        by_class.entry(e.label).or_default().push(&e.id);
    }
    let mut test_ids = Vec::new();
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0;
    for (class_idx, (&class, ids)) in by_class.iter_mut().enumerate() {
        ids.sort_unstable();
        let n_test = test_counts.get(&class).copied().unwrap_or(0);
        if n_test > ids.len() {
            return Err(Error::Capacity {
                class,
                message: format!("{n_test} test images requested from {}", ids.len()),
            });
        }
        if ids.len() - n_test < k {
            return Err(Error::Capacity {
                class,
                message: format!("{} images left after the test draw, need at least k={k}", ids.len() - n_test),
            });
        }
        let mut rng = stream(&[seed, TEST_STREAM, class_idx as u64]);
        let order = permutation(&mut rng, ids.len());
        for (j, &i) in order.iter().enumerate() {
            let id = ids[i].to_string();
            if j < n_test {
                test_ids.push(id);
            } else {
                folds[cursor % k].push(id);
                cursor += 1;
            }
        }
    }
    test_ids.sort();
    for f in &mut folds {
        f.sort();
    }
    Ok(SplitPlan { seed, k, test_ids, folds })
}
