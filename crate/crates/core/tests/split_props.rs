use std::collections::{BTreeMap, HashSet};

use gutcheck_core::synth::in_memory_manifest;
use gutcheck_core::*;
use proptest::prelude::*;

fn corpus(counts: &[usize; 3]) -> Vec<ImageSample> {
    let tiny = Pixels::filled(1, 1, [0.0; 3]);
    let mut out = Vec::new();
    for (c, &n) in LabelClass::ALL.iter().zip(counts) {
        for i in 0..n {
            out.push(ImageSample {
                id: format!("{}/img_{i:04}.png", c.as_str()),
                label: *c,
                source: Source::Real,
                pixels: tiny.clone(),
            });
        }
    }
    out
}

fn case() -> impl Strategy<Value = ([usize; 3], [usize; 3], usize, u64)> {
    (2usize..8).prop_flat_map(|k| {
        let count = k..k + 40;
        ([count.clone(), count.clone(), count], Just(k), any::<u64>()).prop_flat_map(|(counts, k, seed)| {
            let test = |n: usize| 0..=n - k;
            (
                Just(counts),
                [test(counts[0]), test(counts[1]), test(counts[2])],
                Just(k),
                Just(seed),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn split_invariants((counts, tests, k, seed) in case()) {
        let data = corpus(&counts);
        let m = in_memory_manifest(&data).unwrap();
        let tc: BTreeMap<_, _> = LabelClass::ALL.iter().copied().zip(tests).collect();
        let plan = make_split(&m, &tc, k, seed).unwrap();

        prop_assert_eq!(plan.folds.len(), k);
        let test: HashSet<&String> = plan.test_ids.iter().collect();
        prop_assert_eq!(test.len(), plan.test_ids.len());
        let mut seen = HashSet::new();
        for f in &plan.folds {
            for id in f {
                prop_assert!(!test.contains(id), "{} in test and a fold", id);
                prop_assert!(seen.insert(id.clone()), "{} in two folds", id);
            }
        }
        // every id lands in exactly one of test or a fold
        prop_assert_eq!(seen.len() + test.len(), data.len());

        for (ci, c) in LabelClass::ALL.iter().enumerate() {
            let in_test = plan.test_ids.iter().filter(|id| m.entry(id).unwrap().label == *c).count();
            prop_assert_eq!(in_test, tests[ci]);
            let per_fold: Vec<usize> = plan
                .folds
                .iter()
                .map(|f| f.iter().filter(|id| m.entry(id).unwrap().label == *c).count())
                .collect();
            prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
        }

        let again = make_split(&m, &tc, k, seed).unwrap();
        prop_assert_eq!(&again, &plan);
    }
}
