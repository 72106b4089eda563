use std::collections::{BTreeSet, HashSet};
use std::fs;

use hieroscribe_core::corpus::{class_weights, class_frequencies, load_dataset, make_splits, DatasetSplit, SplitPart, SplitRatios};
use hieroscribe_core::{synth, Error};
use proptest::prelude::*;

#[test]
fn load_synthetic_tree_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let samples = synth::synthetic_dataset(3, 4, 50, 2).unwrap();
    synth::save_dataset(dir.path(), &samples).unwrap();
    let first = &samples[0].sample_id;
    fs::write(dir.path().join("manifest.csv"), format!("path,page_id\n{first},p7\n")).unwrap();
    fs::write(dir.path().join(samples[1].code.as_str()).join("broken.png"), b"not a png").unwrap();

    let report = load_dataset(dir.path(), 64).unwrap();
    assert_eq!(report.samples.len(), 12);
    assert_eq!(report.skipped.len(), 1);
    assert!(report.samples.iter().all(|s| s.image.dimensions() == (64, 64)));
    let ids: Vec<_> = report.samples.iter().map(|s| s.sample_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let tagged = report.samples.iter().find(|s| &s.sample_id == first).unwrap();
    assert_eq!(tagged.page_id.as_deref(), Some("p7"));
}

#[test]
fn bad_directory_and_empty_root() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(dir.path(), 64), Err(Error::NoSamples(_))));
    fs::create_dir(dir.path().join("not a code")).unwrap();
    assert!(matches!(load_dataset(dir.path(), 64), Err(Error::InvalidClassDirectory { .. })));
}

#[test]
fn split_file_round_trip() {
    let samples = synth::synthetic_dataset(4, 10, 20, 1).unwrap();
    let split = make_splits(&samples, SplitRatios::default(), &BTreeSet::new(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("split.json");
    split.save(&p).unwrap();
    assert_eq!(DatasetSplit::load(&p).unwrap(), split);
    assert_eq!(split.select(SplitPart::Train, &samples).len(), split.train.len());
}

proptest! {
    #[test]
    fn split_is_a_partition(seed in any::<u64>(), per_class in 1usize..30, classes in 1usize..5, held in any::<bool>()) {
        let mut samples = synth::synthetic_dataset(classes, per_class, 8, 0).unwrap();
        for (i, s) in samples.iter_mut().enumerate() {
            s.page_id = Some(format!("p{}", i % 4));
        }
        let held_out: BTreeSet<String> = if held { ["p1".to_string()].into() } else { BTreeSet::new() };
        let split = make_splits(&samples, SplitRatios::default(), &held_out, seed).unwrap();
        let all: Vec<&String> = split.train.iter().chain(&split.validation).chain(&split.test_random).chain(&split.test_pages).collect();
        prop_assert_eq!(all.len(), samples.len());
        prop_assert_eq!(all.iter().collect::<HashSet<_>>().len(), samples.len());
        for id in &split.test_pages {
            let s = samples.iter().find(|s| &s.sample_id == id).unwrap();
            prop_assert!(held_out.contains(s.page_id.as_ref().unwrap()));
        }
        prop_assert_eq!(make_splits(&samples, SplitRatios::default(), &held_out, seed).unwrap(), split);
    }

    #[test]
    fn weights_balance_totals(counts in prop::collection::vec(1usize..500, 1..10)) {
        let codes: Vec<hieroscribe_core::GardinerCode> = (0..counts.len()).map(|i| format!("M{}", i + 1).parse().unwrap()).collect();
        let labels: Vec<_> = codes.iter().zip(&counts).flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let freq = class_frequencies(labels.iter().copied());
        let w = class_weights(&freq).unwrap();
        // Every class contributes N / C total weight.
        let n: usize = counts.iter().sum();
        for (c, &k) in codes.iter().zip(&counts) {
            let total = w.get(c).unwrap() * k as f64;
            prop_assert!((total - n as f64 / counts.len() as f64).abs() < 1e-9 * n as f64);
        }
    }
}
