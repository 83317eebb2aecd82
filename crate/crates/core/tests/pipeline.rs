mod common;

use common::small_suite;
use geofair_core::synth::{generate_corpus, CorpusConfig, RegionProfile};
use geofair_core::train::{decode_set, run_suite, score_set, train, TrainConfig, TrainHooks};
use geofair_core::{ModelConfig, RnntModel};

#[test]
fn model_overfits_a_tiny_batch() {
    let config = ModelConfig::desk();
    let corpus = generate_corpus(&CorpusConfig {
        devices_per_region: 1,
        utterances_per_device: 1,
        ..CorpusConfig::desk(5)
    })
    .unwrap();
    let data = &corpus[..4];
    let mut model = RnntModel::init(config, 1).unwrap();
    let schedule = TrainConfig {
        steps: 200,
        batch_size: 4,
        lr_initial: 3e-3,
        lr_after_drop: 3e-3,
        lr_drop_step: 200,
        ..TrainConfig::desk()
    };
    let out = train(&mut model, data, &schedule, TrainHooks::default()).unwrap();
    let (first, last) = (out.losses[0], *out.losses.last().unwrap());
    assert!(last < 0.1 * first, "loss went from {first} to {last}");
}

#[test]
fn noisier_region_decodes_worse() {
    let corpus_config = CorpusConfig {
        seed: 3,
        n_regions_planted: 2,
        devices_per_region: 10,
        utterances_per_device: 40,
        profiles: [0.1, 1.5]
            .iter()
            .map(|&noise_sigma| RegionProfile {
                noise_sigma,
                lexicon_skew: Vec::new(),
            })
            .collect(),
        ..small_suite().corpus
    };
    let corpus = generate_corpus(&corpus_config).unwrap();
    let (train_set, test_set): (Vec<_>, Vec<_>) = corpus.into_iter().partition(|u| !u.id.ends_with('0'));
    let mut model = RnntModel::init(small_suite().model, 2).unwrap();
    let schedule = TrainConfig {
        steps: 300,
        batch_size: 8,
        lr_initial: 5e-3,
        lr_after_drop: 1e-3,
        lr_drop_step: 200,
        ..TrainConfig::desk()
    };
    train(&mut model, &train_set, &schedule, TrainHooks::default()).unwrap();
    let hyps = decode_set(&model, &test_set, 3).unwrap();
    let counts = score_set(&test_set, &hyps).unwrap();
    let mut per_region = [(0usize, 0usize); 2];
    for (u, c) in test_set.iter().zip(&counts) {
        per_region[u.region_truth].0 += c.total();
        per_region[u.region_truth].1 += u.transcript.len();
    }
    let wer = per_region.map(|(e, r)| e as f64 / r as f64);
    assert!(wer[0] < wer[1], "clean region {} vs noisy region {}", wer[0], wer[1]);
}

#[test]
fn suite_writes_report_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_suite(&small_suite(), 4, Some(dir.path())).unwrap();
    assert_eq!(out.rows.len(), 8);
    for name in [
        "table1.txt",
        "table1.csv",
        "regions.geojson",
        "regions.csv",
        "tree.json",
        "suite.json",
    ] {
        assert!(dir.path().join(name).is_file(), "{name} missing");
    }
    for id in 1..=8 {
        let sub = dir.path().join(format!("exp{id}"));
        for name in ["model.ckpt", "region_wer.csv", "manifest.json"] {
            assert!(sub.join(name).is_file(), "exp{id}/{name} missing");
        }
    }
    let geo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("regions.geojson")).unwrap()).unwrap();
    assert_eq!(geo["features"].as_array().unwrap().len(), out.tree.num_regions());
    let table = std::fs::read_to_string(dir.path().join("table1.txt")).unwrap();
    assert!(table.contains("EWC") && table.contains("Empirical bound"));
    assert_eq!(out.access.violations, 0);
}
