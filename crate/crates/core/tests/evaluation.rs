use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semspace_core::catalog::EmbeddingSet;
use semspace_core::contrastive::HeadModel;
use semspace_core::evaluation::*;
use semspace_testkit::metrics::{pearson_sums, ConfusionOracle};

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<String> {
    (0..n).map(|_| format!("c{}", rng.random_range(0..k))).collect()
}

#[test]
fn classification_metrics_match_confusion_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..300 {
        let n = rng.random_range(1..400);
        let k = rng.random_range(1..8);
        let gold = random_labels(&mut rng, n, k);
        let pred = random_labels(&mut rng, n, k + 1);
        let oracle = ConfusionOracle::new(&pred, &gold);
        let selected: BTreeSet<String> = oracle
            .labels
            .iter()
            .filter(|_| rng.random_bool(0.6))
            .cloned()
            .collect();
        if selected.is_empty() {
            continue;
        }
        let r = classification_metrics(&pred, &gold, &selected).unwrap();
        let k = selected.len() as f64;
        let p: f64 = selected.iter().map(|l| oracle.precision(l)).sum::<f64>() / k;
        let rc: f64 = selected.iter().map(|l| oracle.recall(l)).sum::<f64>() / k;
        assert!((r.precision_selected - p).abs() <= 1e-9);
        assert!((r.recall_selected - rc).abs() <= 1e-9);
        assert!((r.accuracy - oracle.accuracy()).abs() <= 1e-9);
        for l in &oracle.labels {
            assert!((r.per_label[l].precision - oracle.precision(l)).abs() <= 1e-9);
            assert!((r.per_label[l].recall - oracle.recall(l)).abs() <= 1e-9);
        }
    }
}

#[test]
fn selected_means_ignore_outside_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gold = random_labels(&mut rng, 200, 4);
    let pred = random_labels(&mut rng, 200, 4);
    let selected: BTreeSet<String> = ["c0".to_string(), "c1".to_string()].into();
    let base = classification_metrics(&pred, &gold, &selected).unwrap();
    // relabel every c2/c3 error into c3: statistics outside S change, those of S do not
    let pred2: Vec<String> = pred
        .iter()
        .map(|p| if p == "c2" { "c3".to_string() } else { p.clone() })
        .collect();
    let moved = classification_metrics(&pred2, &gold, &selected).unwrap();
    assert_eq!(base.precision_selected, moved.precision_selected);
    assert_eq!(base.recall_selected, moved.recall_selected);
}

#[test]
fn perfect_predictions_score_one() {
    let gold: Vec<String> = ["a", "b", "c", "a"].iter().map(|s| s.to_string()).collect();
    let s: BTreeSet<String> = ["a".to_string(), "c".to_string()].into();
    let r = classification_metrics(&gold, &gold, &s).unwrap();
    assert_eq!((r.accuracy, r.precision_selected, r.recall_selected), (1.0, 1.0, 1.0));
}

#[test]
fn pearson_matches_power_sum_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..1000 {
        let n = rng.random_range(2..200);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.3 * x + rng.random_range(-10.0..10.0)).collect();
        let r = pearson(&xs, &ys).unwrap();
        assert!((r - pearson_sums(&xs, &ys)).abs() <= 1e-9);
    }
}

proptest! {
    #[test]
    fn pearson_is_affine_invariant(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..60),
        scale in 0.1f64..10.0,
        shift in -10.0f64..10.0,
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let Ok(r) = pearson(&xs, &ys) else { return Ok(()); };
        let moved: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
        let r2 = pearson(&moved, &ys).unwrap();
        prop_assert!((r - r2).abs() <= 1e-12, "{r} vs {r2}");
    }

    #[test]
    fn cosine_is_bounded_and_scale_free(
        u in prop::collection::vec(-3.0f64..3.0, 4),
        v in prop::collection::vec(-3.0f64..3.0, 4),
        c in 0.01f64..100.0,
    ) {
        let Ok(cos) = cosine_similarity(&u, &v) else { return Ok(()); };
        prop_assert!((-1.0..=1.0).contains(&cos));
        let scaled: Vec<f64> = u.iter().map(|x| c * x).collect();
        prop_assert!((cosine_similarity(&scaled, &v).unwrap() - cos).abs() <= 1e-12);
    }
}

fn random_pairs(n_items: usize, n_pairs: usize, dim: usize, seed: u64) -> (EmbeddingSet<f64>, Vec<(u64, u64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = EmbeddingSet::from_rows(
        dim,
        (0..n_items as u64).map(|id| (id, (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())),
    )
    .unwrap();
    let pairs = (0..n_pairs)
        .map(|_| (rng.random_range(0..n_items as u64), rng.random_range(0..n_items as u64)))
        .collect();
    (set, pairs)
}

fn scored(pairs: &[(u64, u64)], mut gold: impl FnMut(u64, u64) -> f64) -> ScoredPairSet {
    ScoredPairSet {
        pairs: pairs
            .iter()
            .map(|&(l, r)| ScoredPair {
                left: PairSide::Id(l),
                right: PairSide::Id(r),
                gold: gold(l, r),
            })
            .collect(),
    }
}

#[test]
fn affine_gold_gives_unit_correlation() {
    let (set, pairs) = random_pairs(50, 100, 6, 1);
    let cos = |l: u64, r: u64| cosine_similarity(set.row(l).unwrap(), set.row(r).unwrap()).unwrap();
    let exact = scored(&pairs, |l, r| 5.0 * (cos(l, r) + 1.0) / 2.0);
    let r = sts_score(None, &exact, &set).unwrap();
    assert!((r.pearson - 1.0).abs() < 1e-12);
}

#[test]
fn random_gold_is_uncorrelated() {
    let (set, pairs) = random_pairs(300, 1000, 8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let golds: Vec<f64> = (0..pairs.len()).map(|_| rng.random_range(0.0..5.0)).collect();
    let mut i = 0;
    let set_pairs = scored(&pairs, |_, _| {
        i += 1;
        golds[i - 1]
    });
    let r = sts_score(None, &set_pairs, &set).unwrap();
    assert!(r.pearson.abs() < 0.1, "r = {}", r.pearson);
}

#[test]
fn uniform_rescaling_model_matches_identity() {
    let (set, pairs) = random_pairs(40, 80, 5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let golds: Vec<f64> = (0..pairs.len()).map(|_| rng.random_range(0.0..5.0)).collect();
    let mut i = 0;
    let p = scored(&pairs, |_, _| {
        i += 1;
        golds[i - 1]
    });
    let base = sts_score(None, &p, &set).unwrap();
    for c in [0.01, 0.5, 3.0, 250.0] {
        let mut m = HeadModel::<f64>::identity(5);
        m.scale(c);
        let r = sts_score(Some(&m), &p, &set).unwrap();
        assert!((r.pearson - base.pearson).abs() < 1e-12);
    }
}

#[test]
fn explicit_vectors_and_missing_ids() {
    let set = EmbeddingSet::from_rows(2, vec![(1, vec![1.0, 0.0]), (2, vec![0.0, 1.0])]).unwrap();
    let p = ScoredPairSet {
        pairs: vec![
            ScoredPair {
                left: PairSide::Id(1),
                right: PairSide::Vector(vec![1.0, 0.1]),
                gold: 5.0,
            },
            ScoredPair {
                left: PairSide::Id(1),
                right: PairSide::Id(2),
                gold: 0.0,
            },
        ],
    };
    assert!((sts_score(None, &p, &set).unwrap().pearson - 1.0).abs() < 1e-12);
    let missing = scored(&[(1, 9), (1, 2)], |_, _| 1.0);
    assert!(matches!(sts_score(None, &missing, &set), Err(EvalError::UnknownId(9))));
}

#[test]
fn pair_file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.csv");
    let set = build_in_context_sts(&[
        InContextAnchor {
            anchor: 3,
            positive: Some(1_000_003),
            negative: Some(4),
        },
        InContextAnchor {
            anchor: 1,
            positive: Some(1_000_001),
            negative: Some(2),
        },
    ])
    .unwrap();
    set.save(&path).unwrap();
    assert_eq!(ScoredPairSet::load(&path).unwrap(), set);
    let missing = InContextAnchor {
        anchor: 5,
        positive: None,
        negative: Some(6),
    };
    assert!(build_in_context_sts(&[missing]).is_err());
}

#[test]
fn report_serializes_without_empty_sections() {
    let report = EvaluationReport {
        sts: None,
        classification: Some(
            classification_metrics(&["a", "b"], &["a", "a"], &["a".to_string()].into()).unwrap(),
        ),
    };
    let json = serde_json::to_string(&report).unwrap();
    assert!(!json.contains("\"sts\""));
    let back: EvaluationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}
