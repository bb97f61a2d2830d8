use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semspace_core::catalog::{Catalog, EmbeddingSet, Item};
use semspace_core::contrastive::*;
use semspace_core::synthetic::triplet_fixture;
use semspace_testkit::fd::{error_summary, numeric_grad};

fn assert_grad_close(analytic: &[f64], numeric: &[f64]) {
    let (max, p95) = error_summary(analytic, numeric);
    assert!(max < 1e-2, "max relative error {max}");
    assert!(p95 < 1e-4, "95th percentile relative error {p95}");
}

fn random_vecs(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn two_layer(input: usize, hidden: usize, output: usize, heads: &[(&str, usize)], seed: u64) -> HeadModel<f64> {
    let spec = HeadSpec {
        kind: HeadKind::TwoLayer,
        hidden_dim: hidden,
        output_dim: Some(output),
    };
    let heads = heads
        .iter()
        .map(|(k, n)| (k.to_string(), (0..*n).map(|i| format!("l{i}")).collect()))
        .collect();
    HeadModel::init(&spec, input, &heads, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn nt_xent_input_gradient(seed in any::<u64>(), n in 2usize..5, dim in 2usize..7, tau in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = random_vecs(&mut rng, 2 * n, dim).concat();
        let loss = |f: &[f64]| {
            let views: Vec<&[f64]> = f.chunks(dim).collect();
            nt_xent_loss(&views, tau).unwrap().loss
        };
        let views: Vec<&[f64]> = flat.chunks(dim).collect();
        let analytic = nt_xent_loss(&views, tau).unwrap().grads.concat();
        assert_grad_close(&analytic, &numeric_grad(&flat, loss));
    }

    #[test]
    fn info_nce_input_gradient(seed in any::<u64>(), dim in 2usize..7, tau in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat: Vec<f64> = random_vecs(&mut rng, 12, dim).concat();
        let eval = |f: &[f64]| {
            let v: Vec<&[f64]> = f.chunks(dim).collect();
            info_nce_loss(v[0], v[1], &v[2..], tau).unwrap()
        };
        let analytic = eval(&flat).grads.concat();
        assert_grad_close(&analytic, &numeric_grad(&flat, |f| eval(f).loss));
    }

    #[test]
    fn multihead_ce_logit_gradient(seed in any::<u64>(), n in 1usize..6, c1 in 2usize..5, c2 in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = [("categoria", c1), ("povo", c2)];
        let labels: Vec<Vec<usize>> = shapes.iter().map(|&(_, c)| (0..n).map(|_| rng.random_range(0..c)).collect()).collect();
        let weights: Vec<Vec<f64>> = shapes.iter().map(|&(_, c)| (0..c).map(|_| rng.random_range(0.2..2.0)).collect()).collect();
        let flat: Vec<f64> = shapes.iter().flat_map(|&(_, c)| random_vecs(&mut rng, n, c).concat()).collect();
        let hw = BTreeMap::from([("categoria".to_string(), 0.3), ("povo".to_string(), 0.7)]);
        let eval = |f: &[f64]| {
            let mut at = 0;
            let mut batches = BTreeMap::new();
            for (h, &(name, c)) in shapes.iter().enumerate() {
                let logits = f[at..at + n * c].chunks(c).map(|r| r.to_vec()).collect();
                at += n * c;
                batches.insert(name.to_string(), HeadBatch { logits, labels: labels[h].clone(), class_weights: weights[h].clone() });
            }
            weighted_multihead_ce(&batches, &hw).unwrap()
        };
        let r = eval(&flat);
        let analytic: Vec<f64> = r.grads.values().flat_map(|rows| rows.concat()).collect();
        assert_grad_close(&analytic, &numeric_grad(&flat, |f| eval(f).loss));
    }

    #[test]
    fn nt_xent_scale_invariant(seed in any::<u64>(), which in 0usize..6, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vs = random_vecs(&mut rng, 6, 4);
        let base = nt_xent_loss(&vs.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), 0.1).unwrap().loss;
        vs[which].iter_mut().for_each(|x| *x *= scale);
        let scaled = nt_xent_loss(&vs.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), 0.1).unwrap().loss;
        prop_assert!((base - scaled).abs() <= 1e-12);
    }

    #[test]
    fn info_nce_scale_invariant(seed in any::<u64>(), which in 0usize..12, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vs = random_vecs(&mut rng, 12, 5);
        let eval = |vs: &[Vec<f64>]| {
            let r: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
            info_nce_loss(r[0], r[1], &r[2..], 0.2).unwrap().loss
        };
        let base = eval(&vs);
        vs[which].iter_mut().for_each(|x| *x *= scale);
        prop_assert!((base - eval(&vs)).abs() <= 1e-12);
    }

    #[test]
    fn unit_weights_reduce_to_mean_cross_entropy(seed in any::<u64>(), n in 1usize..20, c in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits = random_vecs(&mut rng, n, c);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        // direct softmax cross-entropy without log-sum-exp shifting
        let oracle = logits.iter().zip(&labels).map(|(row, &y)| {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            -(row[y].exp() / z).ln()
        }).sum::<f64>() / n as f64;
        let batches = BTreeMap::from([("h".to_string(), HeadBatch { logits, labels, class_weights: vec![1.0; c] })]);
        let r = weighted_multihead_ce(&batches, &BTreeMap::from([("h".to_string(), 1.0)])).unwrap();
        prop_assert!((r.loss - oracle).abs() <= 1e-12);
    }

    #[test]
    fn rebalanced_weights_and_counts(counts in proptest::collection::vec(1usize..40, 1..6), min_samples in 1usize..25, filter in any::<bool>()) {
        let mut items = Vec::new();
        let mut rows = Vec::new();
        let mut id = 0u64;
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let mut it = Item::new(id, "x");
                it.povo = Some(format!("p{c}"));
                items.push(it);
                rows.push((id, vec![id as f64, 1.0, -1.0]));
                id += 1;
            }
        }
        let cat = Catalog::from_items(items).unwrap();
        let emb = EmbeddingSet::from_rows(3, rows).unwrap();
        let mode = if filter { RebalanceMode::FilterOnly } else { RebalanceMode::Augment { min_original: 1 } };
        let cfg = RebalanceConfig { min_samples, mode, seed: 1, ..RebalanceConfig::new(LabelAttribute::Povo) };
        match rebalance(&cat, &emb, &cfg) {
            Err(ContrastiveError::NoLabels(_)) => prop_assert!(filter && counts.iter().all(|&n| n < min_samples)),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
            Ok(d) => {
                let sum: f64 = d.class_weights.values().sum();
                prop_assert!((sum - d.selected.len() as f64).abs() < 1e-9);
                for label in &d.selected {
                    prop_assert!(d.count(label) >= min_samples);
                    let n = d.original_counts[label] as f64;
                    // w_c · n_c is the same constant for every label
                    let k = d.class_weights[label] * n;
                    let first = d.selected.iter().next().unwrap();
                    prop_assert!((k - d.class_weights[first] * d.original_counts[first] as f64).abs() < 1e-9);
                }
                let originals = d.samples.iter().filter(|s| !s.is_synthetic).count();
                prop_assert_eq!(originals, d.original_counts.values().sum::<usize>());
            }
        }
    }
}

#[test]
fn head_parameter_gradients_through_nt_xent() {
    for seed in 0..10u64 {
        let model = two_layer(6, 5, 4, &[], seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let xs = random_vecs(&mut rng, 3, 6);
        let masks: Vec<DropoutMask> = (0..6).map(|_| DropoutMask::sample(6, 0.2, &mut rng)).collect();
        let loss_at = |m: &HeadModel<f64>| {
            let views: Vec<Vec<f64>> = (0..6)
                .map(|v| m.forward(&xs[v / 2], Some(&masks[v])).unwrap().projected)
                .collect();
            nt_xent_loss(&views.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), 0.2).unwrap()
        };
        let outs: Vec<HeadOutput<f64>> = (0..6).map(|v| model.forward(&xs[v / 2], Some(&masks[v])).unwrap()).collect();
        let r = loss_at(&model);
        let mut grad = model.zeros_like();
        for (o, g) in outs.iter().zip(&r.grads) {
            model.backward(o, Some(g), &BTreeMap::new(), &mut grad);
        }
        let numeric = numeric_grad(&model.params(), |p| {
            let mut m = model.clone();
            m.set_params(p).unwrap();
            loss_at(&m).loss
        });
        assert_grad_close(&grad.params(), &numeric);
    }
}

#[test]
fn head_parameter_gradients_through_classifier() {
    let model = two_layer(5, 4, 3, &[("categoria", 3), ("povo", 4)], 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let xs = random_vecs(&mut rng, 6, 5);
    let ys: Vec<(usize, usize)> = (0..6).map(|_| (rng.random_range(0..3), rng.random_range(0..4))).collect();
    let hw = BTreeMap::from([("categoria".to_string(), 0.5), ("povo".to_string(), 0.5)]);
    let cw = BTreeMap::from([("categoria".to_string(), vec![1.0, 2.0, 0.5]), ("povo".to_string(), vec![1.0; 4])]);
    let eval = |m: &HeadModel<f64>| {
        let outs: Vec<HeadOutput<f64>> = xs.iter().map(|x| m.forward(x, None).unwrap()).collect();
        let batches: BTreeMap<String, HeadBatch<f64>> = ["categoria", "povo"]
            .iter()
            .map(|&h| {
                let labels = ys.iter().map(|y| if h == "categoria" { y.0 } else { y.1 }).collect();
                let logits = outs.iter().map(|o| o.logits[h].clone()).collect();
                (h.to_string(), HeadBatch { logits, labels, class_weights: cw[h].clone() })
            })
            .collect();
        (outs, weighted_multihead_ce(&batches, &hw).unwrap())
    };
    let (outs, r) = eval(&model);
    let mut grad = model.zeros_like();
    for (i, o) in outs.iter().enumerate() {
        let dl: BTreeMap<String, Vec<f64>> = r.grads.iter().map(|(h, rows)| (h.clone(), rows[i].clone())).collect();
        model.backward(o, None, &dl, &mut grad);
    }
    let numeric = numeric_grad(&model.params(), |p| {
        let mut m = model.clone();
        m.set_params(p).unwrap();
        eval(&m).1.loss
    });
    assert_grad_close(&grad.params(), &numeric);
}

#[test]
fn doubling_true_class_weight_doubles_contribution() {
    let logits = vec![vec![0.3f64, -0.2, 1.0]];
    let hw = BTreeMap::from([("h".to_string(), 1.0)]);
    let run = |w: Vec<f64>| {
        let b = BTreeMap::from([("h".to_string(), HeadBatch { logits: logits.clone(), labels: vec![1], class_weights: w })]);
        weighted_multihead_ce(&b, &hw).unwrap().loss
    };
    assert!((run(vec![1.0, 2.0, 1.0]) - 2.0 * run(vec![1.0, 1.0, 1.0])).abs() < 1e-15);
}

#[test]
fn equal_head_weights_average_the_heads() {
    let mk = |logits: Vec<Vec<f64>>, labels| HeadBatch { class_weights: vec![1.0; logits[0].len()], logits, labels };
    let batches = BTreeMap::from([
        ("povo".to_string(), mk(vec![vec![1.0, 0.0], vec![0.0, 2.0]], vec![0, 0])),
        ("categoria".to_string(), mk(vec![vec![0.5, 0.5, 0.1], vec![3.0, 0.0, 0.0]], vec![2, 0])),
    ]);
    let hw = BTreeMap::from([("povo".to_string(), 0.5), ("categoria".to_string(), 0.5)]);
    let r = weighted_multihead_ce(&batches, &hw).unwrap();
    let avg = (r.per_head["povo"] + r.per_head["categoria"]) / 2.0;
    assert!((r.loss - avg).abs() < 1e-15);
}

fn separable_dataset(n: usize, seed: u64) -> (Catalog, EmbeddingSet<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    let mut rows = Vec::new();
    for id in 0..n as u64 {
        let class = id % 2;
        let mut it = Item::new(id, "x");
        it.categoria = Some(if class == 0 { "cestaria" } else { "cerâmica" }.to_string());
        items.push(it);
        let side = if class == 0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        v[0] = side * rng.random_range(0.5..1.5);
        rows.push((id, v));
    }
    (Catalog::from_items(items).unwrap(), EmbeddingSet::from_rows(8, rows).unwrap())
}

#[test]
fn separable_classification_reaches_full_training_accuracy() {
    let (cat, emb) = separable_dataset(120, 3);
    let data = rebalance(&cat, &emb, &RebalanceConfig { min_samples: 1, ..RebalanceConfig::new(LabelAttribute::Categoria) }).unwrap();
    let cfg = TrainingConfig {
        learning_rate: 0.5,
        epochs: 50,
        batch_size: 16,
        dropout_rate: 0.0,
        early_stop_patience: 0,
        ..Default::default()
    };
    let out = train_head(&cfg, &TrainingData::Classification(BTreeMap::from([("categoria".to_string(), data)])), &emb).unwrap();
    let reached = out.history.iter().find(|r| r.metrics["accuracy_categoria"] == 1.0).map(|r| r.epoch);
    assert!(reached.is_some_and(|e| e <= 50), "training accuracy never reached 1.0");
}

fn info_nce_config() -> TrainingConfig {
    TrainingConfig {
        temperature: 0.1,
        learning_rate: 0.05,
        epochs: 12,
        batch_size: 16,
        dropout_rate: 0.0,
        early_stop_patience: 0,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn info_nce_raises_positive_cosine() {
    let f = triplet_fixture(200, 16, 4, 1.5, 11);
    let out = train_head(&info_nce_config(), &TrainingData::InfoNce(f.triplets.clone()), &f.embeddings).unwrap();
    let pos: Vec<f64> = out.history.iter().map(|r| r.metrics["pos_cos"]).collect();
    for e in 1..=5 {
        assert!(pos[e] > pos[e - 1], "epoch {e}: {} -> {}", pos[e - 1], pos[e]);
    }
    assert!(pos.last().unwrap() - pos[0] >= 0.2, "gain {:?}", pos);
}

#[test]
fn training_is_bit_reproducible_and_best_val_monotone() {
    let f = triplet_fixture(60, 10, 3, 1.0, 2);
    let cfg = TrainingConfig { dropout_rate: 0.1, early_stop_patience: 2, epochs: 8, ..info_nce_config() };
    let data = TrainingData::InfoNce(f.triplets.clone());
    let a = train_head(&cfg, &data, &f.embeddings).unwrap();
    let b = train_head(&cfg, &data, &f.embeddings).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(history_csv(&a.history), history_csv(&b.history));
    for w in a.history.windows(2) {
        assert!(w[1].best_val_loss <= w[0].best_val_loss);
    }
    let best = a.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(a.history[a.best_epoch].val_loss, best);
}

#[test]
fn nt_xent_training_runs_and_splits_disjointly() {
    let f = triplet_fixture(50, 8, 2, 1.0, 4);
    let ids: Vec<u64> = f.catalog.ids().collect();
    let cfg = TrainingConfig {
        head: HeadSpec { kind: HeadKind::TwoLayer, hidden_dim: 8, output_dim: Some(6) },
        epochs: 3,
        batch_size: 8,
        ..Default::default()
    };
    let out = train_head(&cfg, &TrainingData::NtXent { ids }, &f.embeddings).unwrap();
    assert_eq!(out.model.output_dim(), 6);
    assert!(out.history.iter().all(|r| r.train_loss.is_finite() && r.metrics.contains_key("val_alignment")));
    let parts = [&out.split.train, &out.split.val, &out.split.test];
    let all: BTreeSet<u64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    assert_eq!(all.len(), parts.iter().map(|p| p.len()).sum::<usize>());
}

#[test]
fn empty_and_missing_data_errors() {
    let f = triplet_fixture(20, 6, 2, 1.0, 1);
    let cfg = TrainingConfig::default();
    assert!(matches!(
        train_head(&cfg, &TrainingData::NtXent { ids: vec![] }, &f.embeddings),
        Err(ContrastiveError::EmptyData)
    ));
    let missing = f.embeddings.subset(&(0..20).collect::<Vec<u64>>());
    assert!(matches!(
        train_head(&cfg, &TrainingData::InfoNce(f.triplets.clone()), &missing),
        Err(ContrastiveError::MissingEmbedding(_))
    ));
}

#[test]
fn exploding_learning_rate_reports_epoch() {
    let (cat, emb) = separable_dataset(40, 1);
    let scaled = EmbeddingSet::from_rows(8, emb.rows().map(|(id, r)| (id, r.iter().map(|v| v * 1e150).collect()))).unwrap();
    let data = rebalance(&cat, &scaled, &RebalanceConfig { min_samples: 1, ..RebalanceConfig::new(LabelAttribute::Categoria) }).unwrap();
    let cfg = TrainingConfig { learning_rate: 1e10, epochs: 5, dropout_rate: 0.0, ..Default::default() };
    match train_head(&cfg, &TrainingData::Classification(BTreeMap::from([("categoria".to_string(), data)])), &scaled) {
        Err(ContrastiveError::NonFiniteLoss { epoch }) => assert!(epoch <= 5),
        other => panic!("expected non-finite loss, got {other:?}"),
    }
}
