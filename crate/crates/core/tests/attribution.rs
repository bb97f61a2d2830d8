use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semspace_core::attribution::*;
use semspace_core::contrastive::{Dense, HeadKind, HeadModel, HeadSpec};
use semspace_testkit::fd::numeric_grad;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Two-layer head with every parameter (biases included) random.
fn smooth_head(input: usize, hidden: usize, output: usize, seed: u64) -> HeadModel<f64> {
    let spec = HeadSpec {
        kind: HeadKind::TwoLayer,
        hidden_dim: hidden,
        output_dim: Some(output),
    };
    let mut m = HeadModel::init(&spec, input, &BTreeMap::new(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    let p: Vec<f64> = m.params().iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    m.set_params(&p).unwrap();
    m
}

fn cosine_of(model: &HeadModel<f64>, reference: &[f64], z: &[f64]) -> f64 {
    let p = model.project(z).unwrap();
    let d: f64 = p.iter().zip(reference).map(|(a, b)| a * b).sum();
    let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nr = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    d / (np * nr)
}

/// Midpoint-rule path integral with finite-difference gradients of the
/// forward pass only.
fn ig_oracle(model: &HeadModel<f64>, reference: &[f64], x: &[f64], baseline: &[f64], m: usize) -> Vec<f64> {
    let mut acc = vec![0.0; x.len()];
    for s in 0..m {
        let t = (s as f64 + 0.5) / m as f64;
        let z: Vec<f64> = baseline.iter().zip(x).map(|(b, xi)| b + t * (xi - b)).collect();
        let g = numeric_grad(&z, |z| cosine_of(model, reference, z));
        acc.iter_mut().zip(g).for_each(|(a, gi)| *a += gi);
    }
    acc.iter()
        .zip(x.iter().zip(baseline))
        .map(|(a, (xi, bi))| (xi - bi) * a / m as f64)
        .collect()
}

#[test]
fn completeness_and_high_resolution_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..4 {
        let model = smooth_head(6, 10, 4, 100 + case);
        let x = random_vec(&mut rng, 6);
        let baseline = random_vec(&mut rng, 6);
        let reference = random_vec(&mut rng, 4);
        let cfg = AttributionConfig {
            steps: 256,
            baseline: Baseline::Explicit {
                values: baseline.clone(),
            },
            target: Target::Cosine {
                reference: reference.clone(),
            },
            rule: QuadratureRule::Midpoint,
        };
        let r = integrated_gradients(&model, &x, &cfg).unwrap();
        let df = r.f_x - r.f_baseline;
        assert!((r.f_x - cosine_of(&model, &reference, &x)).abs() < 1e-12);
        assert!(r.residual <= 1e-3 * df.abs(), "residual {} vs ΔF {df}", r.residual);

        let oracle = ig_oracle(&model, &reference, &x, &baseline, 65536);
        let oracle_total: f64 = oracle.iter().sum();
        assert!((oracle_total - df).abs() <= 1e-6 * df.abs().max(1.0), "oracle total {oracle_total} vs {df}");
        for (a, o) in r.attributions.iter().zip(&oracle) {
            assert!((a - o).abs() <= 1e-2 * df.abs(), "{a} vs {o}");
        }
    }
}

#[test]
fn residual_shrinks_with_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = smooth_head(5, 8, 3, 9);
    let x = random_vec(&mut rng, 5);
    for rule in [QuadratureRule::Midpoint, QuadratureRule::RightEndpoint] {
        let cfg = |steps| AttributionConfig {
            steps,
            baseline: Baseline::Explicit {
                values: vec![0.1; 5],
            },
            target: Target::Cosine {
                reference: vec![1.0, -0.5, 0.25],
            },
            rule,
        };
        let mut prev = f64::INFINITY;
        for k in [8, 16, 32, 64, 128, 256, 512, 1024, 2048] {
            let r = integrated_gradients(&model, &x, &cfg(k)).unwrap();
            assert!(r.residual <= prev + 1e-9, "{rule:?} m={k}: {} after {prev}", r.residual);
            prev = r.residual;
        }
        assert!(prev < 1e-3, "{rule:?} {prev}");
    }
}

#[test]
fn midpoint_beats_right_endpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..10 {
        let model = smooth_head(6, 8, 4, seed);
        let x = random_vec(&mut rng, 6);
        let base = random_vec(&mut rng, 6);
        let reference = random_vec(&mut rng, 4);
        let run = |rule| {
            let cfg = AttributionConfig {
                steps: 64,
                baseline: Baseline::Explicit { values: base.clone() },
                target: Target::Cosine {
                    reference: reference.clone(),
                },
                rule,
            };
            integrated_gradients(&model, &x, &cfg).unwrap().residual
        };
        assert!(run(QuadratureRule::Midpoint) < run(QuadratureRule::RightEndpoint));
    }
}

#[test]
fn symmetric_features_get_equal_attribution() {
    let mut model = smooth_head(4, 6, 3, 3);
    let first = &mut model.layers[0];
    for h in 0..first.outputs {
        let w = first.weight[h * first.inputs + 1];
        first.weight[h * first.inputs + 3] = w;
    }
    let cfg = AttributionConfig {
        steps: 64,
        baseline: Baseline::Explicit {
            values: vec![0.2, -0.1, 0.3, -0.1],
        },
        target: Target::Cosine {
            reference: vec![0.5, 1.0, -1.0],
        },
        rule: QuadratureRule::Midpoint,
    };
    let r = integrated_gradients(&model, &[0.9, 0.7, -0.4, 0.7], &cfg).unwrap();
    assert_eq!(r.attributions[1], r.attributions[3]);
}

#[test]
fn linear_target_is_exact_for_every_step_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let w = random_vec(&mut rng, 7);
        let model = HeadModel {
            kind: HeadKind::Linear,
            layers: vec![Dense {
                inputs: 7,
                outputs: 1,
                weight: w.clone(),
                bias: vec![rng.random_range(-1.0..1.0)],
            }],
            heads: BTreeMap::new(),
            config_hash: None,
        };
        let x = random_vec(&mut rng, 7);
        for steps in [1, 3, 256] {
            let cfg = AttributionConfig {
                steps,
                baseline: Baseline::Zero,
                target: Target::Output { index: 0 },
                rule: QuadratureRule::Midpoint,
            };
            let r = integrated_gradients(&model, &x, &cfg).unwrap();
            for i in 0..7 {
                assert!((r.attributions[i] - w[i] * x[i]).abs() <= 1e-12);
            }
            assert!(r.residual <= 1e-12);

            let halves: BTreeMap<usize, String> =
                (0..7).map(|i| (i, if i < 4 { "lo" } else { "hi" }.to_string())).collect();
            let g = group_attributions(&r, &halves).unwrap();
            let lo: f64 = (0..4).map(|i| w[i] * x[i]).sum();
            let hi: f64 = (4..7).map(|i| w[i] * x[i]).sum();
            assert!((g["lo"] - lo).abs() <= 1e-12 && (g["hi"] - hi).abs() <= 1e-12);
        }
    }
}

#[test]
fn grouping_preserves_totals() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = smooth_head(6, 5, 3, 1);
    let x = random_vec(&mut rng, 6);
    let cfg = AttributionConfig {
        steps: 32,
        baseline: Baseline::Explicit {
            values: random_vec(&mut rng, 6),
        },
        target: Target::Cosine {
            reference: vec![1.0, 1.0, 0.0],
        },
        rule: QuadratureRule::Midpoint,
    };
    let r = integrated_gradients(&model, &x, &cfg).unwrap();
    let identity: BTreeMap<usize, String> = (0..6).map(|i| (i, format!("f{i}"))).collect();
    let g = group_attributions(&r, &identity).unwrap();
    for i in 0..6 {
        assert_eq!(g[&format!("f{i}")], r.attributions[i]);
    }
    let single: BTreeMap<usize, String> = (0..6).map(|i| (i, "all".to_string())).collect();
    let g = group_attributions(&r, &single).unwrap();
    assert!((g["all"] - (r.f_x - r.f_baseline)).abs() <= r.residual + 1e-12);
}

#[test]
fn untrained_head_with_zero_baseline_reports_t0() {
    let spec = HeadSpec {
        kind: HeadKind::TwoLayer,
        hidden_dim: 4,
        output_dim: Some(3),
    };
    let model = HeadModel::<f64>::init(&spec, 3, &BTreeMap::new(), 0).unwrap();
    let cfg = AttributionConfig::cosine(vec![1.0, 0.0, 0.0]);
    match integrated_gradients(&model, &[1.0, 2.0, 3.0], &cfg) {
        Err(AttributionError::ZeroProjection { t }) => assert_eq!(t, 0.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn f32_agrees_with_f64() {
    let model = smooth_head(5, 6, 3, 4);
    let x = [0.3, -0.2, 0.8, 0.1, -0.6];
    let cfg = AttributionConfig {
        steps: 128,
        baseline: Baseline::Explicit {
            values: vec![0.05; 5],
        },
        target: Target::Cosine {
            reference: vec![0.2, 0.9, -0.4],
        },
        rule: QuadratureRule::Midpoint,
    };
    let a = integrated_gradients(&model, &x, &cfg).unwrap();
    let x32: Vec<f32> = x.iter().map(|&v| v as f32).collect();
    let b = integrated_gradients(&model.cast::<f32>(), &x32, &cfg).unwrap();
    for (u, v) in a.attributions.iter().zip(&b.attributions) {
        assert!((u - v).abs() < 1e-4);
    }
}

#[test]
fn report_round_trips() {
    let r = AttributionResult {
        attributions: vec![0.5, -0.25],
        residual: 0.0,
        f_x: 0.25,
        f_baseline: 0.0,
        steps: 4,
    };
    let cfg = AttributionConfig::cosine(vec![1.0, 0.0]);
    let rep = AttributionReport::new(Some(7), &cfg, r, BTreeMap::from([("a".to_string(), 0.25)]));
    let json = serde_json::to_string(&rep).unwrap();
    assert!(json.contains("\"kind\":\"zero\""));
    assert_eq!(serde_json::from_str::<AttributionReport>(&json).unwrap(), rep);
}
