mod common;

use common::{catalog_for, history_column, semspace, triplet_files, Dir};
use semspace_core::catalog::read_embeddings;
use semspace_core::contrastive::HeadModel;
use semspace_core::evaluation::{PairSide, ScoredPair, ScoredPairSet};
use semspace_core::projection::ProjectionCache;
use semspace_core::synthetic::{gaussian_clusters, random_catalog, PARAPHRASE_ID_OFFSET};
use semspace_testkit::metrics::pearson_sums;
use serde_json::Value;

#[test]
fn validate_exit_codes() {
    let d = Dir::new();
    let (set, _) = gaussian_clusters(5, 4, 3.0, 1.0, 1);
    let catalog = d.catalog("c.jsonl", &catalog_for(set.ids()));
    let emb = d.embeddings("e.cemb", &set);

    let run = semspace(["validate", "--catalog", &catalog, "--image-embeddings", &emb]).ok();
    let report: Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(report["item_count"], 15);
    assert_eq!(report["with_image_embedding"], 15);
    assert_eq!(report["with_text_embedding"], 0);

    let dup = d.text("dup.jsonl", "{\"id\": 7, \"titulo\": \"a\"}\n{\"id\": 7, \"titulo\": \"b\"}\n");
    let run = semspace(["validate", "--catalog", &dup]);
    assert_eq!(run.code, 1);
    let report: Value = serde_json::from_str(&run.stdout).unwrap();
    assert!(report["errors"][0]["message"].as_str().unwrap().contains("duplicate id 7"));

    let small = d.catalog("small.jsonl", &catalog_for(&[0, 1]));
    let run = semspace(["validate", "--catalog", &small, "--text-embeddings", &emb]);
    assert_eq!(run.code, 1);
    assert!(run.stdout.contains("unknown item id 2"));

    let run = semspace(["validate", "--catalog", &catalog, "--image-embeddings", &d.s("missing.cemb")]);
    assert_eq!(run.code, 2, "{}", run.stderr);
    assert_eq!(semspace(["validate", "--catalog", &d.s("nope.jsonl")]).code, 2);
}

#[test]
fn project_is_deterministic_and_replayable() {
    let d = Dir::new();
    let (set, _) = gaussian_clusters(25, 8, 10.0, 1.0, 2);
    let catalog = d.catalog("c.jsonl", &catalog_for(set.ids()));
    let emb = d.embeddings("e.cemb", &set);
    let args = |out: &str| {
        vec![
            "project".to_string(),
            "--view".into(),
            "semantic_text".into(),
            "--catalog".into(),
            catalog.clone(),
            "--embeddings".into(),
            emb.clone(),
            "--seed".into(),
            "7".into(),
            "--n-epochs".into(),
            "60".into(),
            "--out".into(),
            d.s(out),
        ]
    };
    semspace(args("a.json")).ok();
    semspace(args("b.json")).ok();
    assert_eq!(d.read("a.json"), d.read("b.json"));
    let cache = ProjectionCache::read(d.path("a.json")).unwrap();
    assert_eq!(cache.coords.len(), 75);
    assert_eq!(cache.config.unwrap().seed, 7);

    let manifest: Value = serde_json::from_slice(&d.read("a.json.manifest.json")).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["options"]["n_epochs"], 60);
    assert_eq!(manifest["outputs"]["projection"]["sha256"].as_str().unwrap().len(), 64);
    let before = d.read("a.json");
    let run = semspace(["replay", "--manifest", &d.s("a.json.manifest.json")]).ok();
    assert!(run.stdout.starts_with("identical projection"), "{}", run.stdout);
    assert_eq!(d.read("a.json"), before);

    // a changed input is detected before rerunning
    d.embeddings("e.cemb", &set.subset(&set.ids()[..70]));
    assert_eq!(semspace(["replay", "--manifest", &d.s("a.json.manifest.json")]).code, 1);
}

#[test]
fn material_view_and_missing_arguments() {
    let d = Dir::new();
    let catalog = d.catalog("c.jsonl", &random_catalog(50, 3));
    let material = d.text(
        "m.json",
        r#"{"vertices": [{"name": "vegetal", "x": 0, "y": 0}, {"name": "animal", "x": 1, "y": 0}, {"name": "mineral", "x": 0.5, "y": 1}],
            "assignments": {"palha": "vegetal", "madeira": "vegetal", "semente": "vegetal", "pena": "animal", "argila": "mineral"}}"#,
    );
    semspace(["project", "--view", "material", "--catalog", &catalog, "--material-config", &material, "--out", &d.s("m.proj")]).ok();
    assert_eq!(ProjectionCache::read(d.path("m.proj")).unwrap().coords.len(), 50);

    let run = semspace(["project", "--view", "semantic_image", "--out", &d.s("x.json")]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("--embeddings is required"), "{}", run.stderr);
    assert_eq!(semspace(["project", "--view", "sideways"]).code, 2);
}

#[test]
fn config_file_fills_unset_flags() {
    let d = Dir::new();
    let (set, _) = gaussian_clusters(10, 5, 8.0, 1.0, 3);
    let emb = d.embeddings("e.cemb", &set);
    let config = d.text(
        "semspace.toml",
        &format!("[project]\nview = \"semantic_image\"\nembeddings = {emb:?}\nseed = 1\nn_epochs = 30\nn_neighbors = 5\n"),
    );
    semspace(["--config", &config, "project", "--seed", "9", "--out", &d.s("p.json")]).ok();
    let manifest: Value = serde_json::from_slice(&d.read("p.json.manifest.json")).unwrap();
    assert_eq!(manifest["options"]["seed"], 9);
    assert_eq!(manifest["options"]["n_epochs"], 30);
    assert_eq!(manifest["options"]["n_neighbors"], 5);

    let bad = d.text("bad.toml", "[project]\nsede = 1\n");
    let run = semspace(["--config", &bad, "project", "--out", &d.s("q.json")]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("sede"));
}

#[test]
fn train_writes_monotone_history_and_replays() {
    let d = Dir::new();
    let f = triplet_files(&d, 60, 10, 3, 1.0, 2);
    let out = d.s("head.json");
    semspace([
        "train", "--regime", "info_nce", "--tau", "0.05", "--catalog", &f.catalog, "--embeddings", &f.embeddings,
        "--paraphrase-embeddings", &f.paraphrases, "--triplets", &f.triplets, "--epochs", "8", "--patience", "2",
        "--batch-size", "16", "--seed", "4", "--split-out", &d.s("split.json"), "--out", &out,
    ])
    .ok();
    let best = history_column(&d.path("head.json.history.csv"), "best_val_loss");
    assert!(best.len() >= 2);
    assert!(best.windows(2).all(|w| w[1] <= w[0]), "{best:?}");
    let model = HeadModel::<f64>::load(&out).unwrap();
    assert_eq!(model.input_dim(), 10);

    let model_bytes = d.read("head.json");
    let run = semspace(["replay", "--manifest", &d.s("head.json.manifest.json")]).ok();
    assert_eq!(run.stdout.lines().filter(|l| l.starts_with("identical")).count(), 3, "{}", run.stdout);
    assert_eq!(d.read("head.json"), model_bytes);

    let run = semspace(["train", "--regime", "hebbian", "--catalog", &f.catalog, "--embeddings", &f.embeddings, "--out", &out]);
    assert_eq!(run.code, 2);
}

#[test]
fn classification_train_and_eval() {
    let d = Dir::new();
    let catalog = random_catalog(240, 5);
    let mut rows = Vec::new();
    let labels = ["cerâmica", "cestaria", "plumária", "armas", "adornos"];
    for item in catalog.items() {
        let mut v = vec![0.0; 6];
        if let Some(c) = &item.categoria {
            v[labels.iter().position(|l| l == c).unwrap()] = 3.0;
        }
        v[5] = (item.id % 7) as f64 / 7.0;
        rows.push((item.id, v));
    }
    let set = semspace_core::catalog::EmbeddingSet::from_rows(6, rows).unwrap();
    let c = d.catalog("c.jsonl", &catalog);
    let e = d.embeddings("e.cemb", &set);
    let out = d.s("cls.json");
    semspace([
        "train", "--regime", "classification", "--head", "categoria", "--catalog", &c, "--embeddings", &e,
        "--min-samples", "5", "--epochs", "40", "--learning-rate", "0.5", "--dropout", "0", "--dtype", "f32",
        "--out", &out,
    ])
    .ok();
    let run = semspace([
        "eval", "--embeddings", &e, "--catalog", &c, "--model", &out, "--classify", "categoria", "--report",
        &d.s("report.json"),
    ])
    .ok();
    let summary: Value = serde_json::from_str(&run.stdout).unwrap();
    assert!(summary["classification"]["accuracy"].as_f64().unwrap() > 0.95, "{summary}");
    let report: Value = serde_json::from_slice(&d.read("report.json")).unwrap();
    assert_eq!(report["classification"]["selected"].as_array().unwrap().len(), 5);
}

#[test]
fn eval_identity_matches_pearson_oracle() {
    let d = Dir::new();
    let f = triplet_files(&d, 40, 8, 3, 1.0, 6);
    let mut pairs = Vec::new();
    for (i, t) in f.set.records.iter().enumerate() {
        pairs.push(ScoredPair { left: PairSide::Id(t.anchor), right: PairSide::Id(t.positive), gold: 4.0 + (i % 2) as f64 });
        pairs.push(ScoredPair { left: PairSide::Id(t.anchor), right: PairSide::Id(t.negatives[i % 10]), gold: 1.0 });
    }
    let pair_set = ScoredPairSet { pairs };
    pair_set.save(d.path("sts.csv")).unwrap();
    HeadModel::<f64>::identity(8).save(d.path("identity.json")).unwrap();

    let run = semspace([
        "eval", "--embeddings", &f.embeddings, "--paraphrase-embeddings", &f.paraphrases, "--model",
        &d.s("identity.json"), "--pairs", &d.s("sts.csv"),
    ])
    .ok();
    let r = serde_json::from_str::<Value>(&run.stdout).unwrap()["sts"]["pearson"].as_f64().unwrap();

    // oracle over the stored (f32) rows
    let items = read_embeddings::<f64>(d.path("items.cemb")).unwrap();
    let para = read_embeddings::<f64>(d.path("para.cemb")).unwrap();
    let row = |id: u64| if id >= PARAPHRASE_ID_OFFSET { para.row(id).unwrap() } else { items.row(id).unwrap() };
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for p in &pair_set.pairs {
        let (PairSide::Id(l), PairSide::Id(r)) = (&p.left, &p.right) else { unreachable!() };
        xs.push(cos(row(*l), row(*r)));
        ys.push(p.gold);
    }
    let oracle = pearson_sums(&xs, &ys);
    assert!((r - oracle).abs() < 1e-9, "{r} vs {oracle}");

    let raw = semspace(["eval", "--embeddings", &f.embeddings, "--paraphrase-embeddings", &f.paraphrases, "--pairs", &d.s("sts.csv")]).ok();
    assert_eq!(raw.stdout, run.stdout);
}

#[test]
fn attribute_and_preparation_commands() {
    let d = Dir::new();
    let f = triplet_files(&d, 30, 6, 2, 1.0, 8);
    let mut head = HeadModel::<f64>::identity(6);
    let mut params = head.params();
    for (i, p) in params.iter_mut().enumerate() {
        *p += 0.05 * ((i % 5) as f64 - 2.0);
    }
    head.set_params(&params).unwrap();
    head.save(d.path("head.json")).unwrap();
    let groups = d.text("groups.json", r#"{"signal": [0, 1], "noise": [2, 3, 4, 5]}"#);
    semspace([
        "attribute", "--embeddings", &f.embeddings, "--model", &d.s("head.json"), "--id", "3", "--reference-id", "4",
        "--groups", &groups, "--out", &d.s("attr.json"),
    ])
    .ok();
    let report: Value = serde_json::from_slice(&d.read("attr.json")).unwrap();
    let delta = report["f_x"].as_f64().unwrap() - report["f_baseline"].as_f64().unwrap();
    assert!(report["residual"].as_f64().unwrap() <= 1e-3 * delta.abs());
    assert_eq!(report["feature_scores"].as_array().unwrap().len(), 6);
    let grouped: f64 = report["group_scores"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    let total: f64 = report["feature_scores"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((grouped - total).abs() < 1e-12);

    let positives = d.text("pos.csv", "anchor,positive\n0,1000000\n1,1000001\n2,1000002\n");
    semspace(["triplets", "--catalog", &f.catalog, "--positives", &positives, "--seed", "3", "--out", &d.s("t.jsonl")]).ok();
    let text = String::from_utf8(d.read("t.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3);

    let anchors = d.text("anchors.csv", "anchor,positive,negative\n5,1000005,9\n2,1000002,6\n");
    semspace(["build-sts", "--anchors", &anchors, "--out", &d.s("sts.csv")]).ok();
    let sts = ScoredPairSet::load(d.path("sts.csv")).unwrap();
    let golds: Vec<f64> = sts.pairs.iter().map(|p| p.gold).collect();
    assert_eq!(golds, vec![4.0, 1.0, 4.0, 1.0]);
    assert_eq!(sts.pairs[0].left, PairSide::Id(2));

    let broken = d.text("broken.csv", "anchor,positive,negative\n5,,9\n");
    assert_eq!(semspace(["build-sts", "--anchors", &broken, "--out", &d.s("x.csv")]).code, 2);
}

#[test]
fn serve_refuses_missing_config() {
    let run = semspace(["serve", "--service", "/nonexistent/service.toml"]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("service.toml"));
}
