//! Seeded synthetic data for tests, demos and acceptance runs.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::catalog::{Catalog, Coords, EmbeddingSet, Item, PartialDate};
use crate::contrastive::{sample_triplets, TripletSet};

/// Ids at or above this value name paraphrase rows, not catalog items.
pub const PARAPHRASE_ID_OFFSET: u64 = 1_000_000;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Three isotropic Gaussian clusters of `per_cluster` points in `dim ≥ 3`
/// dimensions. Centers sit on scaled coordinate axes so every pair of centers is
/// `separation · sigma` apart. Ids run from 0 and labels are 0, 1, 2.
pub fn gaussian_clusters(
    per_cluster: usize,
    dim: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> (EmbeddingSet<f64>, Vec<usize>) {
    assert!(dim >= 3, "three clusters need three axes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation * sigma / 2f64.sqrt();
    let mut rows = Vec::with_capacity(3 * per_cluster);
    let mut labels = Vec::with_capacity(3 * per_cluster);
    for c in 0..3 {
        for p in 0..per_cluster {
            let mut v: Vec<f64> = (0..dim).map(|_| sigma * normal(&mut rng)).collect();
            v[c] += offset;
            rows.push(((c * per_cluster + p) as u64, v));
            labels.push(c);
        }
    }
    (EmbeddingSet::from_rows(dim, rows).expect("finite rows"), labels)
}

/// Catalog, embeddings and triplets where each anchor and its paraphrase share
/// a latent signal in the first `signal_dims` coordinates while the remaining
/// coordinates carry independent nuisance noise of norm about `nuisance`.
#[derive(Debug, Clone)]
pub struct TripletFixture {
    pub catalog: Catalog,
    /// Catalog rows plus one paraphrase row per item at `PARAPHRASE_ID_OFFSET + id`.
    pub embeddings: EmbeddingSet<f64>,
    pub triplets: TripletSet,
}

pub fn triplet_fixture(
    n_items: usize,
    dim: usize,
    signal_dims: usize,
    nuisance: f64,
    seed: u64,
) -> TripletFixture {
    assert!(signal_dims >= 1 && signal_dims < dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categories = ["cerâmica", "cestaria", "plumária", "trançado"];
    let items: Vec<Item> = (0..n_items as u64)
        .map(|id| {
            let mut it = Item::new(id, format!("objeto {id}"));
            it.categoria = Some(categories[(id % 4) as usize].to_string());
            it
        })
        .collect();
    let catalog = Catalog::from_items(items).expect("distinct ids");

    let noise_scale = nuisance / ((dim - signal_dims) as f64).sqrt();
    let mut rows = Vec::with_capacity(2 * n_items);
    for id in 0..n_items as u64 {
        let signal: Vec<f64> = (0..signal_dims).map(|_| normal(&mut rng)).collect();
        let s_norm = signal.iter().map(|v| v * v).sum::<f64>().sqrt();
        for row_id in [id, PARAPHRASE_ID_OFFSET + id] {
            let mut v: Vec<f64> = signal
                .iter()
                .map(|s| s / s_norm + 0.05 * normal(&mut rng))
                .collect();
            v.extend((signal_dims..dim).map(|_| noise_scale * normal(&mut rng)));
            rows.push((row_id, v));
        }
    }
    let embeddings = EmbeddingSet::from_rows(dim, rows).expect("finite rows");
    let positives: BTreeMap<u64, u64> = (0..n_items as u64).map(|id| (id, PARAPHRASE_ID_OFFSET + id)).collect();
    let triplets = sample_triplets(&catalog, &positives, seed).expect("enough negatives");
    TripletFixture {
        catalog,
        embeddings,
        triplets,
    }
}

pub const STATES: [&str; 5] = ["AM", "PA", "MT", "RR", "AC"];

/// Centroids for [`STATES`].
pub fn state_centroids() -> BTreeMap<String, Coords> {
    [
        ("AM", -3.4, -65.0),
        ("PA", -3.8, -52.5),
        ("MT", -12.6, -55.9),
        ("RR", 2.1, -61.4),
        ("AC", -9.0, -70.5),
    ]
    .into_iter()
    .map(|(s, lat, lon)| (s.to_string(), Coords { lat, lon }))
    .collect()
}

/// Random catalog with every optional field sometimes missing: dates at
/// year, month and day precision, communities with and without coordinates,
/// states, materials and one numeric extension.
pub fn random_catalog(n: usize, seed: u64) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let categorias = ["cerâmica", "cestaria", "plumária", "armas", "adornos"];
    let povos = ["Baniwa", "Kayapó", "Tikuna", "Yanomami", "Wai Wai", "Karajá", "Xavante", "Munduruku"];
    let materials = ["argila", "palha", "pena", "madeira", "semente"];
    let mut ids: Vec<u64> = Vec::with_capacity(n);
    while ids.len() < n {
        let id = rng.random_range(0..(n as u64) * 20 + 10);
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    let items = ids.into_iter().map(|id| {
        let mut it = Item::new(id, format!("peça {id}"));
        if rng.random_bool(0.9) {
            it.categoria = Some(categorias[rng.random_range(0..categorias.len())].to_string());
        }
        if rng.random_bool(0.8) {
            let p = rng.random_range(0..povos.len());
            it.povo = Some(povos[p].to_string());
            if rng.random_bool(0.5) {
                it.community_coords = Some(Coords {
                    lat: -10.0 + p as f64 + rng.random_range(-0.01..0.01),
                    lon: -60.0 + p as f64 + rng.random_range(-0.01..0.01),
                });
            }
        }
        if rng.random_bool(0.7) {
            it.state = Some(STATES[rng.random_range(0..STATES.len())].to_string());
        }
        if rng.random_bool(0.85) {
            let year = rng.random_range(1940..=1945 + (n as i32 % 40));
            let month = rng.random_bool(0.8).then(|| rng.random_range(1..=12u8));
            let day = month.and_then(|_| rng.random_bool(0.7).then(|| rng.random_range(1..=28u8)));
            it.acquisition = Some(PartialDate::ymd(year, month, day));
        }
        it.materials = materials
            .iter()
            .filter(|_| rng.random_bool(0.3))
            .map(|m| m.to_string())
            .collect();
        if rng.random_bool(0.5) {
            it.extensions.insert("altura_cm".into(), rng.random_range(1.0..200.0));
        }
        it
    });
    Catalog::from_items(items.collect::<Vec<_>>()).expect("distinct ids")
}
