use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ContrastiveError;
use crate::catalog::{Catalog, EmbeddingSet, Item};
use crate::scalar::Real;

pub const DEFAULT_MIN_SAMPLES: usize = 20;
/// Default jitter scale as a fraction of the mean embedding row norm.
pub const DEFAULT_JITTER_FRACTION: f64 = 0.01;

/// Catalog attribute used as a classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelAttribute {
    Povo,
    Categoria,
}

impl LabelAttribute {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelAttribute::Povo => "povo",
            LabelAttribute::Categoria => "categoria",
        }
    }

    pub fn of(self, item: &Item) -> Option<&str> {
        match self {
            LabelAttribute::Povo => item.povo.as_deref(),
            LabelAttribute::Categoria => item.categoria.as_deref(),
        }
    }
}

impl FromStr for LabelAttribute {
    type Err = ContrastiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "povo" => Ok(LabelAttribute::Povo),
            "categoria" => Ok(LabelAttribute::Categoria),
            other => Err(ContrastiveError::InvalidConfig(format!(
                "unknown label attribute {other:?}"
            ))),
        }
    }
}

/// How labels below `min_samples` are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum RebalanceMode {
    /// Drop every label with fewer than `min_samples` items.
    FilterOnly,
    /// Drop labels with fewer than `min_original` items, then top up every
    /// remaining label to `min_samples` with jittered copies.
    Augment { min_original: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalanceConfig {
    pub attribute: LabelAttribute,
    pub min_samples: usize,
    pub mode: RebalanceMode,
    /// Standard deviation of the Gaussian jitter; `None` uses 1% of the mean row norm.
    pub jitter_sigma: Option<f64>,
    pub seed: u64,
}

impl RebalanceConfig {
    pub fn new(attribute: LabelAttribute) -> Self {
        Self {
            attribute,
            min_samples: DEFAULT_MIN_SAMPLES,
            mode: RebalanceMode::Augment { min_original: 1 },
            jitter_sigma: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    /// Catalog id; for synthetic rows, the id of the item they were jittered from.
    pub id: u64,
    pub label: String,
    pub is_synthetic: bool,
    pub x: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RebalancedDataset<T> {
    pub attribute: LabelAttribute,
    /// Retained labels S.
    pub selected: BTreeSet<String>,
    /// Originals in ascending id order, then synthetic rows grouped by label.
    pub samples: Vec<Sample<T>>,
    /// `w_c ∝ 1/n_c` over original counts, normalized so `Σ_c w_c = |S|`.
    pub class_weights: BTreeMap<String, f64>,
    /// Original (pre-augmentation) count per retained label.
    pub original_counts: BTreeMap<String, usize>,
}

impl<T: Real> RebalancedDataset<T> {
    pub fn labels(&self) -> Vec<String> {
        self.selected.iter().cloned().collect()
    }

    pub fn count(&self, label: &str) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }
}

/// Inverse-frequency weights normalized to sum to the number of labels.
pub fn inverse_frequency_weights(counts: &BTreeMap<String, usize>) -> BTreeMap<String, f64> {
    let inv_sum: f64 = counts.values().map(|&n| 1.0 / n as f64).sum();
    let scale = counts.len() as f64 / inv_sum;
    counts
        .iter()
        .map(|(label, &n)| (label.clone(), scale / n as f64))
        .collect()
}

/// Filters rare labels and optionally augments the survivors with jittered
/// copies of their embeddings. Items without a label or an embedding are skipped.
pub fn rebalance<T: Real>(
    catalog: &Catalog,
    embeddings: &EmbeddingSet<T>,
    config: &RebalanceConfig,
) -> Result<RebalancedDataset<T>, ContrastiveError> {
    if config.min_samples == 0 {
        return Err(ContrastiveError::InvalidConfig("min_samples must be at least 1".into()));
    }
    let mut by_label: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for item in catalog.items() {
        if let Some(label) = config.attribute.of(item) {
            if embeddings.contains(item.id) {
                by_label.entry(label.to_string()).or_default().push(item.id);
            }
        }
    }
    if by_label.is_empty() {
        return Err(ContrastiveError::NoLabels(config.attribute.as_str().to_string()));
    }

    let floor = match config.mode {
        RebalanceMode::FilterOnly => config.min_samples,
        RebalanceMode::Augment { min_original } => min_original.max(1),
    };
    by_label.retain(|_, ids| ids.len() >= floor);
    if by_label.is_empty() {
        return Err(ContrastiveError::NoLabels(config.attribute.as_str().to_string()));
    }
    let original_counts: BTreeMap<String, usize> =
        by_label.iter().map(|(l, ids)| (l.clone(), ids.len())).collect();

    let mut samples: Vec<Sample<T>> = by_label
        .iter()
        .flat_map(|(label, ids)| {
            ids.iter().map(move |&id| Sample {
                id,
                label: label.clone(),
                is_synthetic: false,
                x: embeddings.row(id).expect("checked above").to_vec(),
            })
        })
        .collect();
    samples.sort_by_key(|s| s.id);

    if matches!(config.mode, RebalanceMode::Augment { .. }) {
        let sigma = config
            .jitter_sigma
            .unwrap_or_else(|| DEFAULT_JITTER_FRACTION * embeddings.mean_row_norm().as_f64());
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(ContrastiveError::InvalidConfig("jitter sigma must be finite and ≥ 0".into()));
        }
        let normal = Normal::new(0.0, sigma).expect("valid sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (label, ids) in &by_label {
            for r in 0..config.min_samples.saturating_sub(ids.len()) {
                let src = ids[r % ids.len()];
                let x = embeddings
                    .row(src)
                    .expect("checked above")
                    .iter()
                    .map(|&v| v + T::lit(normal.sample(&mut rng)))
                    .collect();
                samples.push(Sample {
                    id: src,
                    label: label.clone(),
                    is_synthetic: true,
                    x,
                });
            }
        }
    }

    Ok(RebalancedDataset {
        attribute: config.attribute,
        selected: by_label.keys().cloned().collect(),
        samples,
        class_weights: inverse_frequency_weights(&original_counts),
        original_counts,
    })
}
