//! Scoring of embedding spaces and classifiers: cosine STS with Pearson
//! correlation, In-Context STS construction, and accuracy with
//! precision/recall restricted to a selected label subset.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::EmbeddingSet;
use crate::contrastive::{ContrastiveError, HeadModel};
use crate::scalar::{dot, norm, Real};

pub const IN_CONTEXT_POSITIVE_GOLD: f64 = 4.0;
pub const IN_CONTEXT_NEGATIVE_GOLD: f64 = 1.0;
pub const MAX_GOLD: f64 = 5.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("zero vector: cosine similarity is undefined")]
    ZeroVector,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two values, got {0}")]
    TooShort(usize),
    #[error("zero variance: correlation is undefined")]
    ZeroVariance,
    #[error("gold score {0} outside [0, 5]")]
    GoldOutOfRange(f64),
    #[error("no embedding for id {0}")]
    UnknownId(u64),
    #[error("anchor {anchor}: {message}")]
    InvalidAnchor { anchor: u64, message: String },
    #[error("selected labels never observed in gold or predictions: {0:?}")]
    LabelSpaceMismatch(Vec<String>),
    #[error("selected label set is empty")]
    EmptySelection,
    #[error("no samples to score")]
    Empty,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Model(#[from] ContrastiveError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn cosine_similarity<T: Real>(u: &[T], v: &[T]) -> Result<T, EvalError> {
    if u.len() != v.len() {
        return Err(EvalError::LengthMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if !(nu > T::zero() && nv > T::zero()) {
        return Err(EvalError::ZeroVector);
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Sample Pearson correlation, computed with centered sums.
pub fn pearson<T: Real>(xs: &[T], ys: &[T]) -> Result<T, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(EvalError::TooShort(n));
    }
    let nf = T::of_usize(n);
    let mx = xs.iter().copied().sum::<T>() / nf;
    let my = ys.iter().copied().sum::<T>() / nf;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > T::zero() && syy > T::zero()) {
        return Err(EvalError::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// One side of a scored pair: a stored embedding or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PairSide {
    Id(u64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub left: PairSide,
    pub right: PairSide,
    pub gold: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoredPairSet {
    pub pairs: Vec<ScoredPair>,
}

#[derive(Debug, Deserialize, Serialize)]
struct PairRow {
    left_id: u64,
    right_id: u64,
    gold: f64,
}

impl ScoredPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        match self.pairs.iter().find(|p| !(0.0..=MAX_GOLD).contains(&p.gold)) {
            Some(p) => Err(EvalError::GoldOutOfRange(p.gold)),
            None => Ok(()),
        }
    }

    /// Parses `left_id,right_id,gold` CSV with a header row.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut pairs = Vec::new();
        for (i, row) in reader.deserialize::<PairRow>().enumerate() {
            let row = row.map_err(|e| EvalError::Parse {
                line: i + 2,
                message: e.to_string(),
            })?;
            pairs.push(ScoredPair {
                left: PairSide::Id(row.left_id),
                right: PairSide::Id(row.right_id),
                gold: row.gold,
            });
        }
        let set = Self { pairs };
        set.validate()?;
        Ok(set)
    }

    /// CSV form; pairs given by explicit vectors cannot be written and are an error.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (i, p) in self.pairs.iter().enumerate() {
            let (PairSide::Id(left_id), PairSide::Id(right_id)) = (&p.left, &p.right) else {
                return Err(EvalError::Parse {
                    line: i + 2,
                    message: "only id pairs can be written as CSV".into(),
                });
            };
            w.serialize(PairRow {
                left_id: *left_id,
                right_id: *right_id,
                gold: p.gold,
            })
            .expect("write to memory");
        }
        if self.pairs.is_empty() {
            w.write_record(["left_id", "right_id", "gold"]).expect("write to memory");
        }
        Ok(String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsReport {
    pub pearson: f64,
    pub n_pairs: usize,
    pub cosines: Vec<f64>,
    pub golds: Vec<f64>,
}

fn resolve<'a, T: Real>(
    side: &'a PairSide,
    embeddings: &'a EmbeddingSet<T>,
) -> Result<std::borrow::Cow<'a, [T]>, EvalError> {
    match side {
        PairSide::Id(id) => embeddings
            .row(*id)
            .map(std::borrow::Cow::Borrowed)
            .ok_or(EvalError::UnknownId(*id)),
        PairSide::Vector(v) => Ok(std::borrow::Cow::Owned(v.iter().map(|&x| T::lit(x)).collect())),
    }
}

/// Pearson correlation between gold scores and the cosine similarity of the
/// projected pair members. `model = None` scores the raw embeddings.
pub fn sts_score<T: Real>(
    model: Option<&HeadModel<T>>,
    pairs: &ScoredPairSet,
    embeddings: &EmbeddingSet<T>,
) -> Result<StsReport, EvalError> {
    pairs.validate()?;
    let project = |x: &[T]| -> Result<Vec<T>, EvalError> {
        match model {
            None => Ok(x.to_vec()),
            Some(m) => Ok(m.project(x)?),
        }
    };
    let mut cosines = Vec::with_capacity(pairs.len());
    let mut golds = Vec::with_capacity(pairs.len());
    for p in &pairs.pairs {
        let l = project(&resolve(&p.left, embeddings)?)?;
        let r = project(&resolve(&p.right, embeddings)?)?;
        cosines.push(cosine_similarity(&l, &r)?.as_f64());
        golds.push(p.gold);
    }
    Ok(StsReport {
        pearson: pearson(&cosines, &golds)?,
        n_pairs: cosines.len(),
        cosines,
        golds,
    })
}

/// An anchor with its paraphrase positive and a neighbouring-chunk negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InContextAnchor {
    pub anchor: u64,
    pub positive: Option<u64>,
    pub negative: Option<u64>,
}

/// Two scored pairs per anchor, positive (gold 4) then negative (gold 1),
/// with anchors in ascending id order.
pub fn build_in_context_sts(anchors: &[InContextAnchor]) -> Result<ScoredPairSet, EvalError> {
    let mut sorted: Vec<&InContextAnchor> = anchors.iter().collect();
    sorted.sort_by_key(|a| a.anchor);
    let mut pairs = Vec::with_capacity(2 * anchors.len());
    for a in sorted {
        let bad = |m: &str| EvalError::InvalidAnchor {
            anchor: a.anchor,
            message: m.to_string(),
        };
        let positive = a.positive.ok_or_else(|| bad("missing positive"))?;
        let negative = a.negative.ok_or_else(|| bad("missing negative"))?;
        if positive == a.anchor {
            return Err(bad("positive is the anchor itself"));
        }
        if negative == a.anchor {
            return Err(bad("negative is the anchor itself"));
        }
        for (other, gold) in [(positive, IN_CONTEXT_POSITIVE_GOLD), (negative, IN_CONTEXT_NEGATIVE_GOLD)] {
            pairs.push(ScoredPair {
                left: PairSide::Id(a.anchor),
                right: PairSide::Id(other),
                gold,
            });
        }
    }
    Ok(ScoredPairSet { pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_selected: f64,
    pub recall_selected: f64,
    pub selected: BTreeSet<String>,
    pub per_label: BTreeMap<String, LabelStats>,
    pub n_samples: usize,
}

/// Accuracy over all samples; per-label precision and recall with empty
/// denominators counted as 0; macro means over the selected labels only.
///
/// Every selected label must occur in the gold labels or the predictions.
pub fn classification_metrics<S: AsRef<str>>(
    predictions: &[S],
    gold: &[S],
    selected: &BTreeSet<String>,
) -> Result<MetricsReport, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch(predictions.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    if selected.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (p, g) in predictions.iter().zip(gold) {
        let (p, g) = (p.as_ref(), g.as_ref());
        if p == g {
            correct += 1;
            counts.entry(g).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(g).or_default().2 += 1;
        }
    }
    let unseen: Vec<String> = selected
        .iter()
        .filter(|l| !counts.contains_key(l.as_str()))
        .cloned()
        .collect();
    if !unseen.is_empty() {
        return Err(EvalError::LabelSpaceMismatch(unseen));
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let per_label: BTreeMap<String, LabelStats> = counts
        .iter()
        .map(|(&label, &(tp, fp, fnn))| {
            (
                label.to_string(),
                LabelStats {
                    precision: ratio(tp, tp + fp),
                    recall: ratio(tp, tp + fnn),
                    true_positives: tp,
                    false_positives: fp,
                    false_negatives: fnn,
                },
            )
        })
        .collect();
    let k = selected.len() as f64;
    Ok(MetricsReport {
        accuracy: correct as f64 / gold.len() as f64,
        precision_selected: selected.iter().map(|l| per_label[l].precision).sum::<f64>() / k,
        recall_selected: selected.iter().map(|l| per_label[l].recall).sum::<f64>() / k,
        selected: selected.clone(),
        per_label,
        n_samples: gold.len(),
    })
}

/// JSON evaluation report written by the operator tooling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sts: Option<StsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<MetricsReport>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0f64, 1.0], &[2.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(
            cosine_similarity(&[0.0f64, 0.0], &[1.0, 0.0]),
            Err(EvalError::ZeroVector)
        ));
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0f64, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0f64, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0f64, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0f64, 1.0], &[1.0, 2.0]), Err(EvalError::ZeroVariance)));
        assert!(matches!(pearson(&[1.0f64], &[1.0]), Err(EvalError::TooShort(1))));
    }

    #[test]
    fn in_context_builder() {
        let anchors: Vec<InContextAnchor> = [30u64, 10, 20]
            .iter()
            .map(|&a| InContextAnchor {
                anchor: a,
                positive: Some(a + 1),
                negative: Some(a + 2),
            })
            .collect();
        let set = build_in_context_sts(&anchors).unwrap();
        let golds: Vec<f64> = set.pairs.iter().map(|p| p.gold).collect();
        assert_eq!(golds, vec![4.0, 1.0, 4.0, 1.0, 4.0, 1.0]);
        assert_eq!(set.pairs[0].left, PairSide::Id(10));
        assert!(build_in_context_sts(&[]).unwrap().is_empty());
        let selfneg = InContextAnchor {
            anchor: 5,
            positive: Some(6),
            negative: Some(5),
        };
        assert!(build_in_context_sts(&[selfneg]).is_err());
    }

    #[test]
    fn confusion_matrix_hand_example() {
        let gold = ["A", "A", "B", "B"];
        let pred = ["A", "B", "B", "B"];
        let s: BTreeSet<String> = ["A".to_string(), "B".to_string()].into();
        let r = classification_metrics(&pred, &gold, &s).unwrap();
        assert_eq!(r.per_label["A"].precision, 1.0);
        assert!((r.per_label["B"].precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_label["A"].recall, 0.5);
        assert_eq!(r.per_label["B"].recall, 1.0);
        assert!((r.precision_selected - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.recall_selected, 0.75);
        assert_eq!(r.accuracy, 0.75);

        let only_a: BTreeSet<String> = ["A".to_string()].into();
        let r = classification_metrics(&pred, &gold, &only_a).unwrap();
        assert_eq!(r.precision_selected, 1.0);
        assert_eq!(r.recall_selected, 0.5);
        assert_eq!(r.accuracy, 0.75);
    }

    #[test]
    fn unseen_selected_label_is_a_mismatch() {
        let s: BTreeSet<String> = ["C".to_string()].into();
        assert!(matches!(
            classification_metrics(&["A"], &["A"], &s),
            Err(EvalError::LabelSpaceMismatch(_))
        ));
    }

    #[test]
    fn pair_csv_round_trip() {
        let text = "left_id,right_id,gold\n1,2,4.5\n3,4,0\n";
        let set = ScoredPairSet::from_csv(text).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.to_csv().unwrap(), "left_id,right_id,gold\n1,2,4.5\n3,4,0.0\n");
        assert!(ScoredPairSet::from_csv("left_id,right_id,gold\n1,2,5.5\n").is_err());
    }
}
