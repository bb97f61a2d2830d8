use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::NEGATIVES_PER_ANCHOR;
use super::ContrastiveError;
use crate::catalog::Catalog;

/// One curated training record: an anchor item, its paraphrase positive and
/// ten negatives from other categories.
///
/// The positive id may name a catalog item or a row of a separate paraphrase
/// embedding set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub anchor: u64,
    pub positive: u64,
    pub negatives: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletSet {
    pub records: Vec<TripletRecord>,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks shape and the category rule against the catalog.
    pub fn validate(&self, catalog: &Catalog) -> Result<(), ContrastiveError> {
        let bad = |anchor: u64, m: String| Err(ContrastiveError::InvalidTriplet { anchor, message: m });
        for r in &self.records {
            let Some(anchor) = catalog.get(r.anchor) else {
                return bad(r.anchor, "anchor is not a catalog item".into());
            };
            if r.positive == r.anchor {
                return bad(r.anchor, "positive equals anchor".into());
            }
            if r.negatives.len() != NEGATIVES_PER_ANCHOR {
                return bad(
                    r.anchor,
                    format!("expected {NEGATIVES_PER_ANCHOR} negatives, got {}", r.negatives.len()),
                );
            }
            let distinct: BTreeSet<u64> = r.negatives.iter().copied().collect();
            if distinct.len() != r.negatives.len() {
                return bad(r.anchor, "repeated negative".into());
            }
            for &n in &r.negatives {
                let Some(neg) = catalog.get(n) else {
                    return bad(r.anchor, format!("negative {n} is not a catalog item"));
                };
                if neg.categoria == anchor.categoria {
                    return bad(r.anchor, format!("negative {n} shares the anchor's categoria"));
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, ContrastiveError> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| ContrastiveError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ContrastiveError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ContrastiveError> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?)
    }
}

/// Draws ten negatives per anchor, uniformly without replacement from catalog
/// items whose `categoria` differs from the anchor's. Anchors are processed in
/// ascending id order and negatives are listed in ascending id order.
pub fn sample_triplets(
    catalog: &Catalog,
    positives: &BTreeMap<u64, u64>,
    seed: u64,
) -> Result<TripletSet, ContrastiveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(positives.len());
    for (&anchor_id, &positive) in positives {
        let anchor = catalog.get(anchor_id).ok_or(ContrastiveError::InvalidTriplet {
            anchor: anchor_id,
            message: "anchor is not a catalog item".into(),
        })?;
        let pool: Vec<u64> = catalog
            .items()
            .iter()
            .filter(|it| it.categoria != anchor.categoria && it.id != positive)
            .map(|it| it.id)
            .collect();
        if pool.len() < NEGATIVES_PER_ANCHOR {
            return Err(ContrastiveError::InvalidTriplet {
                anchor: anchor_id,
                message: format!("only {} candidate negatives", pool.len()),
            });
        }
        let mut negatives: Vec<u64> = rand::seq::index::sample(&mut rng, pool.len(), NEGATIVES_PER_ANCHOR)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        negatives.sort_unstable();
        records.push(TripletRecord {
            anchor: anchor_id,
            positive,
            negatives,
        });
    }
    let set = TripletSet { records };
    set.validate(catalog)?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Item;

    fn catalog() -> Catalog {
        Catalog::from_items((0..40u64).map(|id| {
            let mut it = Item::new(id, "x");
            it.categoria = Some(["cerâmica", "cestaria", "plumária"][(id % 3) as usize].to_string());
            it
        }))
        .unwrap()
    }

    #[test]
    fn sampled_negatives_respect_category() {
        let cat = catalog();
        let pos = BTreeMap::from([(0, 1000), (4, 1004)]);
        let set = sample_triplets(&cat, &pos, 3).unwrap();
        assert_eq!(set.len(), 2);
        for r in &set.records {
            assert_eq!(r.negatives.len(), 10);
            for &n in &r.negatives {
                assert_ne!(n % 3, r.anchor % 3);
            }
        }
        assert_eq!(set, sample_triplets(&cat, &pos, 3).unwrap());
    }

    #[test]
    fn same_category_negative_is_rejected() {
        let cat = catalog();
        let set = TripletSet {
            records: vec![TripletRecord {
                anchor: 0,
                positive: 1,
                negatives: vec![1, 2, 4, 5, 7, 8, 10, 11, 13, 3],
            }],
        };
        assert!(set.validate(&cat).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let cat = catalog();
        let set = sample_triplets(&cat, &BTreeMap::from([(2, 7)]), 1).unwrap();
        assert_eq!(TripletSet::parse_jsonl(&set.to_jsonl()).unwrap(), set);
    }
}
