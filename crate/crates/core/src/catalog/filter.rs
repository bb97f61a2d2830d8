//! Conjunctive attribute filters backing the live-count panel.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use super::{Catalog, Item};

pub const CATEGORICAL_ATTRIBUTES: &[&str] = &["categoria", "povo", "state", "materials"];
pub const NUMERIC_ATTRIBUTES: &[&str] = &["year", "month", "day", "lat", "lon"];

/// Categorical clauses accept any label in their set; numeric clauses are inclusive ranges.
/// All clauses must hold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(default)]
    pub categorical: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub numeric: BTreeMap<String, (f64, f64)>,
}

impl FilterSpec {
    pub fn is_empty(&self) -> bool {
        self.categorical.is_empty() && self.numeric.is_empty()
    }

    pub fn with_labels<I, S>(mut self, attribute: &str, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.categorical
            .entry(attribute.to_string())
            .or_default()
            .extend(labels.into_iter().map(Into::into));
        self
    }

    pub fn with_range(mut self, attribute: &str, min: f64, max: f64) -> Self {
        self.numeric.insert(attribute.to_string(), (min, max));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub ids: Vec<u64>,
    pub count: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("unknown filter attribute {0:?}")]
    UnknownAttribute(String),
    #[error("invalid range for {attribute:?}: min {min} > max {max}")]
    InvalidRange { attribute: String, min: f64, max: f64 },
}

fn categorical_values<'a>(item: &'a Item, attribute: &str) -> Vec<&'a str> {
    match attribute {
        "categoria" => item.categoria.as_deref().into_iter().collect(),
        "povo" => item.povo.as_deref().into_iter().collect(),
        "state" => item.state.as_deref().into_iter().collect(),
        "materials" => item.materials.iter().map(String::as_str).collect(),
        _ => Vec::new(),
    }
}

pub(crate) fn numeric_value(item: &Item, attribute: &str) -> Option<f64> {
    match attribute {
        "year" => item.acquisition.and_then(|d| d.year).map(f64::from),
        "month" => item.acquisition.and_then(|d| d.month).map(f64::from),
        "day" => item.acquisition.and_then(|d| d.day).map(f64::from),
        "lat" => item.community_coords.map(|c| c.lat),
        "lon" => item.community_coords.map(|c| c.lon),
        other => item.extensions.get(other).copied(),
    }
}

fn extension_names(catalog: &Catalog) -> BTreeSet<&str> {
    catalog
        .items()
        .iter()
        .flat_map(|i| i.extensions.keys().map(String::as_str))
        .collect()
}

/// Items matching every clause, ascending by id. Items lacking a filtered attribute are excluded.
pub fn filter_items(catalog: &Catalog, spec: &FilterSpec) -> Result<FilterResult, FilterError> {
    for name in spec.categorical.keys() {
        if !CATEGORICAL_ATTRIBUTES.contains(&name.as_str()) {
            return Err(FilterError::UnknownAttribute(name.clone()));
        }
    }
    let extensions = extension_names(catalog);
    for (name, &(min, max)) in &spec.numeric {
        if !NUMERIC_ATTRIBUTES.contains(&name.as_str()) && !extensions.contains(name.as_str()) {
            return Err(FilterError::UnknownAttribute(name.clone()));
        }
        // NaN bounds fail this check too
        if !(min <= max) {
            return Err(FilterError::InvalidRange {
                attribute: name.clone(),
                min,
                max,
            });
        }
    }
    let accepted: Vec<(&str, BTreeSet<String>)> = spec
        .categorical
        .iter()
        .map(|(k, set)| (k.as_str(), set.iter().map(|s| s.nfc().collect()).collect()))
        .collect();

    let ids: Vec<u64> = catalog
        .items()
        .iter()
        .filter(|item| {
            accepted.iter().all(|(attr, set)| {
                categorical_values(item, attr)
                    .iter()
                    .any(|v| set.contains(*v))
            }) && spec.numeric.iter().all(|(attr, &(min, max))| {
                numeric_value(item, attr).is_some_and(|v| v >= min && v <= max)
            })
        })
        .map(|item| item.id)
        .collect();
    let count = ids.len();
    Ok(FilterResult { ids, count })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericSummary {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

/// Available filter attributes with their observed labels and ranges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterSchema {
    pub categorical: BTreeMap<String, BTreeMap<String, usize>>,
    pub numeric: BTreeMap<String, Option<NumericSummary>>,
}

pub fn filter_schema(catalog: &Catalog) -> FilterSchema {
    let mut schema = FilterSchema::default();
    for &attr in CATEGORICAL_ATTRIBUTES {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for item in catalog.items() {
            for v in categorical_values(item, attr) {
                *counts.entry(v.to_string()).or_default() += 1;
            }
        }
        schema.categorical.insert(attr.to_string(), counts);
    }
    let numeric_names = NUMERIC_ATTRIBUTES
        .iter()
        .copied()
        .chain(extension_names(catalog))
        .collect::<BTreeSet<_>>();
    for attr in numeric_names {
        let summary = catalog
            .items()
            .iter()
            .filter_map(|i| numeric_value(i, attr))
            .fold(None, |acc: Option<NumericSummary>, v| {
                Some(match acc {
                    None => NumericSummary {
                        min: v,
                        max: v,
                        count: 1,
                    },
                    Some(s) => NumericSummary {
                        min: s.min.min(v),
                        max: s.max.max(v),
                        count: s.count + 1,
                    },
                })
            });
        schema.numeric.insert(attr.to_string(), summary);
    }
    schema
}
