//! Item catalog: JSON-lines ingestion, validation, and attribute filtering.

mod embeddings;
mod filter;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

pub use embeddings::{
    decode_embeddings, encode_embeddings, load_embeddings, read_embeddings, write_embeddings,
    EmbeddingError, EmbeddingSet, EMBEDDING_MAGIC, EMBEDDING_VERSION,
};
pub use filter::{
    filter_items, filter_schema, FilterError, FilterResult, FilterSchema, FilterSpec,
    NumericSummary, CATEGORICAL_ATTRIBUTES, NUMERIC_ATTRIBUTES,
};

/// Fields the catalog schema knows about. Anything else is reported as a warning.
pub const KNOWN_FIELDS: &[&str] = &[
    "id",
    "titulo",
    "categoria",
    "povo",
    "descricao",
    "thumbnail_url",
    "acquisition",
    "state",
    "community_coords",
    "materials",
    "extensions",
];

/// A possibly incomplete calendar date. Any suffix may be missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartialDate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub month: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub day: Option<u8>,
}

impl PartialDate {
    pub fn year(year: i32) -> Self {
        Self {
            year: Some(year),
            ..Self::default()
        }
    }

    pub fn ymd(year: i32, month: Option<u8>, day: Option<u8>) -> Self {
        Self {
            year: Some(year),
            month,
            day,
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.day.is_some() && self.month.is_none() {
            return Err("acquisition.day present without month".into());
        }
        if self.month.is_some() && self.year.is_none() {
            return Err("acquisition.month present without year".into());
        }
        if let Some(m) = self.month {
            if !(1..=12).contains(&m) {
                return Err(format!("acquisition.month {m} outside 1..=12"));
            }
        }
        if let Some(d) = self.day {
            if !(1..=31).contains(&d) {
                return Err(format!("acquisition.day {d} outside 1..=31"));
            }
        }
        Ok(())
    }
}

/// Geographic position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coords {
    pub lat: f64,
    pub lon: f64,
}

/// One catalog record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: u64,
    pub titulo: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categoria: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub povo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descricao: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquisition: Option<PartialDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub community_coords: Option<Coords>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub materials: Vec<String>,
    /// Additional numeric attributes, filterable by name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extensions: BTreeMap<String, f64>,
}

impl Item {
    pub fn new(id: u64, titulo: impl Into<String>) -> Self {
        Self {
            id,
            titulo: titulo.into(),
            categoria: None,
            povo: None,
            descricao: None,
            thumbnail_url: None,
            acquisition: None,
            state: None,
            community_coords: None,
            materials: Vec::new(),
            extensions: BTreeMap::new(),
        }
    }

    pub fn year(&self) -> Option<i32> {
        self.acquisition.and_then(|d| d.year)
    }

    /// Checks the per-item invariants.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(c) = self.community_coords {
            if !(-90.0..=90.0).contains(&c.lat) {
                return Err(format!("latitude {} outside [-90, 90]", c.lat));
            }
            if !(-180.0..=180.0).contains(&c.lon) {
                return Err(format!("longitude {} outside [-180, 180]", c.lon));
            }
        }
        if let Some(d) = &self.acquisition {
            d.check()?;
        }
        if let Some(s) = &self.state {
            if s.chars().count() != 2 || !s.chars().all(|c| c.is_ascii_alphabetic()) {
                return Err(format!("state {s:?} is not a 2-letter region code"));
            }
        }
        for (k, v) in &self.extensions {
            if !v.is_finite() {
                return Err(format!("extension {k:?} is not finite"));
            }
        }
        Ok(())
    }

    fn normalize_labels(&mut self) {
        fn nfc(s: &mut String) {
            *s = s.nfc().collect();
        }
        for s in [&mut self.categoria, &mut self.povo, &mut self.state]
            .into_iter()
            .flatten()
        {
            nfc(s);
        }
        self.materials.iter_mut().for_each(nfc);
    }
}

/// A located problem found while loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub item_count: usize,
    pub with_image_embedding: usize,
    pub with_text_embedding: usize,
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn accepted(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog rejected with {} error(s); first: {}", .0.errors.len(), .0.errors.first().map(|e| e.message.as_str()).unwrap_or(""))]
    Rejected(ValidationReport),
    #[error("duplicate item id {0}")]
    DuplicateId(u64),
    #[error("item {id}: {message}")]
    InvalidItem { id: u64, message: String },
}

/// Immutable, id-ordered collection of items.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    items: Vec<Item>,
    index: HashMap<u64, usize>,
}

impl Catalog {
    /// Builds a catalog from in-memory items, enforcing the same invariants as the loader.
    pub fn from_items(items: impl IntoIterator<Item = Item>) -> Result<Self, CatalogError> {
        let mut items: Vec<Item> = items.into_iter().collect();
        for item in &mut items {
            item.normalize_labels();
            item.validate().map_err(|message| CatalogError::InvalidItem {
                id: item.id,
                message,
            })?;
        }
        items.sort_by_key(|i| i.id);
        if let Some(w) = items.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(CatalogError::DuplicateId(w[0].id));
        }
        Ok(Self::from_sorted(items))
    }

    fn from_sorted(items: Vec<Item>) -> Self {
        let index = items.iter().enumerate().map(|(i, it)| (it.id, i)).collect();
        Self { items, index }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Items in ascending id order.
    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn get(&self, id: u64) -> Option<&Item> {
        self.index.get(&id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.items.iter().map(|i| i.id)
    }

    /// Canonical JSON-lines serialization (ascending id, fixed field order).
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("item serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CatalogError> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

/// Parses JSON-lines text. Rejected lines are reported, never dropped silently;
/// the returned catalog holds every line that parsed and validated.
pub fn parse_catalog(text: &str) -> (Catalog, ValidationReport) {
    let mut report = ValidationReport::default();
    let mut items: Vec<Item> = Vec::new();
    let mut seen: HashMap<u64, usize> = HashMap::new();

    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                report.errors.push(Issue {
                    item_id: None,
                    line: Some(lineno),
                    message: format!("malformed JSON on line {lineno}: {e}"),
                });
                continue;
            }
        };
        let id_hint = value.get("id").and_then(Value::as_u64);
        if let Value::Object(map) = &value {
            for key in map.keys().filter(|k| !KNOWN_FIELDS.contains(&k.as_str())) {
                report.warnings.push(Issue {
                    item_id: id_hint,
                    line: Some(lineno),
                    message: format!("unknown field {key:?} ignored"),
                });
            }
        }
        let mut item: Item = match serde_json::from_value(value) {
            Ok(i) => i,
            Err(e) => {
                report.errors.push(Issue {
                    item_id: id_hint,
                    line: Some(lineno),
                    message: format!("malformed item on line {lineno}: {e}"),
                });
                continue;
            }
        };
        item.normalize_labels();
        if let Err(message) = item.validate() {
            report.errors.push(Issue {
                item_id: Some(item.id),
                line: Some(lineno),
                message,
            });
            continue;
        }
        if let Some(first) = seen.get(&item.id) {
            report.errors.push(Issue {
                item_id: Some(item.id),
                line: Some(lineno),
                message: format!("duplicate id {} (first seen on line {first})", item.id),
            });
            continue;
        }
        seen.insert(item.id, lineno);
        items.push(item);
    }

    items.sort_by_key(|i| i.id);
    report.item_count = items.len();
    (Catalog::from_sorted(items), report)
}

/// Reads a catalog file and returns it together with its validation report.
/// Only I/O problems are returned as `Err`.
pub fn load_catalog_with_report(
    path: impl AsRef<Path>,
) -> Result<(Catalog, ValidationReport), CatalogError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_catalog(&text))
}

/// Reads a catalog file, rejecting it if any line fails validation.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let (catalog, report) = load_catalog_with_report(path)?;
    if report.accepted() {
        Ok(catalog)
    } else {
        Err(CatalogError::Rejected(report))
    }
}
