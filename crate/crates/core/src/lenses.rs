//! Timeline and map aggregations over the catalog.
//!
//! Pages are numbered from 0. A page past the end is empty but still reports
//! the total.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, Coords, Item};

#[derive(Debug, Error)]
pub enum LensError {
    #[error("page_size must be at least 1")]
    ZeroPageSize,
    #[error("no centroid configured for state {0:?}")]
    MissingCentroid(String),
    #[error("invalid state centroid file: {0}")]
    CentroidFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the thumbnail grids and modals show for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCard {
    pub id: u64,
    pub titulo: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thumbnail_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categoria: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub povo: Option<String>,
}

impl From<&Item> for ItemCard {
    fn from(it: &Item) -> Self {
        Self {
            id: it.id,
            titulo: it.titulo.clone(),
            thumbnail_url: it.thumbnail_url.clone(),
            categoria: it.categoria.clone(),
            povo: it.povo.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemPage {
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub items: Vec<ItemCard>,
}

fn paginate(catalog: &Catalog, ordered: &[u64], page: usize, page_size: usize) -> Result<ItemPage, LensError> {
    if page_size == 0 {
        return Err(LensError::ZeroPageSize);
    }
    let start = page.saturating_mul(page_size).min(ordered.len());
    let end = start.saturating_add(page_size).min(ordered.len());
    Ok(ItemPage {
        page,
        page_size,
        total: ordered.len(),
        items: ordered[start..end]
            .iter()
            .map(|&id| ItemCard::from(catalog.get(id).expect("ordered ids come from the catalog")))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearSummary {
    pub year: i32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearlyCounts {
    pub years: Vec<YearSummary>,
    /// Items with no acquisition year at all.
    pub undated: usize,
}

pub fn yearly_counts(catalog: &Catalog) -> YearlyCounts {
    let mut by_year: BTreeMap<i32, usize> = BTreeMap::new();
    let mut undated = 0;
    for it in catalog.items() {
        match it.year() {
            Some(y) => *by_year.entry(y).or_default() += 1,
            None => undated += 1,
        }
    }
    YearlyCounts {
        years: by_year.into_iter().map(|(year, count)| YearSummary { year, count }).collect(),
        undated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearDetail {
    pub year: i32,
    /// Counts for January through December over the whole year.
    pub month_buckets: [usize; 12],
    /// Items of this year whose month is unknown.
    pub month_unknown: usize,
    pub items: ItemPage,
}

/// Month-unknown items first, then by month, day (unknown day last) and id.
pub fn year_order(catalog: &Catalog, year: i32) -> Vec<u64> {
    let mut keyed: Vec<((u8, u8, u8), u64)> = catalog
        .items()
        .iter()
        .filter(|it| it.year() == Some(year))
        .map(|it| {
            let date = it.acquisition.as_ref().expect("dated item");
            let key = match date.month {
                None => (0, 0, 0),
                Some(m) => (1, m, date.day.unwrap_or(u8::MAX)),
            };
            (key, it.id)
        })
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().map(|(_, id)| id).collect()
}

pub fn year_detail(catalog: &Catalog, year: i32, page: usize, page_size: usize) -> Result<YearDetail, LensError> {
    let ordered = year_order(catalog, year);
    let mut month_buckets = [0usize; 12];
    let mut month_unknown = 0;
    for &id in &ordered {
        let item = catalog.get(id).expect("catalog id");
        match item.acquisition.as_ref().and_then(|d| d.month) {
            Some(m) => month_buckets[m as usize - 1] += 1,
            None => month_unknown += 1,
        }
    }
    Ok(YearDetail {
        year,
        month_buckets,
        month_unknown,
        items: paginate(catalog, &ordered, page, page_size)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerKind {
    /// A specific community, red on the map.
    Community,
    /// A state-level aggregate, blue on the map.
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoMarker {
    /// `community:<name>` or `state:<code>`.
    pub key: String,
    pub kind: MarkerKind,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    /// Ascending, never empty.
    pub item_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoMarkerSet {
    pub red: Vec<GeoMarker>,
    pub blue: Vec<GeoMarker>,
    pub unmapped: usize,
}

impl GeoMarkerSet {
    pub fn find(&self, key: &str) -> Option<&GeoMarker> {
        self.red.iter().chain(&self.blue).find(|m| m.key == key)
    }

    pub fn mapped(&self) -> usize {
        self.red.iter().chain(&self.blue).map(|m| m.item_ids.len()).sum()
    }
}

/// Items with a community name (`povo`) and coordinates become red markers,
/// one per name, at the mean of the members' coordinates. Remaining items
/// with a state fall back to a blue marker at the configured centroid.
/// Everything else is counted as unmapped.
pub fn map_markers(catalog: &Catalog, state_centroids: &BTreeMap<String, Coords>) -> Result<GeoMarkerSet, LensError> {
    let mut communities: BTreeMap<&str, Vec<&Item>> = BTreeMap::new();
    let mut states: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    let mut unmapped = 0;
    for it in catalog.items() {
        match (it.povo.as_deref(), it.community_coords, it.state.as_deref()) {
            (Some(name), Some(_), _) => communities.entry(name).or_default().push(it),
            (_, _, Some(state)) => states.entry(state).or_default().push(it.id),
            _ => unmapped += 1,
        }
    }
    let red = communities
        .into_iter()
        .map(|(name, members)| {
            let n = members.len() as f64;
            let coords = || members.iter().map(|m| m.community_coords.expect("grouped on coords"));
            let mut item_ids: Vec<u64> = members.iter().map(|m| m.id).collect();
            item_ids.sort_unstable();
            GeoMarker {
                key: format!("community:{name}"),
                kind: MarkerKind::Community,
                name: name.to_string(),
                lat: coords().map(|c| c.lat).sum::<f64>() / n,
                lon: coords().map(|c| c.lon).sum::<f64>() / n,
                item_ids,
            }
        })
        .collect();
    let blue = states
        .into_iter()
        .map(|(code, mut item_ids)| {
            let c = state_centroids
                .get(code)
                .ok_or_else(|| LensError::MissingCentroid(code.to_string()))?;
            item_ids.sort_unstable();
            Ok(GeoMarker {
                key: format!("state:{code}"),
                kind: MarkerKind::State,
                name: code.to_string(),
                lat: c.lat,
                lon: c.lon,
                item_ids,
            })
        })
        .collect::<Result<_, LensError>>()?;
    Ok(GeoMarkerSet { red, blue, unmapped })
}

/// One page of a marker's items in ascending id order.
pub fn marker_items(catalog: &Catalog, marker: &GeoMarker, page: usize, page_size: usize) -> Result<ItemPage, LensError> {
    paginate(catalog, &marker.item_ids, page, page_size)
}

/// Reads a JSON object mapping state codes to `{"lat": .., "lon": ..}`.
pub fn load_state_centroids(path: impl AsRef<Path>) -> Result<BTreeMap<String, Coords>, LensError> {
    parse_state_centroids(&std::fs::read_to_string(path)?)
}

pub fn parse_state_centroids(text: &str) -> Result<BTreeMap<String, Coords>, LensError> {
    let map: BTreeMap<String, Coords> = serde_json::from_str(text).map_err(|e| LensError::CentroidFile(e.to_string()))?;
    for (code, c) in &map {
        if !(c.lat.is_finite() && c.lon.is_finite() && c.lat.abs() <= 90.0 && c.lon.abs() <= 180.0) {
            return Err(LensError::CentroidFile(format!("{code}: coordinates out of range")));
        }
    }
    Ok(map)
}
