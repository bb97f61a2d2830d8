//! Linear-scan and O(n²) references for the 2-d spatial queries.

/// SplitMix64 output function, written from the published constants.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ids inside the closed rectangle, ascending.
pub fn scan_range(points: &[(u64, f64, f64)], x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<u64> {
    let mut out: Vec<u64> = points
        .iter()
        .filter(|p| p.1 >= x0 && p.1 <= x1 && p.2 >= y0 && p.2 <= y1)
        .map(|p| p.0)
        .collect();
    out.sort_unstable();
    out
}

/// `k` nearest ids by full sort on (distance, id).
pub fn scan_nearest(points: &[(u64, f64, f64)], x: f64, y: f64, k: usize) -> Vec<u64> {
    let mut all: Vec<(f64, u64)> = points
        .iter()
        .map(|p| (((p.1 - x).powi(2) + (p.2 - y).powi(2)).sqrt(), p.0))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|p| p.1).collect()
}

/// The first `⌈g·n⌉` ids in SplitMix64 order, ascending.
pub fn hash_prefix(ids: &[u64], g: f64) -> Vec<u64> {
    let mut keyed: Vec<(u64, u64)> = ids.iter().map(|&id| (splitmix64(id), id)).collect();
    keyed.sort();
    let take = (g * ids.len() as f64).ceil() as usize;
    let mut out: Vec<u64> = keyed.into_iter().take(take).map(|p| p.1).collect();
    out.sort_unstable();
    out
}

pub struct GreedyCluster {
    pub seed: u64,
    pub members: Vec<u64>,
    pub px: f64,
    pub py: f64,
}

/// Seed-ordered greedy clustering by checking every pair. `points` are
/// `(id, px, py)` in any order.
pub fn greedy_reference(points: &[(u64, f64, f64)], radius: f64) -> Vec<GreedyCluster> {
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.0);
    let mut taken = vec![false; pts.len()];
    let mut out = Vec::new();
    for s in 0..pts.len() {
        if taken[s] {
            continue;
        }
        let mut members = Vec::new();
        for j in 0..pts.len() {
            let d = ((pts[j].1 - pts[s].1).powi(2) + (pts[j].2 - pts[s].2).powi(2)).sqrt();
            if !taken[j] && d <= radius {
                taken[j] = true;
                members.push(j);
            }
        }
        let n = members.len() as f64;
        out.push(GreedyCluster {
            seed: pts[s].0,
            members: members.iter().map(|&j| pts[j].0).collect(),
            px: members.iter().map(|&j| pts[j].1).sum::<f64>() / n,
            py: members.iter().map(|&j| pts[j].2).sum::<f64>() / n,
        });
    }
    out
}
