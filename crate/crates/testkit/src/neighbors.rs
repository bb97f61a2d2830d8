//! O(n²) neighborhood references and a power-iteration PCA baseline.

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The `k` nearest rows to row `i` by full sort on (distance, index).
pub fn brute_knn_single(rows: &[Vec<f64>], i: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..rows.len())
        .filter(|&j| j != i)
        .map(|j| (euclid(&rows[i], &rows[j]), j))
        .collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.into_iter().take(k).map(|x| x.1).collect()
}

pub fn brute_knn(rows: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..rows.len()).map(|i| brute_knn_single(rows, i, k)).collect()
}

/// Trustworthiness by direct rank counting.
pub fn brute_trustworthiness(high: &[Vec<f64>], low: &[Vec<f64>], k: usize) -> f64 {
    let n = high.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in brute_knn_single(low, i, k) {
            let dij = euclid(&high[i], &high[j]);
            // 1 + points strictly closer, or equally close with a smaller index
            let rank = 1 + (0..n)
                .filter(|&m| m != i && m != j)
                .filter(|&m| {
                    let d = euclid(&high[i], &high[m]);
                    d < dij || (d == dij && m < j)
                })
                .count();
            if rank > k {
                total += (rank - k) as f64;
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * total
}

/// Projection of the centered rows onto the top two principal axes, found by
/// power iteration with deflation.
pub fn pca_2d(rows: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let (n, dim) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..dim)
        .map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let dotp = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for a in 0..2 {
        let mut v: Vec<f64> = (0..dim).map(|d| ((d + a) % 3) as f64 + 1.0).collect();
        for _ in 0..500 {
            let mut w = vec![0.0; dim];
            for r in &centered {
                let p = dotp(r, &v);
                w.iter_mut().zip(r).for_each(|(wi, ri)| *wi += p * ri);
            }
            for u in &axes {
                let p = dotp(&w, u);
                w.iter_mut().zip(u).for_each(|(wi, ui)| *wi -= p * ui);
            }
            let nrm = dotp(&w, &w).sqrt();
            v = w.into_iter().map(|x| x / nrm).collect();
        }
        axes.push(v);
    }
    centered.iter().map(|r| [dotp(r, &axes[0]), dotp(r, &axes[1])]).collect()
}
