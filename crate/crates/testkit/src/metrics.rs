//! Correlation and confusion-matrix references.

use std::collections::BTreeMap;

/// Pearson r from raw power sums, a different algebraic route than centering.
pub fn pearson_sums(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

pub struct ConfusionOracle {
    pub labels: Vec<String>,
    /// `matrix[g][p]` counts samples with gold `labels[g]` predicted as `labels[p]`.
    pub matrix: Vec<Vec<usize>>,
}

impl ConfusionOracle {
    pub fn new(predictions: &[String], gold: &[String]) -> Self {
        let mut labels: Vec<String> = predictions.iter().chain(gold).cloned().collect();
        labels.sort();
        labels.dedup();
        let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut matrix = vec![vec![0; labels.len()]; labels.len()];
        for (p, g) in predictions.iter().zip(gold) {
            matrix[index[g.as_str()]][index[p.as_str()]] += 1;
        }
        Self { labels, matrix }
    }

    fn idx(&self, label: &str) -> usize {
        self.labels.iter().position(|l| l == label).expect("label in matrix")
    }

    pub fn precision(&self, label: &str) -> f64 {
        let c = self.idx(label);
        let column: usize = self.matrix.iter().map(|row| row[c]).sum();
        if column == 0 {
            0.0
        } else {
            self.matrix[c][c] as f64 / column as f64
        }
    }

    pub fn recall(&self, label: &str) -> f64 {
        let r = self.idx(label);
        let row: usize = self.matrix[r].iter().sum();
        if row == 0 {
            0.0
        } else {
            self.matrix[r][r] as f64 / row as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total: usize = self.matrix.iter().flatten().sum();
        let diag: usize = (0..self.labels.len()).map(|i| self.matrix[i][i]).sum();
        diag as f64 / total as f64
    }
}
