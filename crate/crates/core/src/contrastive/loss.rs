use std::collections::BTreeMap;

use super::ContrastiveError;
use crate::scalar::{dot, log_sum_exp, norm, Real};

/// Every curated anchor carries exactly this many negatives.
pub const NEGATIVES_PER_ANCHOR: usize = 10;

fn norms<T: Real>(vs: &[&[T]]) -> Result<Vec<T>, ContrastiveError> {
    vs.iter()
        .enumerate()
        .map(|(index, v)| {
            let n = norm(v);
            if n > T::zero() && n.is_finite() {
                Ok(n)
            } else {
                Err(ContrastiveError::ZeroNorm { index })
            }
        })
        .collect()
}

/// Adds `coeff · ∂cos(u, v)/∂u` to `out`, where `cos = c`.
fn add_cos_grad<T: Real>(out: &mut [T], u: &[T], v: &[T], nu: T, nv: T, c: T, coeff: T) {
    let a = coeff / (nu * nv);
    let b = coeff * c / (nu * nu);
    for ((o, &ui), &vi) in out.iter_mut().zip(u).zip(v) {
        *o += a * vi - b * ui;
    }
}

/// Loss value with its gradient with respect to each input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<T> {
    pub loss: T,
    pub grads: Vec<Vec<T>>,
}

/// NT-Xent over `2N` views where rows `2i` and `2i+1` are the two views of item `i`.
///
/// For each anchor `u` with partner `v`, the term is
/// `−log(exp(cos(u,v)/τ) / Σ_{w≠u} exp(cos(u,w)/τ))`; the loss is the mean over
/// all `2N` anchors. Zero-norm views error with their row index.
pub fn nt_xent_loss<T: Real>(views: &[&[T]], tau: T) -> Result<LossGrad<T>, ContrastiveError> {
    let m = views.len();
    if m < 4 || !m.is_multiple_of(2) {
        return Err(ContrastiveError::InvalidBatch(format!(
            "NT-Xent needs an even number of at least 4 views, got {m}"
        )));
    }
    if !(tau > T::zero()) {
        return Err(ContrastiveError::InvalidConfig("temperature must be positive".into()));
    }
    let ns = norms(views)?;
    let mut cos = vec![T::zero(); m * m];
    for i in 0..m {
        for j in i + 1..m {
            let c = dot(views[i], views[j]) / (ns[i] * ns[j]);
            cos[i * m + j] = c;
            cos[j * m + i] = c;
        }
    }

    // coefficient of cos(i, j) in the total loss, made symmetric afterwards
    let mut coeff = vec![T::zero(); m * m];
    let inv_m = T::one() / T::of_usize(m);
    let mut loss = T::zero();
    for i in 0..m {
        let partner = i ^ 1;
        let logits = (0..m).filter(|&j| j != i).map(|j| cos[i * m + j] / tau);
        let lse = log_sum_exp(logits);
        loss += lse - cos[i * m + partner] / tau;
        for j in (0..m).filter(|&j| j != i) {
            let p = (cos[i * m + j] / tau - lse).exp();
            let target = if j == partner { T::one() } else { T::zero() };
            coeff[i * m + j] += (p - target) * inv_m / tau;
        }
    }
    loss *= inv_m;

    let dim = views[0].len();
    let mut grads = vec![vec![T::zero(); dim]; m];
    for i in 0..m {
        for j in (0..m).filter(|&j| j != i) {
            let h = coeff[i * m + j] + coeff[j * m + i];
            add_cos_grad(&mut grads[i], views[i], views[j], ns[i], ns[j], cos[i * m + j], h);
        }
    }
    Ok(LossGrad { loss, grads })
}

/// InfoNCE for one anchor, its positive and exactly
/// [`NEGATIVES_PER_ANCHOR`] negatives:
/// `−log(exp(cos(a,p)/τ) / (exp(cos(a,p)/τ) + Σ_k exp(cos(a,n_k)/τ)))`.
///
/// Gradients are ordered anchor, positive, negatives. Zero-norm errors use the
/// same order for their index.
pub fn info_nce_loss<T: Real>(
    anchor: &[T],
    positive: &[T],
    negatives: &[&[T]],
    tau: T,
) -> Result<LossGrad<T>, ContrastiveError> {
    if negatives.len() != NEGATIVES_PER_ANCHOR {
        return Err(ContrastiveError::InvalidBatch(format!(
            "InfoNCE needs exactly {NEGATIVES_PER_ANCHOR} negatives, got {}",
            negatives.len()
        )));
    }
    if !(tau > T::zero()) {
        return Err(ContrastiveError::InvalidConfig("temperature must be positive".into()));
    }
    let mut all: Vec<&[T]> = vec![anchor, positive];
    all.extend_from_slice(negatives);
    let ns = norms(&all)?;
    let cos: Vec<T> = (1..all.len())
        .map(|j| dot(anchor, all[j]) / (ns[0] * ns[j]))
        .collect();
    let lse = log_sum_exp(cos.iter().map(|&c| c / tau));
    let loss = lse - cos[0] / tau;

    let dim = anchor.len();
    let mut grads = vec![vec![T::zero(); dim]; all.len()];
    for (k, &c) in cos.iter().enumerate() {
        let j = k + 1;
        let p = (c / tau - lse).exp();
        let target = if k == 0 { T::one() } else { T::zero() };
        let g = (p - target) / tau;
        let (head, tail) = grads.split_at_mut(1);
        add_cos_grad(&mut head[0], anchor, all[j], ns[0], ns[j], c, g);
        add_cos_grad(&mut tail[j - 1], all[j], anchor, ns[j], ns[0], c, g);
    }
    Ok(LossGrad { loss, grads })
}

/// One classification head's batch: `N × C` logits, true label indices and
/// per-class weights.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadBatch<T> {
    pub logits: Vec<Vec<T>>,
    pub labels: Vec<usize>,
    pub class_weights: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadLoss<T> {
    pub loss: T,
    pub per_head: BTreeMap<String, T>,
    /// Gradient with respect to each head's logits, shaped like the input.
    pub grads: BTreeMap<String, Vec<Vec<T>>>,
}

/// `Σ_h head_weight_h · (1/N_h) Σ_n w_{y_n} · CE(logits_n, y_n)`.
///
/// Heads with an empty batch contribute zero.
pub fn weighted_multihead_ce<T: Real>(
    batches: &BTreeMap<String, HeadBatch<T>>,
    head_weights: &BTreeMap<String, f64>,
) -> Result<MultiHeadLoss<T>, ContrastiveError> {
    let mut total = T::zero();
    let mut per_head = BTreeMap::new();
    let mut grads = BTreeMap::new();
    for (name, batch) in batches {
        let hw = T::lit(
            *head_weights
                .get(name)
                .ok_or_else(|| ContrastiveError::UnknownHead(name.clone()))?,
        );
        if batch.logits.len() != batch.labels.len() {
            return Err(ContrastiveError::InvalidBatch(format!(
                "head {name:?}: {} logit rows for {} labels",
                batch.logits.len(),
                batch.labels.len()
            )));
        }
        let classes = batch.class_weights.len();
        let n = batch.logits.len();
        let mut head_loss = T::zero();
        let mut g = Vec::with_capacity(n);
        for (row, &y) in batch.logits.iter().zip(&batch.labels) {
            if row.len() != classes {
                return Err(ContrastiveError::DimensionMismatch {
                    expected: classes,
                    got: row.len(),
                });
            }
            if y >= classes {
                return Err(ContrastiveError::UnknownLabel {
                    head: name.clone(),
                    label: y.to_string(),
                });
            }
            let w = batch.class_weights[y];
            let lse = log_sum_exp(row.iter().copied());
            head_loss += w * (lse - row[y]);
            let scale = hw * w / T::of_usize(n);
            g.push(
                row.iter()
                    .enumerate()
                    .map(|(c, &v)| {
                        let p = (v - lse).exp();
                        scale * (p - if c == y { T::one() } else { T::zero() })
                    })
                    .collect::<Vec<T>>(),
            );
        }
        if n > 0 {
            head_loss /= T::of_usize(n);
        }
        total += hw * head_loss;
        per_head.insert(name.clone(), head_loss);
        grads.insert(name.clone(), g);
    }
    Ok(MultiHeadLoss {
        loss: total,
        per_head,
        grads,
    })
}
