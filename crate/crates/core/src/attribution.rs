//! Integrated Gradients for a scalar read off a head model's projection.
//!
//! The usual scalar is the cosine similarity between the projected input and
//! a reference point; a single projected coordinate is also supported, which
//! makes the linear case exact and easy to check.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::{ContrastiveError, HeadModel};
use crate::scalar::{dot, norm, Real};

pub const DEFAULT_STEPS: usize = 256;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("steps must be at least 1")]
    ZeroSteps,
    #[error("reference vector is zero")]
    ZeroReference,
    #[error("input equals the baseline")]
    InputIsBaseline,
    #[error("{what} has dimension {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("projected vector is zero at path point t = {t}")]
    ZeroProjection { t: f64 },
    #[error("output coordinate {index} out of range for dimension {dim}")]
    OutputIndex { index: usize, dim: usize },
    #[error("feature {0} has no group")]
    UnmappedFeature(usize),
    #[error(transparent)]
    Model(#[from] ContrastiveError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Zero,
    Explicit { values: Vec<f64> },
}

/// The scalar being attributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// `cos(head(z), reference)`.
    Cosine { reference: Vec<f64> },
    /// `head(z)[index]`.
    Output { index: usize },
}

/// Where the `m` path gradients are sampled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// `t = (s − ½)/m`, error O(1/m²).
    #[default]
    Midpoint,
    /// `t = s/m`, error O(1/m).
    RightEndpoint,
}

impl QuadratureRule {
    /// Path position of step `s` in `1..=m`.
    pub fn node(self, s: usize, m: usize) -> f64 {
        match self {
            QuadratureRule::Midpoint => (s as f64 - 0.5) / m as f64,
            QuadratureRule::RightEndpoint => s as f64 / m as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionConfig {
    pub steps: usize,
    pub baseline: Baseline,
    pub target: Target,
    #[serde(default)]
    pub rule: QuadratureRule,
}

impl AttributionConfig {
    pub fn cosine(reference: Vec<f64>) -> Self {
        Self {
            steps: DEFAULT_STEPS,
            baseline: Baseline::Zero,
            target: Target::Cosine { reference },
            rule: QuadratureRule::Midpoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub attributions: Vec<f64>,
    /// `|Σ attributions − (F(x) − F(baseline))|`.
    pub residual: f64,
    pub f_x: f64,
    pub f_baseline: f64,
    pub steps: usize,
}

impl AttributionResult {
    pub fn total(&self) -> f64 {
        self.attributions.iter().sum()
    }
}

enum Scalar<T> {
    Cosine { reference: Vec<T>, ref_norm: T },
    Output(usize),
}

impl<T: Real> Scalar<T> {
    /// Value and gradient with respect to the projected vector.
    fn eval(&self, p: &[T], t: f64) -> Result<(T, Vec<T>), AttributionError> {
        match self {
            Scalar::Output(i) => {
                let mut g = vec![T::zero(); p.len()];
                g[*i] = T::one();
                Ok((p[*i], g))
            }
            Scalar::Cosine { reference, ref_norm } => {
                let pn = norm(p);
                if !(pn > T::zero()) {
                    return Err(AttributionError::ZeroProjection { t });
                }
                let cos = dot(p, reference) / (pn * *ref_norm);
                // d cos / dp = r/(|p||r|) − cos·p/|p|²
                let g = p
                    .iter()
                    .zip(reference)
                    .map(|(&pi, &ri)| ri / (pn * *ref_norm) - cos * pi / (pn * pn))
                    .collect();
                Ok((cos, g))
            }
        }
    }
}

fn value_and_input_grad<T: Real>(
    model: &HeadModel<T>,
    scalar: &Scalar<T>,
    z: &[T],
    t: f64,
) -> Result<(T, Vec<T>), AttributionError> {
    let out = model.forward(z, None)?;
    let (value, dp) = scalar.eval(&out.projected, t)?;
    let mut scratch = model.zeros_like();
    let grad = model.backward(&out, Some(&dp), &BTreeMap::new(), &mut scratch);
    Ok((value, grad))
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), AttributionError> {
    if expected == got {
        Ok(())
    } else {
        Err(AttributionError::Dimension { what, expected, got })
    }
}

/// Riemann approximation of the path integral from the baseline to `x`:
/// `IG_i = (x_i − x'_i) · (1/m) Σ_{s=1..m} ∂F/∂z_i(x' + t_s (x − x'))` with the
/// nodes `t_s` given by `config.rule`.
///
/// Dropout is never applied. Step gradients are computed in parallel and
/// summed in step order.
pub fn integrated_gradients<T: Real>(
    model: &HeadModel<T>,
    x: &[T],
    config: &AttributionConfig,
) -> Result<AttributionResult, AttributionError> {
    let m = config.steps;
    if m == 0 {
        return Err(AttributionError::ZeroSteps);
    }
    let dim = model.input_dim();
    check_dim("input", dim, x.len())?;
    let baseline: Vec<T> = match &config.baseline {
        Baseline::Zero => vec![T::zero(); dim],
        Baseline::Explicit { values } => {
            check_dim("baseline", dim, values.len())?;
            values.iter().map(|&v| T::lit(v)).collect()
        }
    };
    if baseline == x {
        return Err(AttributionError::InputIsBaseline);
    }
    let scalar = match &config.target {
        Target::Cosine { reference } => {
            check_dim("reference", model.output_dim(), reference.len())?;
            let reference: Vec<T> = reference.iter().map(|&v| T::lit(v)).collect();
            let ref_norm = norm(&reference);
            if !(ref_norm > T::zero()) {
                return Err(AttributionError::ZeroReference);
            }
            Scalar::Cosine { reference, ref_norm }
        }
        &Target::Output { index } => {
            if index >= model.output_dim() {
                return Err(AttributionError::OutputIndex {
                    index,
                    dim: model.output_dim(),
                });
            }
            Scalar::Output(index)
        }
    };

    let delta: Vec<T> = x.iter().zip(&baseline).map(|(&a, &b)| a - b).collect();
    let f_baseline = value_and_input_grad(model, &scalar, &baseline, 0.0)?.0;
    let step_grads: Vec<Vec<T>> = (1..=m)
        .into_par_iter()
        .map(|s| {
            let t = config.rule.node(s, m);
            let alpha = T::lit(t);
            let z: Vec<T> = baseline.iter().zip(&delta).map(|(&b, &d)| b + alpha * d).collect();
            value_and_input_grad(model, &scalar, &z, t).map(|(_, g)| g)
        })
        .collect::<Result<_, _>>()?;
    let mut sum = vec![T::zero(); dim];
    for g in &step_grads {
        sum.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
    }
    let f_x = value_and_input_grad(model, &scalar, x, 1.0)?.0.as_f64();
    let mf = T::of_usize(m);
    let attributions: Vec<f64> = sum
        .iter()
        .zip(&delta)
        .map(|(&s, &d)| (d * s / mf).as_f64())
        .collect();
    let f_baseline = f_baseline.as_f64();
    let residual = (attributions.iter().sum::<f64>() - (f_x - f_baseline)).abs();
    Ok(AttributionResult {
        attributions,
        residual,
        f_x,
        f_baseline,
        steps: m,
    })
}

/// Sums attributions per group. `segmentation[i]` names the group of feature `i`.
pub fn group_attributions(
    result: &AttributionResult,
    segmentation: &BTreeMap<usize, String>,
) -> Result<BTreeMap<String, f64>, AttributionError> {
    let mut groups: BTreeMap<String, f64> = BTreeMap::new();
    for (i, &a) in result.attributions.iter().enumerate() {
        let g = segmentation.get(&i).ok_or(AttributionError::UnmappedFeature(i))?;
        *groups.entry(g.clone()).or_default() += a;
    }
    Ok(groups)
}

/// JSON attribution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub item_id: Option<u64>,
    pub steps: usize,
    pub rule: QuadratureRule,
    pub baseline: Baseline,
    pub target: Target,
    pub feature_scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub group_scores: BTreeMap<String, f64>,
    pub residual: f64,
    pub f_x: f64,
    pub f_baseline: f64,
}

impl AttributionReport {
    pub fn new(
        item_id: Option<u64>,
        config: &AttributionConfig,
        result: AttributionResult,
        group_scores: BTreeMap<String, f64>,
    ) -> Self {
        Self {
            item_id,
            steps: result.steps,
            rule: config.rule,
            baseline: config.baseline.clone(),
            target: config.target.clone(),
            feature_scores: result.attributions,
            group_scores,
            residual: result.residual,
            f_x: result.f_x,
            f_baseline: result.f_baseline,
        }
    }
}
