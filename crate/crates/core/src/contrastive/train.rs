use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::head::{DropoutMask, HeadModel, HeadSpec};
use super::loss::{info_nce_loss, nt_xent_loss, weighted_multihead_ce, HeadBatch};
use super::rebalance::RebalancedDataset;
use super::triplets::TripletSet;
use super::ContrastiveError;
use crate::catalog::EmbeddingSet;
use crate::scalar::{dot, norm, Real};

// independent ChaCha streams derived from the run seed
const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_EVAL: u64 = 3;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub temperature: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Classification only; must sum to 1. Empty means equal weights.
    pub head_weights: BTreeMap<String, f64>,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub head: HeadSpec,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            temperature: 0.05,
            learning_rate: 0.05,
            weight_decay: 0.0,
            epochs: 16,
            batch_size: 32,
            head_weights: BTreeMap::new(),
            dropout_rate: 0.1,
            seed: 0,
            early_stop_patience: 3,
            head: HeadSpec::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ContrastiveError> {
        let bad = |m: &str| Err(ContrastiveError::InvalidConfig(m.to_string()));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !self.head_weights.is_empty() {
            if self.head_weights.values().any(|&w| !(w >= 0.0 && w.is_finite())) {
                return bad("head weights must be non-negative");
            }
            let sum: f64 = self.head_weights.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad("head weights must sum to 1");
            }
        }
        Ok(())
    }

    pub fn hash(&self, regime: Regime) -> String {
        let json = serde_json::to_string(&(regime, self)).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NtXent,
    InfoNce,
    Classification,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::NtXent => "nt_xent",
            Regime::InfoNce => "info_nce",
            Regime::Classification => "classification",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = ContrastiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nt_xent" => Ok(Regime::NtXent),
            "info_nce" => Ok(Regime::InfoNce),
            "classification" => Ok(Regime::Classification),
            other => Err(ContrastiveError::InvalidConfig(format!("unknown regime {other:?}"))),
        }
    }
}

/// Training data; the variant selects the regime.
#[derive(Debug, Clone)]
pub enum TrainingData<T> {
    /// Items trained with two dropout views each.
    NtXent { ids: Vec<u64> },
    InfoNce(TripletSet),
    /// One rebalanced dataset per classification head.
    Classification(BTreeMap<String, RebalancedDataset<T>>),
}

impl<T> TrainingData<T> {
    pub fn regime(&self) -> Regime {
        match self {
            TrainingData::NtXent { .. } => Regime::NtXent,
            TrainingData::InfoNce(_) => Regime::InfoNce,
            TrainingData::Classification(_) => Regime::Classification,
        }
    }
}

/// Deterministic 80/10/10 partition of ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

/// Shuffles the distinct ids with the seed and cuts 10% test, 10% validation
/// (at least `min_val`), and the rest for training. Each part is returned sorted.
pub fn split_ids(ids: &[u64], seed: u64, min_val: usize) -> Split {
    let mut all: Vec<u64> = ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    all.shuffle(&mut rng_for(seed, STREAM_SPLIT));
    let n = all.len();
    let n_test = n / 10;
    let n_val = (n / 10).max(min_val).min(n - n_test);
    let mut test = all[..n_test].to_vec();
    let mut val = all[n_test..n_test + n_val].to_vec();
    let mut train = all[n_test + n_val..].to_vec();
    test.sort_unstable();
    val.sort_unstable();
    train.sort_unstable();
    Split { train, val, test }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_val_loss: f64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Best-validation snapshot.
    pub model: HeadModel<T>,
    /// Row 0 evaluates the initial model; rows 1.. follow each epoch.
    pub history: Vec<EpochRecord>,
    pub split: Split,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub regime: Regime,
}

/// History as CSV: `epoch,train_loss,val_loss,best_val_loss` then one column per metric.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let metric_names: BTreeSet<&String> = history.iter().flat_map(|r| r.metrics.keys()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["epoch", "train_loss", "val_loss", "best_val_loss"];
    header.extend(metric_names.iter().map(|s| s.as_str()));
    w.write_record(&header).expect("write to memory");
    for r in history {
        let mut row = vec![
            r.epoch.to_string(),
            r.train_loss.to_string(),
            r.val_loss.to_string(),
            r.best_val_loss.to_string(),
        ];
        row.extend(
            metric_names
                .iter()
                .map(|m| r.metrics.get(*m).map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

/// One classification example: the input and its label index per head.
struct Unit<T> {
    x: Vec<T>,
    labels: BTreeMap<String, usize>,
}

#[derive(Clone)]
struct EvalResult {
    loss: f64,
    metrics: BTreeMap<String, f64>,
}

/// Regime-specific data after splitting, ready for batching.
enum Prepared<T> {
    NtXent {
        train: Vec<(u64, Vec<T>)>,
        val: Vec<(u64, Vec<T>)>,
    },
    InfoNce {
        train: Vec<Vec<Vec<T>>>,
        val: Vec<Vec<Vec<T>>>,
    },
    Classification {
        train: Vec<Unit<T>>,
        val: Vec<Unit<T>>,
        class_weights: BTreeMap<String, Vec<T>>,
        head_weights: BTreeMap<String, f64>,
    },
}

fn lookup<T: Real>(emb: &EmbeddingSet<T>, id: u64) -> Result<&[T], ContrastiveError> {
    emb.row(id).ok_or(ContrastiveError::MissingEmbedding(id))
}

fn prepare<T: Real>(
    config: &TrainingConfig,
    data: &TrainingData<T>,
    embeddings: &EmbeddingSet<T>,
) -> Result<(Prepared<T>, Split, BTreeMap<String, Vec<String>>), ContrastiveError> {
    let min_part = if data.regime() == Regime::NtXent { 2 } else { 1 };
    let check_split = |split: &Split| {
        if split.train.len() < min_part || split.val.len() < min_part {
            Err(ContrastiveError::InsufficientData(format!(
                "{} training and {} validation ids after splitting",
                split.train.len(),
                split.val.len()
            )))
        } else {
            Ok(())
        }
    };
    match data {
        TrainingData::NtXent { ids } => {
            if ids.is_empty() {
                return Err(ContrastiveError::EmptyData);
            }
            let split = split_ids(ids, config.seed, min_part);
            check_split(&split)?;
            let rows = |part: &[u64]| -> Result<Vec<(u64, Vec<T>)>, ContrastiveError> {
                part.iter().map(|&id| Ok((id, lookup(embeddings, id)?.to_vec()))).collect()
            };
            let prepared = Prepared::NtXent {
                train: rows(&split.train)?,
                val: rows(&split.val)?,
            };
            Ok((prepared, split, BTreeMap::new()))
        }
        TrainingData::InfoNce(set) => {
            if set.is_empty() {
                return Err(ContrastiveError::EmptyData);
            }
            let anchors: Vec<u64> = set.records.iter().map(|r| r.anchor).collect();
            let split = split_ids(&anchors, config.seed, min_part);
            check_split(&split)?;
            let rows = |part: &[u64]| -> Result<Vec<Vec<Vec<T>>>, ContrastiveError> {
                let keep: BTreeSet<u64> = part.iter().copied().collect();
                set.records
                    .iter()
                    .filter(|r| keep.contains(&r.anchor))
                    .map(|r| {
                        std::iter::once(r.anchor)
                            .chain(std::iter::once(r.positive))
                            .chain(r.negatives.iter().copied())
                            .map(|id| Ok(lookup(embeddings, id)?.to_vec()))
                            .collect()
                    })
                    .collect()
            };
            let prepared = Prepared::InfoNce {
                train: rows(&split.train)?,
                val: rows(&split.val)?,
            };
            Ok((prepared, split, BTreeMap::new()))
        }
        TrainingData::Classification(heads) => {
            if heads.is_empty() || heads.values().all(|d| d.samples.is_empty()) {
                return Err(ContrastiveError::EmptyData);
            }
            let head_weights: BTreeMap<String, f64> = if config.head_weights.is_empty() {
                let w = 1.0 / heads.len() as f64;
                heads.keys().map(|k| (k.clone(), w)).collect()
            } else {
                for name in heads.keys() {
                    if !config.head_weights.contains_key(name) {
                        return Err(ContrastiveError::UnknownHead(name.clone()));
                    }
                }
                config.head_weights.clone()
            };
            let classifiers: BTreeMap<String, Vec<String>> =
                heads.iter().map(|(k, d)| (k.clone(), d.labels())).collect();
            let class_weights = heads
                .iter()
                .map(|(k, d)| {
                    (
                        k.clone(),
                        d.labels().iter().map(|l| T::lit(d.class_weights[l])).collect(),
                    )
                })
                .collect();

            let originals: Vec<u64> = heads
                .values()
                .flat_map(|d| d.samples.iter().filter(|s| !s.is_synthetic).map(|s| s.id))
                .collect();
            let split = split_ids(&originals, config.seed, min_part);
            check_split(&split)?;
            let train_ids: BTreeSet<u64> = split.train.iter().copied().collect();
            let val_ids: BTreeSet<u64> = split.val.iter().copied().collect();

            // originals merge across heads by id; synthetic rows stay single-head
            let mut merged: BTreeMap<u64, Unit<T>> = BTreeMap::new();
            let mut synthetic: Vec<Unit<T>> = Vec::new();
            for (name, d) in heads {
                let labels = d.labels();
                for s in &d.samples {
                    let idx = labels.iter().position(|l| *l == s.label).ok_or_else(|| {
                        ContrastiveError::UnknownLabel {
                            head: name.clone(),
                            label: s.label.clone(),
                        }
                    })?;
                    if s.is_synthetic {
                        if train_ids.contains(&s.id) {
                            synthetic.push(Unit {
                                x: s.x.clone(),
                                labels: BTreeMap::from([(name.clone(), idx)]),
                            });
                        }
                    } else {
                        merged
                            .entry(s.id)
                            .or_insert_with(|| Unit {
                                x: s.x.clone(),
                                labels: BTreeMap::new(),
                            })
                            .labels
                            .insert(name.clone(), idx);
                    }
                }
            }
            let mut train = Vec::new();
            let mut val = Vec::new();
            for (id, unit) in merged {
                if train_ids.contains(&id) {
                    train.push(unit);
                } else if val_ids.contains(&id) {
                    val.push(unit);
                }
            }
            train.extend(synthetic);
            let prepared = Prepared::Classification {
                train,
                val,
                class_weights,
                head_weights,
            };
            Ok((prepared, split, classifiers))
        }
    }
}

fn masks(dim: usize, rate: f64, rng: &mut ChaCha8Rng) -> Option<DropoutMask> {
    (rate > 0.0).then(|| DropoutMask::sample(dim, rate, rng))
}

fn cos<T: Real>(a: &[T], b: &[T]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).as_f64()
}

/// Batches of at least `min` elements; a short tail joins the previous batch.
fn batches(n: usize, size: usize, min: usize) -> Vec<std::ops::Range<usize>> {
    let size = size.max(min);
    let mut out: Vec<std::ops::Range<usize>> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() < min) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").end = tail.end;
    }
    out
}

/// Loss and accumulated gradient over one NT-Xent batch.
fn nt_xent_step<T: Real>(
    model: &HeadModel<T>,
    batch: &[&(u64, Vec<T>)],
    config: &TrainingConfig,
    rng: &mut ChaCha8Rng,
    grad: Option<&mut HeadModel<T>>,
) -> Result<(T, f64), ContrastiveError> {
    let dim = model.input_dim();
    let mut outs = Vec::with_capacity(2 * batch.len());
    for (_, x) in batch {
        for _ in 0..2 {
            let m = masks(dim, config.dropout_rate, rng);
            outs.push(model.forward(x, m.as_ref())?);
        }
    }
    let views: Vec<&[T]> = outs.iter().map(|o| o.projected.as_slice()).collect();
    let r = nt_xent_loss(&views, T::lit(config.temperature)).map_err(|e| match e {
        ContrastiveError::ZeroNorm { index } => ContrastiveError::ZeroProjection(batch[index / 2].0),
        other => other,
    })?;
    let alignment =
        (0..batch.len()).map(|i| cos(views[2 * i], views[2 * i + 1])).sum::<f64>() / batch.len() as f64;
    if let Some(grad) = grad {
        let none = BTreeMap::new();
        for (o, g) in outs.iter().zip(&r.grads) {
            model.backward(o, Some(g), &none, grad);
        }
    }
    Ok((r.loss, alignment))
}

/// Loss, mean positive cosine and mean negative cosine over InfoNCE records.
fn info_nce_step<T: Real>(
    model: &HeadModel<T>,
    batch: &[&Vec<Vec<T>>],
    config: &TrainingConfig,
    rng: Option<&mut ChaCha8Rng>,
    mut grad: Option<&mut HeadModel<T>>,
) -> Result<(T, f64, f64), ContrastiveError> {
    let dim = model.input_dim();
    let inv_b = T::one() / T::of_usize(batch.len());
    let (mut loss, mut pos, mut neg) = (T::zero(), 0.0, 0.0);
    let mut rng = rng;
    let none = BTreeMap::new();
    for rec in batch {
        let outs = rec
            .iter()
            .map(|x| {
                let m = rng.as_deref_mut().and_then(|r| masks(dim, config.dropout_rate, r));
                model.forward(x, m.as_ref())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let negs: Vec<&[T]> = outs[2..].iter().map(|o| o.projected.as_slice()).collect();
        let r = info_nce_loss(
            &outs[0].projected,
            &outs[1].projected,
            &negs,
            T::lit(config.temperature),
        )?;
        loss += r.loss * inv_b;
        pos += cos(&outs[0].projected, &outs[1].projected);
        neg += negs.iter().map(|n| cos(&outs[0].projected, n)).sum::<f64>() / negs.len() as f64;
        if let Some(grad) = grad.as_deref_mut() {
            for (o, g) in outs.iter().zip(&r.grads) {
                let scaled: Vec<T> = g.iter().map(|&v| v * inv_b).collect();
                model.backward(o, Some(&scaled), &none, grad);
            }
        }
    }
    let b = batch.len() as f64;
    Ok((loss, pos / b, neg / b))
}

/// Weighted multi-head CE over units; returns the loss and per-head correct counts.
fn classification_step<T: Real>(
    model: &HeadModel<T>,
    batch: &[&Unit<T>],
    class_weights: &BTreeMap<String, Vec<T>>,
    head_weights: &BTreeMap<String, f64>,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
    grad: Option<&mut HeadModel<T>>,
) -> Result<(T, BTreeMap<String, (usize, usize)>), ContrastiveError> {
    let dim = model.input_dim();
    let mut dropout = dropout;
    let outs = batch
        .iter()
        .map(|u| {
            let m = dropout.as_mut().and_then(|(rate, r)| masks(dim, *rate, r));
            model.forward(&u.x, m.as_ref())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut head_batches: BTreeMap<String, HeadBatch<T>> = class_weights
        .iter()
        .map(|(k, w)| {
            (
                k.clone(),
                HeadBatch {
                    logits: Vec::new(),
                    labels: Vec::new(),
                    class_weights: w.clone(),
                },
            )
        })
        .collect();
    // (unit index, head) for each row of each head batch
    let mut owners: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut correct: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (ui, (u, o)) in batch.iter().zip(&outs).enumerate() {
        for (head, &y) in &u.labels {
            let logits = &o.logits[head];
            let hb = head_batches.get_mut(head).expect("head present");
            hb.logits.push(logits.clone());
            hb.labels.push(y);
            owners.entry(head.clone()).or_default().push(ui);
            let argmax = (0..logits.len()).fold(0, |b, i| if logits[i] > logits[b] { i } else { b });
            let c = correct.entry(head.clone()).or_insert((0, 0));
            c.0 += usize::from(argmax == y);
            c.1 += 1;
        }
    }
    head_batches.retain(|_, b| !b.labels.is_empty());
    let r = weighted_multihead_ce(&head_batches, head_weights)?;
    if let Some(grad) = grad {
        let mut per_unit: Vec<BTreeMap<String, Vec<T>>> = vec![BTreeMap::new(); batch.len()];
        for (head, rows) in &r.grads {
            for (row, &ui) in rows.iter().zip(&owners[head]) {
                per_unit[ui].insert(head.clone(), row.clone());
            }
        }
        for (o, dl) in outs.iter().zip(&per_unit) {
            model.backward(o, None, dl, grad);
        }
    }
    Ok((r.loss, correct))
}

fn evaluate<T: Real>(
    model: &HeadModel<T>,
    prepared: &Prepared<T>,
    config: &TrainingConfig,
    on_val: bool,
) -> Result<EvalResult, ContrastiveError> {
    let prefix = if on_val { "val_" } else { "" };
    match prepared {
        Prepared::NtXent { train, val } => {
            let rows: Vec<&(u64, Vec<T>)> = if on_val { val.iter().collect() } else { train.iter().collect() };
            // fixed masks so successive evaluations are comparable
            let mut rng = rng_for(config.seed, STREAM_EVAL);
            let (mut loss, mut align) = (0.0, 0.0);
            for r in batches(rows.len(), config.batch_size, 2) {
                let (l, a) = nt_xent_step(model, &rows[r.clone()], config, &mut rng, None)?;
                loss += l.as_f64() * r.len() as f64;
                align += a * r.len() as f64;
            }
            let n = rows.len() as f64;
            Ok(EvalResult {
                loss: loss / n,
                metrics: BTreeMap::from([(format!("{prefix}alignment"), align / n)]),
            })
        }
        Prepared::InfoNce { train, val } => {
            let recs: Vec<&Vec<Vec<T>>> = if on_val { val.iter().collect() } else { train.iter().collect() };
            let (l, p, n) = info_nce_step(model, &recs, config, None, None)?;
            Ok(EvalResult {
                loss: l.as_f64(),
                metrics: BTreeMap::from([
                    (format!("{prefix}pos_cos"), p),
                    (format!("{prefix}neg_cos"), n),
                ]),
            })
        }
        Prepared::Classification {
            train,
            val,
            class_weights,
            head_weights,
        } => {
            let units: Vec<&Unit<T>> = if on_val { val.iter().collect() } else { train.iter().collect() };
            let (l, correct) = classification_step(model, &units, class_weights, head_weights, None, None)?;
            Ok(EvalResult {
                loss: l.as_f64(),
                metrics: correct
                    .into_iter()
                    .map(|(h, (c, t))| (format!("{prefix}accuracy_{h}"), c as f64 / t as f64))
                    .collect(),
            })
        }
    }
}

/// Runs one epoch of SGD with decoupled weight decay, returning the mean batch loss.
fn run_epoch<T: Real>(
    model: &mut HeadModel<T>,
    prepared: &Prepared<T>,
    config: &TrainingConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, ContrastiveError> {
    let lr = T::lit(config.learning_rate);
    let decay = T::one() - lr * T::lit(config.weight_decay);
    let n = match prepared {
        Prepared::NtXent { train, .. } => train.len(),
        Prepared::InfoNce { train, .. } => train.len(),
        Prepared::Classification { train, .. } => train.len(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let min = if matches!(prepared, Prepared::NtXent { .. }) { 2 } else { 1 };
    let mut total = 0.0;
    for range in batches(n, config.batch_size, min) {
        let idx = &order[range.clone()];
        let mut grad = model.zeros_like();
        let loss = match prepared {
            Prepared::NtXent { train, .. } => {
                let b: Vec<_> = idx.iter().map(|&i| &train[i]).collect();
                nt_xent_step(model, &b, config, rng, Some(&mut grad))?.0
            }
            Prepared::InfoNce { train, .. } => {
                let b: Vec<_> = idx.iter().map(|&i| &train[i]).collect();
                info_nce_step(model, &b, config, Some(rng), Some(&mut grad))?.0
            }
            Prepared::Classification {
                train,
                class_weights,
                head_weights,
                ..
            } => {
                let b: Vec<_> = idx.iter().map(|&i| &train[i]).collect();
                classification_step(
                    model,
                    &b,
                    class_weights,
                    head_weights,
                    Some((config.dropout_rate, rng)),
                    Some(&mut grad),
                )?
                .0
            }
        };
        if !loss.is_finite() {
            return Err(ContrastiveError::NonFiniteLoss { epoch: 0 });
        }
        model.scale(decay);
        model.add_scaled(&grad, -lr);
        total += loss.as_f64() * range.len() as f64;
    }
    Ok(total / n as f64)
}

/// Trains a head from a seeded random initialization.
///
/// Data are split 80/10/10 by ids (anchors for triplets; originals for
/// classification, whose synthetic rows are used only when their source item
/// is in the training part). Each epoch shuffles the training part, takes SGD
/// steps, then evaluates on the validation part. Training stops after
/// `early_stop_patience` epochs without improvement and returns the best
/// validation snapshot. Fixed seed gives a bit-identical model.
pub fn train_head<T: Real>(
    config: &TrainingConfig,
    data: &TrainingData<T>,
    embeddings: &EmbeddingSet<T>,
) -> Result<TrainOutcome<T>, ContrastiveError> {
    config.validate()?;
    let regime = data.regime();
    let (prepared, split, classifiers) = prepare(config, data, embeddings)?;
    let mut model = HeadModel::init_with(
        &config.head,
        embeddings.dim(),
        &classifiers,
        &mut rng_for(config.seed, STREAM_INIT),
    )?;
    model.config_hash = Some(config.hash(regime));

    let record = |epoch: usize, train_loss: f64, val: EvalResult, best: f64, extra: EvalResult| {
        let mut metrics = extra.metrics;
        metrics.extend(val.metrics);
        EpochRecord {
            epoch,
            train_loss,
            val_loss: val.loss,
            best_val_loss: best,
            metrics,
        }
    };

    let init_train = evaluate(&model, &prepared, config, false)?;
    let init_val = evaluate(&model, &prepared, config, true)?;
    if !init_val.loss.is_finite() || !init_train.loss.is_finite() {
        return Err(ContrastiveError::NonFiniteLoss { epoch: 0 });
    }
    let mut best_val = init_val.loss;
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut history = vec![record(0, init_train.loss, init_val, best_val, init_train.clone())];
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut rng = rng_for(config.seed, STREAM_TRAIN);

    for epoch in 1..=config.epochs {
        let train_loss = run_epoch(&mut model, &prepared, config, &mut rng).map_err(|e| match e {
            ContrastiveError::NonFiniteLoss { .. } => ContrastiveError::NonFiniteLoss { epoch },
            other => other,
        })?;
        if !model.all_finite() {
            return Err(ContrastiveError::NonFiniteLoss { epoch });
        }
        let train_eval = evaluate(&model, &prepared, config, false)?;
        let val = evaluate(&model, &prepared, config, true)?;
        if !val.loss.is_finite() {
            return Err(ContrastiveError::NonFiniteLoss { epoch });
        }
        if val.loss < best_val {
            best_val = val.loss;
            best_model = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        history.push(record(epoch, train_loss, val, best_val, train_eval));
        if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
            stopped_early = epoch < config.epochs;
            break;
        }
    }

    Ok(TrainOutcome {
        model: best_model,
        history,
        split,
        best_epoch,
        stopped_early,
        regime,
    })
}
