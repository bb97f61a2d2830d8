use std::collections::BTreeMap;

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ContrastiveError;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// `z = W x + b`
    Linear,
    /// `z = W₂ tanh(W₁ x + b₁) + b₂`
    TwoLayer,
}

/// Architecture of a head, independent of its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub kind: HeadKind,
    /// Ignored for linear heads.
    #[serde(default)]
    pub hidden_dim: usize,
    /// Projected dimension; `None` keeps the input dimension.
    #[serde(default)]
    pub output_dim: Option<usize>,
}

impl Default for HeadSpec {
    fn default() -> Self {
        Self {
            kind: HeadKind::Linear,
            hidden_dim: 0,
            output_dim: None,
        }
    }
}

/// Dense layer with a row-major `out × in` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    /// Glorot-uniform weights, zero bias.
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let mut d = Self::zeros(inputs, outputs);
        for w in &mut d.weight {
            *w = T::lit(rng.random_range(-limit..=limit));
        }
        d
    }

    pub fn identity(dim: usize) -> Self {
        let mut d = Self::zeros(dim, dim);
        for i in 0..dim {
            d.weight[i * dim + i] = T::one();
        }
        d
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                crate::scalar::dot(row, x) + self.bias[o]
            })
            .collect()
    }

    /// Accumulates parameter gradients for output gradient `dy` at input `x`
    /// into `grad` and returns the input gradient.
    fn backward(&self, x: &[T], dy: &[T], grad: &mut Dense<T>) -> Vec<T> {
        let mut dx = vec![T::zero(); self.inputs];
        for (o, &g) in dy.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            let row = o * self.inputs;
            for i in 0..self.inputs {
                grad.weight[row + i] += g * x[i];
                dx[i] += g * self.weight[row + i];
            }
            grad.bias[o] += g;
        }
        dx
    }

    fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// One logit per label on top of the projected vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead<T> {
    pub labels: Vec<String>,
    pub dense: Dense<T>,
}

impl<T: Real> ClassifierHead<T> {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Projection head over frozen embeddings, with optional classification heads.
///
/// The same type doubles as the gradient container: [`HeadModel::zeros_like`]
/// gives a shape-compatible accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel<T> {
    pub kind: HeadKind,
    pub layers: Vec<Dense<T>>,
    pub heads: BTreeMap<String, ClassifierHead<T>>,
    pub config_hash: Option<String>,
}

/// Inverted-dropout mask on the head input.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<bool>,
    pub rate: f64,
}

impl DropoutMask {
    pub fn sample(dim: usize, rate: f64, rng: &mut impl Rng) -> Self {
        Self {
            keep: (0..dim).map(|_| rng.random::<f64>() >= rate).collect(),
            rate,
        }
    }
}

/// Result of a forward pass, with what the backward pass needs.
#[derive(Debug, Clone)]
pub struct HeadOutput<T> {
    pub projected: Vec<T>,
    pub logits: BTreeMap<String, Vec<T>>,
    input: Vec<T>,
    hidden: Option<Vec<T>>,
    mask: Option<DropoutMask>,
}

impl<T: Real> HeadModel<T> {
    /// Randomly initialized head (Glorot uniform) from `seed`.
    pub fn init(
        spec: &HeadSpec,
        input_dim: usize,
        classifiers: &BTreeMap<String, Vec<String>>,
        seed: u64,
    ) -> Result<Self, ContrastiveError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(spec, input_dim, classifiers, &mut rng)
    }

    pub(crate) fn init_with(
        spec: &HeadSpec,
        input_dim: usize,
        classifiers: &BTreeMap<String, Vec<String>>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ContrastiveError> {
        let out = spec.output_dim.unwrap_or(input_dim);
        if input_dim == 0 || out == 0 {
            return Err(ContrastiveError::InvalidConfig("head dimensions must be positive".into()));
        }
        let layers = match spec.kind {
            HeadKind::Linear => vec![Dense::glorot(input_dim, out, rng)],
            HeadKind::TwoLayer => {
                if spec.hidden_dim == 0 {
                    return Err(ContrastiveError::InvalidConfig(
                        "two_layer head needs hidden_dim > 0".into(),
                    ));
                }
                vec![
                    Dense::glorot(input_dim, spec.hidden_dim, rng),
                    Dense::glorot(spec.hidden_dim, out, rng),
                ]
            }
        };
        let mut heads = BTreeMap::new();
        for (name, labels) in classifiers {
            if labels.is_empty() {
                return Err(ContrastiveError::InvalidConfig(format!("head {name:?} has no labels")));
            }
            heads.insert(
                name.clone(),
                ClassifierHead {
                    labels: labels.clone(),
                    dense: Dense::glorot(out, labels.len(), rng),
                },
            );
        }
        Ok(Self {
            kind: spec.kind,
            layers,
            heads,
            config_hash: None,
        })
    }

    /// Linear head with the identity projection.
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: HeadKind::Linear,
            layers: vec![Dense::identity(dim)],
            heads: BTreeMap::new(),
            config_hash: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        (self.kind == HeadKind::TwoLayer).then(|| self.layers[0].outputs)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
            heads: self
                .heads
                .iter()
                .map(|(k, h)| {
                    (
                        k.clone(),
                        ClassifierHead {
                            labels: h.labels.clone(),
                            dense: Dense::zeros(h.dense.inputs, h.dense.outputs),
                        },
                    )
                })
                .collect(),
            config_hash: None,
        }
    }

    fn dense_layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.layers.iter().chain(self.heads.values().map(|h| &h.dense))
    }

    fn dense_layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.layers
            .iter_mut()
            .chain(self.heads.values_mut().map(|h| &mut h.dense))
    }

    pub fn param_count(&self) -> usize {
        self.dense_layers().map(Dense::param_count).sum()
    }

    /// Parameters in a fixed order: layers, then classifier heads by name;
    /// each layer's weight followed by its bias.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for d in self.dense_layers() {
            out.extend_from_slice(&d.weight);
            out.extend_from_slice(&d.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<(), ContrastiveError> {
        if flat.len() != self.param_count() {
            return Err(ContrastiveError::DimensionMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut at = 0;
        for d in self.dense_layers_mut() {
            let (w, b) = (d.weight.len(), d.bias.len());
            d.weight.copy_from_slice(&flat[at..at + w]);
            d.bias.copy_from_slice(&flat[at + w..at + w + b]);
            at += w + b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.dense_layers()
            .all(|d| d.weight.iter().chain(&d.bias).all(|v| v.is_finite()))
    }

    /// `self += scale · other` over every parameter.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (d, o) in self.dense_layers_mut().zip(other.dense_layers()) {
            for (a, &b) in d.weight.iter_mut().zip(&o.weight) {
                *a += scale * b;
            }
            for (a, &b) in d.bias.iter_mut().zip(&o.bias) {
                *a += scale * b;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for d in self.dense_layers_mut() {
            d.weight.iter_mut().chain(d.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    /// Forward pass; dropout is applied to the input when a mask is given.
    pub fn forward(&self, x: &[T], mask: Option<&DropoutMask>) -> Result<HeadOutput<T>, ContrastiveError> {
        if x.len() != self.input_dim() {
            return Err(ContrastiveError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let input: Vec<T> = match mask {
            None => x.to_vec(),
            Some(m) => {
                if m.keep.len() != x.len() {
                    return Err(ContrastiveError::DimensionMismatch {
                        expected: x.len(),
                        got: m.keep.len(),
                    });
                }
                let scale = T::one() / (T::one() - T::lit(m.rate));
                x.iter()
                    .zip(&m.keep)
                    .map(|(&v, &k)| if k { v * scale } else { T::zero() })
                    .collect()
            }
        };
        let (hidden, projected) = match self.kind {
            HeadKind::Linear => (None, self.layers[0].apply(&input)),
            HeadKind::TwoLayer => {
                let h: Vec<T> = self.layers[0].apply(&input).into_iter().map(T::tanh).collect();
                let z = self.layers[1].apply(&h);
                (Some(h), z)
            }
        };
        let logits = self
            .heads
            .iter()
            .map(|(k, h)| (k.clone(), h.dense.apply(&projected)))
            .collect();
        Ok(HeadOutput {
            projected,
            logits,
            input,
            hidden,
            mask: mask.cloned(),
        })
    }

    /// Backpropagates gradients on the projected vector and on any subset of the
    /// logits, accumulating into `grad` (shaped like `self`). Returns the
    /// gradient with respect to the raw input `x`.
    pub fn backward(
        &self,
        out: &HeadOutput<T>,
        d_projected: Option<&[T]>,
        d_logits: &BTreeMap<String, Vec<T>>,
        grad: &mut Self,
    ) -> Vec<T> {
        let mut dz = match d_projected {
            Some(d) => d.to_vec(),
            None => vec![T::zero(); self.output_dim()],
        };
        for (name, dl) in d_logits {
            let head = &self.heads[name];
            let g = grad.heads.get_mut(name).expect("gradient shaped like model");
            let back = head.dense.backward(&out.projected, dl, &mut g.dense);
            dz.iter_mut().zip(back).for_each(|(a, b)| *a += b);
        }
        let d_input = match self.kind {
            HeadKind::Linear => self.layers[0].backward(&out.input, &dz, &mut grad.layers[0]),
            HeadKind::TwoLayer => {
                let h = out.hidden.as_ref().expect("two-layer output keeps hidden");
                let dh = self.layers[1].backward(h, &dz, &mut grad.layers[1]);
                let da: Vec<T> = dh
                    .iter()
                    .zip(h)
                    .map(|(&g, &hv)| g * (T::one() - hv * hv))
                    .collect();
                self.layers[0].backward(&out.input, &da, &mut grad.layers[0])
            }
        };
        match &out.mask {
            None => d_input,
            Some(m) => {
                let scale = T::one() / (T::one() - T::lit(m.rate));
                d_input
                    .into_iter()
                    .zip(&m.keep)
                    .map(|(g, &k)| if k { g * scale } else { T::zero() })
                    .collect()
            }
        }
    }

    /// Projected vector only, without dropout.
    pub fn project(&self, x: &[T]) -> Result<Vec<T>, ContrastiveError> {
        Ok(self.forward(x, None)?.projected)
    }

    /// Most probable label of classifier `head` (ties to the lowest index).
    pub fn predict(&self, head: &str, x: &[T]) -> Result<&str, ContrastiveError> {
        let h = self
            .heads
            .get(head)
            .ok_or_else(|| ContrastiveError::UnknownHead(head.to_string()))?;
        let out = self.forward(x, None)?;
        let logits = &out.logits[head];
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = i;
            }
        }
        Ok(&h.labels[best])
    }

    pub fn cast<U: Real>(&self) -> HeadModel<U> {
        let conv = |d: &Dense<T>| Dense {
            inputs: d.inputs,
            outputs: d.outputs,
            weight: d.weight.iter().map(|v| U::lit(v.as_f64())).collect(),
            bias: d.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
        };
        HeadModel {
            kind: self.kind,
            layers: self.layers.iter().map(conv).collect(),
            heads: self
                .heads
                .iter()
                .map(|(k, h)| {
                    (
                        k.clone(),
                        ClassifierHead {
                            labels: h.labels.clone(),
                            dense: conv(&h.dense),
                        },
                    )
                })
                .collect(),
            config_hash: self.config_hash.clone(),
        }
    }

    pub fn to_file(&self) -> ModelFile {
        let mut blob = Vec::with_capacity(self.param_count() * T::WIDTH);
        for v in self.params() {
            v.write_le(&mut blob);
        }
        ModelFile {
            kind: self.kind,
            dtype: T::DTYPE.to_string(),
            input_dim: self.input_dim(),
            hidden_dim: self.hidden_dim(),
            output_dim: self.output_dim(),
            heads: self
                .heads
                .iter()
                .map(|(k, h)| (k.clone(), h.labels.clone()))
                .collect(),
            config_hash: self.config_hash.clone(),
            params: base64::engine::general_purpose::STANDARD.encode(blob),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self, ContrastiveError> {
        let bad = |m: &str| ContrastiveError::ModelFile(m.to_string());
        if file.dtype != T::DTYPE {
            return Err(ContrastiveError::ModelFile(format!(
                "stored dtype {} does not match {}",
                file.dtype,
                T::DTYPE
            )));
        }
        let spec = HeadSpec {
            kind: file.kind,
            hidden_dim: file.hidden_dim.unwrap_or(0),
            output_dim: Some(file.output_dim),
        };
        if (file.kind == HeadKind::TwoLayer) != file.hidden_dim.is_some() {
            return Err(bad("hidden_dim must be present exactly for two_layer heads"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::init_with(&spec, file.input_dim, &file.heads, &mut rng)?;
        let blob = base64::engine::general_purpose::STANDARD
            .decode(&file.params)
            .map_err(|e| ContrastiveError::ModelFile(format!("params: {e}")))?;
        if blob.len() != model.param_count() * T::WIDTH {
            return Err(bad("parameter blob length does not match dimensions"));
        }
        let flat: Vec<T> = blob
            .chunks_exact(T::WIDTH)
            .map(|c| T::read_le(c).expect("chunk has native width"))
            .collect();
        model.set_params(&flat)?;
        if !model.all_finite() {
            return Err(bad("non-finite parameter"));
        }
        model.config_hash = file.config_hash.clone();
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), ContrastiveError> {
        let text = serde_json::to_string_pretty(&self.to_file()).expect("model file serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ContrastiveError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| ContrastiveError::ModelFile(e.to_string()))?;
        Self::from_file(&file)
    }

    /// Loads a head stored in either dtype and converts it to `T`.
    pub fn load_any(path: impl AsRef<std::path::Path>) -> Result<Self, ContrastiveError> {
        let file = read_model_file(path)?;
        match file.dtype.as_str() {
            "f32" => Ok(HeadModel::<f32>::from_file(&file)?.cast()),
            "f64" => Ok(HeadModel::<f64>::from_file(&file)?.cast()),
            other => Err(ContrastiveError::ModelFile(format!("unsupported dtype {other:?}"))),
        }
    }
}

/// Serialized head: JSON header plus a base64 little-endian parameter blob in
/// the model's native dtype, in [`HeadModel::params`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: HeadKind,
    pub dtype: String,
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub heads: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub params: String,
}

/// Reads only the header of a model file, to learn its dtype before loading.
pub fn read_model_file(path: impl AsRef<std::path::Path>) -> Result<ModelFile, ContrastiveError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ContrastiveError::ModelFile(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_any_widens_f32() {
        let dir = std::env::temp_dir().join(format!("head-any-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.json");
        let narrow = two_layer(3).cast::<f32>();
        narrow.save(&path).unwrap();
        let wide = HeadModel::<f64>::load_any(&path).unwrap();
        assert_eq!(wide.params(), narrow.cast::<f64>().params());
        assert!(HeadModel::<f64>::load(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    fn two_layer(seed: u64) -> HeadModel<f64> {
        let spec = HeadSpec {
            kind: HeadKind::TwoLayer,
            hidden_dim: 5,
            output_dim: Some(3),
        };
        let heads = BTreeMap::from([("povo".to_string(), vec!["a".into(), "b".into()])]);
        HeadModel::init(&spec, 4, &heads, seed).unwrap()
    }

    #[test]
    fn identity_head_passes_input_through() {
        let m = HeadModel::<f64>::identity(3);
        assert_eq!(m.project(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn inverted_dropout_doubles_kept_half() {
        let m = HeadModel::<f64>::identity(4);
        let mask = DropoutMask {
            keep: vec![true, true, false, false],
            rate: 0.5,
        };
        let out = m.forward(&[1.0, 2.0, 3.0, 4.0], Some(&mask)).unwrap();
        assert_eq!(out.projected, vec![2.0, 4.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_two_layer_head_outputs_zero() {
        let mut m = two_layer(1);
        let zeros = vec![0.0; m.param_count()];
        m.set_params(&zeros).unwrap();
        assert_eq!(m.project(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = two_layer(1);
        assert!(matches!(
            m.forward(&[1.0, 2.0], None),
            Err(ContrastiveError::DimensionMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn params_round_trip() {
        let m = two_layer(3);
        let mut other = two_layer(4);
        assert_ne!(m, other);
        other.set_params(&m.params()).unwrap();
        assert_eq!(m, other);
    }

    #[test]
    fn model_file_round_trip_is_exact() {
        let m = two_layer(9);
        let back = HeadModel::<f64>::from_file(&m.to_file()).unwrap();
        assert_eq!(m, back);
        let f = m.cast::<f32>();
        assert_eq!(HeadModel::<f32>::from_file(&f.to_file()).unwrap(), f);
        assert!(HeadModel::<f32>::from_file(&m.to_file()).is_err());
    }

    #[test]
    fn backward_matches_finite_differences_on_input() {
        let m = two_layer(5);
        let x = [0.3, -0.7, 1.1, 0.2];
        // scalar: sum of projected plus first logit
        let f = |x: &[f64]| {
            let o = m.forward(x, None).unwrap();
            o.projected.iter().sum::<f64>() + o.logits["povo"][0]
        };
        let out = m.forward(&x, None).unwrap();
        let mut grad = m.zeros_like();
        let dl = BTreeMap::from([("povo".to_string(), vec![1.0, 0.0])]);
        let dx = m.backward(&out, Some(&[1.0; 3]), &dl, &mut grad);
        for i in 0..4 {
            let (mut p, mut q) = (x, x);
            p[i] += 1e-6;
            q[i] -= 1e-6;
            let num = (f(&p) - f(&q)) / 2e-6;
            assert!((num - dx[i]).abs() < 1e-7, "coord {i}: {num} vs {}", dx[i]);
        }
    }
}
