//! Black-box classifier access: MLP inference from a weights file, the affected set,
//! and application of a triple's Then condition to a raw row.
//!
//! Weights file (JSON):
//!
//! ```json
//! {
//!   "version": 1,
//!   "favorable_class": 1,
//!   "input_encoding": [{"feature": "sex", "kind": "one_hot", "start": 0, "width": 2}, ...],
//!   "layers": [{"weights": [[...], ...], "bias": [...]}, ...]
//! }
//! ```
//!
//! `weights` is row-major with one row per output unit, so a layer computes `W x + b`.
//! Hidden layers use ReLU and the last layer softmax over exactly two classes.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BinningSpec, RawDataset, RawRow, Value};
use crate::error::{Error, Result};
use crate::ground_set::Triple;
use crate::itemset::{FeatureMask, ItemSet};
use crate::schema::{ColumnEncoding, EncodingEntry, FeatureSchema};

pub const WEIGHTS_VERSION: u32 = 1;

/// Any model mapping an encoded input vector to class probabilities.
pub trait Classifier: Send + Sync {
    fn input_dim(&self) -> usize;
    fn predict_proba(&self, input: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub version: u32,
    pub favorable_class: usize,
    pub input_encoding: Vec<EncodingEntry>,
    pub layers: Vec<LayerWeights>,
}

impl MlpWeights {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }
}

#[derive(Debug, Clone)]
struct Dense {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Feed-forward ReLU network with a softmax head. Dropout is a training-time
/// concern and does not appear here.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn from_layers(layers: &[LayerWeights], input_dim: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::DimensionMismatch("model has no layers".into()));
        }
        let mut n_in = input_dim;
        let mut dense = Vec::with_capacity(layers.len());
        for (li, layer) in layers.iter().enumerate() {
            let n_out = layer.weights.len();
            if n_out == 0 || layer.bias.len() != n_out {
                return Err(Error::DimensionMismatch(format!(
                    "layer {li}: {n_out} weight rows but {} biases",
                    layer.bias.len()
                )));
            }
            if let Some(row) = layer.weights.iter().find(|r| r.len() != n_in) {
                return Err(Error::DimensionMismatch(format!(
                    "layer {li}: expected {n_in} inputs, found a row of {}",
                    row.len()
                )));
            }
            dense.push(Dense {
                n_in,
                n_out,
                weights: layer.weights.iter().flatten().copied().collect(),
                bias: layer.bias.clone(),
            });
            n_in = n_out;
        }
        if n_in != 2 {
            return Err(Error::DimensionMismatch(format!(
                "final layer has {n_in} outputs, expected 2"
            )));
        }
        Ok(Mlp { layers: dense })
    }
}

impl Classifier for Mlp {
    fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    fn predict_proba(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut y = layer.bias.clone();
            for (o, out) in y.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                *out += row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            }
            if li != last {
                for v in &mut y {
                    *v = v.max(0.0);
                }
            }
            debug_assert_eq!(y.len(), layer.n_out);
            x = y;
        }
        softmax(&mut x);
        x
    }
}

fn softmax(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// A classifier bound to the schema's raw feature space.
#[derive(Clone)]
pub struct ModelOracle {
    model: Arc<dyn Classifier>,
    encoding: Vec<ColumnEncoding>,
    favorable_class: usize,
}

impl std::fmt::Debug for ModelOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelOracle")
            .field("input_dim", &self.model.input_dim())
            .field("favorable_class", &self.favorable_class)
            .finish()
    }
}

impl ModelOracle {
    pub fn new(
        model: Arc<dyn Classifier>,
        encoding: &[EncodingEntry],
        favorable_class: usize,
        schema: &FeatureSchema,
    ) -> Result<Self> {
        let (resolved, _) = schema.resolve_encoding(encoding, Some(model.input_dim()))?;
        if !schema.declared_encoding().is_empty() {
            let (declared, _) = schema.resolve_encoding(schema.declared_encoding(), None)?;
            if let Some(i) = (0..schema.len()).find(|&i| declared[i] != resolved[i]) {
                return Err(Error::EncodingMismatch(schema.feature(i).name.clone()));
            }
        }
        if favorable_class > 1 {
            return Err(Error::DimensionMismatch(format!(
                "favorable_class {favorable_class} out of range for 2 classes"
            )));
        }
        Ok(ModelOracle {
            model,
            encoding: resolved,
            favorable_class,
        })
    }

    pub fn from_weights(weights: &MlpWeights, schema: &FeatureSchema) -> Result<Self> {
        if weights.version != WEIGHTS_VERSION {
            return Err(Error::DimensionMismatch(format!(
                "unsupported weights version {}",
                weights.version
            )));
        }
        let (_, dim) = schema.resolve_encoding(&weights.input_encoding, None)?;
        let mlp = Mlp::from_layers(&weights.layers, dim)?;
        Self::new(Arc::new(mlp), &weights.input_encoding, weights.favorable_class, schema)
    }

    pub fn favorable_class(&self) -> usize {
        self.favorable_class
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    pub fn encode(&self, row: &[Value]) -> Vec<f64> {
        let mut x = vec![0.0; self.model.input_dim()];
        for (enc, &v) in self.encoding.iter().zip(row) {
            match (*enc, v) {
                (ColumnEncoding::OneHot { start, .. }, Value::Category(c)) => x[start + c as usize] = 1.0,
                (ColumnEncoding::Raw { column, offset, scale }, Value::Number(n)) => {
                    x[column] = (n - offset) / scale
                }
                (ColumnEncoding::Raw { column, offset, scale }, Value::Category(c)) => {
                    x[column] = (c as f64 - offset) / scale
                }
                (ColumnEncoding::OneHot { .. }, Value::Number(_)) => {
                    unreachable!("continuous value in a categorical column")
                }
            }
        }
        x
    }

    pub fn predict_proba(&self, row: &[Value]) -> Vec<f64> {
        self.model.predict_proba(&self.encode(row))
    }

    /// Favorable only when the favorable class strictly beats the other; ties need recourse.
    pub fn is_favorable(&self, row: &[Value]) -> bool {
        let p = self.predict_proba(row);
        let fav = p[self.favorable_class];
        p.iter()
            .enumerate()
            .all(|(c, &q)| c == self.favorable_class || fav > q)
    }
}

pub fn load_model(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<ModelOracle> {
    ModelOracle::from_weights(&MlpWeights::load(path)?, schema)
}

/// Sorted indices of rows predicted unfavorable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffectedSet {
    pub indices: Vec<usize>,
}

impl AffectedSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn affected_set(oracle: &ModelOracle, data: &RawDataset) -> AffectedSet {
    let indices = data
        .rows
        .par_iter()
        .enumerate()
        .filter(|(_, row)| !oracle.is_favorable(row))
        .map(|(i, _)| i)
        .collect();
    AffectedSet { indices }
}

/// Applies a triple's Then condition to a row it covers.
pub fn apply_then(
    row: &[Value],
    triple: &Triple,
    binning: &BinningSpec,
    _schema: &FeatureSchema,
) -> Result<RawRow> {
    let bins = binning.discretize_row(row);
    if !triple.outer.matches(&bins) || !triple.inner.matches(&bins) {
        return Err(Error::NotCovered);
    }
    Ok(apply_items(row, &triple.then, binning).0)
}

/// Sets each Then feature to its target: the category, or the bin representative
/// unless the value already lies in the target bin. Returns the new row and the
/// features whose value changed.
pub fn apply_items(row: &[Value], then: &ItemSet, binning: &BinningSpec) -> (RawRow, FeatureMask) {
    let mut out = row.to_vec();
    let mut changed: FeatureMask = 0;
    for it in then.items() {
        let f = it.feature as usize;
        match row[f] {
            Value::Category(c) => {
                if c != it.value {
                    out[f] = Value::Category(it.value);
                    changed |= 1 << f;
                }
            }
            Value::Number(x) => {
                let bins = binning.bins(f).expect("continuous feature has bins");
                if bins.bin_of(x) != it.value as usize {
                    out[f] = Value::Number(bins.representatives[it.value as usize]);
                    changed |= 1 << f;
                }
            }
        }
    }
    (out, changed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fit_bins;
    use crate::itemset::Item;
    use crate::schema::Feature;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            Feature::categorical("sex", &["female", "male"]),
            Feature::continuous("age", 6),
        ])
        .unwrap()
    }

    fn constant(bias: [f64; 2], schema: &FeatureSchema) -> MlpWeights {
        MlpWeights {
            version: 1,
            favorable_class: 1,
            input_encoding: schema.default_encoding(),
            layers: vec![LayerWeights {
                weights: vec![vec![0.0; 3], vec![0.0; 3]],
                bias: bias.to_vec(),
            }],
        }
    }

    #[test]
    fn zero_weights_follow_bias() {
        let s = schema();
        let oracle = ModelOracle::from_weights(&constant([0.0, 1.0], &s), &s).unwrap();
        let row = vec![Value::Category(0), Value::Number(33.0)];
        let p = oracle.predict_proba(&row);
        assert!(p[1] >= 0.5);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(oracle.is_favorable(&row));
        let data = RawDataset { rows: vec![row.clone(); 4] };
        assert!(affected_set(&oracle, &data).is_empty());
    }

    #[test]
    fn ties_are_unfavorable() {
        let s = schema();
        let oracle = ModelOracle::from_weights(&constant([0.3, 0.3], &s), &s).unwrap();
        let data = RawDataset {
            rows: vec![vec![Value::Category(1), Value::Number(1.0)]; 3],
        };
        assert_eq!(affected_set(&oracle, &data).indices, vec![0, 1, 2]);
    }

    #[test]
    fn dimension_errors() {
        let s = schema();
        let mut w = constant([0.0, 1.0], &s);
        w.layers[0].weights[1].push(1.0);
        assert!(matches!(ModelOracle::from_weights(&w, &s), Err(Error::DimensionMismatch(_))));
        let mut w = constant([0.0, 1.0], &s);
        w.layers[0].bias.push(0.0);
        assert!(matches!(ModelOracle::from_weights(&w, &s), Err(Error::DimensionMismatch(_))));
        let mut w = constant([0.0, 1.0], &s);
        w.layers.push(LayerWeights {
            weights: vec![vec![1.0, 0.0]; 3],
            bias: vec![0.0; 3],
        });
        assert!(matches!(ModelOracle::from_weights(&w, &s), Err(Error::DimensionMismatch(_))));
        let mut w = constant([0.0, 1.0], &s);
        w.input_encoding.pop();
        assert!(matches!(
            ModelOracle::from_weights(&w, &s),
            Err(Error::EncodingMismatch(f)) if f == "age"
        ));
    }

    #[test]
    fn hidden_layer_relu() {
        // one input column, hidden units [x, -x], output logits [0, h0 + h1] = [0, |x|]
        let s = FeatureSchema::new(vec![Feature::continuous("x", 2)]).unwrap();
        let w = MlpWeights {
            version: 1,
            favorable_class: 1,
            input_encoding: s.default_encoding(),
            layers: vec![
                LayerWeights {
                    weights: vec![vec![1.0], vec![-1.0]],
                    bias: vec![0.0, 0.0],
                },
                LayerWeights {
                    weights: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
                    bias: vec![0.0, 0.0],
                },
            ],
        };
        let oracle = ModelOracle::from_weights(&w, &s).unwrap();
        for x in [-2.0, 2.0] {
            let p = oracle.predict_proba(&[Value::Number(x)]);
            let expected = 1.0 / (1.0 + (-2.0f64).exp());
            assert!((p[1] - expected).abs() < 1e-12);
        }
        assert!(!oracle.is_favorable(&[Value::Number(0.0)]));
    }

    #[test]
    fn apply_then_substitutes_representative() {
        let s = schema();
        let data = RawDataset {
            rows: vec![
                vec![Value::Category(0), Value::Number(0.0)],
                vec![Value::Category(1), Value::Number(60.0)],
            ],
        };
        // edges 0,10,...,60
        let binning = fit_bins(&data, &s).unwrap();
        let triple = Triple::new(
            ItemSet::new(vec![Item::new(0, 1)]).unwrap(),
            ItemSet::new(vec![Item::new(1, 2)]).unwrap(),
            ItemSet::new(vec![Item::new(1, 4)]).unwrap(),
            0,
        );
        let row = vec![Value::Category(1), Value::Number(23.0)];
        let out = apply_then(&row, &triple, &binning, &s).unwrap();
        assert_eq!(out, vec![Value::Category(1), Value::Number(45.0)]);

        let uncovered = vec![Value::Category(0), Value::Number(23.0)];
        assert!(matches!(
            apply_then(&uncovered, &triple, &binning, &s),
            Err(Error::NotCovered)
        ));

        // already in the target bin: untouched
        let then = ItemSet::new(vec![Item::new(1, 2)]).unwrap();
        let (same, changed) = apply_items(&row, &then, &binning);
        assert_eq!(same, row);
        assert_eq!(changed, 0);
    }
}
