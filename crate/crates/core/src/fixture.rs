//! Synthetic credit-like data and a linear scoring model, used by the tests, the
//! acceptance suite and `recourse fixture`.
//!
//! The model is a single softmax layer with logits `[0, w.x + b]`, so an applicant is
//! approved exactly when `w.x + b > 0`.

use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{RawDataset, Value};
use crate::error::{Error, Result};
use crate::model::{LayerWeights, MlpWeights, WEIGHTS_VERSION};
use crate::schema::{ColumnEncoding, EncodingEntry, Feature, FeatureKind, FeatureSchema};

pub const CREDIT_ROWS: usize = 300;
pub const CREDIT_SEED: u64 = 7;

struct Categorical {
    name: &'static str,
    actionable: bool,
    /// Every level gets the same number of rows, so at `p = 0.5` a two-level feature
    /// still yields frequent itemsets on both sides.
    balanced: bool,
    levels: &'static [(&'static str, f64, f64)], // label, sampling weight, score weight
}

struct Continuous {
    name: &'static str,
    actionable: bool,
    lo: f64,
    hi: f64,
    offset: f64,
    scale: f64,
    weight: f64,
}

const CATEGORICAL: &[Categorical] = &[
    Categorical {
        name: "checking",
        actionable: true,
        balanced: false,
        levels: &[("none", 0.3, -1.2), ("negative", 0.2, -1.6), ("low", 0.3, 0.0), ("high", 0.2, 1.6)],
    },
    Categorical {
        name: "savings",
        actionable: true,
        balanced: false,
        levels: &[("none", 0.35, -0.6), ("low", 0.3, 0.0), ("medium", 0.2, 0.5), ("high", 0.15, 1.0)],
    },
    Categorical {
        name: "housing",
        actionable: true,
        balanced: false,
        levels: &[("rent", 0.35, -0.3), ("own", 0.5, 0.4), ("free", 0.15, 0.0)],
    },
    Categorical {
        name: "employment",
        actionable: true,
        balanced: false,
        levels: &[("unemployed", 0.15, -0.8), ("short", 0.45, 0.0), ("long", 0.4, 0.6)],
    },
    Categorical {
        name: "purpose",
        actionable: true,
        balanced: false,
        levels: &[("car", 0.35, 0.0), ("education", 0.15, 0.2), ("business", 0.2, -0.2), ("other", 0.3, 0.0)],
    },
    Categorical {
        name: "sex",
        actionable: false,
        balanced: false,
        levels: &[("female", 0.4, 0.0), ("male", 0.6, 0.0)],
    },
    Categorical {
        name: "telephone",
        actionable: true,
        balanced: true,
        levels: &[("none", 0.5, -0.4), ("registered", 0.5, 0.4)],
    },
    Categorical {
        name: "foreign",
        actionable: false,
        balanced: false,
        levels: &[("no", 0.9, 0.0), ("yes", 0.1, -0.3)],
    },
];

const CONTINUOUS: &[Continuous] = &[
    Continuous {
        name: "age",
        actionable: false,
        lo: 19.0,
        hi: 75.0,
        offset: 40.0,
        scale: 10.0,
        weight: 0.2,
    },
    Continuous {
        name: "duration",
        actionable: true,
        lo: 4.0,
        hi: 72.0,
        offset: 24.0,
        scale: 12.0,
        weight: -0.5,
    },
    Continuous {
        name: "amount",
        actionable: true,
        lo: 250.0,
        hi: 18000.0,
        offset: 3000.0,
        scale: 1000.0,
        weight: -0.15,
    },
];

const BIAS: f64 = 1.1;

pub fn credit_schema() -> FeatureSchema {
    let mut features: Vec<Feature> = CATEGORICAL
        .iter()
        .map(|c| Feature {
            name: c.name.to_string(),
            kind: FeatureKind::Categorical {
                values: c.levels.iter().map(|l| l.0.to_string()).collect(),
            },
            actionable: c.actionable,
        })
        .collect();
    features.extend(CONTINUOUS.iter().map(|c| Feature {
        name: c.name.to_string(),
        kind: FeatureKind::Continuous { bin_count: 10 },
        actionable: c.actionable,
    }));
    let schema = FeatureSchema::new(features).expect("fixture schema is valid");
    let encoding = credit_encoding(&schema);
    schema.with_encoding(encoding).expect("fixture encoding is valid")
}

fn credit_encoding(schema: &FeatureSchema) -> Vec<EncodingEntry> {
    schema
        .default_encoding()
        .into_iter()
        .map(|mut e| {
            if let ColumnEncoding::Raw { column, .. } = e.encoding {
                let c = CONTINUOUS.iter().find(|c| c.name == e.feature).expect("known feature");
                e.encoding = ColumnEncoding::Raw {
                    column,
                    offset: c.offset,
                    scale: c.scale,
                };
            }
            e
        })
        .collect()
}

/// `rows` applicants drawn from a fixed generator; continuous values are integers.
pub fn credit_dataset(rows: usize, seed: u64) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samplers: Vec<WeightedIndex<f64>> = CATEGORICAL
        .iter()
        .map(|c| WeightedIndex::new(c.levels.iter().map(|l| l.1)).expect("positive weights"))
        .collect();
    let balanced: Vec<Option<Vec<u32>>> = CATEGORICAL
        .iter()
        .map(|c| {
            c.balanced.then(|| {
                let mut col: Vec<u32> = (0..rows).map(|i| (i % c.levels.len()) as u32).collect();
                col.shuffle(&mut rng);
                col
            })
        })
        .collect();
    let rows = (0..rows)
        .map(|i| {
            let mut row: Vec<Value> = samplers
                .iter()
                .zip(&balanced)
                .map(|(s, b)| match b {
                    Some(col) => Value::Category(col[i]),
                    None => Value::Category(s.sample(&mut rng) as u32),
                })
                .collect();
            for c in CONTINUOUS {
                let x = if c.name == "amount" {
                    // log-uniform
                    (rng.gen_range(c.lo.ln()..=c.hi.ln())).exp()
                } else {
                    rng.gen_range(c.lo..=c.hi)
                };
                row.push(Value::Number(x.round()));
            }
            row
        })
        .collect();
    RawDataset { rows }
}

pub fn credit_model(schema: &FeatureSchema) -> MlpWeights {
    let encoding = credit_encoding(schema);
    let dim: usize = CATEGORICAL.iter().map(|c| c.levels.len()).sum::<usize>() + CONTINUOUS.len();
    let mut w = vec![0.0; dim];
    let mut col = 0;
    for c in CATEGORICAL {
        for l in c.levels {
            w[col] = l.2;
            col += 1;
        }
    }
    for c in CONTINUOUS {
        w[col] = c.weight;
        col += 1;
    }
    MlpWeights {
        version: WEIGHTS_VERSION,
        favorable_class: 1,
        input_encoding: encoding,
        layers: vec![LayerWeights {
            weights: vec![vec![0.0; dim], w],
            bias: vec![0.0, BIAS],
        }],
    }
}

/// Writes `credit.csv`, `credit.schema.toml` and `credit.weights.json` into `dir`.
pub fn write_credit(dir: impl AsRef<Path>, rows: usize, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema = credit_schema();
    let data = credit_dataset(rows, seed);
    let csv_path = dir.join("credit.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    data.write_csv(&schema, file)?;
    let schema_path = dir.join("credit.schema.toml");
    std::fs::write(&schema_path, schema.to_toml_string()).map_err(|e| Error::io(&schema_path, e))?;
    let model_path = dir.join("credit.weights.json");
    std::fs::write(&model_path, credit_model(&schema).to_json()).map_err(|e| Error::io(&model_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{affected_set, ModelOracle};

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(credit_dataset(50, 3), credit_dataset(50, 3));
        assert_ne!(credit_dataset(50, 3), credit_dataset(50, 4));
    }

    #[test]
    fn model_loads_and_affects_a_minority() {
        let schema = credit_schema();
        let oracle = ModelOracle::from_weights(&credit_model(&schema), &schema).unwrap();
        let data = credit_dataset(CREDIT_ROWS, CREDIT_SEED);
        let affected = affected_set(&oracle, &data);
        let share = affected.len() as f64 / data.len() as f64;
        assert!(share > 0.15 && share < 0.6, "affected share {share}");
    }
}
