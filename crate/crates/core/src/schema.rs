//! Feature schema and the model input layout.
//!
//! A schema is read from a human-editable TOML sidecar:
//!
//! ```toml
//! [[feature]]
//! name = "checking"
//! kind = "categorical"
//! values = ["none", "low", "high"]
//!
//! [[feature]]
//! name = "age"
//! kind = "continuous"
//! bin_count = 10
//! actionable = false
//!
//! # optional, must agree with the weights file when present
//! [[encoding]]
//! feature = "checking"
//! kind = "one_hot"
//! start = 0
//! width = 3
//! ```

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of features; feature sets are stored as a `u128` mask.
pub const MAX_FEATURES: usize = 128;

pub const DEFAULT_BIN_COUNT: usize = 10;

fn default_bin_count() -> usize {
    DEFAULT_BIN_COUNT
}

fn default_true() -> bool {
    true
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical {
        values: Vec<String>,
    },
    Continuous {
        #[serde(default = "default_bin_count")]
        bin_count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default = "default_true")]
    pub actionable: bool,
}

impl Feature {
    pub fn categorical(name: &str, values: &[&str]) -> Self {
        Feature {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                values: values.iter().map(|v| v.to_string()).collect(),
            },
            actionable: true,
        }
    }

    pub fn continuous(name: &str, bin_count: usize) -> Self {
        Feature {
            name: name.to_string(),
            kind: FeatureKind::Continuous { bin_count },
            actionable: true,
        }
    }

    pub fn immutable(mut self) -> Self {
        self.actionable = false;
        self
    }

    /// Number of discrete values: categories or bins.
    pub fn cardinality(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical { values } => values.len(),
            FeatureKind::Continuous { bin_count } => *bin_count,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous { .. })
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { values } => values.iter().position(|v| v == label),
            FeatureKind::Continuous { .. } => None,
        }
    }
}

/// How one feature is laid out in the model's input vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoding {
    OneHot {
        start: usize,
        width: usize,
    },
    /// Single column holding `(x - offset) / scale`.
    Raw {
        column: usize,
        #[serde(default)]
        offset: f64,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

impl ColumnEncoding {
    fn span(&self) -> (usize, usize) {
        match *self {
            ColumnEncoding::OneHot { start, width } => (start, width),
            ColumnEncoding::Raw { column, .. } => (column, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingEntry {
    pub feature: String,
    #[serde(flatten)]
    pub encoding: ColumnEncoding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(rename = "feature")]
    features: Vec<Feature>,
    #[serde(default, rename = "encoding", skip_serializing_if = "Vec::is_empty")]
    encoding: Vec<EncodingEntry>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let schema = FeatureSchema {
            features,
            encoding: Vec::new(),
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_encoding(mut self, encoding: Vec<EncodingEntry>) -> Result<Self> {
        self.resolve_encoding(&encoding, None)?;
        self.encoding = encoding;
        Ok(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: FeatureSchema = toml::from_str(text)?;
        schema.validate()?;
        if !schema.encoding.is_empty() {
            schema.resolve_encoding(&schema.encoding, None)?;
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema declares no features".into()));
        }
        if self.features.len() > MAX_FEATURES {
            return Err(Error::Schema(format!(
                "{} features exceeds the supported maximum of {MAX_FEATURES}",
                self.features.len()
            )));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            match &f.kind {
                FeatureKind::Categorical { values } => {
                    if values.is_empty() {
                        return Err(Error::Schema(format!("feature `{}` has no categories", f.name)));
                    }
                    let unique: HashSet<_> = values.iter().collect();
                    if unique.len() != values.len() {
                        return Err(Error::Schema(format!(
                            "feature `{}` has duplicate categories",
                            f.name
                        )));
                    }
                }
                FeatureKind::Continuous { bin_count } => {
                    if *bin_count < 2 {
                        return Err(Error::Schema(format!(
                            "feature `{}` needs bin_count >= 2",
                            f.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, index: usize) -> &Feature {
        &self.features[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Encoding declared in the sidecar, if any.
    pub fn declared_encoding(&self) -> &[EncodingEntry] {
        &self.encoding
    }

    /// Checks an input layout against the schema and returns it indexed by feature,
    /// together with the input dimension it spans.
    ///
    /// Every feature must appear exactly once, categorical features as one-hot spans of
    /// the right width and continuous features as raw columns; spans may not overlap.
    /// With `input_dim` given, spans must fit inside it and cover it entirely.
    pub fn resolve_encoding(
        &self,
        entries: &[EncodingEntry],
        input_dim: Option<usize>,
    ) -> Result<(Vec<ColumnEncoding>, usize)> {
        let mut resolved: Vec<Option<ColumnEncoding>> = vec![None; self.len()];
        for entry in entries {
            let idx = self
                .index_of(&entry.feature)
                .ok_or_else(|| Error::EncodingMismatch(entry.feature.clone()))?;
            if resolved[idx].is_some() {
                return Err(Error::EncodingMismatch(entry.feature.clone()));
            }
            let ok = match (&self.features[idx].kind, &entry.encoding) {
                (FeatureKind::Categorical { values }, ColumnEncoding::OneHot { width, .. }) => {
                    *width == values.len()
                }
                (FeatureKind::Continuous { .. }, ColumnEncoding::Raw { scale, offset, .. }) => {
                    *scale != 0.0 && scale.is_finite() && offset.is_finite()
                }
                _ => false,
            };
            if !ok {
                return Err(Error::EncodingMismatch(entry.feature.clone()));
            }
            resolved[idx] = Some(entry.encoding.clone());
        }
        let mut out = Vec::with_capacity(self.len());
        for (f, enc) in self.features.iter().zip(resolved) {
            out.push(enc.ok_or_else(|| Error::EncodingMismatch(f.name.clone()))?);
        }

        let mut spans: Vec<(usize, usize, usize)> = out
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let (s, w) = e.span();
                (s, w, i)
            })
            .collect();
        spans.sort_unstable();
        let mut end = 0;
        for &(start, width, i) in &spans {
            if start < end {
                return Err(Error::EncodingMismatch(self.features[i].name.clone()));
            }
            end = start + width;
        }
        let dim = end;
        if let Some(expected) = input_dim {
            let covered: usize = spans.iter().map(|s| s.1).sum();
            if dim != expected || covered != expected {
                return Err(Error::DimensionMismatch(format!(
                    "input encoding spans {covered} of {dim} columns, model expects {expected}"
                )));
            }
        }
        Ok((out, dim))
    }

    /// One-hot for categorical and identity columns for continuous features, in schema order.
    pub fn default_encoding(&self) -> Vec<EncodingEntry> {
        let mut col = 0;
        self.features
            .iter()
            .map(|f| {
                let encoding = match &f.kind {
                    FeatureKind::Categorical { values } => {
                        let e = ColumnEncoding::OneHot {
                            start: col,
                            width: values.len(),
                        };
                        col += values.len();
                        e
                    }
                    FeatureKind::Continuous { .. } => {
                        let e = ColumnEncoding::Raw {
                            column: col,
                            offset: 0.0,
                            scale: 1.0,
                        };
                        col += 1;
                        e
                    }
                };
                EncodingEntry {
                    feature: f.name.clone(),
                    encoding,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIDECAR: &str = r#"
[[feature]]
name = "sex"
kind = "categorical"
values = ["female", "male"]
actionable = false

[[feature]]
name = "age"
kind = "continuous"
"#;

    #[test]
    fn parses_sidecar_with_defaults() {
        let s = FeatureSchema::from_toml_str(SIDECAR).unwrap();
        assert_eq!(s.len(), 2);
        assert!(!s.feature(0).actionable);
        assert!(s.feature(1).actionable);
        assert_eq!(s.feature(1).cardinality(), DEFAULT_BIN_COUNT);
        let back = FeatureSchema::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_schemas() {
        assert!(FeatureSchema::new(vec![]).is_err());
        assert!(FeatureSchema::new(vec![
            Feature::continuous("a", 4),
            Feature::continuous("a", 4)
        ])
        .is_err());
        assert!(FeatureSchema::new(vec![Feature::continuous("a", 1)]).is_err());
        assert!(FeatureSchema::new(vec![Feature::categorical("a", &[])]).is_err());
        assert!(FeatureSchema::new(vec![Feature::categorical("a", &["x", "x"])]).is_err());
    }

    #[test]
    fn default_encoding_resolves() {
        let s = FeatureSchema::from_toml_str(SIDECAR).unwrap();
        let enc = s.default_encoding();
        let (cols, dim) = s.resolve_encoding(&enc, Some(3)).unwrap();
        assert_eq!(dim, 3);
        assert_eq!(cols[0], ColumnEncoding::OneHot { start: 0, width: 2 });
    }

    #[test]
    fn encoding_mismatches_are_located() {
        let s = FeatureSchema::from_toml_str(SIDECAR).unwrap();
        let mut enc = s.default_encoding();
        enc[0].encoding = ColumnEncoding::OneHot { start: 0, width: 3 };
        match s.resolve_encoding(&enc, None) {
            Err(Error::EncodingMismatch(f)) => assert_eq!(f, "sex"),
            other => panic!("unexpected {other:?}"),
        }
        let enc = s.default_encoding();
        assert!(matches!(
            s.resolve_encoding(&enc[..1], None),
            Err(Error::EncodingMismatch(f)) if f == "age"
        ));
        assert!(matches!(
            s.resolve_encoding(&enc, Some(4)),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
