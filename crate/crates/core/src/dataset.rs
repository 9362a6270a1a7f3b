//! Raw tabular data, equal-width binning and the discretized view used for mining.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{FeatureKind, FeatureSchema};

/// One raw cell: a category index or a continuous number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Category(u32),
    Number(f64),
}

impl Value {
    pub fn as_number(self) -> Option<f64> {
        match self {
            Value::Number(x) => Some(x),
            Value::Category(_) => None,
        }
    }
}

pub type RawRow = Vec<Value>;

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub rows: Vec<RawRow>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, schema: &FeatureSchema, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(schema.features().iter().map(|f| f.name.as_str()))?;
        for row in &self.rows {
            let cells = row.iter().zip(schema.features()).map(|(v, f)| match (v, &f.kind) {
                (Value::Category(c), FeatureKind::Categorical { values }) => {
                    values[*c as usize].clone()
                }
                (Value::Number(x), _) => format!("{x}"),
                (Value::Category(c), _) => c.to_string(),
            });
            w.write_record(cells)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Reads a headered CSV. Columns not named in the schema are ignored.
/// Row numbers in errors count data records from 1.
pub fn load_dataset(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &FeatureSchema) -> Result<RawDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let columns: Vec<usize> = schema
        .features()
        .iter()
        .map(|f| {
            headers
                .iter()
                .position(|h| h == f.name)
                .ok_or_else(|| Error::MissingColumn(f.name.clone()))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let mut row = Vec::with_capacity(columns.len());
        for (f, &col) in schema.features().iter().zip(&columns) {
            let cell = record.get(col).unwrap_or("");
            let value = match &f.kind {
                FeatureKind::Categorical { .. } => {
                    let idx = f.category_index(cell).ok_or_else(|| Error::UnknownCategory {
                        row: row_no,
                        feature: f.name.clone(),
                        value: cell.to_string(),
                    })?;
                    Value::Category(idx as u32)
                }
                FeatureKind::Continuous { .. } => match cell.parse::<f64>() {
                    Ok(x) if x.is_finite() => Value::Number(x),
                    _ => {
                        return Err(Error::UnparsableNumber {
                            row: row_no,
                            feature: f.name.clone(),
                            value: cell.to_string(),
                        })
                    }
                },
            };
            row.push(value);
        }
        rows.push(row);
    }
    Ok(RawDataset { rows })
}

/// Equal-width intervals for one continuous feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub edges: Vec<f64>,
    pub representatives: Vec<f64>,
}

impl FeatureBins {
    pub fn bin_count(&self) -> usize {
        self.representatives.len()
    }

    /// Left-closed bins, last bin right-closed; values outside the fitted range clamp.
    pub fn bin_of(&self, x: f64) -> usize {
        let n = self.bin_count();
        self.edges[1..n].partition_point(|&e| e <= x)
    }

    pub fn interval(&self, bin: usize) -> (f64, f64) {
        (self.edges[bin], self.edges[bin + 1])
    }
}

/// Per-feature bins; `None` for categorical features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub features: Vec<Option<FeatureBins>>,
}

impl BinningSpec {
    pub fn bins(&self, feature: usize) -> Option<&FeatureBins> {
        self.features[feature].as_ref()
    }

    /// Discrete value index of a raw cell.
    pub fn value_index(&self, feature: usize, value: Value) -> u32 {
        match value {
            Value::Category(c) => c,
            Value::Number(x) => self.features[feature]
                .as_ref()
                .map(|b| b.bin_of(x) as u32)
                .unwrap_or(0),
        }
    }

    pub fn discretize_row(&self, row: &[Value]) -> Vec<u32> {
        row.iter()
            .enumerate()
            .map(|(f, &v)| self.value_index(f, v))
            .collect()
    }
}

pub fn fit_bins(data: &RawDataset, schema: &FeatureSchema) -> Result<BinningSpec> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut features = Vec::with_capacity(schema.len());
    for (fi, f) in schema.features().iter().enumerate() {
        let FeatureKind::Continuous { bin_count } = f.kind else {
            features.push(None);
            continue;
        };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for row in &data.rows {
            if let Value::Number(x) = row[fi] {
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if !(lo < hi) {
            return Err(Error::DegenerateFeature(f.name.clone()));
        }
        let span = hi - lo;
        let mut edges: Vec<f64> = (0..=bin_count)
            .map(|j| lo + span * j as f64 / bin_count as f64)
            .collect();
        edges[bin_count] = hi;
        let representatives = edges.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
        features.push(Some(FeatureBins {
            edges,
            representatives,
        }));
    }
    Ok(BinningSpec { features })
}

/// Row-major matrix of discrete value indices plus the raw rows they came from.
#[derive(Debug, Clone)]
pub struct DiscretizedDataset {
    n_features: usize,
    cells: Vec<u32>,
    cardinalities: Vec<usize>,
    raw: RawDataset,
}

impl DiscretizedDataset {
    /// Builds directly from value indices; raw rows hold the indices as categories.
    pub fn from_cells(rows: Vec<Vec<u32>>, cardinalities: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n_features = cardinalities.len();
        let mut cells = Vec::with_capacity(rows.len() * n_features);
        for row in &rows {
            if row.len() != n_features || row.iter().zip(&cardinalities).any(|(&v, &c)| v as usize >= c) {
                return Err(Error::Schema("cell out of range for its feature".into()));
            }
            cells.extend_from_slice(row);
        }
        let raw = RawDataset {
            rows: rows
                .into_iter()
                .map(|r| r.into_iter().map(Value::Category).collect())
                .collect(),
        };
        Ok(DiscretizedDataset {
            n_features,
            cells,
            cardinalities,
            raw,
        })
    }

    pub fn row_count(&self) -> usize {
        self.raw.len()
    }

    pub fn feature_count(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.cells[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.cells.chunks_exact(self.n_features)
    }

    pub fn cardinality(&self, feature: usize) -> usize {
        self.cardinalities[feature]
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn raw(&self) -> &RawDataset {
        &self.raw
    }
}

pub fn discretize(
    data: &RawDataset,
    binning: &BinningSpec,
    schema: &FeatureSchema,
) -> Result<DiscretizedDataset> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_features = schema.len();
    let mut cells = Vec::with_capacity(data.len() * n_features);
    for row in &data.rows {
        cells.extend(binning.discretize_row(row));
    }
    Ok(DiscretizedDataset {
        n_features,
        cells,
        cardinalities: schema.features().iter().map(|f| f.cardinality()).collect(),
        raw: data.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Feature;

    fn numbers(xs: &[f64]) -> RawDataset {
        RawDataset {
            rows: xs.iter().map(|&x| vec![Value::Number(x)]).collect(),
        }
    }

    #[test]
    fn hundred_in_ten_bins() {
        let schema = FeatureSchema::new(vec![Feature::continuous("x", 10)]).unwrap();
        let data = numbers(&(0..=100).map(f64::from).collect::<Vec<_>>());
        let spec = fit_bins(&data, &schema).unwrap();
        let bins = spec.bins(0).unwrap();
        let expected: Vec<f64> = (0..=10).map(|j| 10.0 * j as f64).collect();
        assert_eq!(bins.edges, expected);
        assert_eq!(bins.bin_of(100.0), 9);
        assert_eq!(bins.bin_of(30.0), 3);
        assert_eq!(bins.bin_of(29.999), 2);
        assert_eq!(bins.bin_of(-5.0), 0);
        assert_eq!(bins.bin_of(1e9), 9);
    }

    #[test]
    fn two_bins_hand_arithmetic() {
        // (8 - 1) / 2 = 3.5 -> interior edge 4.5; midpoints (1 + 4.5)/2, (4.5 + 8)/2
        let schema = FeatureSchema::new(vec![Feature::continuous("x", 2)]).unwrap();
        let spec = fit_bins(&numbers(&[1.0, 2.0, 3.0, 5.0, 8.0]), &schema).unwrap();
        let bins = spec.bins(0).unwrap();
        assert_eq!(bins.edges, vec![1.0, 4.5, 8.0]);
        assert_eq!(bins.representatives, vec![2.75, 6.25]);
    }

    #[test]
    fn degenerate_feature_is_rejected() {
        let schema = FeatureSchema::new(vec![Feature::continuous("flat", 3)]).unwrap();
        assert!(matches!(
            fit_bins(&numbers(&[2.0, 2.0]), &schema),
            Err(Error::DegenerateFeature(f)) if f == "flat"
        ));
        assert!(matches!(
            fit_bins(&numbers(&[]), &schema),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn representatives_rebin_to_themselves() {
        let schema = FeatureSchema::new(vec![Feature::continuous("x", 7)]).unwrap();
        let spec = fit_bins(&numbers(&[-3.3, 0.1, 2.9, 17.25]), &schema).unwrap();
        let bins = spec.bins(0).unwrap();
        for (j, &r) in bins.representatives.iter().enumerate() {
            assert_eq!(bins.bin_of(r), j);
            let (lo, hi) = bins.interval(j);
            assert!(lo <= r && r <= hi);
        }
    }

    const TOY: &str = "color,size,weight\nred,S,1.5\nblue,M,2\nred,L,4.25\ngreen,S,3\nblue,S,0.5\n";

    fn toy_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            Feature::categorical("color", &["red", "green", "blue"]),
            Feature::categorical("size", &["S", "M", "L"]),
            Feature::continuous("weight", 3),
        ])
        .unwrap()
    }

    #[test]
    fn reads_toy_csv_in_order() {
        let data = read_dataset(TOY.as_bytes(), &toy_schema()).unwrap();
        assert_eq!(data.len(), 5);
        assert_eq!(
            data.rows[2],
            vec![Value::Category(0), Value::Category(2), Value::Number(4.25)]
        );
        assert_eq!(data.rows[4][0], Value::Category(2));
    }

    #[test]
    fn toy_discretization_matches_interval_scan() {
        let schema = toy_schema();
        let data = read_dataset(TOY.as_bytes(), &schema).unwrap();
        let spec = fit_bins(&data, &schema).unwrap();
        let disc = discretize(&data, &spec, &schema).unwrap();
        let edges = &spec.bins(2).unwrap().edges;
        for (i, row) in data.rows.iter().enumerate() {
            let Value::Number(w) = row[2] else { panic!() };
            // linear scan: the last bin whose left edge is <= w, last bin right-closed
            let mut expected = 0;
            for j in 0..3 {
                if w >= edges[j] {
                    expected = j;
                }
            }
            assert_eq!(disc.row(i)[2] as usize, expected, "row {i}");
            for f in 0..2 {
                let Value::Category(c) = row[f] else { panic!() };
                assert_eq!(disc.row(i)[f], c);
            }
        }
        // 0.5..4.25 in three bins: 0.5, 1.75, 3.0, 4.25
        assert_eq!(disc.row(3)[2], 2);
        assert_eq!(disc.row(1)[2], 1);
    }

    #[test]
    fn load_errors_carry_location() {
        let schema = toy_schema();
        let missing = "color,size\nred,S\n";
        assert!(matches!(
            read_dataset(missing.as_bytes(), &schema),
            Err(Error::MissingColumn(c)) if c == "weight"
        ));
        let bad_cat = "color,size,weight\nred,S,1\npink,S,2\n";
        assert!(matches!(
            read_dataset(bad_cat.as_bytes(), &schema),
            Err(Error::UnknownCategory { row: 2, feature, .. }) if feature == "color"
        ));
        let bad_num = "color,size,weight\nred,S,abc\n";
        assert!(matches!(
            read_dataset(bad_num.as_bytes(), &schema),
            Err(Error::UnparsableNumber { row: 1, feature, .. }) if feature == "weight"
        ));
        let inf = "color,size,weight\nred,S,inf\n";
        assert!(read_dataset(inf.as_bytes(), &schema).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let schema = toy_schema();
        let data = read_dataset(TOY.as_bytes(), &schema).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&schema, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice(), &schema).unwrap(), data);
    }
}
