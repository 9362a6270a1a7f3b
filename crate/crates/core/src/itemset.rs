//! `feature = value` predicates and their conjunctions.

use std::fmt;
use std::sync::Arc;

use crate::dataset::BinningSpec;
use crate::error::{Error, Result};
use crate::schema::{FeatureKind, FeatureSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Item {
    pub feature: u32,
    pub value: u32,
}

impl Item {
    pub fn new(feature: usize, value: usize) -> Self {
        Item {
            feature: feature as u32,
            value: value as u32,
        }
    }
}

/// Bit per feature index.
pub type FeatureMask = u128;

/// A conjunction of items, sorted by feature with at most one item per feature.
///
/// Cheap to clone; the items live behind an `Arc`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemSet {
    items: Arc<[Item]>,
    mask: FeatureMask,
}

impl ItemSet {
    /// Sorts the items; fails if two of them name the same feature.
    pub fn new(mut items: Vec<Item>) -> Result<Self> {
        items.sort_unstable();
        for w in items.windows(2) {
            if w[0].feature == w[1].feature {
                return Err(Error::Condition(format!(
                    "two conditions on feature index {}",
                    w[0].feature
                )));
            }
        }
        Ok(Self::from_sorted(items))
    }

    pub(crate) fn from_sorted(items: Vec<Item>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0].feature < w[1].feature));
        let mask = items.iter().fold(0, |m, it| m | (1u128 << it.feature));
        ItemSet {
            items: items.into(),
            mask,
        }
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn features(&self) -> FeatureMask {
        self.mask
    }

    pub fn is_disjoint_from(&self, other: &ItemSet) -> bool {
        self.mask & other.mask == 0
    }

    pub fn same_features(&self, other: &ItemSet) -> bool {
        self.mask == other.mask
    }

    /// True when every item holds on the discretized row.
    pub fn matches(&self, row: &[u32]) -> bool {
        self.items
            .iter()
            .all(|it| row[it.feature as usize] == it.value)
    }

    pub fn value_of(&self, feature: u32) -> Option<u32> {
        self.items
            .iter()
            .find(|it| it.feature == feature)
            .map(|it| it.value)
    }

    pub fn describe(&self, schema: &FeatureSchema, binning: Option<&BinningSpec>) -> String {
        if self.items.is_empty() {
            return "TRUE".to_string();
        }
        self.items
            .iter()
            .map(|it| describe_item(*it, schema, binning))
            .collect::<Vec<_>>()
            .join(" AND ")
    }

    /// Parses `name = label` (categorical) and `name = bin:K` (continuous) items
    /// joined by `AND` or `&`.
    pub fn parse(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let bad = || Error::Condition(text.to_string());
        let normalized = text.replace(" AND ", "&");
        let mut items = Vec::new();
        for part in normalized.split('&') {
            let (name, value) = part.split_once('=').ok_or_else(bad)?;
            let (name, value) = (name.trim(), value.trim());
            let fi = schema.index_of(name).ok_or_else(bad)?;
            let feature = schema.feature(fi);
            let vi = match &feature.kind {
                FeatureKind::Categorical { .. } => feature.category_index(value).ok_or_else(bad)?,
                FeatureKind::Continuous { bin_count } => {
                    let k: usize = value
                        .strip_prefix("bin:")
                        .and_then(|k| k.trim().parse().ok())
                        .ok_or_else(bad)?;
                    if k >= *bin_count {
                        return Err(bad());
                    }
                    k
                }
            };
            items.push(Item::new(fi, vi));
        }
        ItemSet::new(items).map_err(|_| bad())
    }

    /// Inverse of [`ItemSet::parse`].
    pub fn to_condition_string(&self, schema: &FeatureSchema) -> String {
        self.items
            .iter()
            .map(|it| {
                let f = schema.feature(it.feature as usize);
                match &f.kind {
                    FeatureKind::Categorical { values } => {
                        format!("{} = {}", f.name, values[it.value as usize])
                    }
                    FeatureKind::Continuous { .. } => format!("{} = bin:{}", f.name, it.value),
                }
            })
            .collect::<Vec<_>>()
            .join(" & ")
    }
}

impl fmt::Debug for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.items.iter().map(|it| (it.feature, it.value)))
            .finish()
    }
}

pub fn describe_item(item: Item, schema: &FeatureSchema, binning: Option<&BinningSpec>) -> String {
    let f = schema.feature(item.feature as usize);
    match &f.kind {
        FeatureKind::Categorical { values } => format!("{} = {}", f.name, values[item.value as usize]),
        FeatureKind::Continuous { bin_count } => {
            match binning.and_then(|b| b.bins(item.feature as usize)) {
                Some(bins) => {
                    let (lo, hi) = bins.interval(item.value as usize);
                    let upper = if item.value as usize + 1 == *bin_count { "<=" } else { "<" };
                    format!("{} <= {} {} {}", fmt_num(lo), f.name, upper, fmt_num(hi))
                }
                None => format!("{} in bin {}", f.name, item.value),
            }
        }
    }
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Fixed-length bit vector used for row sets (tid lists).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitset {
    words: Vec<u64>,
    len: usize,
}

impl Bitset {
    pub fn new(len: usize) -> Self {
        Bitset {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut b = Bitset {
            words: vec![u64::MAX; len.div_ceil(64)],
            len,
        };
        if len % 64 != 0 {
            if let Some(last) = b.words.last_mut() {
                *last = (1u64 << (len % 64)) - 1;
            }
        }
        b
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn and(&self, other: &Bitset) -> Bitset {
        Bitset {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a & b)
                .collect(),
            len: self.len,
        }
    }

    pub fn and_assign(&mut self, other: &Bitset) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    pub fn and_count(&self, other: &Bitset) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + tz)
            })
        })
    }
}

/// Per (feature, value) row sets over a discretized table.
#[derive(Debug, Clone)]
pub struct ItemIndex {
    rows: usize,
    tids: Vec<Vec<Bitset>>,
}

impl ItemIndex {
    pub fn build<'a>(
        rows: impl IntoIterator<Item = &'a [u32]>,
        cardinalities: &[usize],
        row_count: usize,
    ) -> Self {
        let mut tids: Vec<Vec<Bitset>> = cardinalities
            .iter()
            .map(|&c| vec![Bitset::new(row_count); c])
            .collect();
        for (r, row) in rows.into_iter().enumerate() {
            for (f, &v) in row.iter().enumerate() {
                tids[f][v as usize].insert(r);
            }
        }
        ItemIndex {
            rows: row_count,
            tids,
        }
    }

    pub fn row_count(&self) -> usize {
        self.rows
    }

    pub fn item(&self, item: Item) -> &Bitset {
        &self.tids[item.feature as usize][item.value as usize]
    }

    /// Rows satisfying every item of every given set.
    pub fn rows_matching<'a>(&self, sets: impl IntoIterator<Item = &'a ItemSet>) -> Bitset {
        let mut acc = Bitset::full(self.rows);
        for set in sets {
            for &it in set.items() {
                acc.and_assign(self.item(it));
            }
        }
        acc
    }
}
