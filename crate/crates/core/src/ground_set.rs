//! Stage 1: building the ground set of valid Outer-If / Inner-If / Then triples.
//!
//! Three generators share one emission order (outer-major, then inner, then the Then
//! candidate) and one width check at the (outer, inner) level:
//!
//! * [`generate_original`] scans `SD x RL x RL`.
//! * [`generate_rl_reduced`] first drops RL itemsets whose feature combination is
//!   unique in RL; such an itemset can be neither an Inner-If nor a Then, so the
//!   ground set is unchanged.
//! * [`generate_then`] scans `SD x RL` and mines the Then candidates for each pair
//!   from the data with threshold `q`.
//!
//! `iteration_count` counts innermost loop bodies: each visited Then candidate is one
//! iteration and an (outer, inner) pair rejected by the disjointness or width check
//! counts once. The RL reduction pass adds one iteration per RL itemset.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apriori::min_support_count;
use crate::dataset::{BinningSpec, DiscretizedDataset};
use crate::error::{Error, Result};
use crate::itemset::{FeatureMask, Item, ItemIndex, ItemSet};
use crate::schema::FeatureSchema;

pub const DEFAULT_EPS2: usize = 7;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triple {
    pub outer: ItemSet,
    pub inner: ItemSet,
    pub then: ItemSet,
    pub gen_index: usize,
}

impl Triple {
    pub fn new(outer: ItemSet, inner: ItemSet, then: ItemSet, gen_index: usize) -> Self {
        Triple {
            outer,
            inner,
            then,
            gen_index,
        }
    }

    pub fn width(&self) -> usize {
        self.outer.len() + self.inner.len()
    }

    /// Outer and inner on disjoint features, inner and Then on identical features with
    /// at least one changed value, and width within `eps2`.
    pub fn is_valid(&self, eps2: usize) -> bool {
        self.outer.is_disjoint_from(&self.inner)
            && self.width() <= eps2
            && is_then_for(&self.inner, &self.then)
    }

    /// Features whose target value differs from the Inner-If value.
    pub fn changed_features(&self) -> FeatureMask {
        changed_mask(&self.inner, &self.then)
    }

    pub fn describe(&self, schema: &FeatureSchema, binning: Option<&BinningSpec>) -> String {
        format!(
            "IF {} THEN IF {} THEN {}",
            self.outer.describe(schema, binning),
            self.inner.describe(schema, binning),
            self.then.describe(schema, binning)
        )
    }
}

fn is_then_for(inner: &ItemSet, then: &ItemSet) -> bool {
    inner.same_features(then) && inner != then
}

fn changed_mask(inner: &ItemSet, then: &ItemSet) -> FeatureMask {
    inner
        .items()
        .iter()
        .zip(then.items())
        .filter(|(a, b)| a.value != b.value)
        .fold(0, |m, (a, _)| m | (1 << a.feature))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum GenMethod {
    Original,
    RlReduction,
    ThenGeneration { q: f64 },
}

impl std::fmt::Display for GenMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GenMethod::Original => write!(f, "original"),
            GenMethod::RlReduction => write!(f, "rl-reduction"),
            GenMethod::ThenGeneration { q } => write!(f, "then-generation(q={q})"),
        }
    }
}

/// Width limit plus the features no Then condition may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationLimits {
    pub eps2: usize,
    pub frozen: FeatureMask,
}

impl GenerationLimits {
    pub fn width(eps2: usize) -> Self {
        GenerationLimits { eps2, frozen: 0 }
    }

    /// Freezes the schema's non-actionable features.
    pub fn for_schema(schema: &FeatureSchema, eps2: usize) -> Self {
        let frozen = schema
            .features()
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.actionable)
            .fold(0, |m, (i, _)| m | (1u128 << i));
        GenerationLimits { eps2, frozen }
    }

    fn if_pair_ok(&self, outer: &ItemSet, inner: &ItemSet) -> bool {
        outer.is_disjoint_from(inner) && outer.len() + inner.len() <= self.eps2
    }
}

/// Candidate Outer-If itemsets (SD) and Inner-If/Then itemsets (RL).
#[derive(Debug, Clone)]
pub struct CandidateSets {
    pub sd: Arc<[ItemSet]>,
    pub rl: Arc<[ItemSet]>,
}

impl CandidateSets {
    /// SD and RL are the same list.
    pub fn shared(list: Vec<ItemSet>) -> Self {
        let list: Arc<[ItemSet]> = list.into();
        CandidateSets {
            sd: list.clone(),
            rl: list,
        }
    }

    pub fn new(sd: Vec<ItemSet>, rl: Vec<ItemSet>) -> Self {
        CandidateSets {
            sd: sd.into(),
            rl: rl.into(),
        }
    }

    pub fn is_shared(&self) -> bool {
        Arc::ptr_eq(&self.sd, &self.rl)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundSet {
    pub triples: Vec<Triple>,
    pub iteration_count: u64,
    pub method: GenMethod,
    /// Largest Then pool mined for one (outer, inner) pair; Then-Generation only.
    pub max_then_pool: Option<usize>,
}

impl GroundSet {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

fn dedup_first(list: &[ItemSet]) -> Vec<ItemSet> {
    let mut seen = HashSet::with_capacity(list.len());
    list.iter().filter(|s| seen.insert(*s)).cloned().collect()
}

struct Emitted {
    triples: Vec<(ItemSet, ItemSet, ItemSet)>,
    iterations: u64,
    max_pool: usize,
}

fn assemble(chunks: Vec<Emitted>, method: GenMethod, extra_iterations: u64) -> GroundSet {
    let iteration_count = extra_iterations + chunks.iter().map(|c| c.iterations).sum::<u64>();
    let max_pool = chunks.iter().map(|c| c.max_pool).max().unwrap_or(0);
    let triples = chunks
        .into_iter()
        .flat_map(|c| c.triples)
        .enumerate()
        .map(|(i, (o, n, t))| Triple::new(o, n, t, i))
        .collect();
    GroundSet {
        triples,
        iteration_count,
        method,
        max_then_pool: matches!(method, GenMethod::ThenGeneration { .. }).then_some(max_pool),
    }
}

fn scan_triples(sd: &[ItemSet], rl: &[ItemSet], limits: GenerationLimits) -> Vec<Emitted> {
    // Duplicated itemsets can only re-emit a triple already produced at a smaller
    // index, so dropping later copies up front is the same as dropping duplicates
    // at emission.
    let sd = dedup_first(sd);
    let rl = dedup_first(rl);
    sd.par_iter()
        .map(|outer| {
            let mut out = Emitted {
                triples: Vec::new(),
                iterations: 0,
                max_pool: 0,
            };
            for inner in &rl {
                if !limits.if_pair_ok(outer, inner) {
                    out.iterations += 1;
                    continue;
                }
                for then in &rl {
                    out.iterations += 1;
                    if is_then_for(inner, then) && changed_mask(inner, then) & limits.frozen == 0 {
                        out.triples.push((outer.clone(), inner.clone(), then.clone()));
                    }
                }
            }
            out
        })
        .collect()
}

pub fn generate_original(cands: &CandidateSets, limits: GenerationLimits) -> GroundSet {
    assemble(scan_triples(&cands.sd, &cands.rl, limits), GenMethod::Original, 0)
}

/// Drops itemsets whose feature combination occurs exactly once in `rl`.
pub fn rl_reduce(rl: &[ItemSet]) -> Vec<ItemSet> {
    let mut counts: HashMap<FeatureMask, usize> = HashMap::with_capacity(rl.len());
    for s in rl {
        *counts.entry(s.features()).or_default() += 1;
    }
    rl.iter()
        .filter(|s| counts[&s.features()] > 1)
        .cloned()
        .collect()
}

/// Original scan over a reduced RL; SD keeps the unreduced list.
pub fn generate_rl_reduced(cands: &CandidateSets, limits: GenerationLimits) -> GroundSet {
    let reduced = rl_reduce(&cands.rl);
    assemble(
        scan_triples(&cands.sd, &reduced, limits),
        GenMethod::RlReduction,
        cands.rl.len() as u64,
    )
}

/// Value combinations over a feature set with their row counts, ascending by values.
type ComboCounts = Vec<(Vec<u32>, usize)>;

fn combo_counts(data: &DiscretizedDataset, features: &[usize]) -> ComboCounts {
    let mut counts: HashMap<Vec<u32>, usize> = HashMap::new();
    for row in data.rows() {
        let key: Vec<u32> = features.iter().map(|&f| row[f]).collect();
        *counts.entry(key).or_default() += 1;
    }
    let mut v: ComboCounts = counts.into_iter().collect();
    v.sort_unstable();
    v
}

/// Then pool for one (outer, inner) pair: value combinations over the inner features,
/// mined with threshold `q` from the rows that do not satisfy outer AND inner,
/// excluding the inner assignment itself.
///
/// Removed rows all carry the inner assignment, so the remaining counts of every
/// other combination equal their counts over the whole table.
fn then_pool(
    combos: &ComboCounts,
    inner: &ItemSet,
    q: f64,
    remaining_rows: usize,
) -> Vec<ItemSet> {
    if remaining_rows == 0 {
        return Vec::new();
    }
    let min_count = min_support_count(q, remaining_rows).unwrap_or(1);
    let inner_values: Vec<u32> = inner.items().iter().map(|it| it.value).collect();
    combos
        .iter()
        .filter(|(values, count)| *count >= min_count && *values != inner_values)
        .map(|(values, _)| {
            ItemSet::from_sorted(
                inner
                    .items()
                    .iter()
                    .zip(values)
                    .map(|(it, &v)| Item { feature: it.feature, value: v })
                    .collect(),
            )
        })
        .collect()
}

pub fn generate_then(
    cands: &CandidateSets,
    data: &DiscretizedDataset,
    q: f64,
    limits: GenerationLimits,
) -> Result<GroundSet> {
    min_support_count(q, data.row_count())?;
    let sd = dedup_first(&cands.sd);
    let rl = dedup_first(&cands.rl);
    let index = ItemIndex::build(data.rows(), data.cardinalities(), data.row_count());

    let masks: Vec<FeatureMask> = {
        let mut seen = HashSet::new();
        rl.iter()
            .map(|s| s.features())
            .filter(|m| seen.insert(*m))
            .collect()
    };
    let combos: HashMap<FeatureMask, ComboCounts> = masks
        .par_iter()
        .map(|&m| {
            let features: Vec<usize> = (0..128).filter(|f| m >> f & 1 == 1).collect();
            (m, combo_counts(data, &features))
        })
        .collect();

    let chunks = sd
        .par_iter()
        .map(|outer| {
            let outer_rows = index.rows_matching([outer]);
            let mut out = Emitted {
                triples: Vec::new(),
                iterations: 0,
                max_pool: 0,
            };
            for inner in &rl {
                if !limits.if_pair_ok(outer, inner) {
                    continue;
                }
                let mut if_rows = outer_rows.clone();
                for &it in inner.items() {
                    if_rows.and_assign(index.item(it));
                }
                let remaining = data.row_count() - if_rows.count();
                let pool = then_pool(&combos[&inner.features()], inner, q, remaining);
                out.iterations += pool.len() as u64;
                out.max_pool = out.max_pool.max(pool.len());
                for then in pool {
                    if changed_mask(inner, &then) & limits.frozen == 0 {
                        out.triples.push((outer.clone(), inner.clone(), then));
                    }
                }
            }
            out
        })
        .collect();
    Ok(assemble(chunks, GenMethod::ThenGeneration { q }, 0))
}

#[derive(Serialize, Deserialize)]
struct TripleRecord {
    gen_index: usize,
    outer: String,
    inner: String,
    then: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    rule: String,
}

#[derive(Serialize, Deserialize)]
struct GroundSetFile {
    method: GenMethod,
    iteration_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_then_pool: Option<usize>,
    size: usize,
    triples: Vec<TripleRecord>,
}

impl GroundSet {
    /// Structured text form; conditions use the parseable `name = value` syntax and
    /// each triple also carries a human-readable rule.
    pub fn to_json(&self, schema: &FeatureSchema, binning: Option<&BinningSpec>) -> String {
        let file = GroundSetFile {
            method: self.method,
            iteration_count: self.iteration_count,
            max_then_pool: self.max_then_pool,
            size: self.triples.len(),
            triples: self
                .triples
                .iter()
                .map(|t| TripleRecord {
                    gen_index: t.gen_index,
                    outer: t.outer.to_condition_string(schema),
                    inner: t.inner.to_condition_string(schema),
                    then: t.then.to_condition_string(schema),
                    rule: t.describe(schema, binning),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("ground set serializes")
    }

    pub fn from_json(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let file: GroundSetFile = serde_json::from_str(text)?;
        let triples = file
            .triples
            .iter()
            .map(|r| {
                Ok(Triple::new(
                    ItemSet::parse(&r.outer, schema)?,
                    ItemSet::parse(&r.inner, schema)?,
                    ItemSet::parse(&r.then, schema)?,
                    r.gen_index,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        if triples.windows(2).any(|w| w[0].gen_index >= w[1].gen_index) {
            return Err(Error::Config("ground set gen_index must be strictly increasing".into()));
        }
        Ok(GroundSet {
            triples,
            iteration_count: file.iteration_count,
            method: file.method,
            max_then_pool: file.max_then_pool,
        })
    }
}
