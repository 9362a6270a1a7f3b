//! Stage 2: evaluating triples on the affected individuals.
//!
//! A triple covers an affected individual when its Outer-If and Inner-If hold on the
//! discretized row, and corrects it when the model predicts the favorable class after
//! the Then condition is applied in raw space. An individual's recourse cost is the
//! summed weight of the features that actually changed (1 per feature by default).
//!
//! Set accuracy is the share of affected individuals corrected by at least one
//! triple; set cost averages, over corrected individuals, their cheapest correcting
//! triple.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{BinningSpec, DiscretizedDataset, RawRow};
use crate::error::{Error, Result};
use crate::ground_set::{GroundSet, Triple};
use crate::itemset::{FeatureMask, ItemIndex, ItemSet};
use crate::model::{apply_items, AffectedSet, ModelOracle};
use crate::schema::FeatureSchema;

/// Trace rows are emitted every this many evaluations.
pub const TRACE_EVERY: usize = 100;

/// Per-feature recourse cost weights; features not listed weigh 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    weights: Vec<f64>,
}

impl CostTable {
    pub fn from_weights(weights: Vec<f64>) -> Self {
        CostTable { weights }
    }

    pub fn uniform(schema: &FeatureSchema) -> Self {
        CostTable {
            weights: vec![1.0; schema.len()],
        }
    }

    /// Reads `feature = weight` lines of a TOML file.
    pub fn load(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, schema)
    }

    pub fn from_toml_str(text: &str, schema: &FeatureSchema) -> Result<Self> {
        let raw: HashMap<String, f64> = toml::from_str(text)?;
        let mut table = Self::uniform(schema);
        for (name, w) in raw {
            let idx = schema
                .index_of(&name)
                .ok_or_else(|| Error::Config(format!("cost table names unknown feature `{name}`")))?;
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("cost weight for `{name}` must be >= 0")));
            }
            table.weights[idx] = w;
        }
        Ok(table)
    }

    pub fn cost_of(&self, changed: FeatureMask) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(i, _)| changed >> i & 1 == 1)
            .map(|(_, w)| w)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedTriple {
    pub triple: Triple,
    /// Positions into the affected set satisfying Outer-If and Inner-If, ascending.
    pub covered: Vec<u32>,
    /// Covered positions the Then condition flips to favorable, ascending.
    pub corrected: Vec<u32>,
    /// Recourse cost of each corrected individual, aligned with `corrected`.
    pub costs: Vec<f64>,
}

impl EvaluatedTriple {
    pub fn incorrect(&self) -> usize {
        self.covered.len() - self.corrected.len()
    }

    /// Weighted cost of the features this triple changes.
    pub fn feature_cost(&self, costs: &CostTable) -> f64 {
        costs.cost_of(self.triple.changed_features())
    }

    pub fn feature_changes(&self) -> usize {
        self.triple.changed_features().count_ones() as usize
    }
}

/// Everything needed to evaluate triples against one model and affected set.
pub struct EvalContext<'a> {
    binning: &'a BinningSpec,
    oracle: &'a ModelOracle,
    rows: Vec<&'a RawRow>,
    index: ItemIndex,
    costs: CostTable,
    favorable: DashMap<(u32, ItemSet), (bool, FeatureMask)>,
}

impl<'a> EvalContext<'a> {
    pub fn new(
        data: &'a DiscretizedDataset,
        affected: &AffectedSet,
        binning: &'a BinningSpec,
        oracle: &'a ModelOracle,
        costs: CostTable,
    ) -> Self {
        let rows: Vec<&RawRow> = affected.indices.iter().map(|&i| &data.raw().rows[i]).collect();
        let index = ItemIndex::build(
            affected.indices.iter().map(|&i| data.row(i)),
            data.cardinalities(),
            affected.len(),
        );
        EvalContext {
            binning,
            oracle,
            rows,
            index,
            costs,
            favorable: DashMap::new(),
        }
    }

    pub fn affected_count(&self) -> usize {
        self.rows.len()
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    fn outcome(&self, pos: u32, then: &ItemSet) -> (bool, FeatureMask) {
        // the modified row depends only on the individual and the Then condition
        let key = (pos, then.clone());
        if let Some(hit) = self.favorable.get(&key) {
            return *hit;
        }
        let (row, changed) = apply_items(self.rows[pos as usize], then, self.binning);
        let result = (self.oracle.is_favorable(&row), changed);
        self.favorable.insert(key, result);
        result
    }

    pub fn evaluate(&self, triple: &Triple) -> EvaluatedTriple {
        let covered: Vec<u32> = self
            .index
            .rows_matching([&triple.outer, &triple.inner])
            .iter()
            .map(|p| p as u32)
            .collect();
        let mut corrected = Vec::new();
        let mut costs = Vec::new();
        for &pos in &covered {
            let (favorable, changed) = self.outcome(pos, &triple.then);
            if favorable {
                corrected.push(pos);
                costs.push(self.costs.cost_of(changed));
            }
        }
        EvaluatedTriple {
            triple: triple.clone(),
            covered,
            corrected,
            costs,
        }
    }

    pub fn evaluate_all(&self, triples: &[Triple]) -> Vec<EvaluatedTriple> {
        triples.par_iter().map(|t| self.evaluate(t)).collect()
    }
}

pub fn evaluate_triple(triple: &Triple, ctx: &EvalContext<'_>) -> EvaluatedTriple {
    ctx.evaluate(triple)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    /// Percentage of affected individuals corrected by some triple.
    pub acc: f64,
    /// Mean cheapest cost over corrected individuals; absent when none is corrected.
    pub cost: Option<f64>,
    pub corrected: usize,
    pub affected: usize,
}

impl SetMetrics {
    pub fn empty(affected: usize) -> Self {
        SetMetrics {
            acc: 0.0,
            cost: None,
            corrected: 0,
            affected,
        }
    }
}

pub fn accuracy_percent(corrected: usize, affected: usize) -> f64 {
    if affected == 0 {
        0.0
    } else {
        100.0 * corrected as f64 / affected as f64
    }
}

/// Running union of corrected individuals with each one's cheapest cost.
#[derive(Debug, Clone)]
pub struct Coverage {
    best: Vec<f64>,
    corrected: usize,
}

impl Coverage {
    pub fn new(affected: usize) -> Self {
        Coverage {
            best: vec![f64::INFINITY; affected],
            corrected: 0,
        }
    }

    /// Folds in a triple and returns how many individuals it newly corrects.
    pub fn add(&mut self, t: &EvaluatedTriple) -> usize {
        let mut gained = 0;
        for (&pos, &c) in t.corrected.iter().zip(&t.costs) {
            let slot = &mut self.best[pos as usize];
            if slot.is_infinite() {
                gained += 1;
                *slot = c;
            } else if c < *slot {
                *slot = c;
            }
        }
        self.corrected += gained;
        gained
    }

    /// Individuals `t` would newly correct, without adding it.
    pub fn gain(&self, t: &EvaluatedTriple) -> usize {
        t.corrected
            .iter()
            .filter(|&&p| self.best[p as usize].is_infinite())
            .count()
    }

    pub fn corrected(&self) -> usize {
        self.corrected
    }

    pub fn metrics(&self) -> SetMetrics {
        let affected = self.best.len();
        let cost = (self.corrected > 0).then(|| {
            self.best.iter().filter(|c| c.is_finite()).sum::<f64>() / self.corrected as f64
        });
        SetMetrics {
            acc: accuracy_percent(self.corrected, affected),
            cost,
            corrected: self.corrected,
            affected,
        }
    }
}

pub fn metrics<'t>(set: impl IntoIterator<Item = &'t EvaluatedTriple>, affected: usize) -> SetMetrics {
    let mut cov = Coverage::new(affected);
    for t in set {
        cov.add(t);
    }
    cov.metrics()
}

/// Objective maximized in Stage 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ObjectiveConfig {
    /// `max(0, acc(R) - lambda * cost(R))`.
    Simplified { lambda: f64 },
    /// `cover(R) + l1 (U_inc - incorrect(R)) + l2 (U_cost - featurecost(R)) + l3 (U_change - featurechange(R))`
    /// where `cover` counts individuals covered by some triple and the other three
    /// terms sum per-triple quantities.
    FourTerm {
        lambda1: f64,
        lambda2: f64,
        lambda3: f64,
        u_incorrect: f64,
        u_cost: f64,
        u_change: f64,
    },
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig::Simplified { lambda: 0.0 }
    }
}

impl ObjectiveConfig {
    /// Four-term objective with normalizers at `eps1` times the per-triple maxima over
    /// `ground`, which keeps every bracket non-negative for sets of up to `eps1` triples.
    pub fn four_term_for(
        ground: &[EvaluatedTriple],
        costs: &CostTable,
        eps1: usize,
        lambdas: [f64; 3],
    ) -> Self {
        let scale = |max: f64| (max * eps1 as f64).max(1.0);
        let max_inc = ground.iter().map(|t| t.incorrect()).max().unwrap_or(0) as f64;
        let max_cost = ground.iter().map(|t| t.feature_cost(costs)).fold(0.0, f64::max);
        let max_change = ground.iter().map(|t| t.feature_changes()).max().unwrap_or(0) as f64;
        ObjectiveConfig::FourTerm {
            lambda1: lambdas[0],
            lambda2: lambdas[1],
            lambda3: lambdas[2],
            u_incorrect: scale(max_inc),
            u_cost: scale(max_cost),
            u_change: scale(max_change),
        }
    }
}

pub fn objective<'t>(
    set: impl IntoIterator<Item = &'t EvaluatedTriple>,
    cfg: &ObjectiveConfig,
    affected: usize,
    costs: &CostTable,
) -> Result<f64> {
    match *cfg {
        ObjectiveConfig::Simplified { lambda } => {
            let m = metrics(set, affected);
            Ok(simplified(&m, lambda))
        }
        ObjectiveConfig::FourTerm {
            lambda1,
            lambda2,
            lambda3,
            u_incorrect,
            u_cost,
            u_change,
        } => {
            let mut covered = vec![false; affected];
            let (mut incorrect, mut fcost, mut fchange) = (0.0, 0.0, 0.0);
            for t in set {
                for &p in &t.covered {
                    covered[p as usize] = true;
                }
                incorrect += t.incorrect() as f64;
                fcost += t.feature_cost(costs);
                fchange += t.feature_changes() as f64;
            }
            let cover = covered.iter().filter(|&&c| c).count() as f64;
            let value = cover
                + lambda1 * (u_incorrect - incorrect)
                + lambda2 * (u_cost - fcost)
                + lambda3 * (u_change - fchange);
            if value < 0.0 {
                return Err(Error::NormalizerViolation(value));
            }
            Ok(value)
        }
    }
}

pub fn simplified(m: &SetMetrics, lambda: f64) -> f64 {
    (m.acc - lambda * m.cost.unwrap_or(0.0)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionMode {
    /// Keep every evaluated triple (`r`).
    AddAll,
    /// Keep a triple only when it raises the running accuracy (`r'`).
    AccGainOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Generation,
    Evaluation,
    Optimization,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Generation => "generation",
            Stage::Evaluation => "evaluation",
            Stage::Optimization => "optimization",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub wall_seconds: f64,
    pub stage: Stage,
    pub evaluated: usize,
    pub kept: usize,
    pub acc_percent: f64,
    pub cost: Option<f64>,
    pub objective: Option<f64>,
}

pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["wall_seconds", "stage", "evaluated", "kept", "acc_percent", "cost", "objective"])?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            format!("{:.6}", r.wall_seconds),
            r.stage.to_string(),
            r.evaluated.to_string(),
            r.kept.to_string(),
            format!("{:.4}", r.acc_percent),
            opt(r.cost),
            opt(r.objective),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct VReduction {
    pub kept: Vec<EvaluatedTriple>,
    pub evaluated: usize,
    pub metrics: SetMetrics,
    pub trace: Vec<TraceRow>,
}

/// Evaluates the first `budget` triples of `ground` in generation order and keeps
/// them all or only the accuracy-raising ones. Evaluation runs in parallel chunks of
/// [`TRACE_EVERY`]; keep decisions replay sequentially.
pub fn v_reduce(
    ground: &GroundSet,
    budget: usize,
    mode: ReductionMode,
    ctx: &EvalContext<'_>,
    clock: Instant,
) -> VReduction {
    let take = budget.min(ground.len());
    let mut coverage = Coverage::new(ctx.affected_count());
    let mut kept = Vec::new();
    let mut trace = vec![TraceRow {
        wall_seconds: clock.elapsed().as_secs_f64(),
        stage: Stage::Evaluation,
        evaluated: 0,
        kept: 0,
        acc_percent: 0.0,
        cost: None,
        objective: None,
    }];
    let mut evaluated = 0;
    for chunk in ground.triples[..take].chunks(TRACE_EVERY) {
        for t in ctx.evaluate_all(chunk) {
            evaluated += 1;
            match mode {
                ReductionMode::AddAll => {
                    coverage.add(&t);
                    kept.push(t);
                }
                ReductionMode::AccGainOnly => {
                    if coverage.gain(&t) > 0 {
                        coverage.add(&t);
                        kept.push(t);
                    }
                }
            }
        }
        let m = coverage.metrics();
        trace.push(TraceRow {
            wall_seconds: clock.elapsed().as_secs_f64(),
            stage: Stage::Evaluation,
            evaluated,
            kept: kept.len(),
            acc_percent: m.acc,
            cost: m.cost,
            objective: None,
        });
    }
    VReduction {
        metrics: coverage.metrics(),
        kept,
        evaluated,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::itemset::Item;

    pub(crate) fn evaluated(gen_index: usize, corrected: &[u32], costs: &[f64]) -> EvaluatedTriple {
        let s = |f, v| ItemSet::new(vec![Item::new(f, v)]).unwrap();
        EvaluatedTriple {
            triple: Triple::new(s(0, 0), s(1, 0), s(1, 1), gen_index),
            covered: corrected.to_vec(),
            corrected: corrected.to_vec(),
            costs: costs.to_vec(),
        }
    }

    #[test]
    fn empty_set_metrics() {
        let m = metrics(std::iter::empty(), 10);
        assert_eq!(m.acc, 0.0);
        assert_eq!(m.cost, None);
    }

    #[test]
    fn half_of_162() {
        let corrected: Vec<u32> = (0..81).collect();
        let t = evaluated(0, &corrected, &vec![1.0; 81]);
        let m = metrics([&t], 162);
        assert_eq!(m.acc, 50.0);
        assert_eq!(m.cost, Some(1.0));
    }

    #[test]
    fn cost_takes_cheapest_correcting_triple() {
        let a = evaluated(0, &[0, 1], &[3.0, 3.0]);
        let b = evaluated(1, &[1, 2], &[1.0, 2.0]);
        let m = metrics([&a, &b], 4);
        assert_eq!(m.acc, 75.0);
        // individual 0 -> 3, 1 -> min(3, 1), 2 -> 2
        assert_eq!(m.cost, Some(2.0));
    }

    #[test]
    fn simplified_objective_values() {
        let cfg = ObjectiveConfig::Simplified { lambda: 1.0 };
        let costs = CostTable { weights: vec![1.0; 2] };
        assert_eq!(objective(std::iter::empty(), &cfg, 4, &costs).unwrap(), 0.0);
        let m = SetMetrics {
            acc: 50.0,
            cost: Some(2.5),
            corrected: 2,
            affected: 4,
        };
        assert_eq!(simplified(&m, 1.0), 47.5);
        assert_eq!(simplified(&m, 0.0), 50.0);
        assert_eq!(simplified(&m, 100.0), 0.0);
    }

    #[test]
    fn four_term_stays_non_negative_within_eps1() {
        let mut a = evaluated(0, &[0], &[1.0]);
        a.covered = vec![0, 1, 2];
        let b = evaluated(1, &[3], &[1.0]);
        let costs = CostTable { weights: vec![1.0; 2] };
        let ground = vec![a.clone(), b.clone()];
        let cfg = ObjectiveConfig::four_term_for(&ground, &costs, 2, [1.0, 1.0, 1.0]);
        let v = objective([&a, &b], &cfg, 4, &costs).unwrap();
        // cover 4; U_inc = 2*2, incorrect 2; U_cost = 2*1, cost 2; U_change = 2*1, change 2
        assert_eq!(v, 4.0 + 2.0 + 0.0 + 0.0);
        let tight = ObjectiveConfig::FourTerm {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            u_incorrect: 0.0,
            u_cost: 0.0,
            u_change: 0.0,
        };
        assert!(matches!(
            objective([&a, &b], &tight, 4, &costs),
            Err(Error::NormalizerViolation(_))
        ));
    }

    #[test]
    fn cost_table_parsing() {
        use crate::schema::Feature;
        let schema = FeatureSchema::new(vec![Feature::continuous("a", 2), Feature::continuous("b", 2)]).unwrap();
        let t = CostTable::from_toml_str("b = 2.5\n", &schema).unwrap();
        assert_eq!(t.cost_of(0b11), 3.5);
        assert!(CostTable::from_toml_str("c = 1.0\n", &schema).is_err());
        assert!(CostTable::from_toml_str("a = -1.0\n", &schema).is_err());
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(
            &[TraceRow {
                wall_seconds: 0.5,
                stage: Stage::Evaluation,
                evaluated: 100,
                kept: 7,
                acc_percent: 12.5,
                cost: None,
                objective: None,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "wall_seconds,stage,evaluated,kept,acc_percent,cost,objective\n0.500000,evaluation,100,7,12.5000,,\n"
        );
    }
}
