//! Stage 3: selecting the final recourse set from an evaluated ground set.
//!
//! Local search starts from the best singleton and applies the first improving move
//! found in a fixed scan order: single additions (by `gen_index`), single deletions
//! (by position in the solution), then one-out-one-in exchanges (solution position,
//! then incoming `gen_index`). A move must keep at most `eps1` triples and at most
//! `eps3` distinct Outer-If itemsets, and must improve the objective by more than
//! `delta`. Search stops when no such move exists, when the solution's accuracy reaches
//! the ground set's accuracy (the upper bound), or when the wall-clock budget runs out.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    accuracy_percent, metrics, objective, CostTable, EvaluatedTriple, ObjectiveConfig, SetMetrics,
    Stage, TraceRow,
};
use crate::itemset::ItemSet;

pub const DEFAULT_EPS1: usize = 20;
pub const DEFAULT_EPS3: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub eps1: usize,
    pub eps3: usize,
    pub delta: f64,
    pub bound_tolerance: f64,
    pub budget_seconds: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            eps1: DEFAULT_EPS1,
            eps3: DEFAULT_EPS3,
            delta: 1e-9,
            bound_tolerance: 0.0,
            budget_seconds: 300.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    BoundReached,
    BudgetExhausted,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::BoundReached => "bound-reached",
            Termination::BudgetExhausted => "budget-exhausted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Move {
    Init { added: usize },
    Add { added: usize },
    Delete { removed: usize },
    Exchange { removed: usize, added: usize },
}

/// An accepted move, identified by the `gen_index` of the triples involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    #[serde(flatten)]
    pub action: Move,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RecourseSet {
    pub triples: Vec<EvaluatedTriple>,
    pub metrics: SetMetrics,
    pub objective_value: f64,
    pub termination: Termination,
    pub moves: Vec<MoveRecord>,
    pub trace: Vec<TraceRow>,
}

impl RecourseSet {
    pub fn distinct_outers(&self) -> usize {
        let mut outers: Vec<&ItemSet> = self.triples.iter().map(|t| &t.triple.outer).collect();
        outers.sort();
        outers.dedup();
        outers.len()
    }
}

/// The `s` triples correcting the most individuals, ties to the lower `gen_index`.
/// With `s` at least the input size the input comes back untouched.
pub fn v_select(mut ground: Vec<EvaluatedTriple>, s: usize) -> Vec<EvaluatedTriple> {
    if s >= ground.len() {
        return ground;
    }
    ground.sort_by(|a, b| {
        b.corrected
            .len()
            .cmp(&a.corrected.len())
            .then(a.triple.gen_index.cmp(&b.triple.gen_index))
    });
    ground.truncate(s);
    ground
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateDecision {
    Run,
    Skip,
}

/// Stage 3 cannot beat the ground set's accuracy, so skip it when that is below target.
pub fn early_gate(acc_of_v: f64, target: f64) -> GateDecision {
    if acc_of_v < target {
        GateDecision::Skip
    } else {
        GateDecision::Run
    }
}

/// Incremental view of the current solution used to score candidate moves.
struct Search<'g> {
    ground: &'g [EvaluatedTriple],
    cfg: OptimizerConfig,
    obj: ObjectiveConfig,
    costs: &'g CostTable,
    affected: usize,
    selected: Vec<usize>,
    in_set: Vec<bool>,
    outer_ids: Vec<usize>,
    outer_counts: HashMap<usize, usize>,
    corrected_by: Vec<u32>,
    covered_by: Vec<u32>,
    corrected: usize,
    covered: usize,
}

impl<'g> Search<'g> {
    fn new(
        ground: &'g [EvaluatedTriple],
        cfg: OptimizerConfig,
        obj: ObjectiveConfig,
        costs: &'g CostTable,
        affected: usize,
    ) -> Self {
        let mut ids: HashMap<&ItemSet, usize> = HashMap::new();
        let outer_ids = ground
            .iter()
            .map(|t| {
                let next = ids.len();
                *ids.entry(&t.triple.outer).or_insert(next)
            })
            .collect();
        Search {
            ground,
            cfg,
            obj,
            costs,
            affected,
            selected: Vec::new(),
            in_set: vec![false; ground.len()],
            outer_ids,
            outer_counts: HashMap::new(),
            corrected_by: vec![0; affected],
            covered_by: vec![0; affected],
            corrected: 0,
            covered: 0,
        }
    }

    fn feasible(&self, remove: Option<usize>, add: Option<usize>) -> bool {
        let len = self.selected.len() - remove.is_some() as usize + add.is_some() as usize;
        if len > self.cfg.eps1 {
            return false;
        }
        let Some(a) = add else { return true };
        let mut distinct = self.outer_counts.len();
        let mut remaining_of_added = self.outer_counts.get(&self.outer_ids[a]).copied().unwrap_or(0);
        if let Some(r) = remove {
            let rid = self.outer_ids[r];
            if self.outer_counts[&rid] == 1 {
                distinct -= 1;
            }
            if rid == self.outer_ids[a] {
                remaining_of_added -= 1;
            }
        }
        if remaining_of_added == 0 {
            distinct += 1;
        }
        distinct <= self.cfg.eps3
    }

    /// Individuals with at least one hit after removing `remove` and adding `add`.
    fn count_after(
        hits: &[u32],
        current: usize,
        remove: Option<&[u32]>,
        add: Option<&[u32]>,
    ) -> usize {
        let mut total = current;
        if let Some(r) = remove {
            total -= r.iter().filter(|&&i| hits[i as usize] == 1).count();
        }
        if let Some(a) = add {
            total += a
                .iter()
                .filter(|&&i| {
                    let removed = remove.is_some_and(|r| r.binary_search(&i).is_ok()) as u32;
                    hits[i as usize] - removed == 0
                })
                .count();
        }
        total
    }

    fn value(&self, remove: Option<usize>, add: Option<usize>) -> Result<f64> {
        let corr = |p: Option<usize>| p.map(|p| self.ground[p].corrected.as_slice());
        match self.obj {
            ObjectiveConfig::Simplified { lambda } if lambda == 0.0 => {
                let corrected = Self::count_after(&self.corrected_by, self.corrected, corr(remove), corr(add));
                Ok(accuracy_percent(corrected, self.affected))
            }
            ObjectiveConfig::FourTerm {
                lambda1,
                lambda2,
                lambda3,
                u_incorrect,
                u_cost,
                u_change,
            } => {
                let cov = |p: Option<usize>| p.map(|p| self.ground[p].covered.as_slice());
                let cover = Self::count_after(&self.covered_by, self.covered, cov(remove), cov(add));
                let members = self.members_after(remove, add);
                let incorrect: usize = members.iter().map(|t| t.incorrect()).sum();
                let fcost: f64 = members.iter().map(|t| t.feature_cost(self.costs)).sum();
                let fchange: usize = members.iter().map(|t| t.feature_changes()).sum();
                let v = cover as f64
                    + lambda1 * (u_incorrect - incorrect as f64)
                    + lambda2 * (u_cost - fcost)
                    + lambda3 * (u_change - fchange as f64);
                if v < 0.0 {
                    return Err(Error::NormalizerViolation(v));
                }
                Ok(v)
            }
            ObjectiveConfig::Simplified { .. } => {
                objective(self.members_after(remove, add), &self.obj, self.affected, self.costs)
            }
        }
    }

    fn members_after(&self, remove: Option<usize>, add: Option<usize>) -> Vec<&'g EvaluatedTriple> {
        self.selected
            .iter()
            .copied()
            .filter(|&p| Some(p) != remove)
            .chain(add)
            .map(|p| &self.ground[p])
            .collect()
    }

    fn bump(&mut self, p: usize, up: bool) {
        let t = &self.ground[p];
        for (list, hits, total) in [
            (&t.corrected, &mut self.corrected_by, &mut self.corrected),
            (&t.covered, &mut self.covered_by, &mut self.covered),
        ] {
            for &i in list {
                let h = &mut hits[i as usize];
                if up {
                    *total += (*h == 0) as usize;
                    *h += 1;
                } else {
                    *h -= 1;
                    *total -= (*h == 0) as usize;
                }
            }
        }
        let oid = self.outer_ids[p];
        if up {
            *self.outer_counts.entry(oid).or_default() += 1;
        } else {
            let c = self.outer_counts.get_mut(&oid).expect("selected outer counted");
            *c -= 1;
            if *c == 0 {
                self.outer_counts.remove(&oid);
            }
        }
        self.in_set[p] = up;
    }

    fn apply(&mut self, remove: Option<usize>, add: Option<usize>) {
        match (remove, add) {
            (Some(r), Some(a)) => {
                let pos = self.selected.iter().position(|&p| p == r).expect("removed is selected");
                self.bump(r, false);
                self.bump(a, true);
                self.selected[pos] = a;
            }
            (Some(r), None) => {
                self.bump(r, false);
                self.selected.retain(|&p| p != r);
            }
            (None, Some(a)) => {
                self.bump(a, true);
                self.selected.push(a);
            }
            (None, None) => {}
        }
    }

    /// First improving move in scan order.
    fn find_move(&self, current: f64, by_gen: &[usize]) -> Result<Option<(Option<usize>, Option<usize>, f64)>> {
        let threshold = current + self.cfg.delta;
        for &a in by_gen {
            if !self.in_set[a] && self.feasible(None, Some(a)) {
                let v = self.value(None, Some(a))?;
                if v > threshold {
                    return Ok(Some((None, Some(a), v)));
                }
            }
        }
        for &r in &self.selected {
            let v = self.value(Some(r), None)?;
            if v > threshold {
                return Ok(Some((Some(r), None, v)));
            }
        }
        for &r in &self.selected {
            for &a in by_gen {
                if !self.in_set[a] && self.feasible(Some(r), Some(a)) {
                    let v = self.value(Some(r), Some(a))?;
                    if v > threshold {
                        return Ok(Some((Some(r), Some(a), v)));
                    }
                }
            }
        }
        Ok(None)
    }
}

/// Local search for a recourse set under the `eps1`/`eps3` limits.
///
/// `acc_of_v` is the accuracy of the full evaluated ground set, the upper bound any
/// subset can reach. `affected` is the size of the affected set the triples were
/// evaluated on.
pub fn maximize(
    ground: &[EvaluatedTriple],
    cfg: &OptimizerConfig,
    obj: &ObjectiveConfig,
    acc_of_v: f64,
    costs: &CostTable,
    affected: usize,
    clock: Instant,
) -> Result<RecourseSet> {
    if ground.is_empty() {
        return Err(Error::Config("cannot optimize over an empty ground set".into()));
    }
    if cfg.eps1 == 0 || cfg.eps3 == 0 {
        return Err(Error::Config("eps1 and eps3 must be positive".into()));
    }
    let started = Instant::now();
    let budget = Duration::from_secs_f64(cfg.budget_seconds.max(0.0));
    let mut search = Search::new(ground, *cfg, *obj, costs, affected);

    let mut by_gen: Vec<usize> = (0..ground.len()).collect();
    by_gen.sort_by_key(|&p| ground[p].triple.gen_index);

    // best singleton, ties to the lower gen_index
    let mut best: Option<(usize, f64)> = None;
    for &p in &by_gen {
        let v = search.value(None, Some(p))?;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((p, v));
        }
    }
    let (first, mut current) = best.expect("ground set is non-empty");
    search.apply(None, Some(first));
    let mut moves = vec![MoveRecord {
        action: Move::Init {
            added: ground[first].triple.gen_index,
        },
        objective: current,
    }];
    let mut trace = Vec::new();
    let record = |search: &Search<'_>, value: f64, trace: &mut Vec<TraceRow>| {
        let m = metrics(search.members_after(None, None), affected);
        trace.push(TraceRow {
            wall_seconds: clock.elapsed().as_secs_f64(),
            stage: Stage::Optimization,
            evaluated: ground.len(),
            kept: search.selected.len(),
            acc_percent: m.acc,
            cost: m.cost,
            objective: Some(value),
        });
    };
    record(&search, current, &mut trace);

    let bound_reached = |s: &Search<'_>| {
        accuracy_percent(s.corrected, affected) + 1e-9 >= acc_of_v - cfg.bound_tolerance
    };

    let termination = loop {
        if bound_reached(&search) {
            break Termination::BoundReached;
        }
        if started.elapsed() >= budget {
            break Termination::BudgetExhausted;
        }
        match search.find_move(current, &by_gen)? {
            None => break Termination::Converged,
            Some((remove, add, v)) => {
                let gen = |p: usize| ground[p].triple.gen_index;
                let action = match (remove, add) {
                    (Some(r), Some(a)) => Move::Exchange {
                        removed: gen(r),
                        added: gen(a),
                    },
                    (Some(r), None) => Move::Delete { removed: gen(r) },
                    (None, Some(a)) => Move::Add { added: gen(a) },
                    (None, None) => unreachable!("a move changes the set"),
                };
                search.apply(remove, add);
                current = v;
                moves.push(MoveRecord {
                    action,
                    objective: v,
                });
                record(&search, current, &mut trace);
            }
        }
    };

    let triples: Vec<EvaluatedTriple> = search.selected.iter().map(|&p| ground[p].clone()).collect();
    Ok(RecourseSet {
        metrics: metrics(&triples, affected),
        triples,
        objective_value: current,
        termination,
        moves,
        trace,
    })
}
