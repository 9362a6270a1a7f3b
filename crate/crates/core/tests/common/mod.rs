#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::Rng;
use recourse_core::dataset::DiscretizedDataset;
use recourse_core::evaluation::{accuracy_percent, EvaluatedTriple};
use recourse_core::ground_set::{GroundSet, Triple};
use recourse_core::itemset::{Item, ItemSet};
use recourse_core::optimizer::OptimizerConfig;

pub type Key = Vec<(u32, u32)>;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn key(s: &ItemSet) -> Key {
    s.items().iter().map(|i| (i.feature, i.value)).collect()
}

pub fn triple_keys(g: &GroundSet) -> BTreeSet<(Key, Key, Key)> {
    g.triples
        .iter()
        .map(|t| (key(&t.outer), key(&t.inner), key(&t.then)))
        .collect()
}

pub fn random_data(rng: &mut impl Rng, max_rows: usize, max_features: usize, max_card: usize) -> DiscretizedDataset {
    let rows = rng.gen_range(1..=max_rows);
    let features = rng.gen_range(1..=max_features);
    let cards: Vec<usize> = (0..features).map(|_| rng.gen_range(1..=max_card)).collect();
    let cells = (0..rows)
        .map(|_| cards.iter().map(|&c| rng.gen_range(0..c) as u32).collect())
        .collect();
    DiscretizedDataset::from_cells(cells, cards).unwrap()
}

/// Every itemset with support count `>= min_count`, by trying every partial assignment.
pub fn brute_force_frequent(data: &DiscretizedDataset, min_count: usize, max_len: usize) -> BTreeSet<Key> {
    let nf = data.feature_count();
    let mut out = BTreeSet::new();
    let mut choice = vec![0usize; nf];
    loop {
        let items: Key = choice
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(f, &c)| (f as u32, c as u32 - 1))
            .collect();
        if !items.is_empty() && items.len() <= max_len {
            let count = data
                .rows()
                .filter(|row| items.iter().all(|&(f, v)| row[f as usize] == v))
                .count();
            if count >= min_count {
                out.insert(items);
            }
        }
        let mut f = 0;
        loop {
            if f == nf {
                return out;
            }
            choice[f] += 1;
            if choice[f] <= data.cardinality(f) {
                break;
            }
            choice[f] = 0;
            f += 1;
        }
    }
}

/// Smallest count satisfying `count >= threshold * rows`, computed in exact integers
/// from a threshold given as `num / den`.
pub fn exact_min_count(num: usize, den: usize, rows: usize) -> usize {
    (num * rows).div_ceil(den)
}

pub fn random_itemset(rng: &mut impl Rng, features: usize, card: usize) -> ItemSet {
    let len = rng.gen_range(1..=features.min(3));
    let mut fs: Vec<usize> = (0..features).collect();
    for i in 0..len {
        let j = rng.gen_range(i..features);
        fs.swap(i, j);
    }
    ItemSet::new(fs[..len].iter().map(|&f| Item::new(f, rng.gen_range(0..card))).collect()).unwrap()
}

/// Evaluated triples with random correction sets over `affected` individuals and
/// `outers` distinct Outer-If conditions.
pub fn random_evaluated(rng: &mut impl Rng, n: usize, affected: usize, outers: usize) -> Vec<EvaluatedTriple> {
    (0..n)
        .map(|g| {
            let o = rng.gen_range(0..outers);
            let outer = ItemSet::new(vec![Item::new(0, o)]).unwrap();
            let inner = ItemSet::new(vec![Item::new(1, 0)]).unwrap();
            let then = ItemSet::new(vec![Item::new(1, 1 + g % 3)]).unwrap();
            let mut covered: Vec<u32> = (0..affected as u32).filter(|_| rng.gen_bool(0.35)).collect();
            covered.sort();
            let corrected: Vec<u32> = covered.iter().copied().filter(|_| rng.gen_bool(0.6)).collect();
            let costs = corrected.iter().map(|_| 1.0).collect();
            EvaluatedTriple {
                triple: Triple::new(outer, inner, then, g * 2 + 1),
                covered,
                corrected,
                costs,
            }
        })
        .collect()
}

/// Accuracy of a set by direct union, independent of the library's bookkeeping.
pub fn union_acc(set: &[&EvaluatedTriple], affected: usize) -> (usize, f64) {
    let u: BTreeSet<u32> = set.iter().flat_map(|t| t.corrected.iter().copied()).collect();
    (u.len(), accuracy_percent(u.len(), affected))
}

fn outers(set: &[&EvaluatedTriple]) -> usize {
    set.iter().map(|t| key(&t.triple.outer)).collect::<BTreeSet<_>>().len()
}

pub fn feasible(set: &[&EvaluatedTriple], cfg: &OptimizerConfig) -> bool {
    set.len() <= cfg.eps1 && outers(set) <= cfg.eps3
}

/// An improving feasible add, delete or exchange for the λ = 0 objective, if any.
pub fn improving_move(
    ground: &[EvaluatedTriple],
    chosen: &[usize],
    affected: usize,
    cfg: &OptimizerConfig,
) -> Option<Vec<usize>> {
    let value = |ids: &[usize]| {
        let set: Vec<&EvaluatedTriple> = ids.iter().map(|&i| &ground[i]).collect();
        (feasible(&set, cfg), union_acc(&set, affected).0)
    };
    let (_, now) = value(chosen);
    let outside: Vec<usize> = (0..ground.len()).filter(|i| !chosen.contains(i)).collect();
    let mut neighbours: Vec<Vec<usize>> = Vec::new();
    for &a in &outside {
        let mut s = chosen.to_vec();
        s.push(a);
        neighbours.push(s);
    }
    for r in 0..chosen.len() {
        let mut s = chosen.to_vec();
        s.remove(r);
        neighbours.push(s.clone());
        for &a in &outside {
            let mut e = s.clone();
            e.push(a);
            neighbours.push(e);
        }
    }
    neighbours.into_iter().find(|s| {
        let (ok, v) = value(s);
        ok && !s.is_empty() && v > now
    })
}

/// Best feasible subset by exhaustive search (λ = 0).
pub fn brute_force_best(ground: &[EvaluatedTriple], affected: usize, cfg: &OptimizerConfig) -> usize {
    let n = ground.len();
    let mut best = 0;
    for mask in 1u32..(1 << n) {
        let set: Vec<&EvaluatedTriple> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &ground[i]).collect();
        if feasible(&set, cfg) {
            best = best.max(union_acc(&set, affected).0);
        }
    }
    best
}
