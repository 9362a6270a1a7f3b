//! Level-wise frequent itemset mining over a discretized table.
//!
//! Every row holds exactly one value per feature, so an itemset never contains two
//! items on the same feature. Support is counted with per-item row bitsets and the
//! threshold is turned into an integer row count once, up front.
//!
//! Output order is fixed: ascending length, then lexicographic over the
//! `(feature, value)` sequence. Generation downstream depends on it.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::dataset::DiscretizedDataset;
use crate::error::{Error, Result};
use crate::itemset::{Bitset, Item, ItemIndex, ItemSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequentItemset {
    pub itemset: ItemSet,
    pub count: usize,
}

/// Smallest row count meeting `threshold` on `rows` rows.
///
/// Products within a relative 1e-9 of an integer are treated as that integer, so
/// `0.1 * 30` asks for 3 rows rather than 4.
pub fn min_support_count(threshold: f64, rows: usize) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidThreshold(threshold));
    }
    let x = threshold * rows as f64;
    if x < 1.0 - 1e-9 {
        return Err(Error::ThresholdBelowFloor { threshold, rows });
    }
    let nearest = x.round();
    let count = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok(count.max(1.0) as usize)
}

pub fn apriori(data: &DiscretizedDataset, threshold: f64, max_length: usize) -> Result<Vec<ItemSet>> {
    Ok(apriori_counts(data, threshold, max_length)?
        .into_iter()
        .map(|f| f.itemset)
        .collect())
}

pub fn apriori_counts(
    data: &DiscretizedDataset,
    threshold: f64,
    max_length: usize,
) -> Result<Vec<FrequentItemset>> {
    let min_count = min_support_count(threshold, data.row_count())?;
    if max_length == 0 {
        return Err(Error::Config("apriori max_length must be at least 1".into()));
    }
    let index = ItemIndex::build(data.rows(), data.cardinalities(), data.row_count());
    Ok(mine(&index, data.cardinalities(), min_count, max_length))
}

/// Mines all itemsets of length `<= max_length` present in at least `min_count` rows.
pub fn mine(
    index: &ItemIndex,
    cardinalities: &[usize],
    min_count: usize,
    max_length: usize,
) -> Vec<FrequentItemset> {
    let mut out = Vec::new();
    let mut level: Vec<(Vec<Item>, Bitset, usize)> = Vec::new();
    for (f, &card) in cardinalities.iter().enumerate() {
        for v in 0..card {
            let item = Item::new(f, v);
            let tids = index.item(item).clone();
            let count = tids.count();
            if count >= min_count {
                level.push((vec![item], tids, count));
            }
        }
    }

    let mut length = 1;
    loop {
        out.extend(level.iter().map(|(items, _, count)| FrequentItemset {
            itemset: ItemSet::from_sorted(items.clone()),
            count: *count,
        }));
        if length >= max_length || level.len() < 2 {
            break;
        }
        level = next_level(&level, min_count);
        length += 1;
    }
    out
}

fn next_level(level: &[(Vec<Item>, Bitset, usize)], min_count: usize) -> Vec<(Vec<Item>, Bitset, usize)> {
    let k = level[0].0.len();
    let known: HashSet<&[Item]> = level.iter().map(|(items, _, _)| items.as_slice()).collect();

    // end (exclusive) of the shared-prefix group each entry belongs to
    let mut group_end = vec![level.len(); level.len()];
    let mut start = 0;
    for i in 1..=level.len() {
        if i == level.len() || level[i].0[..k - 1] != level[start].0[..k - 1] {
            for g in &mut group_end[start..i] {
                *g = i;
            }
            start = i;
        }
    }

    let joined: Vec<Vec<(Vec<Item>, Bitset, usize)>> = (0..level.len())
        .into_par_iter()
        .map(|i| {
            let (a, a_tids, _) = &level[i];
            let a_last = a[k - 1];
            let mut found = Vec::new();
            let mut subset = Vec::with_capacity(k);
            for (b, b_tids, _) in &level[i + 1..group_end[i]] {
                let b_last = b[k - 1];
                if b_last.feature == a_last.feature {
                    continue;
                }
                let mut candidate = a.clone();
                candidate.push(b_last);
                // subsets dropping one of the first k-1 items; the two others are a and b
                let pruned = (0..k - 1).any(|skip| {
                    subset.clear();
                    subset.extend(
                        candidate
                            .iter()
                            .enumerate()
                            .filter(|&(p, _)| p != skip)
                            .map(|(_, it)| *it),
                    );
                    !known.contains(subset.as_slice())
                });
                if pruned {
                    continue;
                }
                let count = a_tids.and_count(b_tids);
                if count >= min_count {
                    found.push((candidate, a_tids.and(b_tids), count));
                }
            }
            found
        })
        .collect();
    joined.into_iter().flatten().collect()
}
