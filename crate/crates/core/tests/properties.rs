mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use recourse_core::apriori::{apriori, apriori_counts};
use recourse_core::dataset::{discretize, fit_bins, DiscretizedDataset};
use recourse_core::evaluation::{metrics, v_reduce, Coverage, CostTable, EvalContext, ReductionMode};
use recourse_core::fixture::{credit_dataset, credit_model, credit_schema};
use recourse_core::ground_set::{
    generate_original, generate_rl_reduced, generate_then, rl_reduce, CandidateSets, GenerationLimits,
};
use recourse_core::model::{affected_set, ModelOracle};

fn dataset() -> impl Strategy<Value = DiscretizedDataset> {
    (1usize..=4, 1usize..=3).prop_flat_map(|(features, card)| {
        proptest::collection::vec(proptest::collection::vec(0..card as u32, features), 1..=12)
            .prop_map(move |rows| DiscretizedDataset::from_cells(rows, vec![card; features]).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn frequent_sets_are_downward_closed(data in dataset(), k in 1usize..=12) {
        let k = k.min(data.row_count());
        let found = apriori_counts(&data, k as f64 / data.row_count() as f64, 4).unwrap();
        let keys: BTreeSet<Key> = found.iter().map(|f| key(&f.itemset)).collect();
        for f in &found {
            prop_assert!(f.count >= k);
            let items = key(&f.itemset);
            for skip in 0..items.len() {
                let sub: Key = items.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, x)| *x).collect();
                prop_assert!(sub.is_empty() || keys.contains(&sub));
            }
        }
    }

    #[test]
    fn raising_the_threshold_only_removes_itemsets(data in dataset(), a in 1usize..=12, b in 1usize..=12) {
        let rows = data.row_count();
        let (lo, hi) = (a.min(b).min(rows), a.max(b).min(rows));
        let low: BTreeSet<Key> = apriori(&data, lo as f64 / rows as f64, 4).unwrap().iter().map(key).collect();
        let high: BTreeSet<Key> = apriori(&data, hi as f64 / rows as f64, 4).unwrap().iter().map(key).collect();
        prop_assert!(high.is_subset(&low));
    }

    #[test]
    fn apriori_output_is_ordered(data in dataset()) {
        let sets = apriori(&data, 1.0 / data.row_count() as f64, 4).unwrap();
        for w in sets.windows(2) {
            prop_assert!((w[0].len(), key(&w[0])) < (w[1].len(), key(&w[1])));
        }
    }

    #[test]
    fn generated_triples_are_valid(data in dataset(), k in 1usize..=12, eps2 in 2usize..=7, frozen in 0u128..4) {
        let rows = data.row_count();
        let rl = apriori(&data, k.min(rows) as f64 / rows as f64, eps2 - 1).unwrap();
        let limits = GenerationLimits { eps2, frozen };
        let cands = CandidateSets::shared(rl);
        let grounds = [
            generate_original(&cands, limits),
            generate_rl_reduced(&cands, limits),
            generate_then(&cands, &data, 1.0 / rows as f64, limits).unwrap(),
        ];
        for g in &grounds {
            let mut seen = BTreeSet::new();
            for (i, t) in g.triples.iter().enumerate() {
                prop_assert!(t.is_valid(eps2));
                prop_assert_eq!(t.changed_features() & frozen, 0);
                prop_assert!(seen.insert((key(&t.outer), key(&t.inner), key(&t.then))));
                if i > 0 {
                    prop_assert!(g.triples[i - 1].gen_index < t.gen_index);
                }
            }
        }
        prop_assert_eq!(triple_keys(&grounds[0]), triple_keys(&grounds[1]));
    }

    #[test]
    fn rl_reduction_keeps_repeated_feature_sets(data in dataset()) {
        let rl = apriori(&data, 1.0 / data.row_count() as f64, 4).unwrap();
        let reduced = rl_reduce(&rl);
        for s in &rl {
            let peers = rl.iter().filter(|o| o.same_features(s)).count();
            prop_assert_eq!(reduced.contains(s), peers > 1);
        }
    }

    #[test]
    fn generation_is_deterministic(data in dataset(), eps2 in 2usize..=7) {
        let rl = apriori(&data, 1.0 / data.row_count() as f64, eps2 - 1).unwrap();
        let limits = GenerationLimits::width(eps2);
        let q = 1.0 / data.row_count() as f64;
        prop_assert_eq!(
            generate_then(&CandidateSets::shared(rl.clone()), &data, q, limits).unwrap(),
            generate_then(&CandidateSets::shared(rl), &data, q, limits).unwrap()
        );
    }

    #[test]
    fn coverage_never_decreases(seed in any::<u64>(), affected in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_evaluated(&mut rng, 20, affected, 4);
        let mut cov = Coverage::new(affected);
        let mut last = 0.0;
        for (i, t) in v.iter().enumerate() {
            cov.add(t);
            let m = cov.metrics();
            prop_assert!(m.acc >= last);
            prop_assert_eq!(m, metrics(&v[..=i], affected));
            last = m.acc;
        }
    }
}

#[test]
fn evaluation_is_independent_of_worker_count() {
    let schema = credit_schema();
    let oracle = ModelOracle::from_weights(&credit_model(&schema), &schema).unwrap();
    let raw = credit_dataset(150, 21);
    let binning = fit_bins(&raw, &schema).unwrap();
    let data = discretize(&raw, &binning, &schema).unwrap();
    let affected = affected_set(&oracle, data.raw());
    let rl = apriori(&data, 0.2, 6).unwrap();
    let ground = generate_original(&CandidateSets::shared(rl), GenerationLimits::for_schema(&schema, 7));
    let kept_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let ctx = EvalContext::new(&data, &affected, &binning, &oracle, CostTable::uniform(&schema));
            let r = v_reduce(&ground, 2000, ReductionMode::AccGainOnly, &ctx, Instant::now());
            let kept: Vec<usize> = r.kept.iter().map(|t| t.triple.gen_index).collect();
            (kept, r.metrics)
        })
    };
    assert_eq!(kept_with(1), kept_with(4));
}
