mod common;

use std::collections::{BTreeSet, HashSet};

use gamerec::dataset::{popularity_partition, Category};
use gamerec::eval::{
    accuracy_metrics, category_coverage, category_entropy, conventional_coverage, evaluate, tail_metrics,
    CategoryScope, RecommendationSet,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::oracles::*;

#[test]
fn every_metric_matches_brute_force_on_random_instances() {
    for seed in 0..50 {
        let inst = instance(seed);
        let recs = RecommendationSet::new(inst.k, inst.lists.clone()).unwrap();
        let partition = popularity_partition(&inst.counts, 0.2, 0.2).unwrap();
        let cold: HashSet<usize> = partition.cold.iter().copied().collect();
        for k in 1..=inst.k {
            let acc = accuracy_metrics(&recs, &inst.test, k).unwrap();
            let o = oracle_accuracy(&inst, k);
            assert!(
                close(acc.ndcg, o[0]) && close(acc.recall, o[1]) && close(acc.hit, o[2]) && close(acc.precision, o[3]),
                "seed {seed} k {k}: {acc:?} vs {o:?}"
            );
            assert!(close(conventional_coverage(&recs, inst.n_games, k).unwrap(), oracle_cc(&inst, k)));
            let t = tail_metrics(&recs, &partition, k).unwrap();
            let (tc, tl) = oracle_tail(&inst, &cold, k);
            assert!(close(t.tail_coverage, tc) && close(t.tail, tl), "seed {seed}");
            let any_list = inst.lists.iter().any(|l| !l.is_empty());
            let mut total = 0.0;
            for c in Category::ALL {
                if !any_list {
                    assert!(category_coverage(&recs, &inst.catalog, CategoryScope::One(c), k).is_err());
                    continue;
                }
                let (cov, ent) = oracle_category(&inst, c, k);
                let got_cov = category_coverage(&recs, &inst.catalog, CategoryScope::One(c), k).unwrap();
                let got_ent = category_entropy(&recs, &inst.catalog, c, k).unwrap();
                assert!(close(got_cov, cov) && close(got_ent, ent), "seed {seed} {c}");
                total += cov;
            }
            if any_list {
                let got = category_coverage(&recs, &inst.catalog, CategoryScope::Total, k).unwrap();
                assert!(close(got, total));
            }
        }
    }
}

#[test]
fn metrics_are_invariant_under_player_relabeling() {
    for seed in 100..110 {
        let inst = instance(seed);
        let partition = popularity_partition(&inst.counts, 0.2, 0.2).unwrap();
        if inst.lists.iter().all(Vec::is_empty) {
            continue;
        }
        let mut perm: Vec<usize> = (0..inst.lists.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let lists: Vec<Vec<usize>> = perm.iter().map(|&p| inst.lists[p].clone()).collect();
        let test: Vec<Vec<usize>> = perm.iter().map(|&p| inst.test[p].clone()).collect();
        let a = evaluate(
            &RecommendationSet::new(inst.k, inst.lists.clone()).unwrap(),
            &inst.test,
            &inst.catalog,
            &partition,
            &[inst.k],
        )
        .unwrap();
        let b = evaluate(
            &RecommendationSet::new(inst.k, lists).unwrap(),
            &test,
            &inst.catalog,
            &partition,
            &[inst.k],
        )
        .unwrap();
        for ((n, x), (_, y)) in a.per_k[0].entries().into_iter().zip(b.per_k[0].entries()) {
            assert!((x - y).abs() < 1e-12, "{n}");
        }
    }
}

proptest! {
    #[test]
    fn ranges_and_entropy_bounds(seed in 0u64..10_000) {
        let inst = instance(seed);
        prop_assume!(inst.lists.iter().any(|l| !l.is_empty()));
        let partition = popularity_partition(&inst.counts, 0.2, 0.2).unwrap();
        let recs = RecommendationSet::new(inst.k, inst.lists.clone()).unwrap();
        let report = evaluate(&recs, &inst.test, &inst.catalog, &partition, &[inst.k]).unwrap();
        let m = &report.per_k[0];
        for v in [m.ndcg, m.recall, m.hit, m.precision, m.conventional_coverage, m.tail_coverage, m.tail] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let union: BTreeSet<usize> = inst.lists.iter().flatten().copied().collect();
        prop_assert_eq!(m.conventional_coverage == 1.0, union.len() == inst.n_games);
        for c in Category::ALL {
            let e = m.entropy.get(c);
            prop_assert!(e >= 0.0);
            // per-list bound ln(#labels) implies the mean is below the max bound
            let max_labels = inst.lists.iter().map(|l| list_labels(&inst, l, c).into_iter().collect::<BTreeSet<_>>().len()).max().unwrap();
            prop_assert!(e <= (max_labels.max(1) as f64).ln() + 1e-12);
        }
    }
}
