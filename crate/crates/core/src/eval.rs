//! Accuracy and diversity metrics over top-K recommendation lists.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, GameMeta, PopularityPartition};
use crate::error::{ensure, Error, Result};

/// One ordered list per player, each at most `k` long.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl RecommendationSet {
    pub fn new(k: usize, lists: Vec<Vec<usize>>) -> Result<Self> {
        ensure!(k >= 1, InvalidArgument, "K must be at least 1");
        for (u, list) in lists.iter().enumerate() {
            ensure!(list.len() <= k, Validation, "player {u} has {} items for K = {k}", list.len());
            let distinct: BTreeSet<_> = list.iter().collect();
            ensure!(distinct.len() == list.len(), Validation, "player {u} has duplicate recommendations");
        }
        Ok(Self { k, lists })
    }

    /// Fails if any list contains a game from the player's training history.
    pub fn check_excludes(&self, train: &[Vec<usize>]) -> Result<()> {
        for (u, list) in self.lists.iter().enumerate() {
            let seen = train.get(u).map(Vec::as_slice).unwrap_or(&[]);
            if let Some(g) = list.iter().find(|g| seen.contains(g)) {
                return Err(Error::Validation(format!("player {u} is recommended train item {g}")));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_players(&self) -> usize {
        self.lists.len()
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    /// The first `min(k, len)` entries of player `u`'s list.
    pub fn top(&self, u: usize, k: usize) -> &[usize] {
        let list = &self.lists[u];
        &list[..k.min(list.len())]
    }

    fn check_k(&self, k: usize) -> Result<()> {
        ensure!(k >= 1 && k <= self.k, InvalidArgument, "K = {k} outside 1..={}", self.k);
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub ndcg: f64,
    pub recall: f64,
    pub hit: f64,
    pub precision: f64,
    /// Players with a nonempty test set.
    pub n_evaluated: usize,
}

/// NDCG, Recall, Hit and Precision at `k`, averaged over players with test items.
///
/// Relevance is binary, the discount is `log2(rank + 1)` and the ideal DCG
/// places `min(k, |test|)` hits at the top.
pub fn accuracy_metrics(recs: &RecommendationSet, test: &[Vec<usize>], k: usize) -> Result<Accuracy> {
    recs.check_k(k)?;
    let mut acc = Accuracy::default();
    for (u, truth) in test.iter().enumerate() {
        if truth.is_empty() {
            continue;
        }
        let truth: BTreeSet<usize> = truth.iter().copied().collect();
        let list = if u < recs.n_players() { recs.top(u, k) } else { &[] };
        let mut dcg = 0.0;
        let mut hits = 0usize;
        for (rank, g) in list.iter().enumerate() {
            if truth.contains(g) {
                hits += 1;
                dcg += 1.0 / ((rank + 2) as f64).log2();
            }
        }
        let idcg: f64 = (0..k.min(truth.len())).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
        acc.ndcg += dcg / idcg;
        acc.recall += hits as f64 / truth.len() as f64;
        acc.hit += if hits > 0 { 1.0 } else { 0.0 };
        acc.precision += hits as f64 / k as f64;
        acc.n_evaluated += 1;
    }
    ensure!(acc.n_evaluated > 0, Degenerate, "no player has test interactions");
    let n = acc.n_evaluated as f64;
    acc.ndcg /= n;
    acc.recall /= n;
    acc.hit /= n;
    acc.precision /= n;
    Ok(acc)
}

/// Share of the catalog that appears in at least one list.
pub fn conventional_coverage(recs: &RecommendationSet, n_games: usize, k: usize) -> Result<f64> {
    recs.check_k(k)?;
    ensure!(n_games > 0, Degenerate, "empty catalog");
    let union: BTreeSet<usize> = (0..recs.n_players()).flat_map(|u| recs.top(u, k).iter().copied()).collect();
    Ok(union.len() as f64 / n_games as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TailMetrics {
    /// Share of long-tail games recommended to anyone.
    pub tail_coverage: f64,
    /// Mean share of each list occupied by long-tail games, over `k` slots.
    pub tail: f64,
}

/// Long-tail metrics; the long-tail set is `partition.cold`.
pub fn tail_metrics(recs: &RecommendationSet, partition: &PopularityPartition, k: usize) -> Result<TailMetrics> {
    recs.check_k(k)?;
    ensure!(!partition.cold.is_empty(), Degenerate, "long-tail set is empty");
    ensure!(recs.n_players() > 0, Degenerate, "no recommendation lists");
    let mut union = BTreeSet::new();
    let mut tail = 0.0;
    for u in 0..recs.n_players() {
        let in_tail: Vec<usize> = recs.top(u, k).iter().copied().filter(|g| partition.is_cold(*g)).collect();
        tail += in_tail.len() as f64 / k as f64;
        union.extend(in_tail);
    }
    Ok(TailMetrics {
        tail_coverage: union.len() as f64 / partition.cold.len() as f64,
        tail: tail / recs.n_players() as f64,
    })
}

/// A single category, or the sum over all three.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CategoryScope {
    One(Category),
    Total,
}

impl FromStr for CategoryScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("total") {
            Ok(Self::Total)
        } else {
            s.parse().map(Self::One)
        }
    }
}

fn label_counts<'a>(list: &[usize], catalog: &'a [GameMeta], category: Category) -> Result<BTreeMap<&'a str, usize>> {
    let mut counts = BTreeMap::new();
    for &g in list {
        let meta = catalog
            .get(g)
            .ok_or_else(|| Error::InvalidArgument(format!("game {g} missing from catalog")))?;
        for label in meta.labels(category) {
            *counts.entry(label.as_str()).or_insert(0) += 1;
        }
    }
    Ok(counts)
}

fn mean_over_lists(
    recs: &RecommendationSet,
    k: usize,
    mut per_list: impl FnMut(&[usize]) -> Result<f64>,
) -> Result<f64> {
    recs.check_k(k)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for u in 0..recs.n_players() {
        let list = recs.top(u, k);
        if !list.is_empty() {
            total += per_list(list)?;
            n += 1;
        }
    }
    ensure!(n > 0, Degenerate, "every recommendation list is empty");
    Ok(total / n as f64)
}

/// Mean number of distinct labels per nonempty list.
pub fn category_coverage(recs: &RecommendationSet, catalog: &[GameMeta], scope: CategoryScope, k: usize) -> Result<f64> {
    let cats: &[Category] = match scope {
        CategoryScope::One(ref c) => std::slice::from_ref(c),
        CategoryScope::Total => &Category::ALL,
    };
    mean_over_lists(recs, k, |list| {
        let mut n = 0usize;
        for &c in cats {
            n += label_counts(list, catalog, c)?.len();
        }
        Ok(n as f64)
    })
}

/// Mean Shannon entropy (natural log) of the label histogram of each nonempty list.
pub fn category_entropy(recs: &RecommendationSet, catalog: &[GameMeta], category: Category, k: usize) -> Result<f64> {
    mean_over_lists(recs, k, |list| Ok(entropy(label_counts(list, catalog, category)?.values().copied())))
}

/// Shannon entropy of a histogram; zero for an empty one.
pub fn entropy(counts: impl IntoIterator<Item = usize>) -> f64 {
    let counts: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    -counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryValues {
    pub genre: f64,
    pub developer: f64,
    pub publisher: f64,
}

impl CategoryValues {
    fn from_fn(mut f: impl FnMut(Category) -> Result<f64>) -> Result<Self> {
        Ok(Self {
            genre: f(Category::Genre)?,
            developer: f(Category::Developer)?,
            publisher: f(Category::Publisher)?,
        })
    }

    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Genre => self.genre,
            Category::Developer => self.developer,
            Category::Publisher => self.publisher,
        }
    }
}

/// Every metric at one cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub ndcg: f64,
    pub recall: f64,
    pub hit: f64,
    pub precision: f64,
    pub coverage: CategoryValues,
    pub coverage_total: f64,
    pub entropy: CategoryValues,
    pub conventional_coverage: f64,
    pub tail_coverage: f64,
    pub tail: f64,
}

impl KMetrics {
    /// Metric names and values in report order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("ndcg".to_string(), self.ndcg),
            ("recall".to_string(), self.recall),
            ("hit".to_string(), self.hit),
            ("precision".to_string(), self.precision),
        ];
        for c in Category::ALL {
            out.push((format!("coverage_{c}"), self.coverage.get(c)));
        }
        out.push(("coverage_total".to_string(), self.coverage_total));
        for c in Category::ALL {
            out.push((format!("entropy_{c}"), self.entropy.get(c)));
        }
        out.push(("conventional_coverage".to_string(), self.conventional_coverage));
        out.push(("tail_coverage".to_string(), self.tail_coverage));
        out.push(("tail".to_string(), self.tail));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_players: usize,
    pub n_evaluated: usize,
    pub per_k: Vec<KMetrics>,
}

/// Computes every metric at every cutoff in `ks`.
pub fn evaluate(
    recs: &RecommendationSet,
    test: &[Vec<usize>],
    catalog: &[GameMeta],
    partition: &PopularityPartition,
    ks: &[usize],
) -> Result<MetricReport> {
    ensure!(!ks.is_empty(), InvalidArgument, "no cutoffs requested");
    let mut per_k = Vec::with_capacity(ks.len());
    let mut n_evaluated = 0;
    for &k in ks {
        let acc = accuracy_metrics(recs, test, k)?;
        n_evaluated = acc.n_evaluated;
        let tail = tail_metrics(recs, partition, k)?;
        per_k.push(KMetrics {
            k,
            ndcg: acc.ndcg,
            recall: acc.recall,
            hit: acc.hit,
            precision: acc.precision,
            coverage: CategoryValues::from_fn(|c| category_coverage(recs, catalog, CategoryScope::One(c), k))?,
            coverage_total: category_coverage(recs, catalog, CategoryScope::Total, k)?,
            entropy: CategoryValues::from_fn(|c| category_entropy(recs, catalog, c, k))?,
            conventional_coverage: conventional_coverage(recs, catalog.len(), k)?,
            tail_coverage: tail.tail_coverage,
            tail: tail.tail,
        });
    }
    Ok(MetricReport {
        n_players: recs.n_players(),
        n_evaluated,
        per_k,
    })
}

impl MetricReport {
    pub fn at(&self, k: usize) -> Option<&KMetrics> {
        self.per_k.iter().find(|m| m.k == k)
    }

    /// One row per cutoff, one column per metric.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
        let Some(first) = self.per_k.first() else {
            return Ok(());
        };
        let mut header = vec!["k".to_string()];
        header.extend(first.entries().into_iter().map(|(name, _)| name));
        w.write_record(&header).map_err(csv_err)?;
        for m in &self.per_k {
            let mut row = vec![m.k.to_string()];
            row.extend(m.entries().into_iter().map(|(_, v)| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "players {} evaluated {}", self.n_players, self.n_evaluated)?;
        for m in &self.per_k {
            for (name, v) in m.entries() {
                writeln!(f, "{name}@{} {v:.6}", m.k)?;
            }
        }
        Ok(())
    }
}
