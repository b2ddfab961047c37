//! Independent reference implementations shared by the test targets.

use std::collections::{BTreeSet, HashMap, HashSet};

use gamerec::analysis::CaseDegrees;
use gamerec::dataset::{Category, GameMeta};
use gamerec::graphs::BipartiteGraph;
use gamerec::linalg::Matrix;
use gamerec::model::{Batch, Model, Trainer};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;


// --- model

/// One epoch's triples as a single batch.
pub fn full_batch(model: &Model<f64>) -> Batch {
    let mut t = Trainer::new(model.clone());
    Batch::from_triples(&t.sample_triples())
}

/// Central differences at `n` coordinates, cycling through every tensor.
pub fn gradient_check(model: &Model<f64>, n: usize, seed: u64) -> f64 {
    let batch = full_batch(model);
    let (_, grads) = model.loss_and_grads(&batch);
    let n_tensors = grads.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let t = k % n_tensors;
        let len = grads[t].as_slice().len();
        let j = rng.random_range(0..len);
        let mut plus = model.clone();
        plus.params.tensors_mut()[t].as_mut_slice()[j] += h;
        let mut minus = model.clone();
        minus.params.tensors_mut()[t].as_mut_slice()[j] -= h;
        let fd = (plus.loss(&batch) - minus.loss(&batch)) / (2.0 * h);
        let an = grads[t].as_slice()[j];
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    worst
}

/// Independent dense evaluation of one reweighted player–game layer.
pub fn dense_layer(
    g: &BipartiteGraph,
    ew: &[f64],
    nw: &[f64],
    eu: &Matrix<f64>,
    ei: &Matrix<f64>,
) -> (Matrix<f64>, Matrix<f64>) {
    let (nu, ni, d) = (g.n_players(), g.n_games(), eu.cols());
    let mut w = vec![vec![0.0; ni]; nu];
    let mut adj = vec![vec![false; ni]; nu];
    for (e, &(u, i)) in g.edges().iter().enumerate() {
        w[u][i] = ew[e];
        adj[u][i] = true;
    }
    let du: Vec<f64> = (0..nu).map(|u| adj[u].iter().filter(|&&a| a).count() as f64).collect();
    let di: Vec<f64> = (0..ni).map(|i| (0..nu).filter(|&u| adj[u][i]).count() as f64).collect();
    let mut ou = Matrix::zeros(nu, d);
    let mut oi = Matrix::zeros(ni, d);
    for u in 0..nu {
        for c in 0..d {
            let mut s = if du[u] > 0.0 { eu.get(u, c) / du[u] } else { 0.0 };
            for i in 0..ni {
                if adj[u][i] {
                    s += w[u][i] * nw[i] / (du[u].sqrt() * di[i].sqrt()) * ei.get(i, c);
                }
            }
            ou.set(u, c, s);
        }
    }
    for i in 0..ni {
        for c in 0..d {
            let mut s = if di[i] > 0.0 { nw[i] * ei.get(i, c) / di[i] } else { 0.0 };
            for u in 0..nu {
                if adj[u][i] {
                    s += eu.get(u, c) / (di[i].sqrt() * du[u].sqrt());
                }
            }
            oi.set(i, c, s);
        }
    }
    (ou, oi)
}

pub fn random_bipartite(rng: &mut ChaCha8Rng, max_nodes: usize) -> BipartiteGraph {
    let nu = rng.random_range(1..max_nodes / 2);
    let ni = rng.random_range(1..=max_nodes - nu);
    let mut pairs = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            if rng.random_bool(0.35) {
                pairs.push((u, i, 1.0));
            }
        }
    }
    BipartiteGraph::from_pairs(nu, ni, pairs).unwrap()
}


// --- influence and spectra

/// Third power of the one-layer update matrix over `[i0, i1, u0, u1]`.
pub fn recursion_row(e_h: f64, n_h: f64, n_l: f64, deg: CaseDegrees) -> [f64; 4] {
    let c = |a: f64, b: f64| 1.0 / (a * b).sqrt();
    let mut m = [[0.0; 4]; 4];
    m[0][0] = n_l * c(deg.i0, deg.i0);
    m[0][2] = c(deg.u0, deg.i0);
    m[1][1] = n_h * c(deg.i1, deg.i1);
    m[1][2] = c(deg.u0, deg.i1);
    m[1][3] = c(deg.u1, deg.i1);
    m[2][0] = n_l * c(deg.u0, deg.i0);
    m[2][1] = e_h * n_h * c(deg.u0, deg.i1);
    m[2][2] = c(deg.u0, deg.u0);
    m[3][1] = e_h * n_h * c(deg.u1, deg.i1);
    m[3][3] = c(deg.u1, deg.u1);
    let mul = |a: &[[f64; 4]; 4], b: &[[f64; 4]; 4]| {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    };
    mul(&mul(&m, &m), &m)[3]
}

pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Matrix<f64> {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    a
}

pub fn is_connected(a: &Matrix<f64>) -> bool {
    let n = a.rows();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for (w, s) in seen.iter_mut().enumerate() {
            if a.get(v, w) != 0.0 && !*s {
                *s = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}


// --- metrics

pub struct Instance {
    pub n_games: usize,
    pub k: usize,
    pub lists: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
    pub catalog: Vec<GameMeta>,
    pub counts: Vec<usize>,
}

pub fn labels(rng: &mut ChaCha8Rng, prefix: &str) -> BTreeSet<String> {
    let n = rng.random_range(0..3);
    (0..n).map(|_| format!("{prefix}{}", rng.random_range(0..4))).collect()
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_games = rng.random_range(5..20);
    let n_players = rng.random_range(1..12);
    let k = rng.random_range(1..6);
    let mut lists = Vec::new();
    let mut test = Vec::new();
    for _ in 0..n_players {
        let mut games: Vec<usize> = (0..n_games).collect();
        games.shuffle(&mut rng);
        let len = rng.random_range(0..=k.min(n_games));
        lists.push(games[..len].to_vec());
        let n_test = rng.random_range(0..4);
        test.push((0..n_test).map(|_| rng.random_range(0..n_games)).collect::<BTreeSet<_>>().into_iter().collect());
    }
    if test.iter().all(Vec::is_empty) {
        test[0].push(0);
    }
    let catalog = (0..n_games)
        .map(|i| GameMeta {
            game_id: format!("g{i}"),
            genres: labels(&mut rng, "g"),
            developers: labels(&mut rng, "d"),
            publishers: labels(&mut rng, "p"),
            ..GameMeta::default()
        })
        .collect();
    let counts = (0..n_games).map(|_| rng.random_range(0..30)).collect();
    Instance {
        n_games,
        k,
        lists,
        test,
        catalog,
        counts,
    }
}

// Brute-force oracles: straight loops over ranks and labels, no shared helpers.

pub fn oracle_accuracy(inst: &Instance, k: usize) -> [f64; 4] {
    let mut sums = [0.0; 4];
    let mut n = 0.0;
    for (u, truth) in inst.test.iter().enumerate() {
        if truth.is_empty() {
            continue;
        }
        n += 1.0;
        let list: Vec<usize> = inst.lists[u].iter().take(k).copied().collect();
        let mut dcg = 0.0;
        let mut idcg = 0.0;
        let mut hits = 0.0;
        for r in 0..k {
            if r < list.len() && truth.contains(&list[r]) {
                dcg += 1.0 / (r as f64 + 2.0).log2();
                hits += 1.0;
            }
            if r < truth.len() {
                idcg += 1.0 / (r as f64 + 2.0).log2();
            }
        }
        sums[0] += dcg / idcg;
        sums[1] += hits / truth.len() as f64;
        sums[2] += if hits > 0.0 { 1.0 } else { 0.0 };
        sums[3] += hits / k as f64;
    }
    sums.map(|s| s / n)
}

pub fn oracle_cc(inst: &Instance, k: usize) -> f64 {
    let mut seen = vec![false; inst.n_games];
    for l in &inst.lists {
        for &g in l.iter().take(k) {
            seen[g] = true;
        }
    }
    seen.iter().filter(|&&s| s).count() as f64 / inst.n_games as f64
}

pub fn oracle_tail(inst: &Instance, cold: &HashSet<usize>, k: usize) -> (f64, f64) {
    let mut hit_cold = HashSet::new();
    let mut share = 0.0;
    for l in &inst.lists {
        let mut c = 0.0;
        for &g in l.iter().take(k) {
            if cold.contains(&g) {
                c += 1.0;
                hit_cold.insert(g);
            }
        }
        share += c / k as f64;
    }
    (hit_cold.len() as f64 / cold.len() as f64, share / inst.lists.len() as f64)
}

pub fn list_labels(inst: &Instance, list: &[usize], cat: Category) -> Vec<String> {
    let mut out = Vec::new();
    for &g in list {
        let m = &inst.catalog[g];
        let set = match cat {
            Category::Genre => &m.genres,
            Category::Developer => &m.developers,
            Category::Publisher => &m.publishers,
        };
        out.extend(set.iter().cloned());
    }
    out
}

pub fn oracle_category(inst: &Instance, cat: Category, k: usize) -> (f64, f64) {
    let mut cov = 0.0;
    let mut ent = 0.0;
    let mut n = 0.0;
    for l in &inst.lists {
        let list: Vec<usize> = l.iter().take(k).copied().collect();
        if list.is_empty() {
            continue;
        }
        n += 1.0;
        let labels = list_labels(inst, &list, cat);
        let mut hist: HashMap<&str, f64> = HashMap::new();
        for s in &labels {
            *hist.entry(s.as_str()).or_default() += 1.0;
        }
        cov += hist.len() as f64;
        let total = labels.len() as f64;
        let mut keys: Vec<&&str> = hist.keys().collect();
        keys.sort();
        for key in keys {
            let p = hist[*key] / total;
            ent -= p * p.ln();
        }
    }
    (cov / n, ent / n)
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

