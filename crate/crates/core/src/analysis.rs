//! Influence-index case study, Laplacian spectral energy, KS validation and
//! connection similarity reports.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{top_ratio_grid, Category, Dataset, GameMeta};
use crate::error::{ensure, Error, Result};
use crate::graphs::{build_raw_category_graph, build_strict_graphs, BipartiteGraph, CategoryGraph};
use crate::linalg::{cosine, Matrix};
use crate::stats::{ks_test_standard_normal, to_standard_normal};
use crate::weighting::POSITIVE_SHIFT;

// ---------------------------------------------------------------------------
// influence indices

/// How `|N|` is counted in `1/(sqrt|N_a| sqrt|N_b|)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeConvention {
    /// Neighbor count.
    #[default]
    Plain,
    /// Neighbor count plus one.
    SelfInclusive,
}

impl FromStr for DegreeConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "self-inclusive" | "self" => Ok(Self::SelfInclusive),
            other => Err(Error::InvalidArgument(format!("unknown degree convention `{other}`"))),
        }
    }
}

impl fmt::Display for DegreeConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plain => "plain",
            Self::SelfInclusive => "self-inclusive",
        })
    }
}

/// Degrees in the two-player, two-game case: `u0` plays `i0` and `i1`, `u1` plays `i1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseDegrees {
    pub u0: f64,
    pub u1: f64,
    pub i0: f64,
    pub i1: f64,
}

impl CaseDegrees {
    pub fn new(convention: DegreeConvention) -> Self {
        let extra = match convention {
            DegreeConvention::Plain => 0.0,
            DegreeConvention::SelfInclusive => 1.0,
        };
        Self {
            u0: 2.0 + extra,
            u1: 1.0 + extra,
            i0: 1.0 + extra,
            i1: 2.0 + extra,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceResult {
    pub inf_i0: f64,
    pub inf_i1: f64,
    pub inf_u0: f64,
    pub inf_u1: f64,
    pub e_h: f64,
    pub n_h: f64,
    pub n_l: f64,
    pub convention: DegreeConvention,
}

impl InfluenceResult {
    pub fn as_array(&self) -> [f64; 4] {
        [self.inf_i0, self.inf_i1, self.inf_u0, self.inf_u1]
    }
}

/// Unnormalized three-hop contributions `(A, B, C, D)` of `i0, i1, u0, u1` to `u1`.
pub fn influence_terms(e_h: f64, n_h: f64, n_l: f64, deg: CaseDegrees) -> Result<[f64; 4]> {
    ensure!(
        [deg.u0, deg.u1, deg.i0, deg.i1].iter().all(|&d| d > 0.0),
        Degenerate,
        "zero degree in influence case"
    );
    let c = |a: f64, b: f64| 1.0 / (a.sqrt() * b.sqrt());
    let (c_u1u1, c_u0u0, c_i1i1) = (c(deg.u1, deg.u1), c(deg.u0, deg.u0), c(deg.i1, deg.i1));
    let (c_u1i1, c_u0i1, c_u0i0) = (c(deg.u1, deg.i1), c(deg.u0, deg.i1), c(deg.u0, deg.i0));
    let en = e_h * n_h;
    let a = en * n_l * c_u1i1 * c_u0i1 * c_u0i0;
    let b = en * c_u1u1.powi(2) * c_u1i1
        + en * n_h * c_u1i1 * c_i1i1 * c_u1u1
        + en * n_h.powi(2) * c_u1i1 * c_i1i1.powi(2)
        + en.powi(2) * c_u1i1.powi(3)
        + en.powi(2) * c_u0i1.powi(2) * c_u1i1;
    let cc = en * c_u1i1 * c_u0i1 * c_u1u1 + en * n_h * c_u1i1 * c_i1i1 * c_u0i1 + en * c_u1i1 * c_u0i1 * c_u0u0;
    let d = c_u1u1.powi(3) + en * c_u1u1 * c_u1i1.powi(2) + en * n_h * c_u1i1.powi(2) * c_i1i1 + en * c_u1i1.powi(2) * c_u1u1;
    Ok([a, b, cc, d])
}

/// Normalized influence of each node on `u1` after three reweighted layers.
pub fn influence_indices(e_h: f64, n_h: f64, n_l: f64, convention: DegreeConvention) -> Result<InfluenceResult> {
    ensure!(
        e_h > 0.0 && n_h > 0.0 && n_l > 0.0,
        InvalidArgument,
        "influence weights must be positive, got {e_h}/{n_h}/{n_l}"
    );
    let t = influence_terms(e_h, n_h, n_l, CaseDegrees::new(convention))?;
    let s: f64 = t.iter().sum();
    Ok(InfluenceResult {
        inf_i0: t[0] / s,
        inf_i1: t[1] / s,
        inf_u0: t[2] / s,
        inf_u1: t[3] / s,
        e_h,
        n_h,
        n_l,
        convention,
    })
}

// ---------------------------------------------------------------------------
// spectrum

/// Eigenvalues ascending; column `j` of `vectors` belongs to `values[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Matrix<f64>,
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &Matrix<f64>) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a.get(i, j).powi(2);
            }
        }
    }
    s.sqrt()
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigen(m: &Matrix<f64>) -> Result<Eigen> {
    let n = m.rows();
    ensure!(m.cols() == n, Shape, "matrix is {}x{}, not square", n, m.cols());
    for i in 0..n {
        for j in 0..i {
            let (x, y) = (m.get(i, j), m.get(j, i));
            ensure!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), InvalidArgument, "matrix is not symmetric at ({i}, {j})");
        }
    }
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let mut sweeps = 0;
    while off_diagonal_norm(&a) > JACOBI_TOL {
        ensure!(sweeps < JACOBI_MAX_SWEEPS, Degenerate, "Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps");
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a.get(k, p), a.get(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let (apk, aqk) = (a.get(p, k), a.get(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    Ok(Eigen {
        values: order.iter().map(|&i| a.get(i, i)).collect(),
        vectors: Matrix::from_fn(n, n, |r, c| v.get(r, order[c])),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub eigenvalues: Vec<f64>,
    /// Share of the signal's energy on each eigenvector.
    pub energy: Vec<f64>,
}

/// Spectral energy `x̃_i² / Σ x̃_j²` with `x̃ = Uᵀx`.
pub fn energy_distribution(eigen: &Eigen, x: &[f64]) -> Result<Vec<f64>> {
    let n = eigen.values.len();
    ensure!(x.len() == n, Shape, "signal has {} entries for {n} nodes", x.len());
    let coeffs: Vec<f64> = (0..n).map(|j| (0..n).map(|r| eigen.vectors.get(r, j) * x[r]).sum()).collect();
    let total: f64 = coeffs.iter().map(|c| c * c).sum();
    ensure!(total > 0.0, Degenerate, "zero signal has no energy distribution");
    Ok(coeffs.iter().map(|c| c * c / total).collect())
}

/// `D - A` for a symmetric (possibly weighted) adjacency matrix.
pub fn combinatorial_laplacian(adj: &Matrix<f64>) -> Matrix<f64> {
    let n = adj.rows();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            (0..n).filter(|&k| k != i).map(|k| adj.get(i, k)).sum()
        } else {
            -adj.get(i, j)
        }
    })
}

/// Eigenvalues of `L = D - A` and the energy distribution of `x` over them.
pub fn laplacian_spectrum_dense(adj: &Matrix<f64>, x: &[f64]) -> Result<SpectrumResult> {
    let eigen = symmetric_eigen(&combinatorial_laplacian(adj))?;
    let energy = energy_distribution(&eigen, x)?;
    Ok(SpectrumResult {
        eigenvalues: eigen.values,
        energy,
    })
}

pub fn laplacian_spectrum(graph: &CategoryGraph, x: &[f64]) -> Result<SpectrumResult> {
    let eigen = symmetric_eigen(&graph.laplacian())?;
    let energy = energy_distribution(&eigen, x)?;
    Ok(SpectrumResult {
        eigenvalues: eigen.values,
        energy,
    })
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}`, the renormalized GCN propagation matrix.
pub fn renormalized_adjacency(adj: &Matrix<f64>) -> Matrix<f64> {
    let n = adj.rows();
    let deg: Vec<f64> = (0..n).map(|i| 1.0 + (0..n).filter(|&k| k != i).map(|k| adj.get(i, k)).sum::<f64>()).collect();
    Matrix::from_fn(n, n, |i, j| {
        let a = if i == j { 1.0 } else { adj.get(i, j) };
        a / (deg[i].sqrt() * deg[j].sqrt())
    })
}

/// `xᵀ L x / xᵀ x`.
pub fn rayleigh_quotient(l: &Matrix<f64>, x: &[f64]) -> Result<f64> {
    let n = l.rows();
    ensure!(x.len() == n, Shape, "signal has {} entries for {n} nodes", x.len());
    let xx: f64 = x.iter().map(|v| v * v).sum();
    ensure!(xx > 0.0, Degenerate, "zero signal");
    let mut num = 0.0;
    for i in 0..n {
        for j in 0..n {
            num += x[i] * l.get(i, j) * x[j];
        }
    }
    Ok(num / xx)
}

/// Symmetric adjacency over `[players; games]` restricted to `nodes`, with
/// optional per-edge weights aligned with `graph.edges()`.
pub fn bipartite_adjacency(graph: &BipartiteGraph, nodes: &[usize], weights: Option<&[f64]>) -> Result<Matrix<f64>> {
    let np = graph.n_players();
    let total = np + graph.n_games();
    let mut pos = vec![usize::MAX; total];
    for (k, &v) in nodes.iter().enumerate() {
        ensure!(v < total, InvalidArgument, "node {v} out of range");
        pos[v] = k;
    }
    if let Some(w) = weights {
        ensure!(w.len() == graph.n_edges(), Shape, "{} weights for {} edges", w.len(), graph.n_edges());
    }
    let mut adj = Matrix::zeros(nodes.len(), nodes.len());
    for (e, &(u, i)) in graph.edges().iter().enumerate() {
        let (a, b) = (pos[u], pos[np + i]);
        if a != usize::MAX && b != usize::MAX {
            let w = weights.map_or(1.0, |w| w[e]);
            adj.set(a, b, w);
            adj.set(b, a, w);
        }
    }
    Ok(adj)
}

/// Breadth-first node set of at most `max_nodes` nodes in the stacked
/// player–game graph, starting from player `start`.
pub fn bipartite_neighborhood(graph: &BipartiteGraph, start: usize, max_nodes: usize) -> Vec<usize> {
    let np = graph.n_players();
    let mut seen = BTreeSet::new();
    let mut order = Vec::new();
    let mut queue = VecDeque::from([start]);
    seen.insert(start);
    while let Some(v) = queue.pop_front() {
        if order.len() == max_nodes {
            break;
        }
        order.push(v);
        let next: Vec<usize> = if v < np {
            graph.player_games(v).map(|i| np + i).collect()
        } else {
            graph.game_edges(v - np).iter().map(|&e| graph.edges()[e].0).collect()
        };
        for w in next {
            if seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    order
}

// ---------------------------------------------------------------------------
// KS validation

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsRow {
    /// Game id, or `ratings` for the global rating row.
    pub subject: String,
    pub n: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub games: Vec<KsRow>,
    pub ratings: Option<KsRow>,
    pub min_sample: usize,
}

impl KsReport {
    /// True when no game had enough plays to test.
    pub fn is_empty(&self) -> bool {
        self.games.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
        w.write_record(["subject", "n", "statistic", "p_value"]).map_err(err)?;
        for r in self.games.iter().chain(&self.ratings) {
            w.write_record([r.subject.clone(), r.n.to_string(), r.statistic.to_string(), r.p_value.to_string()])
                .map_err(err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }
}

pub const KS_MIN_SAMPLE: usize = 30;

/// KS tests of the normalized dwelling times of every game with at least
/// `min_sample` plays (all splits), plus one test of the normalized ratings.
pub fn ks_validation_report(dataset: &Dataset, min_sample: usize) -> Result<KsReport> {
    let mut times: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let split = &dataset.split;
    for r in split.train.records().iter().chain(split.valid.records()).chain(split.test.records()) {
        times.entry(r.game).or_default().push(r.dwelling_time);
    }
    let mut games = Vec::new();
    for (g, sample) in times {
        if sample.len() < min_sample {
            continue;
        }
        // constant samples cannot be normalized and are skipped
        let Ok(z) = to_standard_normal(&sample, POSITIVE_SHIFT) else {
            continue;
        };
        let ks = ks_test_standard_normal(&z.values)?;
        games.push(KsRow {
            subject: dataset.catalog[g].game_id.clone(),
            n: ks.n,
            statistic: ks.statistic,
            p_value: ks.p_value,
        });
    }
    let ratings: Vec<f64> = dataset.catalog.iter().filter_map(|m| m.avg_rating).collect();
    let ratings = match to_standard_normal(&ratings, POSITIVE_SHIFT) {
        Ok(z) if ratings.len() >= min_sample => {
            let ks = ks_test_standard_normal(&z.values)?;
            Some(KsRow {
                subject: "ratings".into(),
                n: ks.n,
                statistic: ks.statistic,
                p_value: ks.p_value,
            })
        }
        _ => None,
    };
    Ok(KsReport {
        games,
        ratings,
        min_sample,
    })
}

// ---------------------------------------------------------------------------
// connection similarity

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionRow {
    pub graph: String,
    pub edges: usize,
    /// `None` for graphs without edges.
    pub mean_distance: Option<f64>,
    pub mean_cosine: Option<f64>,
}

/// Edge count, mean Euclidean distance and mean cosine similarity of game
/// embeddings over the three raw and three strict category graphs.
pub fn connection_similarity_report(catalog: &[GameMeta], embeddings: &Matrix<f64>) -> Result<Vec<ConnectionRow>> {
    ensure!(
        embeddings.rows() == catalog.len(),
        Shape,
        "{} embeddings for {} games",
        embeddings.rows(),
        catalog.len()
    );
    let mut graphs = Vec::with_capacity(6);
    for c in Category::ALL {
        graphs.push(build_raw_category_graph(catalog, c)?);
    }
    graphs.extend(build_strict_graphs(catalog)?);
    Ok(graphs
        .iter()
        .map(|g| {
            let n = g.n_edges();
            let (mut dist, mut cos) = (0.0, 0.0);
            for &(a, b) in g.edges() {
                let (x, y) = (embeddings.row(a), embeddings.row(b));
                dist += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
                cos += cosine(x, y);
            }
            ConnectionRow {
                graph: g.kind().to_string(),
                edges: n,
                mean_distance: (n > 0).then(|| dist / n as f64),
                mean_cosine: (n > 0).then(|| cos / n as f64),
            }
        })
        .collect())
}

pub fn write_connection_csv<W: Write>(rows: &[ConnectionRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
    w.write_record(["graph", "edges", "mean_distance", "mean_cosine"]).map_err(err)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    for r in rows {
        w.write_record([r.graph.clone(), r.edges.to_string(), opt(r.mean_distance), opt(r.mean_cosine)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

// ---------------------------------------------------------------------------
// top ratio

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopRatioRow {
    pub p: f64,
    pub tr: f64,
    pub delta: f64,
}

/// `TR(p)` and `ΔTR(p)` on `p = 0.1..1.0` from player counts over all splits.
pub fn top_ratio_report(dataset: &Dataset) -> Result<Vec<TopRatioRow>> {
    let mut counts = vec![0usize; dataset.n_games()];
    let split = &dataset.split;
    for r in split.train.records().iter().chain(split.valid.records()).chain(split.test.records()) {
        counts[r.game] += 1;
    }
    Ok(top_ratio_grid(&counts)?
        .into_iter()
        .map(|(p, tr, delta)| TopRatioRow { p, tr, delta })
        .collect())
}
