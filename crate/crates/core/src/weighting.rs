//! Player–game edge weights: signed preference weights from the Fisher-statistic
//! comparison of dwelling time and rating, static popularity weights, and their sum.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{GameMeta, IdMap, PopularityPartition};
use crate::error::{ensure, Result};
use crate::graphs::BipartiteGraph;
use crate::scalar::Scalar;
use crate::stats::{self, DensityConvention, QuantileMode};

/// Shift added to dwelling times and ratings so Box-Cox sees positive input.
pub const POSITIVE_SHIFT: f64 = 1.0;
/// Samples smaller than this are left unmapped (all zeros).
pub const MIN_TIME_SAMPLE: usize = 3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeNormalization {
    /// Each game's players form one sample.
    #[default]
    PerGame,
    /// Each player's games form one sample.
    PerPlayer,
}

/// Dwelling times per edge and ratings per game, both mapped to approximately N(0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct MappedPreferences<T> {
    pub edge_time: Vec<T>,
    /// `None` for games without a rating; their edges never get a preference weight.
    pub game_rating: Vec<Option<T>>,
}

pub fn map_preferences<T: Scalar>(
    graph: &BipartiteGraph,
    catalog: &[GameMeta],
    normalization: TimeNormalization,
) -> Result<MappedPreferences<T>> {
    ensure!(
        catalog.len() == graph.n_games(),
        Shape,
        "catalog has {} games, graph has {}",
        catalog.len(),
        graph.n_games()
    );
    let times = graph.dwelling_times();
    let mut edge_time = vec![T::zero(); graph.n_edges()];
    let groups: Vec<Vec<usize>> = match normalization {
        TimeNormalization::PerGame => (0..graph.n_games()).map(|i| graph.game_edges(i).to_vec()).collect(),
        TimeNormalization::PerPlayer => (0..graph.n_players()).map(|u| graph.player_edges(u).collect()).collect(),
    };
    for group in groups {
        if group.len() < MIN_TIME_SAMPLE {
            continue;
        }
        let sample: Vec<T> = group.iter().map(|&e| T::lit(times[e])).collect();
        // degenerate samples (all equal) stay at zero
        if let Ok(z) = stats::to_standard_normal(&sample, T::lit(POSITIVE_SHIFT)) {
            for (&e, v) in group.iter().zip(z.values) {
                edge_time[e] = v;
            }
        }
    }

    let rated: Vec<(usize, T)> = catalog
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.avg_rating.map(|r| (i, T::lit(r))))
        .collect();
    let mut game_rating = vec![None; catalog.len()];
    if rated.len() >= MIN_TIME_SAMPLE {
        let sample: Vec<T> = rated.iter().map(|r| r.1).collect();
        if let Ok(z) = stats::to_standard_normal(&sample, T::lit(POSITIVE_SHIFT)) {
            for (&(i, _), v) in rated.iter().zip(z.values) {
                game_rating[i] = Some(v);
            }
        }
    }
    Ok(MappedPreferences { edge_time, game_rating })
}

/// Per-edge weights aligned with `BipartiteGraph::edges`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeWeightMap<T> {
    pub weights: Vec<T>,
    /// `None` when preference weighting is disabled.
    pub alpha: Option<f64>,
    pub mode: QuantileMode,
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl<T: Scalar> EdgeWeightMap<T> {
    fn from_weights(weights: Vec<T>, alpha: Option<f64>, mode: QuantileMode) -> Self {
        let positive = weights.iter().filter(|&&w| w > T::zero()).count();
        let negative = weights.iter().filter(|&&w| w < T::zero()).count();
        let zero = weights.len() - positive - negative;
        Self {
            weights,
            alpha,
            mode,
            positive,
            negative,
            zero,
        }
    }

    /// All-zero map, used when preference weighting is switched off.
    pub fn disabled(n_edges: usize) -> Self {
        Self::from_weights(vec![T::zero(); n_edges], None, QuantileMode::default())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Preference weight of one edge: `sign · I(t, r)` when `t²/r² > Q`, else 0.
pub fn preference_weight<T: Scalar>(t: T, r: T, q: T, density: DensityConvention) -> T {
    match stats::per_sign(t, r, q) {
        0 => T::zero(),
        s => T::lit(f64::from(s)) * stats::information_content_with(t, r, density),
    }
}

/// Signed preference weights for every edge of `graph`.
pub fn per_edge_weights<T: Scalar>(
    graph: &BipartiteGraph,
    mapped: &MappedPreferences<T>,
    alpha: f64,
    mode: QuantileMode,
    density: DensityConvention,
) -> Result<EdgeWeightMap<T>> {
    ensure!(
        mapped.edge_time.len() == graph.n_edges() && mapped.game_rating.len() == graph.n_games(),
        Shape,
        "mapped preferences do not align with the bipartite graph"
    );
    let q: T = stats::fisher_upper_quantile(T::lit(alpha), mode)?;
    let weights = graph
        .edges()
        .iter()
        .zip(&mapped.edge_time)
        .map(|(&(_, i), &t)| match mapped.game_rating[i] {
            Some(r) => preference_weight(t, r, q, density),
            None => T::zero(),
        })
        .collect();
    Ok(EdgeWeightMap::from_weights(weights, Some(alpha), mode))
}

/// Popularity-guided edge and node weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityWeights<T> {
    pub theta_e_hot: T,
    pub theta_n_hot: T,
    pub theta_n_cold: T,
    pub partition: PopularityPartition,
}

pub fn penr_weights<T: Scalar>(
    partition: PopularityPartition,
    theta_e_hot: T,
    theta_n_hot: T,
    theta_n_cold: T,
) -> Result<PopularityWeights<T>> {
    ensure!(
        theta_e_hot > T::zero() && theta_n_hot > T::zero() && theta_n_cold > T::zero(),
        InvalidArgument,
        "popularity weights must be positive, got {theta_e_hot}/{theta_n_hot}/{theta_n_cold}"
    );
    Ok(PopularityWeights {
        theta_e_hot,
        theta_n_hot,
        theta_n_cold,
        partition,
    })
}

impl<T: Scalar> PopularityWeights<T> {
    /// Weight of edges leaving game `i`.
    pub fn edge_weight(&self, game: usize) -> T {
        if self.partition.is_hot(game) {
            self.theta_e_hot
        } else {
            T::one()
        }
    }

    pub fn node_weight(&self, game: usize) -> T {
        if self.partition.is_hot(game) {
            self.theta_n_hot
        } else if self.partition.is_cold(game) {
            self.theta_n_cold
        } else {
            T::one()
        }
    }

    pub fn node_weights(&self, n_games: usize) -> Vec<T> {
        (0..n_games).map(|i| self.node_weight(i)).collect()
    }

    /// Edge weights aligned with `graph.edges()`.
    pub fn per_edge(&self, graph: &BipartiteGraph) -> Vec<T> {
        graph.edges().iter().map(|&(_, i)| self.edge_weight(i)).collect()
    }
}

/// Elementwise sum of preference and popularity edge weights.
pub fn combine_weights<T: Scalar>(per: &EdgeWeightMap<T>, penr_edge: &[T]) -> Result<EdgeWeightMap<T>> {
    ensure!(
        per.len() == penr_edge.len(),
        Shape,
        "preference map has {} edges, popularity map has {}",
        per.len(),
        penr_edge.len()
    );
    let weights = per.weights.iter().zip(penr_edge).map(|(&a, &b)| a + b).collect();
    Ok(EdgeWeightMap::from_weights(weights, per.alpha, per.mode))
}

/// Writes `player_id game_id per_weight penr_edge combined` lines.
pub fn write_weight_dump<T: Scalar, W: Write>(
    mut out: W,
    graph: &BipartiteGraph,
    ids: &IdMap,
    per: &EdgeWeightMap<T>,
    penr_edge: &[T],
    combined: &EdgeWeightMap<T>,
) -> std::io::Result<()> {
    for (e, &(u, i)) in graph.edges().iter().enumerate() {
        writeln!(
            out,
            "{} {} {} {} {}",
            ids.players[u], ids.games[i], per.weights[e], penr_edge[e], combined.weights[e]
        )?;
    }
    Ok(())
}
