//! Builds graphs and edge/node weights from a split dataset.

use serde::{Deserialize, Serialize};

use crate::dataset::{popularity_partition, Dataset};
use crate::error::{ensure, Result};
use crate::graphs::{build_bipartite_graph, build_connectivity_graph, build_strict_graphs, BipartiteGraph, CategoryGraph};
use crate::model::Operators;
use crate::scalar::Scalar;
use crate::stats::{DensityConvention, QuantileMode};
use crate::weighting::{
    combine_weights, map_preferences, penr_weights, per_edge_weights, EdgeWeightMap, MappedPreferences,
    PopularityWeights, TimeNormalization,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceConfig {
    /// Significance level; `0` switches preference weighting off.
    pub alpha: f64,
    pub quantile_mode: QuantileMode,
    pub density: DensityConvention,
    pub time_normalization: TimeNormalization,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            quantile_mode: QuantileMode::Algorithm,
            density: DensityConvention::FullExponent,
            time_normalization: TimeNormalization::PerGame,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopularityConfig {
    pub hot_fraction: f64,
    pub cold_fraction: f64,
    pub theta_e_hot: f64,
    pub theta_n_hot: f64,
    pub theta_n_cold: f64,
}

impl Default for PopularityConfig {
    fn default() -> Self {
        Self {
            hot_fraction: 0.2,
            cold_fraction: 0.2,
            theta_e_hot: 5.0,
            theta_n_hot: 0.2,
            theta_n_cold: 6.0,
        }
    }
}

/// Graphs and weights derived from the training split.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub bipartite: BipartiteGraph,
    /// Genre&developer, genre&publisher, developer&publisher.
    pub strict: [CategoryGraph; 3],
    pub connectivity: CategoryGraph,
    pub mapped: MappedPreferences<f64>,
    pub preference: EdgeWeightMap<f64>,
    pub popularity: PopularityWeights<f64>,
    pub popularity_edge: Vec<f64>,
    pub combined: EdgeWeightMap<f64>,
}

pub fn prepare(dataset: &Dataset, pref: &PreferenceConfig, pop: &PopularityConfig) -> Result<Prepared> {
    ensure!(
        pref.alpha == 0.0 || (pref.alpha > 0.0 && pref.alpha <= 0.5),
        InvalidArgument,
        "alpha must be 0 (disabled) or lie in (0, 0.5], got {}",
        pref.alpha
    );
    let bipartite = build_bipartite_graph(&dataset.split.train, dataset.n_players(), dataset.n_games())?;
    let strict = build_strict_graphs(&dataset.catalog)?;
    let connectivity = build_connectivity_graph(&dataset.catalog)?;
    let mapped = map_preferences(&bipartite, &dataset.catalog, pref.time_normalization)?;
    let preference = if pref.alpha == 0.0 {
        EdgeWeightMap::disabled(bipartite.n_edges())
    } else {
        per_edge_weights(&bipartite, &mapped, pref.alpha, pref.quantile_mode, pref.density)?
    };
    let partition = popularity_partition(&dataset.train_counts(), pop.hot_fraction, pop.cold_fraction)?;
    let popularity = penr_weights(partition, pop.theta_e_hot, pop.theta_n_hot, pop.theta_n_cold)?;
    let popularity_edge = popularity.per_edge(&bipartite);
    let combined = combine_weights(&preference, &popularity_edge)?;
    Ok(Prepared {
        bipartite,
        strict,
        connectivity,
        mapped,
        preference,
        popularity,
        popularity_edge,
        combined,
    })
}

impl Prepared {
    pub fn operators<T: Scalar>(&self) -> Result<Operators<T>> {
        let edge: Vec<T> = self.combined.weights.iter().map(|&w| T::lit(w)).collect();
        let node: Vec<T> = self
            .popularity
            .node_weights(self.bipartite.n_games())
            .into_iter()
            .map(T::lit)
            .collect();
        Operators::new(&self.strict, &self.connectivity, &self.bipartite, &edge, &node)
    }
}
