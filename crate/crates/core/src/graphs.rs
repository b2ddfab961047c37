//! Game–game category graphs and the player–game bipartite graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::{Category, GameMeta, InteractionTable};
use crate::error::{ensure, Error, Result};
use crate::linalg::{Csr, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GraphKind {
    /// Games sharing a label of one category.
    Raw(Category),
    /// Games sharing labels in both categories.
    Strict(Category, Category),
    /// Union of the three raw graphs.
    Connectivity,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Raw(c) => write!(f, "raw({c})"),
            GraphKind::Strict(a, b) => write!(f, "strict({}&{})", a.short(), b.short()),
            GraphKind::Connectivity => f.write_str("connectivity"),
        }
    }
}

/// Simple undirected graph over game indices, stored as sorted adjacency lists.
/// `edge_ids` runs parallel to `neighbors` and points into `edges`.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryGraph {
    n_nodes: usize,
    kind: GraphKind,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    edge_ids: Vec<usize>,
}

impl CategoryGraph {
    /// Builds from unordered pairs; self-loops and duplicates are dropped.
    pub fn from_edges(n_nodes: usize, kind: GraphKind, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let set: BTreeSet<(usize, usize)> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (a.min(b), a.max(b)))
            .inspect(|&(_, b)| assert!(b < n_nodes, "edge endpoint out of range"))
            .collect();
        let edges: Vec<(usize, usize)> = set.into_iter().collect();

        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_nodes];
        for (id, &(a, b)) in edges.iter().enumerate() {
            adj[a].push((b, id));
            adj[b].push((a, id));
        }
        let mut offsets = Vec::with_capacity(n_nodes + 1);
        let mut neighbors = Vec::with_capacity(2 * edges.len());
        let mut edge_ids = Vec::with_capacity(2 * edges.len());
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            for (nb, id) in list {
                neighbors.push(nb);
                edge_ids.push(id);
            }
            offsets.push(neighbors.len());
        }
        Self {
            n_nodes,
            kind,
            edges,
            offsets,
            neighbors,
            edge_ids,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn neighbor_edge_ids(&self, node: usize) -> &[usize] {
        &self.edge_ids[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    /// `D^{-1/2} A D^{-1/2}` without self-loops; isolated nodes get empty rows.
    pub fn normalized_adjacency<T: Scalar>(&self) -> Csr<T> {
        let mut triplets = Vec::with_capacity(2 * self.edges.len());
        for &(a, b) in &self.edges {
            let w = T::one() / T::from_usize_lossy(self.degree(a) * self.degree(b)).sqrt();
            triplets.push((a, b, w));
            triplets.push((b, a, w));
        }
        Csr::from_triplets(self.n_nodes, self.n_nodes, triplets)
    }

    /// Combinatorial Laplacian `D - A` as a dense matrix.
    pub fn laplacian<T: Scalar>(&self) -> Matrix<T> {
        let mut l = Matrix::zeros(self.n_nodes, self.n_nodes);
        for i in 0..self.n_nodes {
            l.set(i, i, T::from_usize_lossy(self.degree(i)));
        }
        for &(a, b) in &self.edges {
            l.set(a, b, -T::one());
            l.set(b, a, -T::one());
        }
        l
    }

    /// Writes `src dst [weight]` lines.
    pub fn write_edge_list<W: Write>(&self, mut out: W, weights: Option<&[f64]>) -> std::io::Result<()> {
        for (id, &(a, b)) in self.edges.iter().enumerate() {
            match weights {
                Some(w) => writeln!(out, "{a} {b} {}", w[id])?,
                None => writeln!(out, "{a} {b}")?,
            }
        }
        Ok(())
    }
}

fn label_pairs(catalog: &[GameMeta], category: Category) -> BTreeSet<(usize, usize)> {
    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, meta) in catalog.iter().enumerate() {
        for label in meta.labels(category) {
            by_label.entry(label.as_str()).or_default().push(i);
        }
    }
    let mut pairs = BTreeSet::new();
    for games in by_label.values() {
        for (k, &a) in games.iter().enumerate() {
            for &b in &games[k + 1..] {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
    }
    pairs
}

/// Edge iff the two games share a label of `category`. Empty label sets never match.
pub fn build_raw_category_graph(catalog: &[GameMeta], category: Category) -> Result<CategoryGraph> {
    ensure!(!catalog.is_empty(), InvalidArgument, "empty catalog");
    Ok(CategoryGraph::from_edges(
        catalog.len(),
        GraphKind::Raw(category),
        label_pairs(catalog, category),
    ))
}

/// Edge iff the games share labels in both `a` and `b`.
pub fn build_strict_graph(catalog: &[GameMeta], a: Category, b: Category) -> Result<CategoryGraph> {
    ensure!(a != b, InvalidArgument, "strict graph needs two distinct categories, got {a} twice");
    ensure!(!catalog.is_empty(), InvalidArgument, "empty catalog");
    let pa = label_pairs(catalog, a);
    let pb = label_pairs(catalog, b);
    Ok(CategoryGraph::from_edges(
        catalog.len(),
        GraphKind::Strict(a, b),
        pa.intersection(&pb).copied(),
    ))
}

/// Edge iff the games share at least one label in any category.
pub fn build_connectivity_graph(catalog: &[GameMeta]) -> Result<CategoryGraph> {
    ensure!(!catalog.is_empty(), InvalidArgument, "empty catalog");
    let mut all = BTreeSet::new();
    for c in Category::ALL {
        all.extend(label_pairs(catalog, c));
    }
    Ok(CategoryGraph::from_edges(catalog.len(), GraphKind::Connectivity, all))
}

/// The three strict graphs in `(g&d, g&p, d&p)` order.
pub fn build_strict_graphs(catalog: &[GameMeta]) -> Result<[CategoryGraph; 3]> {
    use Category::*;
    Ok([
        build_strict_graph(catalog, Genre, Developer)?,
        build_strict_graph(catalog, Genre, Publisher)?,
        build_strict_graph(catalog, Developer, Publisher)?,
    ])
}

/// Player–game graph. Edges are sorted by `(player, game)`; per-edge dwelling
/// times run parallel to `edges`.
#[derive(Clone, Debug, PartialEq)]
pub struct BipartiteGraph {
    n_players: usize,
    n_games: usize,
    edges: Vec<(usize, usize)>,
    dwelling_times: Vec<f64>,
    player_offsets: Vec<usize>,
    game_offsets: Vec<usize>,
    game_edge_ids: Vec<usize>,
}

impl BipartiteGraph {
    pub fn from_pairs(n_players: usize, n_games: usize, pairs: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut rows: Vec<(usize, usize, f64)> = pairs.into_iter().collect();
        for &(u, i, _) in &rows {
            ensure!(
                u < n_players && i < n_games,
                InvalidArgument,
                "edge ({u}, {i}) outside {n_players} players x {n_games} games"
            );
        }
        rows.sort_by_key(|r| (r.0, r.1));
        if rows.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::Validation("duplicate player-game edge".into()));
        }
        let edges: Vec<(usize, usize)> = rows.iter().map(|&(u, i, _)| (u, i)).collect();
        let dwelling_times = rows.iter().map(|r| r.2).collect();

        let mut player_offsets = vec![0usize; n_players + 1];
        let mut game_offsets = vec![0usize; n_games + 1];
        for &(u, i) in &edges {
            player_offsets[u + 1] += 1;
            game_offsets[i + 1] += 1;
        }
        for k in 0..n_players {
            player_offsets[k + 1] += player_offsets[k];
        }
        for k in 0..n_games {
            game_offsets[k + 1] += game_offsets[k];
        }
        let mut fill = game_offsets.clone();
        let mut game_edge_ids = vec![0usize; edges.len()];
        for (id, &(_, i)) in edges.iter().enumerate() {
            game_edge_ids[fill[i]] = id;
            fill[i] += 1;
        }
        Ok(Self {
            n_players,
            n_games,
            edges,
            dwelling_times,
            player_offsets,
            game_offsets,
            game_edge_ids,
        })
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_games(&self) -> usize {
        self.n_games
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn dwelling_times(&self) -> &[f64] {
        &self.dwelling_times
    }

    /// `|N_u|`
    pub fn player_degree(&self, u: usize) -> usize {
        self.player_offsets[u + 1] - self.player_offsets[u]
    }

    /// `|N_i|`
    pub fn game_degree(&self, i: usize) -> usize {
        self.game_offsets[i + 1] - self.game_offsets[i]
    }

    /// Edge ids incident to player `u`, which are contiguous.
    pub fn player_edges(&self, u: usize) -> std::ops::Range<usize> {
        self.player_offsets[u]..self.player_offsets[u + 1]
    }

    pub fn game_edges(&self, i: usize) -> &[usize] {
        &self.game_edge_ids[self.game_offsets[i]..self.game_offsets[i + 1]]
    }

    pub fn player_games(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges[self.player_edges(u)].iter().map(|e| e.1)
    }

    pub fn has_edge(&self, u: usize, i: usize) -> bool {
        self.edge_index(u, i).is_some()
    }

    /// Position of edge `(u, i)` in [`Self::edges`].
    pub fn edge_index(&self, u: usize, i: usize) -> Option<usize> {
        let span = self.player_edges(u);
        self.edges[span.clone()].binary_search(&(u, i)).ok().map(|k| span.start + k)
    }
}

/// One edge per training `(player, game)` pair.
pub fn build_bipartite_graph(train: &InteractionTable, n_players: usize, n_games: usize) -> Result<BipartiteGraph> {
    BipartiteGraph::from_pairs(
        n_players,
        n_games,
        train.records().iter().map(|r| (r.player, r.game, r.dwelling_time)),
    )
}
