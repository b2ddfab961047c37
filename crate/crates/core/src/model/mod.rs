//! The recommender: strict-graph, connectivity-graph and player–game branches,
//! their fusion, the reweighted pairwise loss, and training.

mod checkpoint;
mod config;
mod optim;
mod propagate;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{id_map_digest, Checkpoint, CHECKPOINT_VERSION};
pub use config::{layer_weights, TrainConfig};
pub use optim::Adam;
pub use propagate::{
    bpr_nsr_loss, fuse_item_embedding, fusion_weights, graphwise_attention, layerwise_attention, lightgcn_propagate,
    nsr_reweight, penr_operator, penr_propagate, Attended, AttentionParams, AttentionVars,
};
pub use train::{train, EpochStats, Trainer, Triple};

use crate::autodiff::{Tape, Var};
use crate::error::{ensure, Result};
use crate::graphs::{BipartiteGraph, CategoryGraph};
use crate::linalg::{Csr, Matrix};
use crate::nn::normal_matrix;
use crate::prg::{FusionParams, Side};
use crate::scalar::Scalar;

/// Fixed propagation operators derived from the training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Operators<T> {
    pub n_players: usize,
    pub n_games: usize,
    /// Normalised adjacency of the genre&developer, genre&publisher and developer&publisher graphs.
    pub strict: Vec<Csr<T>>,
    pub connectivity: Csr<T>,
    /// Reweighted operator over stacked `[players; games]`.
    pub bipartite: Csr<T>,
    /// Train games per player, excluded from recommendations.
    pub train_items: Vec<Vec<usize>>,
}

impl<T: Scalar> Operators<T> {
    pub fn new(
        strict: &[CategoryGraph; 3],
        connectivity: &CategoryGraph,
        bipartite: &BipartiteGraph,
        edge_weights: &[T],
        node_weights: &[T],
    ) -> Result<Self> {
        let n_games = bipartite.n_games();
        ensure!(
            strict.iter().all(|g| g.n_nodes() == n_games) && connectivity.n_nodes() == n_games,
            Shape,
            "game graphs and player-game graph disagree on the number of games"
        );
        Ok(Self {
            n_players: bipartite.n_players(),
            n_games,
            strict: strict.iter().map(|g| g.normalized_adjacency()).collect(),
            connectivity: connectivity.normalized_adjacency(),
            bipartite: penr_operator(bipartite, edge_weights, node_weights)?,
            train_items: (0..bipartite.n_players())
                .map(|u| bipartite.player_games(u).collect())
                .collect(),
        })
    }
}

/// Fixed description embeddings fed to the fusion layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescriptionInputs<T> {
    pub games: Matrix<T>,
    pub players: Matrix<T>,
}

/// Every learnable tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub players: Matrix<T>,
    pub games: Matrix<T>,
    pub graph_attention: AttentionParams<T>,
    pub layer_attention: AttentionParams<T>,
    /// `1 × 3` logits for the strict, connectivity and player–game branches.
    pub fusion_logits: Matrix<T>,
    pub prg: Option<FusionParams<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut v = vec![&self.players, &self.games];
        v.extend(self.graph_attention.tensors());
        v.extend(self.layer_attention.tensors());
        v.push(&self.fusion_logits);
        if let Some(p) = &self.prg {
            v.extend(p.tensors());
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = vec![&mut self.players, &mut self.games];
        v.extend(self.graph_attention.tensors_mut());
        v.extend(self.layer_attention.tensors_mut());
        v.push(&mut self.fusion_logits);
        if let Some(p) = &mut self.prg {
            v.extend(p.tensors_mut());
        }
        v
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn sum_squares(&self) -> T {
        self.tensors().iter().map(|m| m.sum_squares()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }
}

/// Final player and game representations.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings<T> {
    pub players: Matrix<T>,
    pub games: Matrix<T>,
}

/// Positive/negative index lists of one training batch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Batch {
    pub players: Vec<usize>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl Batch {
    pub fn from_triples(triples: &[Triple]) -> Self {
        Self {
            players: triples.iter().map(|t| t.player).collect(),
            positives: triples.iter().map(|t| t.positive).collect(),
            negatives: triples.iter().map(|t| t.negative).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model<T> {
    pub config: TrainConfig,
    pub ops: Operators<T>,
    pub params: Params<T>,
    pub descriptions: Option<DescriptionInputs<T>>,
}

impl<T: Scalar> Model<T> {
    /// Initialises parameters from `config.seed`. Description inputs are
    /// required exactly when `config.fusion` is set.
    pub fn new(config: TrainConfig, ops: Operators<T>, descriptions: Option<DescriptionInputs<T>>) -> Result<Self> {
        config.validate()?;
        ensure!(
            ops.strict.len() == 3,
            Shape,
            "expected three strict-graph operators, got {}",
            ops.strict.len()
        );
        ensure!(
            config.fusion.is_some() == descriptions.is_some(),
            InvalidArgument,
            "description embeddings must be supplied exactly when fusion is enabled"
        );
        let d = config.d_shared;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let players = normal_matrix(&mut rng, ops.n_players, d, config.init_std);
        let games = normal_matrix(&mut rng, ops.n_games, d, config.init_std);
        let graph_attention = AttentionParams::new(&mut rng, d);
        let layer_attention = AttentionParams::new(&mut rng, d);
        let prg = match (&config.fusion, &descriptions) {
            (Some(mode), Some(desc)) => {
                ensure!(
                    desc.games.rows() == ops.n_games
                        && desc.players.rows() == ops.n_players
                        && desc.games.cols() == desc.players.cols(),
                    Shape,
                    "description embeddings do not match the entity counts"
                );
                Some(FusionParams::new(&mut rng, *mode, desc.games.cols(), config.d_hidden, d))
            }
            _ => None,
        };
        Ok(Self {
            config,
            ops,
            params: Params {
                players,
                games,
                graph_attention,
                layer_attention,
                fusion_logits: Matrix::zeros(1, 3),
                prg,
            },
            descriptions,
        })
    }

    /// Records the full forward pass. Returns the parameter leaves (in
    /// [`Params::tensors`] order) and the final player and game rows.
    pub fn forward<'g>(&'g self, tape: &mut Tape<'g, T>) -> (Vec<Var>, Var, Var) {
        let p = &self.params;
        // parameter leaves are recorded contiguously, in `Params::tensors` order
        let start = tape.len();
        let players = tape.leaf(p.players.clone());
        let games = tape.leaf(p.games.clone());
        let graph_att = p.graph_attention.leaves(tape);
        let layer_att = p.layer_attention.leaves(tape);
        let logits = tape.leaf(p.fusion_logits.clone());
        let prg = p.prg.as_ref().map(|f| f.leaves(tape));
        let leaves: Vec<Var> = (start..tape.len()).map(Var::from_index).collect();

        // strict graphs: mean of layers 0..=L, then graph-wise attention
        let mut strict_out = Vec::with_capacity(3);
        for op in &self.ops.strict {
            let mut x = games;
            let mut acc = games;
            for _ in 0..self.config.sgc_layers {
                x = tape.sparse(op, x);
                acc = tape.add(acc, x);
            }
            strict_out.push(tape.scale(acc, T::lit(1.0 / (self.config.sgc_layers + 1) as f64)));
        }
        let (e_ca, _) = graph_att.apply(tape, &strict_out);

        // connectivity graph: decayed layers 1..=k, then layer-wise attention
        let w = layer_weights(self.config.k_layers, self.config.beta).expect("validated config");
        let mut x = games;
        let mut layers = Vec::with_capacity(self.config.k_layers);
        for wl in w {
            x = tape.sparse(&self.ops.connectivity, x);
            layers.push(tape.scale(x, T::lit(wl)));
        }
        let (e_co, _) = layer_att.apply(tape, &layers);

        // player–game graph: layer k only
        let mut x = tape.vstack(players, games);
        for _ in 0..self.config.k_layers {
            x = tape.sparse(&self.ops.bipartite, x);
        }
        let e_u = tape.rows(x, 0, self.ops.n_players);
        let e_po = tape.rows(x, self.ops.n_players, self.ops.n_games);

        let fw = tape.row_softmax(logits);
        let a = tape.entry_scale(e_ca, fw, 0);
        let b = tape.entry_scale(e_co, fw, 1);
        let c = tape.entry_scale(e_po, fw, 2);
        let ab = tape.add(a, b);
        let mut e_i = tape.add(ab, c);
        let mut e_u = e_u;

        if let (Some(vars), Some(desc)) = (prg, &self.descriptions) {
            let dg = tape.leaf(desc.games.clone());
            let dp = tape.leaf(desc.players.clone());
            e_i = vars.integrate(tape, Side::Game, e_i, dg);
            e_u = vars.integrate(tape, Side::Player, e_u, dp);
        }
        (leaves, e_u, e_i)
    }

    /// Final representations used for scoring.
    pub fn embeddings(&self) -> Embeddings<T> {
        let mut tape = Tape::new();
        let (_, u, i) = self.forward(&mut tape);
        Embeddings {
            players: tape.value(u).clone(),
            games: tape.value(i).clone(),
        }
    }

    /// Records the batch loss on `tape` and returns its node with the parameter leaves.
    fn loss_on_tape<'g>(&'g self, tape: &mut Tape<'g, T>, batch: &Batch) -> (Vec<Var>, Var) {
        let (leaves, e_u, e_i) = self.forward(tape);
        let u = tape.gather(e_u, batch.players.clone());
        let pos = tape.gather(e_i, batch.positives.clone());
        let neg = tape.gather(e_i, batch.negatives.clone());
        let rp = tape.row_dot(u, pos);
        let rn = tape.row_dot(u, neg);
        let rn = tape.nsr(rn, T::lit(self.config.m_nsr));
        let diff = tape.sub(rp, rn);
        let data = tape.neg_log_sigmoid_sum(diff);
        let mut reg = None;
        for &leaf in &leaves {
            let s = tape.sum_squares(leaf);
            reg = Some(match reg {
                None => s,
                Some(acc) => tape.add(acc, s),
            });
        }
        let reg = tape.scale(reg.expect("model has parameters"), T::lit(self.config.lambda_norm));
        (leaves, tape.add(data, reg))
    }

    /// Batch loss without gradients.
    pub fn loss(&self, batch: &Batch) -> T {
        let mut tape = Tape::new();
        let (_, l) = self.loss_on_tape(&mut tape, batch);
        tape.value(l).get(0, 0)
    }

    /// Batch loss and its gradient for every tensor in [`Params::tensors`] order.
    pub fn loss_and_grads(&self, batch: &Batch) -> (T, Vec<Matrix<T>>) {
        let mut tape = Tape::new();
        let (leaves, l) = self.loss_on_tape(&mut tape, batch);
        let mut grads = tape.backward(l);
        let out = leaves
            .iter()
            .map(|v| {
                grads[v.index()].take().unwrap_or_else(|| {
                    let (r, c) = tape.value(*v).shape();
                    Matrix::zeros(r, c)
                })
            })
            .collect();
        (tape.value(l).get(0, 0), out)
    }

    /// Player-by-game score matrix `E_u E_iᵀ`.
    pub fn scores(&self) -> Matrix<T> {
        let e = self.embeddings();
        e.players.matmul_t(&e.games)
    }

    /// Top-`k` unseen games for every player.
    pub fn recommend_all(&self, k: usize) -> Vec<Vec<usize>> {
        let s = self.scores();
        (0..self.ops.n_players)
            .map(|u| recommend_top_k(s.row(u), &self.ops.train_items[u], k))
            .collect()
    }
}

/// The `k` highest-scoring games outside `history`; ties go to the lower index.
pub fn recommend_top_k<T: Scalar>(scores: &[T], history: &[usize], k: usize) -> Vec<usize> {
    let mut seen = vec![false; scores.len()];
    for &i in history {
        if i < seen.len() {
            seen[i] = true;
        }
    }
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&i| !seen[i]).collect();
    cand.sort_by(|&a, &b| scores[b].as_f64().total_cmp(&scores[a].as_f64()).then(a.cmp(&b)));
    cand.truncate(k);
    cand
}
