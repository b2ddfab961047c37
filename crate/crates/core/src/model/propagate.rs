//! Graph propagation, attention, and fusion, both as plain functions and as
//! tape operations used during training.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::layer_weights;
use crate::autodiff::{Tape, Var};
use crate::error::{ensure, Result};
use crate::graphs::{BipartiteGraph, CategoryGraph};
use crate::linalg::{Csr, Matrix};
use crate::nn::glorot;
use crate::scalar::{sigmoid, Scalar};

/// Additive attention `softmax_j(qᵀ tanh(W x_j + b))` with shared `W`, `b`, `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams<T> {
    pub w: Matrix<T>,
    pub b: Matrix<T>,
    pub q: Matrix<T>,
}

impl<T: Scalar> AttentionParams<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        Self {
            w: glorot(rng, d, d),
            b: Matrix::zeros(1, d),
            q: glorot(rng, d, 1),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            w: Matrix::zeros(d, d),
            b: Matrix::zeros(1, d),
            q: Matrix::zeros(d, 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        vec![&self.w, &self.b, &self.q]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.w, &mut self.b, &mut self.q]
    }

    pub fn leaves(&self, tape: &mut Tape<'_, T>) -> AttentionVars {
        AttentionVars {
            w: tape.leaf(self.w.clone()),
            b: tape.leaf(self.b.clone()),
            q: tape.leaf(self.q.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    w: Var,
    b: Var,
    q: Var,
}

impl AttentionVars {
    /// Returns the combined rows and the `n × J` attention weights.
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<'_, T>, inputs: &[Var]) -> (Var, Var) {
        let scores: Vec<Var> = inputs
            .iter()
            .map(|&x| {
                let h = tape.matmul(x, self.w);
                let h = tape.add_bias(h, self.b);
                let h = tape.tanh(h);
                tape.matmul(h, self.q)
            })
            .collect();
        let cat = tape.concat_cols(&scores);
        let weights = tape.row_softmax(cat);
        let mut out = None;
        for (j, &x) in inputs.iter().enumerate() {
            let a = tape.column(weights, j);
            let term = tape.row_scale(x, a);
            out = Some(match out {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        (out.expect("at least one attention input"), weights)
    }
}

/// Output of an attention combination.
#[derive(Clone, Debug, PartialEq)]
pub struct Attended<T> {
    pub output: Matrix<T>,
    /// `n × J` convex weights, one row per entity.
    pub weights: Matrix<T>,
}

fn check_same_shape<T: Scalar>(inputs: &[&Matrix<T>], d: usize) -> Result<()> {
    ensure!(!inputs.is_empty(), InvalidArgument, "attention needs at least one input");
    let shape = inputs[0].shape();
    ensure!(
        inputs.iter().all(|m| m.shape() == shape),
        Shape,
        "attention inputs differ in shape"
    );
    ensure!(shape.1 == d, Shape, "inputs have width {}, attention expects {d}", shape.1);
    Ok(())
}

fn attend<T: Scalar>(inputs: &[&Matrix<T>], params: &AttentionParams<T>) -> Result<Attended<T>> {
    check_same_shape(inputs, params.dim())?;
    let mut tape = Tape::new();
    let vars = params.leaves(&mut tape);
    let xs: Vec<Var> = inputs.iter().map(|m| tape.leaf((*m).clone())).collect();
    let (out, w) = vars.apply(&mut tape, &xs);
    Ok(Attended {
        output: tape.value(out).clone(),
        weights: tape.value(w).clone(),
    })
}

/// Per-game convex combination of the three strict-graph representations.
pub fn graphwise_attention<T: Scalar>(
    e_gd: &Matrix<T>,
    e_gp: &Matrix<T>,
    e_dp: &Matrix<T>,
    params: &AttentionParams<T>,
) -> Result<Attended<T>> {
    attend(&[e_gd, e_gp, e_dp], params)
}

/// Attention over layers `1..=k`, each pre-scaled by its layer weight.
pub fn layerwise_attention<T: Scalar>(
    layer_embs: &[Matrix<T>],
    beta: f64,
    params: &AttentionParams<T>,
) -> Result<Attended<T>> {
    let w = layer_weights(layer_embs.len(), beta)?;
    let scaled: Vec<Matrix<T>> = layer_embs
        .iter()
        .zip(&w)
        .map(|(m, &wl)| m.map(|x| x * T::lit(wl)))
        .collect();
    let refs: Vec<&Matrix<T>> = scaled.iter().collect();
    attend(&refs, params)
}

/// Plain LightGCN layers `1..=layers` on a game graph (no self-loops).
pub fn lightgcn_propagate<T: Scalar>(graph: &CategoryGraph, emb: &Matrix<T>, layers: usize) -> Result<Vec<Matrix<T>>> {
    ensure!(
        emb.rows() == graph.n_nodes(),
        Shape,
        "{} embedding rows for {} graph nodes",
        emb.rows(),
        graph.n_nodes()
    );
    let a = graph.normalized_adjacency::<T>();
    let mut out: Vec<Matrix<T>> = Vec::with_capacity(layers);
    for _ in 0..layers {
        let next = a.mul_dense(out.last().unwrap_or(emb));
        out.push(next);
    }
    Ok(out)
}

/// Player–game propagation operator over the stacked `[players; games]` rows.
///
/// Player rows: `1/|N_u|` on the diagonal and `Θe(e)·Θn(i)/(√|N_u|√|N_i|)` towards
/// each game. Game rows: `Θn(i)/|N_i|` on the diagonal and `1/(√|N_i|√|N_u|)`
/// towards each player. Isolated nodes get an all-zero row.
pub fn penr_operator<T: Scalar>(graph: &BipartiteGraph, edge_weights: &[T], node_weights: &[T]) -> Result<Csr<T>> {
    ensure!(
        edge_weights.len() == graph.n_edges(),
        Shape,
        "{} edge weights for {} edges",
        edge_weights.len(),
        graph.n_edges()
    );
    ensure!(
        node_weights.len() == graph.n_games(),
        Shape,
        "{} node weights for {} games",
        node_weights.len(),
        graph.n_games()
    );
    let nu = graph.n_players();
    let n = nu + graph.n_games();
    let deg_u: Vec<T> = (0..nu).map(|u| T::from_usize_lossy(graph.player_degree(u))).collect();
    let deg_i: Vec<T> = (0..graph.n_games())
        .map(|i| T::from_usize_lossy(graph.game_degree(i)))
        .collect();
    let mut trip = Vec::with_capacity(2 * graph.n_edges() + n);
    for (u, &d) in deg_u.iter().enumerate() {
        if d > T::zero() {
            trip.push((u, u, T::one() / d));
        }
    }
    for (i, &d) in deg_i.iter().enumerate() {
        if d > T::zero() {
            trip.push((nu + i, nu + i, node_weights[i] / d));
        }
    }
    for (e, &(u, i)) in graph.edges().iter().enumerate() {
        let c = T::one() / (deg_u[u].sqrt() * deg_i[i].sqrt());
        trip.push((u, nu + i, edge_weights[e] * node_weights[i] * c));
        trip.push((nu + i, u, c));
    }
    Ok(Csr::from_triplets(n, n, trip))
}

/// `k` reweighted player–game layers; returns the layer-`k` player and game rows.
pub fn penr_propagate<T: Scalar>(
    graph: &BipartiteGraph,
    edge_weights: &[T],
    node_weights: &[T],
    e_u: &Matrix<T>,
    e_i: &Matrix<T>,
    k: usize,
) -> Result<(Matrix<T>, Matrix<T>)> {
    ensure!(k >= 1, InvalidArgument, "at least one layer is required");
    ensure!(
        e_u.rows() == graph.n_players() && e_i.rows() == graph.n_games() && e_u.cols() == e_i.cols(),
        Shape,
        "embedding tables do not match the graph"
    );
    let p = penr_operator(graph, edge_weights, node_weights)?;
    let mut data = e_u.as_slice().to_vec();
    data.extend_from_slice(e_i.as_slice());
    let mut x = Matrix::from_vec(e_u.rows() + e_i.rows(), e_u.cols(), data)?;
    for _ in 0..k {
        x = p.mul_dense(&x);
    }
    let split = e_u.rows() * e_u.cols();
    let (a, b) = x.as_slice().split_at(split);
    Ok((
        Matrix::from_vec(e_u.rows(), e_u.cols(), a.to_vec())?,
        Matrix::from_vec(e_i.rows(), e_i.cols(), b.to_vec())?,
    ))
}

/// Softmax of the three fusion logits.
pub fn fusion_weights<T: Scalar>(logits: [T; 3]) -> [T; 3] {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e = logits.map(|l| (l - m).exp());
    let z = e[0] + e[1] + e[2];
    e.map(|x| x / z)
}

/// `w_Ca·e_Ca + w_Co·e_Co + w_Po·e_Po` with softmax weights.
pub fn fuse_item_embedding<T: Scalar>(
    e_ca: &Matrix<T>,
    e_co: &Matrix<T>,
    e_po: &Matrix<T>,
    logits: [T; 3],
) -> Result<Matrix<T>> {
    ensure!(
        e_ca.shape() == e_co.shape() && e_co.shape() == e_po.shape(),
        Shape,
        "fusion inputs differ in shape"
    );
    let w = fusion_weights(logits);
    let mut out = e_ca.map(|x| x * w[0]);
    out.axpy(w[1], e_co);
    out.axpy(w[2], e_po);
    Ok(out)
}

/// Reweighted negative score `m · σ(r) · r`.
pub fn nsr_reweight<T: Scalar>(r: T, m: T) -> T {
    m * sigmoid(r) * r
}

/// `−Σ ln σ(r_pos − m·σ(r_neg)·r_neg) + λ·‖Θ‖²`, with `‖Θ‖²` supplied by the caller.
pub fn bpr_nsr_loss<T: Scalar>(pos: &[T], neg: &[T], m: T, lambda_norm: T, param_sq_norm: T) -> Result<T> {
    ensure!(
        pos.len() == neg.len(),
        Shape,
        "{} positive and {} negative scores",
        pos.len(),
        neg.len()
    );
    let data: T = pos
        .iter()
        .zip(neg)
        .map(|(&p, &n)| -crate::scalar::log_sigmoid(p - nsr_reweight(n, m)))
        .sum();
    Ok(data + lambda_norm * param_sq_norm)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graphs::GraphKind;
    use crate::nn::normal_matrix;

    fn graph(n: usize, edges: &[(usize, usize)]) -> CategoryGraph {
        CategoryGraph::from_edges(n, GraphKind::Connectivity, edges.iter().copied())
    }

    #[test]
    fn lightgcn_examples() {
        let e = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = lightgcn_propagate(&graph(2, &[(0, 1)]), &e, 1).unwrap();
        assert_eq!(out[0].as_slice(), &[0.0, 1.0, 1.0, 0.0]);

        let out = lightgcn_propagate(&graph(3, &[]), &normal_matrix::<f64, _>(&mut ChaCha8Rng::seed_from_u64(0), 3, 2, 1.0), 2).unwrap();
        assert!(out.iter().all(|m| m.as_slice().iter().all(|&x| x == 0.0)));

        let ones = Matrix::from_fn(2, 1, |_, _| 1.0);
        let out = lightgcn_propagate(&graph(2, &[(0, 1)]), &ones, 1).unwrap();
        assert_eq!(out[0].as_slice(), &[1.0, 1.0]);

        assert!(lightgcn_propagate(&graph(3, &[]), &ones, 1).is_err());
    }

    #[test]
    fn attention_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = AttentionParams::<f64>::new(&mut rng, 4);
        let x = normal_matrix(&mut rng, 6, 4, 1.0);
        let same = graphwise_attention(&x, &x, &x, &p).unwrap();
        assert!(same.output.max_abs_diff(&x) < 1e-12);

        let y = normal_matrix(&mut rng, 6, 4, 1.0);
        let z = normal_matrix(&mut rng, 6, 4, 1.0);
        let uniform = graphwise_attention(&x, &y, &z, &AttentionParams::zeros(4)).unwrap();
        assert!(uniform.weights.as_slice().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));

        let r = graphwise_attention(&x, &y, &z, &p).unwrap();
        for row in 0..6 {
            assert!((r.weights.row(row).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(graphwise_attention(&x, &y, &Matrix::zeros(5, 4), &p).is_err());
    }

    #[test]
    fn layerwise_single_layer_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = AttentionParams::<f64>::new(&mut rng, 3);
        let x = normal_matrix(&mut rng, 4, 3, 1.0);
        let r = layerwise_attention(std::slice::from_ref(&x), 0.3, &p).unwrap();
        assert!(r.output.max_abs_diff(&x) < 1e-15);
        assert!(layerwise_attention(&[x.clone(), x.clone(), x], 0.5, &p).is_err());
    }

    #[test]
    fn fusion_examples() {
        let a = Matrix::from_fn(2, 2, |r, c| (r + c) as f64);
        let b = Matrix::from_fn(2, 2, |r, _| r as f64 * 3.0);
        let c = Matrix::from_fn(2, 2, |_, c| -(c as f64));
        let mean = fuse_item_embedding(&a, &b, &c, [0.0, 0.0, 0.0]).unwrap();
        let oracle = Matrix::from_fn(2, 2, |r, k| (a.get(r, k) + b.get(r, k) + c.get(r, k)) / 3.0);
        assert!(mean.max_abs_diff(&oracle) < 1e-15);
        let sat = fuse_item_embedding(&a, &b, &c, [30.0, 0.0, 0.0]).unwrap();
        assert!(sat.max_abs_diff(&a) < 1e-11);
        for logits in [[1.0, -2.0, 0.5], [700.0, -700.0, 3.0], [-1e3, -1e3, -1e3]] {
            let w = fusion_weights(logits);
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn nsr_and_loss_examples() {
        assert_eq!(nsr_reweight(0.0, 3.0), 0.0);
        assert!((nsr_reweight(2.0_f64, 1.0) - 1.761_594_155_955_764_9).abs() < 1e-12);
        assert_eq!(nsr_reweight(2.0, 0.0), 0.0);

        let l = bpr_nsr_loss(&[0.5_f64], &[0.0], 1.0, 0.0, 9.0).unwrap();
        // r̃(0) = 0, so the pair equals −ln σ(0.5)
        assert!((l - 0.474_076_984_180_107_3).abs() < 1e-12);
        let tie = bpr_nsr_loss(&[nsr_reweight(0.8, 1.0)], &[0.8], 1.0, 0.0, 0.0).unwrap();
        assert!((tie - std::f64::consts::LN_2).abs() < 1e-15);
        let one = bpr_nsr_loss(&[1.0_f64], &[0.0], 1.0, 0.0, 0.0).unwrap();
        assert!((one - 0.313_261_687_518_222_9).abs() < 1e-12);
        assert!(bpr_nsr_loss(&[60.0], &[0.0], 1.0, 0.0, 0.0).unwrap() < 1e-25);
        assert!((bpr_nsr_loss(&[1.0], &[0.0], 1.0, 0.5, 2.0).unwrap() - one - 1.0).abs() < 1e-15);
        assert!(bpr_nsr_loss(&[1.0], &[], 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_edge_weight_removes_player_message() {
        let g = BipartiteGraph::from_pairs(1, 2, [(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let eu = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        let ei = Matrix::from_vec(2, 1, vec![5.0, 7.0]).unwrap();
        let (u, _) = penr_propagate(&g, &[0.0, 1.0], &[1.0, 1.0], &eu, &ei, 1).unwrap();
        assert!((u.get(0, 0) - 7.0 / 2f64.sqrt()).abs() < 1e-12);
    }
}
