//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! replays it in reverse and returns the gradient of a scalar output with
//! respect to every recorded node.

use crate::linalg::{Csr, Matrix};
use crate::scalar::{log_sigmoid, sigmoid, Scalar};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(i: usize) -> Self {
        Var(i)
    }
}

enum Op<'g, T> {
    Leaf,
    Sparse(&'g Csr<T>, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    OneMinus(Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    VStack(Var, Var),
    Rows(Var, usize),
    Column(Var, usize),
    RowScale(Var, Var),
    EntryScale(Var, Var, usize),
    RowSoftmax(Var),
    Gather(Var, Vec<usize>),
    RowDot(Var, Var),
    Nsr(Var, T),
    NegLogSigmoidSum(Var),
    SumSquares(Var),
}

struct Node<'g, T> {
    value: Matrix<T>,
    op: Op<'g, T>,
}

pub struct Tape<'g, T> {
    nodes: Vec<Node<'g, T>>,
}

impl<'g, T: Scalar> Default for Tape<'g, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'g, T: Scalar> Tape<'g, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Matrix<T>, op: Op<'g, T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input (parameter or constant).
    pub fn leaf(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `S · x` for a fixed sparse operator.
    pub fn sparse(&mut self, s: &'g Csr<T>, x: Var) -> Var {
        let v = s.mul_dense(self.value(x));
        self.push(v, Op::Sparse(s, x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| T::one() - x);
        self.push(v, Op::OneMinus(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `x + 1·b` for a `1 × cols` bias row.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows(), 1, "bias must be a row vector");
        let mut v = self.value(x).clone();
        for r in 0..v.rows() {
            for (o, &bb) in v.row_mut(r).iter_mut().zip(bias.row(0)) {
                *o = *o + bb;
            }
        }
        self.push(v, Op::AddBias(x, b))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.tanh());
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for &p in parts {
                let src = self.value(p);
                assert_eq!(src.rows(), rows, "concat row mismatch");
                v.row_mut(r)[c0..c0 + src.cols()].copy_from_slice(src.row(r));
                c0 += src.cols();
            }
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn vstack(&mut self, top: Var, bottom: Var) -> Var {
        let (a, b) = (self.value(top), self.value(bottom));
        assert_eq!(a.cols(), b.cols(), "vstack column mismatch");
        let mut data = a.as_slice().to_vec();
        data.extend_from_slice(b.as_slice());
        let v = Matrix::from_vec(a.rows() + b.rows(), a.cols(), data).expect("vstack shape");
        self.push(v, Op::VStack(top, bottom))
    }

    /// Rows `start..start + len`.
    pub fn rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let src = self.value(x);
        let cols = src.cols();
        let v = Matrix::from_vec(len, cols, src.as_slice()[start * cols..(start + len) * cols].to_vec())
            .expect("row slice shape");
        self.push(v, Op::Rows(x, start))
    }

    pub fn column(&mut self, x: Var, col: usize) -> Var {
        let src = self.value(x);
        let v = Matrix::from_fn(src.rows(), 1, |r, _| src.get(r, col));
        self.push(v, Op::Column(x, col))
    }

    /// Scales row `r` of `x` by `s[r, 0]`.
    pub fn row_scale(&mut self, x: Var, s: Var) -> Var {
        let (xv, sv) = (self.value(x), self.value(s));
        assert_eq!((sv.rows(), sv.cols()), (xv.rows(), 1), "row scale shape");
        let v = Matrix::from_fn(xv.rows(), xv.cols(), |r, c| xv.get(r, c) * sv.get(r, 0));
        self.push(v, Op::RowScale(x, s))
    }

    /// Scales `x` by the single entry `s[0, idx]`.
    pub fn entry_scale(&mut self, x: Var, s: Var, idx: usize) -> Var {
        let k = self.value(s).get(0, idx);
        let v = self.value(x).map(|a| a * k);
        self.push(v, Op::EntryScale(x, s, idx))
    }

    pub fn row_softmax(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut v = src.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for a in row.iter_mut() {
                *a = (*a - m).exp();
                z = z + *a;
            }
            for a in row.iter_mut() {
                *a = *a / z;
            }
        }
        self.push(v, Op::RowSoftmax(x))
    }

    pub fn gather(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let src = self.value(x);
        let cols = src.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in &idx {
            data.extend_from_slice(src.row(i));
        }
        let v = Matrix::from_vec(idx.len(), cols, data).expect("gather shape");
        self.push(v, Op::Gather(x, idx))
    }

    /// Row-wise dot products, `n × 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "row dot shape");
        let v = Matrix::from_fn(av.rows(), 1, |r, _| crate::linalg::dot(av.row(r), bv.row(r)));
        self.push(v, Op::RowDot(a, b))
    }

    /// `m · σ(x) · x` elementwise.
    pub fn nsr(&mut self, x: Var, m: T) -> Var {
        let v = self.value(x).map(|r| m * sigmoid(r) * r);
        self.push(v, Op::Nsr(x, m))
    }

    /// `-Σ ln σ(x)` as a `1 × 1` matrix.
    pub fn neg_log_sigmoid_sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).as_slice().iter().map(|&a| -log_sigmoid(a)).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]).unwrap(), Op::NegLogSigmoidSum(x))
    }

    /// `Σ x²` as a `1 × 1` matrix.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_squares();
        self.push(Matrix::from_vec(1, 1, vec![s]).unwrap(), Op::SumSquares(x))
    }

    /// Gradients of the `1 × 1` node `out` with respect to every node.
    /// Entries are `None` for nodes `out` does not depend on.
    pub fn backward(&self, out: Var) -> Vec<Option<Matrix<T>>> {
        assert_eq!(self.value(out).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Matrix::from_vec(1, 1, vec![T::one()]).unwrap());

        fn acc<T: Scalar>(grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Sparse(s, x) => acc(&mut grads, *x, s.t_mul_dense(&g)),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                    acc(&mut grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|x| x * *s)),
                Op::OneMinus(a) => acc(&mut grads, *a, g.map(|x| -x)),
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.matmul_t(self.value(*b)));
                    acc(&mut grads, *b, self.value(*a).t_matmul(&g));
                }
                Op::AddBias(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o = *o + v;
                        }
                    }
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *x, g.clone());
                }
                Op::Tanh(a) => acc(&mut grads, *a, g.zip_map(&node.value, |gg, y| gg * (T::one() - y * y))),
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip_map(&node.value, |gg, y| gg * y * (T::one() - y))),
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let part = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, c0 + c));
                        acc(&mut grads, p, part);
                        c0 += w;
                    }
                }
                Op::VStack(top, bottom) => {
                    let n_top = self.value(*top).rows();
                    let cols = g.cols();
                    let (a, b) = g.as_slice().split_at(n_top * cols);
                    acc(&mut grads, *top, Matrix::from_vec(n_top, cols, a.to_vec()).unwrap());
                    acc(&mut grads, *bottom, Matrix::from_vec(g.rows() - n_top, cols, b.to_vec()).unwrap());
                }
                Op::Rows(x, start) => {
                    let src = self.value(*x);
                    let mut full = Matrix::zeros(src.rows(), src.cols());
                    let cols = src.cols();
                    full.as_mut_slice()[start * cols..start * cols + g.as_slice().len()].copy_from_slice(g.as_slice());
                    acc(&mut grads, *x, full);
                }
                Op::Column(x, col) => {
                    let src = self.value(*x);
                    let mut full = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        full.set(r, *col, g.get(r, 0));
                    }
                    acc(&mut grads, *x, full);
                }
                Op::RowScale(x, s) => {
                    let (xv, sv) = (self.value(*x), self.value(*s));
                    let gx = Matrix::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) * sv.get(r, 0));
                    let gs = Matrix::from_fn(g.rows(), 1, |r, _| crate::linalg::dot(g.row(r), xv.row(r)));
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *s, gs);
                }
                Op::EntryScale(x, s, i) => {
                    let sv = self.value(*s);
                    let k = sv.get(0, *i);
                    let mut gs = Matrix::zeros(sv.rows(), sv.cols());
                    gs.set(0, *i, crate::linalg::dot(g.as_slice(), self.value(*x).as_slice()));
                    acc(&mut grads, *x, g.map(|v| v * k));
                    acc(&mut grads, *s, gs);
                }
                Op::RowSoftmax(x) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let inner = crate::linalg::dot(g.row(r), y.row(r));
                        for c in 0..y.cols() {
                            gx.set(r, c, y.get(r, c) * (g.get(r, c) - inner));
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gather(x, idx) => {
                    let src = self.value(*x);
                    let mut full = Matrix::zeros(src.rows(), src.cols());
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, &v) in full.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o = *o + v;
                        }
                    }
                    acc(&mut grads, *x, full);
                }
                Op::RowDot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = Matrix::from_fn(av.rows(), av.cols(), |r, c| g.get(r, 0) * bv.get(r, c));
                    let gb = Matrix::from_fn(av.rows(), av.cols(), |r, c| g.get(r, 0) * av.get(r, c));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Nsr(x, m) => {
                    let gx = g.zip_map(self.value(*x), |gg, r| {
                        let s = sigmoid(r);
                        gg * *m * (s + r * s * (T::one() - s))
                    });
                    acc(&mut grads, *x, gx);
                }
                Op::NegLogSigmoidSum(x) => {
                    let go = g.get(0, 0);
                    acc(&mut grads, *x, self.value(*x).map(|a| -go * (T::one() - sigmoid(a))));
                }
                Op::SumSquares(x) => {
                    let go = g.get(0, 0);
                    let two = T::lit(2.0);
                    acc(&mut grads, *x, self.value(*x).map(|a| two * go * a));
                }
            }
            grads[idx] = Some(g);
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Every op composed into one scalar; compared against central differences.
    fn composite(tape: &mut Tape<'_, f64>, a: Var, w: Var, b: Var, logits: Var, s: &'static Csr<f64>) -> Var {
        let h = tape.matmul(a, w);
        let h = tape.add_bias(h, b);
        let h = tape.tanh(h);
        let p = tape.sparse(s, h);
        let g = tape.sigmoid(p);
        let gm = tape.one_minus(g);
        let mixed = tape.mul(gm, h);
        let cat = tape.concat_cols(&[mixed, h]);
        let sm = tape.row_softmax(cat);
        let c0 = tape.column(sm, 1);
        let scaled = tape.row_scale(h, c0);
        let e = tape.entry_scale(scaled, logits, 2);
        let st = tape.vstack(e, mixed);
        let top = tape.rows(st, 1, 3);
        let ga = tape.gather(top, vec![0, 2, 2, 1]);
        let gb = tape.gather(st, vec![5, 4, 3, 0]);
        let d = tape.sub(ga, gb);
        let d = tape.add(d, ga);
        let d = tape.scale(d, 0.7);
        let rd = tape.row_dot(d, gb);
        let neg = tape.nsr(rd, 1.3);
        let diff = tape.sub(rd, neg);
        let l = tape.neg_log_sigmoid_sum(diff);
        let reg = tape.sum_squares(w);
        let reg = tape.scale(reg, 0.01);
        tape.add(l, reg)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: &'static Csr<f64> = Box::leak(Box::new(Csr::from_triplets(
            4,
            4,
            vec![(0, 1, 0.5), (1, 0, 0.5), (1, 2, -0.7), (2, 3, 1.1), (3, 3, 0.3)],
        )));
        let inputs = [
            rand_matrix(&mut rng, 4, 3),
            rand_matrix(&mut rng, 3, 2),
            rand_matrix(&mut rng, 1, 2),
            rand_matrix(&mut rng, 1, 3),
        ];
        let eval = |inp: &[Matrix<f64>]| {
            let mut t = Tape::new();
            let vars: Vec<Var> = inp.iter().map(|m| t.leaf(m.clone())).collect();
            let out = composite(&mut t, vars[0], vars[1], vars[2], vars[3], s);
            (t.value(out).get(0, 0), t, vars, out)
        };
        let (_, tape, vars, out) = eval(&inputs);
        let grads = tape.backward(out);
        let h = 1e-6;
        for (k, m) in inputs.iter().enumerate() {
            let g = grads[vars[k].index()].as_ref().unwrap();
            for j in 0..m.as_slice().len() {
                let mut plus = inputs.clone();
                plus[k].as_mut_slice()[j] += h;
                let mut minus = inputs.clone();
                minus[k].as_mut_slice()[j] -= h;
                let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let an = g.as_slice()[j];
                assert!((fd - an).abs() <= 1e-7 * (1.0 + an.abs()), "input {k}[{j}]: fd {fd} vs {an}");
            }
        }
    }
}
