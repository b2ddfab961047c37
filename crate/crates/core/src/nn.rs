//! Small building blocks shared by the model and the representation fusion.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Matrix with i.i.d. `N(0, std²)` entries.
pub fn normal_matrix<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Matrix<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Matrix::from_fn(rows, cols, |_, _| T::lit(dist.sample(rng)))
}

/// Glorot-normal initialisation for a `fan_in × fan_out` weight.
pub fn glorot<T: Scalar, R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Matrix<T> {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    normal_matrix(rng, fan_in, fan_out, std)
}

/// Affine map `x W + b` on row vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn glorot<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: glorot(rng, fan_in, fan_out),
            bias: Matrix::zeros(1, fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        vec![&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    /// Registers the parameters on `tape`.
    pub fn leaves<'g>(&self, tape: &mut Tape<'g, T>) -> DenseVars {
        DenseVars {
            weight: tape.leaf(self.weight.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

impl DenseVars {
    pub fn apply<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        let h = tape.matmul(x, self.weight);
        tape.add_bias(h, self.bias)
    }
}
