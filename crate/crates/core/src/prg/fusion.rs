//! Alignment of description embeddings into the model space and their
//! integration with learned representations.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{ensure, Error, Result};
use crate::linalg::Matrix;
use crate::nn::{Dense, DenseVars};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Two-layer MLP on `[e; e_align]`.
    #[default]
    Mlp,
    /// Single linear map on `[e; e_align]`.
    Linear,
    /// `g ⊙ e + (1 − g) ⊙ e_align` with `g = σ(W[e; e_align] + b)`.
    Gated,
}

impl FusionMode {
    pub const ALL: [FusionMode; 3] = [FusionMode::Mlp, FusionMode::Linear, FusionMode::Gated];
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Mlp => "mlp",
            FusionMode::Linear => "linear",
            FusionMode::Gated => "gated",
        })
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(FusionMode::Mlp),
            "linear" => Ok(FusionMode::Linear),
            "gated" => Ok(FusionMode::Gated),
            other => Err(Error::InvalidArgument(format!("unknown fusion mode `{other}`"))),
        }
    }
}

/// Integration step for one entity kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Integrator<T> {
    Mlp { hidden: Dense<T>, out: Dense<T> },
    Linear(Dense<T>),
    Gated(Dense<T>),
}

impl<T: Scalar> Integrator<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, mode: FusionMode, d_shared: usize, d_hidden: usize) -> Self {
        match mode {
            FusionMode::Mlp => Integrator::Mlp {
                hidden: Dense::glorot(rng, 2 * d_shared, d_hidden),
                out: Dense::glorot(rng, d_hidden, d_shared),
            },
            FusionMode::Linear => Integrator::Linear(Dense::glorot(rng, 2 * d_shared, d_shared)),
            FusionMode::Gated => Integrator::Gated(Dense::glorot(rng, 2 * d_shared, d_shared)),
        }
    }

    pub fn mode(&self) -> FusionMode {
        match self {
            Integrator::Mlp { .. } => FusionMode::Mlp,
            Integrator::Linear(_) => FusionMode::Linear,
            Integrator::Gated(_) => FusionMode::Gated,
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        match self {
            Integrator::Mlp { hidden, out } => [hidden.tensors(), out.tensors()].concat(),
            Integrator::Linear(d) | Integrator::Gated(d) => d.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        match self {
            Integrator::Mlp { hidden, out } => {
                let mut v = hidden.tensors_mut();
                v.extend(out.tensors_mut());
                v
            }
            Integrator::Linear(d) | Integrator::Gated(d) => d.tensors_mut(),
        }
    }

    fn leaves(&self, tape: &mut Tape<'_, T>) -> IntegratorVars {
        match self {
            Integrator::Mlp { hidden, out } => IntegratorVars::Mlp(hidden.leaves(tape), out.leaves(tape)),
            Integrator::Linear(d) => IntegratorVars::Linear(d.leaves(tape)),
            Integrator::Gated(d) => IntegratorVars::Gated(d.leaves(tape)),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum IntegratorVars {
    Mlp(DenseVars, DenseVars),
    Linear(DenseVars),
    Gated(DenseVars),
}

impl IntegratorVars {
    fn apply<T: Scalar>(&self, tape: &mut Tape<'_, T>, e: Var, aligned: Var) -> Var {
        let cat = tape.concat_cols(&[e, aligned]);
        match self {
            IntegratorVars::Mlp(hidden, out) => {
                let h = hidden.apply(tape, cat);
                let h = tape.tanh(h);
                out.apply(tape, h)
            }
            IntegratorVars::Linear(map) => map.apply(tape, cat),
            IntegratorVars::Gated(map) => {
                let z = map.apply(tape, cat);
                let g = tape.sigmoid(z);
                let kept = tape.mul(g, e);
                let rest = tape.one_minus(g);
                let mixed = tape.mul(rest, aligned);
                tape.add(kept, mixed)
            }
        }
    }
}

/// Shared alignment MLP plus separate integrators for games and players.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams<T> {
    pub align_hidden: Dense<T>,
    pub align_out: Dense<T>,
    pub game: Integrator<T>,
    pub player: Integrator<T>,
}

impl<T: Scalar> FusionParams<T> {
    pub fn new<R: Rng + ?Sized>(rng: &mut R, mode: FusionMode, d_emb: usize, d_hidden: usize, d_shared: usize) -> Self {
        Self {
            align_hidden: Dense::glorot(rng, d_emb, d_hidden),
            align_out: Dense::glorot(rng, d_hidden, d_shared),
            game: Integrator::new(rng, mode, d_shared, d_hidden),
            player: Integrator::new(rng, mode, d_shared, d_hidden),
        }
    }

    pub fn mode(&self) -> FusionMode {
        self.game.mode()
    }

    pub fn d_emb(&self) -> usize {
        self.align_hidden.in_dim()
    }

    pub fn d_shared(&self) -> usize {
        self.align_out.out_dim()
    }

    pub fn tensors(&self) -> Vec<&Matrix<T>> {
        let mut v = self.align_hidden.tensors();
        v.extend(self.align_out.tensors());
        v.extend(self.game.tensors());
        v.extend(self.player.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut v = self.align_hidden.tensors_mut();
        v.extend(self.align_out.tensors_mut());
        v.extend(self.game.tensors_mut());
        v.extend(self.player.tensors_mut());
        v
    }

    /// Registers every parameter on `tape` in [`Self::tensors`] order.
    pub fn leaves(&self, tape: &mut Tape<'_, T>) -> FusionVars {
        FusionVars {
            align_hidden: self.align_hidden.leaves(tape),
            align_out: self.align_out.leaves(tape),
            game: self.game.leaves(tape),
            player: self.player.leaves(tape),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FusionVars {
    align_hidden: DenseVars,
    align_out: DenseVars,
    game: IntegratorVars,
    player: IntegratorVars,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Game,
    Player,
}

impl FusionVars {
    pub fn align<T: Scalar>(&self, tape: &mut Tape<'_, T>, desc: Var) -> Var {
        let h = self.align_hidden.apply(tape, desc);
        let h = tape.tanh(h);
        self.align_out.apply(tape, h)
    }

    pub fn integrate<T: Scalar>(&self, tape: &mut Tape<'_, T>, side: Side, e: Var, desc: Var) -> Var {
        let aligned = self.align(tape, desc);
        match side {
            Side::Game => self.game.apply(tape, e, aligned),
            Side::Player => self.player.apply(tape, e, aligned),
        }
    }
}

/// Forward-only alignment and integration of `e_orig` with description embeddings.
pub fn align_and_integrate<T: Scalar>(
    e_orig: &Matrix<T>,
    e_desc: &Matrix<T>,
    params: &FusionParams<T>,
    side: Side,
) -> Result<Matrix<T>> {
    ensure!(
        e_orig.rows() == e_desc.rows(),
        Shape,
        "{} representations but {} description embeddings",
        e_orig.rows(),
        e_desc.rows()
    );
    ensure!(
        e_orig.cols() == params.d_shared() && e_desc.cols() == params.d_emb(),
        Shape,
        "expected widths {}/{}, got {}/{}",
        params.d_shared(),
        params.d_emb(),
        e_orig.cols(),
        e_desc.cols()
    );
    let mut tape = Tape::new();
    let vars = params.leaves(&mut tape);
    let e = tape.leaf(e_orig.clone());
    let d = tape.leaf(e_desc.clone());
    let out = vars.integrate(&mut tape, side, e, d);
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::normal_matrix;

    fn setup(mode: FusionMode) -> (FusionParams<f64>, Matrix<f64>, Matrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = FusionParams::new(&mut rng, mode, 6, 5, 4);
        (p, normal_matrix(&mut rng, 3, 4, 1.0), normal_matrix(&mut rng, 3, 6, 1.0))
    }

    #[test]
    fn output_width_is_shared_dim_in_every_mode() {
        for mode in FusionMode::ALL {
            let (p, e, d) = setup(mode);
            assert_eq!(p.mode(), mode);
            let out = align_and_integrate(&e, &d, &p, Side::Game).unwrap();
            assert_eq!(out.shape(), (3, 4));
        }
    }

    #[test]
    fn saturated_gate_keeps_original() {
        let (mut p, e, d) = setup(FusionMode::Gated);
        if let Integrator::Gated(map) = &mut p.game {
            map.weight = Matrix::zeros(8, 4);
            map.bias = Matrix::from_fn(1, 4, |_, _| 60.0);
        }
        let out = align_and_integrate(&e, &d, &p, Side::Game).unwrap();
        assert!(out.max_abs_diff(&e) < 1e-12);
    }

    #[test]
    fn block_identity_linear_keeps_original() {
        let (mut p, e, d) = setup(FusionMode::Linear);
        if let Integrator::Linear(map) = &mut p.player {
            map.weight = Matrix::from_fn(8, 4, |r, c| if r == c { 1.0 } else { 0.0 });
            map.bias = Matrix::zeros(1, 4);
        }
        let out = align_and_integrate(&e, &d, &p, Side::Player).unwrap();
        assert!(out.max_abs_diff(&e) < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (p, e, _) = setup(FusionMode::Mlp);
        assert!(align_and_integrate(&e, &Matrix::zeros(3, 5), &p, Side::Game).is_err());
        assert!(align_and_integrate(&e, &Matrix::zeros(2, 6), &p, Side::Game).is_err());
    }

    #[test]
    fn mode_parses() {
        for mode in FusionMode::ALL {
            assert_eq!(mode.to_string().parse::<FusionMode>().unwrap(), mode);
        }
        assert!("attention".parse::<FusionMode>().is_err());
    }
}
