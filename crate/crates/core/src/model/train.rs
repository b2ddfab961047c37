use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::{Batch, Model};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One observed game and one sampled unobserved game for a player.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triple {
    pub player: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss per training pair, penalty included once per batch.
    pub loss: f64,
    pub pairs: usize,
    pub batches: usize,
}

/// Mini-batch training with one uniform negative per positive per epoch.
pub struct Trainer<T> {
    model: Model<T>,
    opt: Adam<T>,
    rng: ChaCha8Rng,
    positives: Vec<(usize, usize)>,
    log: Vec<EpochStats>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>) -> Self {
        let mut positives = Vec::new();
        for (u, items) in model.ops.train_items.iter().enumerate() {
            // players who own every game have no negatives to contrast
            if items.len() < model.ops.n_games {
                positives.extend(items.iter().map(|&i| (u, i)));
            }
        }
        let rng = ChaCha8Rng::seed_from_u64(model.config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        let opt = Adam::new(model.config.learning_rate);
        Self {
            model,
            opt,
            rng,
            positives,
            log: Vec::new(),
        }
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn into_model(self) -> Model<T> {
        self.model
    }

    pub fn log(&self) -> &[EpochStats] {
        &self.log
    }

    /// Draws this epoch's triples in shuffled order.
    pub fn sample_triples(&mut self) -> Vec<Triple> {
        let n_games = self.model.ops.n_games;
        let mut triples: Vec<Triple> = self
            .positives
            .iter()
            .map(|&(u, i)| {
                let seen = &self.model.ops.train_items[u];
                let negative = loop {
                    let j = self.rng.random_range(0..n_games);
                    if seen.binary_search(&j).is_err() {
                        break j;
                    }
                };
                Triple {
                    player: u,
                    positive: i,
                    negative,
                }
            })
            .collect();
        triples.shuffle(&mut self.rng);
        triples
    }

    /// One pass over all training pairs. A non-finite loss aborts with
    /// [`Error::Divergence`]; earlier epochs stay in the log.
    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.log.len() + 1;
        let triples = self.sample_triples();
        let mut total = 0.0;
        let mut batches = 0;
        for (b, chunk) in triples.chunks(self.model.config.batch_size).enumerate() {
            let batch = Batch::from_triples(chunk);
            let (loss, grads) = self.model.loss_and_grads(&batch);
            let loss = loss.as_f64();
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            self.opt.step(self.model.params.tensors_mut(), &grads);
            total += loss;
            batches += 1;
        }
        let stats = EpochStats {
            epoch,
            loss: if triples.is_empty() { 0.0 } else { total / triples.len() as f64 },
            pairs: triples.len(),
            batches,
        };
        self.log.push(stats.clone());
        Ok(stats)
    }

    /// Runs the configured number of epochs.
    pub fn fit(&mut self) -> Result<()> {
        for _ in 0..self.model.config.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }
}

/// Trains `model` for `config.epochs` epochs.
pub fn train<T: Scalar>(model: Model<T>) -> Result<(Model<T>, Vec<EpochStats>)> {
    let mut t = Trainer::new(model);
    t.fit()?;
    let log = t.log().to_vec();
    Ok((t.into_model(), log))
}
