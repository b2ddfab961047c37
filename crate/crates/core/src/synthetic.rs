//! Seeded synthetic datasets with planted structure, used by tests and demos.

use std::collections::BTreeSet;

use rand::seq::index::{sample, sample_weighted};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{split_interactions, Dataset, GameMeta, IdMap, Interaction, InteractionTable, SplitRatios};
use crate::error::{ensure, Result};

/// Players and games split into equal blocks; players mostly play their own block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockConfig {
    pub n_players: usize,
    pub n_games: usize,
    pub n_blocks: usize,
    /// In-block games per player.
    pub games_per_player: usize,
    /// Low-time plays of mediocre games outside the player's block.
    pub disinterest_per_player: usize,
    /// Mediocre games per block that attract disinterest plays.
    pub mediocre_per_block: usize,
    /// Zipf exponent of in-block game choice; `0` samples uniformly.
    pub interest_skew: f64,
    pub seed: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            n_players: 200,
            n_games: 50,
            n_blocks: 2,
            games_per_player: 20,
            disinterest_per_player: 0,
            mediocre_per_block: 5,
            interest_skew: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub ids: IdMap,
    pub catalog: Vec<GameMeta>,
    pub interactions: InteractionTable,
    /// Block of every player and every game.
    pub player_block: Vec<usize>,
    pub game_block: Vec<usize>,
}

impl BlockConfig {
    /// Short histories where cross-block disinterest plays make up almost half.
    pub fn disinterest_scenario(seed: u64) -> Self {
        Self {
            games_per_player: 8,
            disinterest_per_player: 6,
            mediocre_per_block: 10,
            seed,
            ..Self::default()
        }
    }

    pub fn block_of_game(&self, i: usize) -> usize {
        i * self.n_blocks / self.n_games
    }

    pub fn block_of_player(&self, u: usize) -> usize {
        u * self.n_blocks / self.n_players
    }
}

impl SyntheticData {
    pub fn is_disinterest(&self, r: &Interaction) -> bool {
        self.player_block[r.player] != self.game_block[r.game]
    }

    /// Splits per player, then moves disinterest plays into train so held-out
    /// items are only the games a player actually cares about.
    pub fn into_dataset(self, ratios: SplitRatios, seed: u64) -> Result<Dataset> {
        let mut split = split_interactions(&self.interactions, ratios, seed)?;
        let mut train = split.train.records().to_vec();
        let mut hold_out = |t: &InteractionTable| -> Result<InteractionTable> {
            let (dis, keep): (Vec<Interaction>, Vec<Interaction>) =
                t.records().iter().partition(|r| self.is_disinterest(r));
            train.extend(dis);
            InteractionTable::from_records(keep)
        };
        split.valid = hold_out(&split.valid)?;
        split.test = hold_out(&split.test)?;
        split.train = InteractionTable::from_records(train)?;
        Ok(Dataset {
            ids: self.ids,
            catalog: self.catalog,
            split,
        })
    }
}

/// Generates a block dataset.
///
/// Each block has its own genres, developers and publishers, so category graphs
/// connect mostly within a block. Interested plays have long log-normal dwelling
/// times; disinterest plays last a few minutes. Mediocre games carry the median
/// rating of the catalog.
pub fn planted_blocks(cfg: &BlockConfig) -> Result<SyntheticData> {
    ensure!(cfg.n_blocks >= 1, InvalidArgument, "need at least one block");
    ensure!(
        cfg.n_games >= cfg.n_blocks && cfg.n_players >= cfg.n_blocks,
        InvalidArgument,
        "every block needs a player and a game"
    );
    let block_games: Vec<Vec<usize>> = (0..cfg.n_blocks)
        .map(|b| (0..cfg.n_games).filter(|&i| cfg.block_of_game(i) == b).collect())
        .collect();
    let min_block = block_games.iter().map(Vec::len).min().unwrap_or(0);
    ensure!(
        cfg.games_per_player <= min_block && cfg.mediocre_per_block <= min_block,
        InvalidArgument,
        "blocks have only {min_block} games"
    );
    ensure!(
        cfg.interest_skew >= 0.0 && cfg.interest_skew.is_finite(),
        InvalidArgument,
        "interest skew must be finite and non-negative"
    );
    ensure!(
        cfg.disinterest_per_player == 0 || (cfg.n_blocks > 1 && cfg.mediocre_per_block > 0),
        InvalidArgument,
        "disinterest plays need another block with mediocre games"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ids = IdMap::new();
    for u in 0..cfg.n_players {
        ids.intern_player(&format!("p{u:04}"));
    }
    for i in 0..cfg.n_games {
        ids.intern_game(&format!("g{i:04}"));
    }

    // the last `mediocre_per_block` games of each block are mediocre
    let mediocre: Vec<Vec<usize>> = block_games
        .iter()
        .map(|g| g[g.len() - cfg.mediocre_per_block..].to_vec())
        .collect();
    let median_rating = 70.0;
    let catalog: Vec<GameMeta> = (0..cfg.n_games)
        .map(|i| {
            let b = cfg.block_of_game(i);
            let labels = |kind: &str, rng: &mut ChaCha8Rng| -> BTreeSet<String> {
                [format!("{kind}{b}_{}", rng.random_range(0..2))].into_iter().collect()
            };
            let rating = if mediocre[b].contains(&i) {
                median_rating
            } else if rng.random_bool(0.5) {
                rng.random_range(50.0..68.0)
            } else {
                rng.random_range(72.0..95.0)
            };
            GameMeta {
                game_id: ids.games[i].clone(),
                title: format!("Game {i}"),
                genres: labels("genre", &mut rng),
                developers: labels("dev", &mut rng),
                publishers: labels("pub", &mut rng),
                avg_rating: Some((rating * 10.0_f64).round() / 10.0),
                price: Some(rng.random_range(1.0..60.0_f64).round()),
                release_date: None,
            }
        })
        .collect();

    let long = LogNormal::new(20f64.ln(), 0.8).expect("valid log-normal");
    let mut records = Vec::new();
    let player_block: Vec<usize> = (0..cfg.n_players).map(|u| cfg.block_of_player(u)).collect();
    for (u, &b) in player_block.iter().enumerate() {
        let own = &block_games[b];
        let picks: Vec<usize> = if cfg.interest_skew == 0.0 {
            sample(&mut rng, own.len(), cfg.games_per_player).into_vec()
        } else {
            // rank within the block follows game order, so game ids encode popularity
            let w = |k: usize| ((k + 1) as f64).powf(-cfg.interest_skew);
            sample_weighted(&mut rng, own.len(), w, cfg.games_per_player)
                .expect("positive finite weights")
                .into_vec()
        };
        for k in picks {
            let t: f64 = long.sample(&mut rng);
            records.push(Interaction {
                player: u,
                game: own[k],
                dwelling_time: (t * 100.0).round() / 100.0,
            });
        }
        let others: Vec<usize> = (0..cfg.n_blocks)
            .filter(|&o| o != b)
            .flat_map(|o| mediocre[o].iter().copied())
            .collect();
        let n_dis = cfg.disinterest_per_player.min(others.len());
        for k in sample(&mut rng, others.len(), n_dis) {
            records.push(Interaction {
                player: u,
                game: others[k],
                dwelling_time: rng.random_range(0.01..0.1_f64),
            });
        }
    }
    Ok(SyntheticData {
        ids,
        catalog,
        interactions: InteractionTable::from_records(records)?,
        player_block,
        game_block: (0..cfg.n_games).map(|i| cfg.block_of_game(i)).collect(),
    })
}
