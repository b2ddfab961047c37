#![allow(dead_code)]

pub mod oracles;

use gamerec::dataset::{split_interactions, Dataset, SplitRatios};
use gamerec::model::{DescriptionInputs, Model, TrainConfig};
use gamerec::pipeline::{prepare, PopularityConfig, PreferenceConfig, Prepared};
use gamerec::prg::{describe_all, DescriptionCache, FusionMode, StubEmbedder, StubGenerator};
use gamerec::synthetic::{planted_blocks, BlockConfig};

pub fn block_dataset(cfg: &BlockConfig, split_seed: u64) -> Dataset {
    let data = planted_blocks(cfg).unwrap();
    let split = split_interactions(&data.interactions, SplitRatios::default(), split_seed).unwrap();
    Dataset {
        ids: data.ids,
        catalog: data.catalog,
        split,
    }
}

pub fn tiny_dataset(seed: u64) -> Dataset {
    let cfg = BlockConfig {
        n_players: 10,
        n_games: 8,
        n_blocks: 2,
        games_per_player: 3,
        disinterest_per_player: 1,
        mediocre_per_block: 2,
        interest_skew: 0.0,
        seed,
    };
    block_dataset(&cfg, seed)
}

pub fn stub_descriptions(ds: &Dataset, prep: &Prepared, dim: usize) -> DescriptionInputs<f64> {
    let mut cache = DescriptionCache::in_memory();
    let d = describe_all(
        &ds.ids,
        &ds.catalog,
        &ds.split.train,
        &prep.bipartite,
        &prep.mapped,
        &mut StubGenerator,
        &mut StubEmbedder::new(dim),
        &mut cache,
    )
    .unwrap();
    DescriptionInputs {
        games: d.games,
        players: d.players,
    }
}

/// Small model with every branch active.
pub fn tiny_model(fusion: Option<FusionMode>, seed: u64) -> Model<f64> {
    let ds = tiny_dataset(seed);
    let pref = PreferenceConfig {
        alpha: 0.5,
        ..PreferenceConfig::default()
    };
    let prep = prepare(&ds, &pref, &PopularityConfig::default()).unwrap();
    let cfg = TrainConfig {
        d_shared: 4,
        d_hidden: 5,
        k_layers: 2,
        sgc_layers: 2,
        fusion,
        seed,
        lambda_norm: 1e-2,
        m_nsr: 1.5,
        init_std: 0.5,
        ..TrainConfig::default()
    };
    let desc = fusion.map(|_| stub_descriptions(&ds, &prep, 8));
    Model::new(cfg, prep.operators().unwrap(), desc).unwrap()
}
