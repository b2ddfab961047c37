//! Generated game and player descriptions, their embeddings, and the fusion
//! of those embeddings into learned representations.

pub mod cache;
pub mod client;
pub mod fusion;
pub mod prompt;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

pub use cache::DescriptionCache;
pub use client::{
    embed_text, generate_description, HttpClient, HttpClientConfig, StubEmbedder, StubGenerator, TextEmbedder,
    TextGenerator,
};
pub use fusion::{align_and_integrate, FusionMode, FusionParams, Side};
pub use prompt::{build_game_prompt, build_player_prompt, GamePrompt, GamePromptCase, HistoryEntry, PlayerPrompt};

use crate::dataset::{GameMeta, IdMap, InteractionTable};
use crate::error::{ensure, Error, Result};
use crate::graphs::BipartiteGraph;
use crate::linalg::Matrix;
use crate::weighting::MappedPreferences;

/// Description embeddings for every game and player, row-aligned with the id map.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptionEmbeddings {
    pub games: Matrix<f64>,
    pub players: Matrix<f64>,
}

/// Generates and embeds descriptions for the whole catalog and every player.
///
/// Player prompts list train interactions in table order. Players without
/// train history get the embedding of an empty-history placeholder text.
#[allow(clippy::too_many_arguments)]
pub fn describe_all(
    ids: &IdMap,
    catalog: &[GameMeta],
    train: &InteractionTable,
    graph: &BipartiteGraph,
    mapped: &MappedPreferences<f64>,
    generator: &mut dyn TextGenerator,
    embedder: &mut dyn TextEmbedder,
    cache: &mut DescriptionCache,
) -> Result<DescriptionEmbeddings> {
    ensure!(
        catalog.len() == ids.n_games() && graph.n_players() == ids.n_players(),
        Shape,
        "catalog/graph do not match the id map"
    );
    let rated: Vec<f64> = catalog.iter().filter_map(|m| m.avg_rating).collect();
    let mean_rating = if rated.is_empty() {
        50.0
    } else {
        rated.iter().sum::<f64>() / rated.len() as f64
    };

    let mut game_text = Vec::with_capacity(catalog.len());
    for meta in catalog {
        let prompt = build_game_prompt(meta, mean_rating)?;
        game_text.push(generate_description(generator, &prompt.text, cache)?);
    }

    let dim = embedder.dim();
    let mut games = Matrix::zeros(catalog.len(), dim);
    for (i, text) in game_text.iter().enumerate() {
        games.row_mut(i).copy_from_slice(&embed_text(embedder, text)?);
    }

    let histories = train.histories(ids.n_players());
    let mut players = Matrix::zeros(ids.n_players(), dim);
    for (u, history) in histories.iter().enumerate() {
        let text = if history.is_empty() {
            format!("Player {} has no recorded play history.", ids.players[u])
        } else {
            let entries = history
                .iter()
                .map(|&i| {
                    let e = graph
                        .edge_index(u, i)
                        .ok_or_else(|| Error::Validation(format!("train pair ({u}, {i}) missing from graph")))?;
                    Ok(HistoryEntry {
                        game: ids.games[i].clone(),
                        description: game_text[i].clone(),
                        time: mapped.edge_time[e],
                        rating: mapped.game_rating[i].unwrap_or(0.0),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let prompt = build_player_prompt(&entries)?;
            generate_description(generator, &prompt.text, cache)?
        };
        players.row_mut(u).copy_from_slice(&embed_text(embedder, &text)?);
    }
    Ok(DescriptionEmbeddings { games, players })
}

/// Writes `count` and `dim` as little-endian u64, then the entries as f64 in row order.
pub fn write_embedding_dump(path: &Path, m: &Matrix<f64>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    w.write_u64::<LittleEndian>(m.rows() as u64).map_err(io)?;
    w.write_u64::<LittleEndian>(m.cols() as u64).map_err(io)?;
    for &x in m.as_slice() {
        w.write_f64::<LittleEndian>(x).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_embedding_dump(path: &Path) -> Result<Matrix<f64>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let io = |e| Error::io(path, e);
    let rows = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let cols = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut data = vec![0.0; rows * cols];
    r.read_f64_into::<LittleEndian>(&mut data).map_err(io)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io)?;
    ensure!(rest.is_empty(), Validation, "{}: {} trailing bytes", path.display(), rest.len());
    Matrix::from_vec(rows, cols, data)
}
