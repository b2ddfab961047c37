//! Prompt templates for game and player descriptions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::GameMeta;
use crate::error::{ensure, Result};

pub const GAME_INSTRUCTION: &str = "You are given information about a video game. Write a concise description of the \
game's content and appeal. Treat the average rating (0-100 scale) as the main signal of how the general player base \
regards the game and explain what it suggests about the game's global appeal.";

pub const PLAYER_INSTRUCTION: &str = "You are given the games a player has played. Each entry lists a game \
description, the player's normalized dwelling time and the game's normalized average rating; both follow a standard \
normal scale and can be compared directly. Infer the player's personal preferences by comparing dwelling time with \
average rating: time well above rating signals personal interest, time well below rating signals disinterest. \
Summarize the player's preferences.";

/// Lowercase hex SHA-256 of `text`.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Which fields made it into a game prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GamePromptCase {
    /// Rating, price and release date.
    Full,
    /// Price and release date with the catalog mean standing in for the rating.
    MeanRatingFull,
    /// Rating only.
    RatingOnly,
    /// Catalog mean rating only.
    MeanRatingOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GamePrompt {
    pub text: String,
    pub case: GamePromptCase,
    pub digest: String,
}

/// Builds the description prompt for one game. Ratings stay on the raw 100-point scale.
pub fn build_game_prompt(meta: &GameMeta, mean_rating: f64) -> Result<GamePrompt> {
    ensure!(
        !meta.title.trim().is_empty(),
        InvalidArgument,
        "game {} has no title",
        meta.game_id
    );
    let (case, rating) = match (meta.avg_rating, meta.price, meta.release_date) {
        (Some(r), Some(_), Some(_)) => (GamePromptCase::Full, r),
        (None, Some(_), Some(_)) => (GamePromptCase::MeanRatingFull, mean_rating),
        (Some(r), _, _) => (GamePromptCase::RatingOnly, r),
        (None, _, _) => (GamePromptCase::MeanRatingOnly, mean_rating),
    };
    let mut text = format!("{GAME_INSTRUCTION}\n\nTitle: {}\nAverage rating: {rating:.1}/100\n", meta.title.trim());
    if matches!(case, GamePromptCase::Full | GamePromptCase::MeanRatingFull) {
        let price = meta.price.expect("case requires price");
        let date = meta.release_date.expect("case requires release date");
        let _ = writeln!(text, "Price: {price:.2}\nRelease date: {date}");
    }
    let digest = digest(&text);
    Ok(GamePrompt { text, case, digest })
}

/// One played game as seen in a player prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub game: String,
    pub description: String,
    /// Mapped dwelling time.
    pub time: f64,
    /// Mapped average rating.
    pub rating: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerPrompt {
    pub text: String,
    pub n_games: usize,
    pub digest: String,
}

/// Builds the preference prompt from a player's history, keeping the given order.
pub fn build_player_prompt(history: &[HistoryEntry]) -> Result<PlayerPrompt> {
    ensure!(!history.is_empty(), InvalidArgument, "player history is empty");
    let mut text = format!("{PLAYER_INSTRUCTION}\n");
    for (k, h) in history.iter().enumerate() {
        let _ = write!(
            text,
            "\nGame {} (id {})\nDescription: {}\nDwelling time: {:.4}\nAverage rating: {:.4}\n",
            k + 1,
            h.game,
            h.description.trim(),
            h.time,
            h.rating
        );
    }
    text.push_str("\nCompare each game's dwelling time with its average rating and describe this player's preferences.\n");
    let digest = digest(&text);
    Ok(PlayerPrompt {
        text,
        n_games: history.len(),
        digest,
    })
}
