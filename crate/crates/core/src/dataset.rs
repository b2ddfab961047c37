//! Interaction and catalog ingestion, per-player splits, and popularity statistics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Dense-index view of a single player–game event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub player: usize,
    pub game: usize,
    /// Hours spent in the game, `>= 0`.
    pub dwelling_time: f64,
}

/// String ids interned in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdMap {
    pub players: Vec<String>,
    pub games: Vec<String>,
    #[serde(skip)]
    player_index: HashMap<String, usize>,
    #[serde(skip)]
    game_index: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds the lookup tables after deserialization.
    pub fn reindex(&mut self) {
        self.player_index = self
            .players
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        self.game_index = self
            .games
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
    }

    pub fn intern_player(&mut self, id: &str) -> usize {
        intern(&mut self.players, &mut self.player_index, id)
    }

    pub fn intern_game(&mut self, id: &str) -> usize {
        intern(&mut self.games, &mut self.game_index, id)
    }

    pub fn player(&self, id: &str) -> Option<usize> {
        self.player_index.get(id).copied()
    }

    pub fn game(&self, id: &str) -> Option<usize> {
        self.game_index.get(id).copied()
    }

    pub fn n_players(&self) -> usize {
        self.players.len()
    }

    pub fn n_games(&self) -> usize {
        self.games.len()
    }
}

fn intern(names: &mut Vec<String>, index: &mut HashMap<String, usize>, id: &str) -> usize {
    if let Some(&i) = index.get(id) {
        return i;
    }
    let i = names.len();
    names.push(id.to_owned());
    index.insert(id.to_owned(), i);
    i
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionTable {
    records: Vec<Interaction>,
}

impl InteractionTable {
    /// Builds a table, merging duplicate `(player, game)` pairs by summing their times.
    pub fn from_records(records: impl IntoIterator<Item = Interaction>) -> Result<Self> {
        let mut merged: Vec<Interaction> = Vec::new();
        let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
        for rec in records {
            ensure!(
                rec.dwelling_time.is_finite() && rec.dwelling_time >= 0.0,
                Validation,
                "dwelling time {} for player {} / game {} must be a non-negative number",
                rec.dwelling_time,
                rec.player,
                rec.game
            );
            match seen.get(&(rec.player, rec.game)) {
                Some(&pos) => merged[pos].dwelling_time += rec.dwelling_time,
                None => {
                    seen.insert((rec.player, rec.game), merged.len());
                    merged.push(rec);
                }
            }
        }
        Ok(Self { records: merged })
    }

    pub fn records(&self) -> &[Interaction] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of distinct players per game index.
    pub fn player_counts(&self, n_games: usize) -> Vec<usize> {
        let mut counts = vec![0usize; n_games];
        for r in &self.records {
            counts[r.game] += 1;
        }
        counts
    }

    /// Per-player game lists in table order.
    pub fn histories(&self, n_players: usize) -> Vec<Vec<usize>> {
        let mut h = vec![Vec::new(); n_players];
        for r in &self.records {
            h[r.player].push(r.game);
        }
        h
    }
}

#[derive(Debug, Deserialize)]
struct RawInteraction {
    player_id: String,
    game_id: String,
    dwelling_time: f64,
}

/// Loads `player_id, game_id, dwelling_time` records.
///
/// `.jsonl` files hold one JSON object per line; anything else is read as
/// delimited text with a header row (tab-separated for `.tsv`, comma otherwise).
pub fn load_interactions(path: &Path, ids: &mut IdMap) -> Result<InteractionTable> {
    let mut raw = Vec::new();
    if has_extension(path, "jsonl") {
        for_each_json_line(path, |line_no, rec: RawInteraction| {
            raw.push((line_no, rec));
            Ok(())
        })?;
    } else {
        let delimiter = if has_extension(path, "tsv") { b'\t' } else { b',' };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        for row in reader.records() {
            let row = row.map_err(|e| csv_error(path, e))?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let rec = row.deserialize(Some(&headers)).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line,
                message: e.to_string(),
            })?;
            raw.push((line, rec));
        }
    }

    let mut records = Vec::with_capacity(raw.len());
    for (line, rec) in raw {
        if !(rec.dwelling_time.is_finite() && rec.dwelling_time >= 0.0) {
            return Err(Error::Validation(format!(
                "{}:{line}: dwelling_time {} must be non-negative",
                path.display(),
                rec.dwelling_time
            )));
        }
        records.push(Interaction {
            player: ids.intern_player(&rec.player_id),
            game: ids.intern_game(&rec.game_id),
            dwelling_time: rec.dwelling_time,
        });
    }
    InteractionTable::from_records(records)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_owned(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn for_each_json_line<R: for<'de> Deserialize<'de>>(
    path: &Path,
    mut f: impl FnMut(usize, R) -> Result<()>,
) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        f(i + 1, rec)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Genre,
    Developer,
    Publisher,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Genre, Category::Developer, Category::Publisher];

    pub fn short(self) -> char {
        match self {
            Category::Genre => 'g',
            Category::Developer => 'd',
            Category::Publisher => 'p',
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Genre => "genre",
            Category::Developer => "developer",
            Category::Publisher => "publisher",
        })
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "genre" | "genres" | "g" => Ok(Category::Genre),
            "developer" | "developers" | "d" => Ok(Category::Developer),
            "publisher" | "publishers" | "p" => Ok(Category::Publisher),
            other => Err(Error::InvalidArgument(format!("unknown category `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GameMeta {
    pub game_id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub genres: BTreeSet<String>,
    #[serde(default)]
    pub developers: BTreeSet<String>,
    #[serde(default)]
    pub publishers: BTreeSet<String>,
    /// Community rating on the 100-point scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_rating: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub release_date: Option<NaiveDate>,
}

impl GameMeta {
    pub fn labels(&self, category: Category) -> &BTreeSet<String> {
        match category {
            Category::Genre => &self.genres,
            Category::Developer => &self.developers,
            Category::Publisher => &self.publishers,
        }
    }

    /// True when any label set is empty; such games get no edges for that category.
    pub fn is_incomplete(&self) -> bool {
        Category::ALL.iter().any(|&c| self.labels(c).is_empty())
    }

    fn validate(&self) -> Result<()> {
        ensure!(!self.game_id.is_empty(), Validation, "catalog entry with empty game_id");
        if let Some(r) = self.avg_rating {
            ensure!(
                (0.0..=100.0).contains(&r),
                Validation,
                "game {}: avg_rating {r} outside [0, 100]",
                self.game_id
            );
        }
        if let Some(p) = self.price {
            ensure!(p.is_finite(), Validation, "game {}: non-finite price", self.game_id);
        }
        Ok(())
    }
}

/// Loads catalog records (`.jsonl`, or a JSON array otherwise), interning game ids
/// in file order. Returns metadata indexed by dense game index.
pub fn load_catalog(path: &Path, ids: &mut IdMap) -> Result<Vec<GameMeta>> {
    let mut entries: Vec<(usize, GameMeta)> = Vec::new();
    if has_extension(path, "jsonl") {
        for_each_json_line(path, |line, meta: GameMeta| {
            entries.push((line, meta));
            Ok(())
        })?;
    } else {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let list: Vec<GameMeta> = serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })?;
        entries = list.into_iter().enumerate().map(|(i, m)| (i + 1, m)).collect();
    }
    let mut catalog: Vec<Option<GameMeta>> = vec![None; ids.n_games()];
    for (line, meta) in entries {
        meta.validate().map_err(|e| Error::Parse {
            path: path.to_owned(),
            line,
            message: e.to_string(),
        })?;
        let idx = ids.intern_game(&meta.game_id);
        if idx >= catalog.len() {
            catalog.resize(idx + 1, None);
        }
        ensure!(
            catalog[idx].is_none(),
            Validation,
            "{}:{line}: duplicate catalog entry for game {}",
            path.display(),
            meta.game_id
        );
        catalog[idx] = Some(meta);
    }
    catalog
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| Error::Validation(format!("game {} has no catalog entry", ids.games[i]))))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.train > 0.0 && self.valid > 0.0 && self.test > 0.0,
            InvalidArgument,
            "split ratios must be positive, got {self:?}"
        );
        ensure!(
            (self.train + self.valid + self.test - 1.0).abs() <= 1e-9,
            InvalidArgument,
            "split ratios must sum to 1, got {}",
            self.train + self.valid + self.test
        );
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: InteractionTable,
    pub valid: InteractionTable,
    pub test: InteractionTable,
    pub seed: u64,
}

/// Players with fewer interactions than this go entirely to train.
pub const MIN_SPLIT_HISTORY: usize = 3;

/// Per-player shuffled split. A player with `n >= 3` interactions keeps
/// `max(1, round(n * valid))` for validation, `max(1, round(n * test))` for
/// test, and the rest for training.
pub fn split_interactions(table: &InteractionTable, ratios: SplitRatios, seed: u64) -> Result<SplitDataset> {
    ratios.validate()?;
    ensure!(!table.is_empty(), InvalidArgument, "cannot split an empty interaction table");

    let mut by_player: Vec<(usize, Vec<Interaction>)> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for r in table.records() {
        let pos = *slot.entry(r.player).or_insert_with(|| {
            by_player.push((r.player, Vec::new()));
            by_player.len() - 1
        });
        by_player[pos].1.push(*r);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (_, mut recs) in by_player {
        let n = recs.len();
        if n < MIN_SPLIT_HISTORY {
            train.extend(recs);
            continue;
        }
        recs.shuffle(&mut rng);
        let n_valid = ((n as f64 * ratios.valid).round() as usize).max(1);
        let n_test = ((n as f64 * ratios.test).round() as usize).max(1);
        let n_train = n.saturating_sub(n_valid + n_test).max(1);
        let n_valid = (n - n_train).min(n_valid);
        let mut it = recs.into_iter();
        train.extend(it.by_ref().take(n_train));
        valid.extend(it.by_ref().take(n_valid));
        test.extend(it);
    }
    Ok(SplitDataset {
        train: InteractionTable { records: train },
        valid: InteractionTable { records: valid },
        test: InteractionTable { records: test },
        seed,
    })
}

/// `ceil(f * n)` with a small tolerance so that e.g. `0.3 * 10` selects 3.
pub fn fraction_count(f: f64, n: usize) -> usize {
    ((f * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Share of the total player-count mass held by the top `ceil(p * |I|)` games.
pub fn top_ratio(counts: &[usize], p: f64) -> Result<f64> {
    ensure!(p > 0.0 && p <= 1.0, InvalidArgument, "top ratio fraction {p} outside (0, 1]");
    let total: usize = counts.iter().sum();
    ensure!(total > 0, Degenerate, "no player-count mass");
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let top: usize = sorted.iter().take(fraction_count(p, counts.len())).sum();
    Ok(top as f64 / total as f64)
}

/// `(p, TR(p), ΔTR(p))` for `p = 0.1, 0.2, …, 1.0`, with `TR(0) = 0`.
pub fn top_ratio_grid(counts: &[usize]) -> Result<Vec<(f64, f64, f64)>> {
    let mut prev = 0.0;
    (1..=10)
        .map(|k| {
            let p = k as f64 / 10.0;
            let tr = top_ratio(counts, p)?;
            let row = (p, tr, tr - prev);
            prev = tr;
            Ok(row)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopularityPartition {
    pub hot: BTreeSet<usize>,
    pub cold: BTreeSet<usize>,
    pub player_count: Vec<usize>,
}

impl PopularityPartition {
    pub fn is_hot(&self, game: usize) -> bool {
        self.hot.contains(&game)
    }

    pub fn is_cold(&self, game: usize) -> bool {
        self.cold.contains(&game)
    }
}

/// Ranks games by descending player count (ties by ascending index); the first
/// `ceil(hot_frac * |I|)` are hot and the last `ceil(cold_frac * |I|)` are cold.
pub fn popularity_partition(counts: &[usize], hot_frac: f64, cold_frac: f64) -> Result<PopularityPartition> {
    ensure!(
        (0.0..=1.0).contains(&hot_frac) && (0.0..=1.0).contains(&cold_frac),
        InvalidArgument,
        "popularity fractions must lie in [0, 1]"
    );
    ensure!(
        hot_frac + cold_frac <= 1.0 + 1e-12,
        InvalidArgument,
        "hot_frac + cold_frac = {} exceeds 1",
        hot_frac + cold_frac
    );
    let n = counts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let n_hot = fraction_count(hot_frac, n);
    let n_cold = fraction_count(cold_frac, n).min(n - n_hot);
    Ok(PopularityPartition {
        hot: order[..n_hot].iter().copied().collect(),
        cold: order[n - n_cold..].iter().copied().collect(),
        player_count: counts.to_vec(),
    })
}

/// Catalog, id map, and split, the unit every downstream stage consumes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub ids: IdMap,
    pub catalog: Vec<GameMeta>,
    pub split: SplitDataset,
}

impl Dataset {
    pub fn n_players(&self) -> usize {
        self.ids.n_players()
    }

    pub fn n_games(&self) -> usize {
        self.catalog.len()
    }

    pub fn train_counts(&self) -> Vec<usize> {
        self.split.train.player_counts(self.n_games())
    }
}
