use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use gamerec::analysis::{
    bipartite_adjacency, bipartite_neighborhood, connection_similarity_report, influence_indices,
    combinatorial_laplacian, ks_validation_report, symmetric_eigen, top_ratio_report, write_connection_csv,
    DegreeConvention,
};
use gamerec::dataset::{load_catalog, load_interactions, popularity_partition, split_interactions, Dataset, IdMap, PopularityPartition};
use gamerec::eval::{accuracy_metrics, evaluate, MetricReport, RecommendationSet};
use gamerec::linalg::Matrix;
use gamerec::model::{Checkpoint, DescriptionInputs, EpochStats, Model, Trainer};
use gamerec::pipeline::{prepare, Prepared};
use gamerec::synthetic::{planted_blocks, BlockConfig};
use gamerec::prg::{
    build_game_prompt, describe_all, embed_text, generate_description, DescriptionCache, HttpClient, StubEmbedder,
    StubGenerator, TextEmbedder, TextGenerator,
};
use gamerec::weighting::write_weight_dump;
use serde::{Deserialize, Serialize};

use crate::config::{PrgMode, RunConfig};

/// Everything downstream commands read: the split dataset and the popularity
/// partition of its training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub dataset: Dataset,
    pub partition: PopularityPartition,
}

impl Bundle {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading bundle {} (run `ingest` first)", path.display()))?;
        let mut b: Bundle = serde_json::from_str(&text).with_context(|| format!("parsing bundle {}", path.display()))?;
        b.dataset.ids.reindex();
        Ok(b)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Writes a planted block dataset as `interactions.csv` and `catalog.json`
/// under `dir` and returns the two paths.
pub fn cmd_synth(cfg: &BlockConfig, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let data = planted_blocks(cfg)?;
    create_dir(dir)?;
    let mut csv = String::from("player_id,game_id,dwelling_time\n");
    for r in data.interactions.records() {
        let _ = writeln!(csv, "{},{},{}", data.ids.players[r.player], data.ids.games[r.game], r.dwelling_time);
    }
    let interactions = dir.join("interactions.csv");
    write_file(&interactions, csv)?;
    let catalog = dir.join("catalog.json");
    write_file(&catalog, serde_json::to_string_pretty(&data.catalog)?)?;
    Ok((interactions, catalog))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IngestSummary {
    pub n_players: usize,
    pub n_games: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub bundle: PathBuf,
}

/// Loads and splits the raw files, then writes `bundle.json` and `id_map.json`.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    cfg.validate_inputs()?;
    let mut ids = IdMap::new();
    let interactions = load_interactions(&cfg.data.interactions, &mut ids)?;
    let catalog = load_catalog(&cfg.data.catalog, &mut ids)?;
    let split = split_interactions(&interactions, cfg.split.ratios(), cfg.split.seed)?;
    let dataset = Dataset { ids, catalog, split };
    let partition = popularity_partition(
        &dataset.train_counts(),
        cfg.popularity.hot_fraction,
        cfg.popularity.cold_fraction,
    )?;
    let summary = IngestSummary {
        n_players: dataset.n_players(),
        n_games: dataset.n_games(),
        train: dataset.split.train.len(),
        valid: dataset.split.valid.len(),
        test: dataset.split.test.len(),
        bundle: cfg.bundle_path(),
    };
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.id_map_path(), serde_json::to_string_pretty(&dataset.ids)?)?;
    write_file(&cfg.bundle_path(), serde_json::to_string(&Bundle { dataset, partition })?)?;
    Ok(summary)
}

/// One row of `train_log.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    #[serde(flatten)]
    pub stats: EpochStats,
    /// Validation Recall and NDCG at the smallest configured K; `None` when no
    /// player has validation items.
    pub valid_recall: Option<f64>,
    pub valid_ndcg: Option<f64>,
}

fn write_train_log(path: &Path, k: usize, rows: &[EpochRow]) -> Result<()> {
    let mut s = format!("epoch,loss,pairs,batches,valid_recall@{k},valid_ndcg@{k}\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.stats.epoch,
            r.stats.loss,
            r.stats.pairs,
            r.stats.batches,
            opt(r.valid_recall),
            opt(r.valid_ndcg)
        );
    }
    write_file(path, s)
}

fn open_cache(cfg: &RunConfig) -> Result<DescriptionCache> {
    let path = match (&cfg.prg.cache, cfg.prg.mode) {
        (Some(p), _) => p.clone(),
        (None, PrgMode::Live) => cfg.out_dir.join("descriptions.jsonl"),
        (None, _) => return Ok(DescriptionCache::in_memory()),
    };
    Ok(DescriptionCache::open(path)?)
}

/// Generator and embedder for the configured mode; `off` falls back to the stub.
fn text_clients(cfg: &RunConfig) -> Result<(Box<dyn TextGenerator>, Box<dyn TextEmbedder>)> {
    Ok(match cfg.prg.mode {
        PrgMode::Off | PrgMode::Stub => (Box::new(StubGenerator), Box::new(StubEmbedder::new(cfg.prg.stub_dim))),
        PrgMode::Live => {
            let client = cfg.prg.client.clone().with_env()?;
            (
                Box::new(HttpClient::new(client.clone())),
                Box::new(HttpClient::new(client)),
            )
        }
    })
}

fn description_inputs(cfg: &RunConfig, ds: &Dataset, prep: &Prepared) -> Result<Option<DescriptionInputs<f64>>> {
    if cfg.prg.mode == PrgMode::Off {
        return Ok(None);
    }
    let (mut generator, mut embedder) = text_clients(cfg)?;
    let mut cache = open_cache(cfg)?;
    let emb = describe_all(
        &ds.ids,
        &ds.catalog,
        &ds.split.train,
        &prep.bipartite,
        &prep.mapped,
        generator.as_mut(),
        embedder.as_mut(),
        &mut cache,
    )?;
    Ok(Some(DescriptionInputs {
        games: emb.games,
        players: emb.players,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<EpochRow>,
    pub checkpoint: PathBuf,
}

/// Builds graphs and weights from the bundle, trains, and writes
/// `checkpoint.json`, `train_log.csv` and `edge_weights.txt`. On divergence the
/// log of completed epochs is still written.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let bundle = Bundle::load(&cfg.bundle_path())?;
    let ds = &bundle.dataset;
    let prep = prepare(ds, &cfg.preference, &cfg.popularity)?;
    create_dir(&cfg.out_dir)?;
    let mut dump = create_file(&cfg.out_dir.join("edge_weights.txt"))?;
    write_weight_dump(
        &mut dump,
        &prep.bipartite,
        &ds.ids,
        &prep.preference,
        &prep.popularity_edge,
        &prep.combined,
    )?;
    dump.flush()?;

    let descriptions = description_inputs(cfg, ds, &prep)?;
    let train_cfg = cfg.effective_train();
    let epochs = train_cfg.epochs;
    let model = Model::new(train_cfg, prep.operators()?, descriptions)?;
    let mut trainer = Trainer::new(model);

    let k = cfg.eval.ks.iter().copied().min().unwrap_or(1);
    let valid = ds.split.valid.histories(ds.n_players());
    let has_valid = valid.iter().any(|v| !v.is_empty());
    let mut rows = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let stats = match trainer.run_epoch() {
            Ok(s) => s,
            Err(e) => {
                write_train_log(&cfg.train_log_path(), k, &rows)?;
                return Err(e.into());
            }
        };
        let (valid_recall, valid_ndcg) = if has_valid {
            let recs = RecommendationSet::new(k, trainer.model().recommend_all(k))?;
            let acc = accuracy_metrics(&recs, &valid, k)?;
            (Some(acc.recall), Some(acc.ndcg))
        } else {
            (None, None)
        };
        rows.push(EpochRow {
            stats,
            valid_recall,
            valid_ndcg,
        });
    }
    write_train_log(&cfg.train_log_path(), k, &rows)?;
    let checkpoint = cfg.checkpoint_path();
    Checkpoint::new(trainer.into_model(), &ds.ids).save(&checkpoint)?;
    Ok(TrainOutcome { log: rows, checkpoint })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalSplit {
    Valid,
    #[default]
    Test,
}

impl FromStr for EvalSplit {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(EvalSplit::Valid),
            "test" => Ok(EvalSplit::Test),
            other => bail!("unknown split `{other}` (expected valid or test)"),
        }
    }
}

fn load_checkpoint(cfg: &RunConfig, path: Option<&Path>, ids: &IdMap) -> Result<Checkpoint<f64>> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| cfg.checkpoint_path());
    ensure!(path.is_file(), "checkpoint {} does not exist", path.display());
    Checkpoint::load(&path, ids).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Scores every player and writes `report.{txt,json,csv}` with every metric at
/// every configured K.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, split: EvalSplit) -> Result<MetricReport> {
    cfg.validate()?;
    let bundle = Bundle::load(&cfg.bundle_path())?;
    let ds = &bundle.dataset;
    let ck = load_checkpoint(cfg, checkpoint, &ds.ids)?;
    let max_k = cfg.max_k();
    let recs = RecommendationSet::new(max_k, ck.model.recommend_all(max_k))?;
    recs.check_excludes(&ds.split.train.histories(ds.n_players()))?;
    let truth = match split {
        EvalSplit::Valid => &ds.split.valid,
        EvalSplit::Test => &ds.split.test,
    }
    .histories(ds.n_players());
    let report = evaluate(&recs, &truth, &ds.catalog, &bundle.partition, &cfg.eval.ks)?;

    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("report.txt"), report.to_string())?;
    write_file(&cfg.out_dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    let mut csv = create_file(&cfg.out_dir.join("report.csv"))?;
    report.write_csv(&mut csv)?;
    csv.flush()?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnalyzeCommand {
    /// Normality of transformed dwelling times per game and of ratings.
    Ks { min_sample: usize },
    /// Laplacian spectrum of a player-centred subgraph and the energy of the
    /// learned representations over it.
    Spectrum {
        player: Option<String>,
        max_nodes: usize,
        checkpoint: Option<PathBuf>,
    },
    Influence {
        e_h: f64,
        n_h: f64,
        n_l: f64,
        convention: DegreeConvention,
    },
    /// Description similarity of raw vs strict category connections.
    Connections,
    /// TR(p) and ΔTR(p) on the 0.1 grid.
    Tr,
}

/// Energy share per eigenvector, summed over signal columns.
fn multi_column_energy(l: &Matrix<f64>, x: &Matrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let eigen = symmetric_eigen(l)?;
    let n = x.rows();
    let mut energy = vec![0.0; n];
    for c in 0..x.cols() {
        for (j, e) in energy.iter_mut().enumerate() {
            let coeff: f64 = (0..n).map(|r| eigen.vectors.get(r, j) * x.get(r, c)).sum();
            *e += coeff * coeff;
        }
    }
    let total: f64 = energy.iter().sum();
    ensure!(total > 0.0, "representations are zero on the subgraph");
    energy.iter_mut().for_each(|e| *e /= total);
    Ok((eigen.values, energy))
}

fn game_description_embeddings(cfg: &RunConfig, ds: &Dataset) -> Result<Matrix<f64>> {
    let (mut generator, mut embedder) = text_clients(cfg)?;
    let mut cache = open_cache(cfg)?;
    let rated: Vec<f64> = ds.catalog.iter().filter_map(|m| m.avg_rating).collect();
    let mean = if rated.is_empty() {
        50.0
    } else {
        rated.iter().sum::<f64>() / rated.len() as f64
    };
    let mut m = Matrix::zeros(ds.n_games(), embedder.dim());
    for (i, meta) in ds.catalog.iter().enumerate() {
        let prompt = build_game_prompt(meta, mean)?;
        let text = generate_description(generator.as_mut(), &prompt.text, &mut cache)?;
        m.row_mut(i).copy_from_slice(&embed_text(embedder.as_mut(), &text)?);
    }
    Ok(m)
}

/// Runs one analysis and returns the files it wrote under `<out>/analysis`.
pub fn cmd_analyze(cfg: &RunConfig, cmd: &AnalyzeCommand) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let dir = cfg.analysis_dir();
    create_dir(&dir)?;
    let load = || Bundle::load(&cfg.bundle_path()).map(|b| b.dataset);
    match cmd {
        AnalyzeCommand::Influence {
            e_h,
            n_h,
            n_l,
            convention,
        } => {
            let r = influence_indices(*e_h, *n_h, *n_l, *convention)?;
            let path = dir.join("influence.json");
            write_file(&path, serde_json::to_string_pretty(&r)?)?;
            Ok(vec![path])
        }
        AnalyzeCommand::Ks { min_sample } => {
            let report = ks_validation_report(&load()?, *min_sample)?;
            let path = dir.join("ks.csv");
            let mut out = create_file(&path)?;
            report.write_csv(&mut out)?;
            out.flush()?;
            Ok(vec![path])
        }
        AnalyzeCommand::Tr => {
            let rows = top_ratio_report(&load()?)?;
            let mut s = String::from("p,tr,delta\n");
            for r in rows {
                let _ = writeln!(s, "{:.1},{},{}", r.p, r.tr, r.delta);
            }
            let path = dir.join("tr.csv");
            write_file(&path, s)?;
            Ok(vec![path])
        }
        AnalyzeCommand::Connections => {
            let ds = load()?;
            let emb = game_description_embeddings(cfg, &ds)?;
            let rows = connection_similarity_report(&ds.catalog, &emb)?;
            let path = dir.join("connections.csv");
            let mut out = create_file(&path)?;
            write_connection_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(vec![path])
        }
        AnalyzeCommand::Spectrum {
            player,
            max_nodes,
            checkpoint,
        } => {
            ensure!(*max_nodes >= 2, "spectrum needs at least two nodes");
            let ds = load()?;
            let start = match player {
                Some(id) => ds.ids.player(id).with_context(|| format!("unknown player `{id}`"))?,
                None => 0,
            };
            let graph = gamerec::graphs::build_bipartite_graph(&ds.split.train, ds.n_players(), ds.n_games())?;
            let nodes = bipartite_neighborhood(&graph, start, *max_nodes);
            let adj = bipartite_adjacency(&graph, &nodes, None)?;
            let ck = load_checkpoint(cfg, checkpoint.as_deref(), &ds.ids)?;
            let emb = ck.model.embeddings();
            let np = ds.n_players();
            let x = Matrix::from_fn(nodes.len(), emb.players.cols(), |r, c| {
                let v = nodes[r];
                if v < np {
                    emb.players.get(v, c)
                } else {
                    emb.games.get(v - np, c)
                }
            });
            let (values, energy) = multi_column_energy(&combinatorial_laplacian(&adj), &x)?;
            let mut s = String::from("index,eigenvalue,energy\n");
            for (j, (l, e)) in values.iter().zip(&energy).enumerate() {
                let _ = writeln!(s, "{j},{l},{e}");
            }
            let path = dir.join("spectrum.csv");
            write_file(&path, s)?;
            let nodes_path = dir.join("spectrum_nodes.txt");
            let names: Vec<String> = nodes
                .iter()
                .map(|&v| {
                    if v < np {
                        format!("player {}", ds.ids.players[v])
                    } else {
                        format!("game {}", ds.ids.games[v - np])
                    }
                })
                .collect();
            write_file(&nodes_path, names.join("\n") + "\n")?;
            Ok(vec![path, nodes_path])
        }
    }
}
