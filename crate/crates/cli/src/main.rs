use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use gamerec::analysis::{DegreeConvention, KS_MIN_SAMPLE};
use gamerec::prg::FusionMode;
use gamerec::synthetic::BlockConfig;
use gamerec_cli::{
    cmd_analyze, cmd_evaluate, cmd_ingest, cmd_synth, cmd_train, AnalyzeCommand, EvalSplit, PrgMode, RunConfig,
};

#[derive(Parser)]
#[command(name = "gamerec", version, about = "Balance-oriented game recommendation pipeline")]
struct Cli {
    /// TOML run configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for both the split and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate and split the raw files.
    Ingest {
        #[arg(long)]
        interactions: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Train/valid/test ratios, e.g. `0.8,0.1,0.1`.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        ratios: Option<Vec<f64>>,
    },
    /// Build graphs and weights, then train and write a checkpoint.
    Train(TrainArgs),
    /// Score every player and write metric reports.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// `test` or `valid`.
        #[arg(long, default_value = "test")]
        split: EvalSplit,
        /// Comma-separated K values.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Diagnostics over the ingested data or a trained model.
    #[command(subcommand)]
    Analyze(AnalyzeArgs),
    /// Write a planted block dataset as input files.
    Synth {
        #[arg(long, default_value = "data")]
        dir: PathBuf,
        #[arg(long, default_value_t = 200)]
        players: usize,
        #[arg(long, default_value_t = 50)]
        games: usize,
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 20)]
        games_per_player: usize,
        #[arg(long, default_value_t = 0)]
        disinterest: usize,
        #[arg(long, default_value_t = 5)]
        mediocre: usize,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// Significance level of preference weighting; `0` disables it.
    #[arg(long)]
    per_alpha: Option<f64>,
    /// `off`, `stub` or `live`.
    #[arg(long)]
    prg: Option<PrgMode>,
    /// `mlp`, `linear` or `gated`.
    #[arg(long)]
    fusion: Option<FusionMode>,
}

#[derive(Subcommand)]
enum AnalyzeArgs {
    /// KS normality of transformed per-game dwelling times and ratings.
    Ks {
        #[arg(long, default_value_t = KS_MIN_SAMPLE)]
        min_sample: usize,
    },
    /// Laplacian spectrum and representation energy on a player's neighborhood.
    Spectrum {
        #[arg(long)]
        player: Option<String>,
        #[arg(long, default_value_t = 100)]
        max_nodes: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Influence indices of the four-node case for popularity weights.
    Influence {
        /// Hot-game edge weight, hot-game node weight, long-tail node weight.
        #[arg(long, num_args = 3, value_names = ["E_H", "N_H", "N_L"], allow_negative_numbers = true)]
        weights: Vec<f64>,
        /// `plain` or `self-inclusive`.
        #[arg(long, default_value = "plain")]
        convention: DegreeConvention,
    },
    /// Description similarity over raw and strict category connections.
    Connections,
    /// TR(p) and its increments on the 0.1 grid.
    Tr,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.split.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest {
            interactions,
            catalog,
            ratios,
        } => {
            if let Some(p) = interactions {
                cfg.data.interactions = p;
            }
            if let Some(p) = catalog {
                cfg.data.catalog = p;
            }
            if let Some(r) = ratios {
                (cfg.split.train, cfg.split.valid, cfg.split.test) = (r[0], r[1], r[2]);
            }
            let s = cmd_ingest(&cfg)?;
            println!(
                "{} players, {} games; train {} / valid {} / test {} -> {}",
                s.n_players,
                s.n_games,
                s.train,
                s.valid,
                s.test,
                s.bundle.display()
            );
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            if let Some(v) = a.epochs {
                t.epochs = v;
            }
            if let Some(v) = a.lr {
                t.learning_rate = v;
            }
            if let Some(v) = a.batch_size {
                t.batch_size = v;
            }
            if let Some(v) = a.dim {
                t.d_shared = v;
            }
            if let Some(v) = a.layers {
                t.k_layers = v;
            }
            if let Some(v) = a.per_alpha {
                cfg.preference.alpha = v;
            }
            if let Some(v) = a.prg {
                cfg.prg.mode = v;
            }
            if let Some(v) = a.fusion {
                cfg.prg.fusion = v;
            }
            let out = cmd_train(&cfg)?;
            for r in &out.log {
                match r.valid_recall {
                    Some(rec) => println!("epoch {:>3}  loss {:.6}  valid recall {:.4}", r.stats.epoch, r.stats.loss, rec),
                    None => println!("epoch {:>3}  loss {:.6}", r.stats.epoch, r.stats.loss),
                }
            }
            println!("checkpoint -> {}", out.checkpoint.display());
        }
        Command::Evaluate { checkpoint, split, ks } => {
            if let Some(ks) = ks {
                cfg.eval.ks = ks;
            }
            let report = cmd_evaluate(&cfg, checkpoint.as_deref(), split)?;
            print!("{report}");
        }
        Command::Analyze(a) => {
            let cmd = match a {
                AnalyzeArgs::Ks { min_sample } => AnalyzeCommand::Ks { min_sample },
                AnalyzeArgs::Spectrum {
                    player,
                    max_nodes,
                    checkpoint,
                } => AnalyzeCommand::Spectrum {
                    player,
                    max_nodes,
                    checkpoint,
                },
                AnalyzeArgs::Influence { weights, convention } => AnalyzeCommand::Influence {
                    e_h: weights[0],
                    n_h: weights[1],
                    n_l: weights[2],
                    convention,
                },
                AnalyzeArgs::Connections => AnalyzeCommand::Connections,
                AnalyzeArgs::Tr => AnalyzeCommand::Tr,
            };
            for path in cmd_analyze(&cfg, &cmd)? {
                println!("{}", path.display());
                if path.extension().is_some_and(|e| e == "json") {
                    print!("{}", std::fs::read_to_string(&path)?);
                    println!();
                }
            }
        }
        Command::Synth {
            dir,
            players,
            games,
            blocks,
            games_per_player,
            disinterest,
            mediocre,
        } => {
            let block = BlockConfig {
                n_players: players,
                n_games: games,
                n_blocks: blocks,
                games_per_player,
                disinterest_per_player: disinterest,
                mediocre_per_block: mediocre,
                seed: cli.seed.unwrap_or(0),
                ..BlockConfig::default()
            };
            let (i, c) = cmd_synth(&block, &dir)?;
            println!("{}\n{}", i.display(), c.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
