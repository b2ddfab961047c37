use std::fs;
use std::path::Path;
use std::process::Command;

use gamerec::analysis::DegreeConvention;
use gamerec::synthetic::BlockConfig;
use gamerec_cli::{cmd_analyze, cmd_evaluate, cmd_ingest, cmd_synth, cmd_train, AnalyzeCommand, EvalSplit, PrgMode, RunConfig};
use tempfile::TempDir;

fn setup(disinterest: usize) -> (TempDir, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    let block = BlockConfig {
        n_players: 60,
        n_games: 30,
        games_per_player: 8,
        disinterest_per_player: disinterest,
        seed: 1,
        ..BlockConfig::default()
    };
    let (interactions, catalog) = cmd_synth(&block, &dir.path().join("data")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.data.interactions = interactions;
    cfg.data.catalog = catalog;
    cfg.train.epochs = 3;
    cfg.train.d_shared = 16;
    cfg.out_dir = dir.path().join("out");
    (dir, cfg)
}

#[test]
fn ingest_is_byte_identical_across_reruns() {
    let (_dir, cfg) = setup(0);
    let s = cmd_ingest(&cfg).unwrap();
    assert_eq!((s.n_players, s.n_games), (60, 30));
    assert_eq!(s.train + s.valid + s.test, 60 * 8);
    let first = fs::read(cfg.bundle_path()).unwrap();
    let ids = fs::read(cfg.id_map_path()).unwrap();
    cmd_ingest(&cfg).unwrap();
    assert_eq!(fs::read(cfg.bundle_path()).unwrap(), first);
    assert_eq!(fs::read(cfg.id_map_path()).unwrap(), ids);
}

#[test]
fn ingest_rejects_missing_catalog_and_bad_ratios() {
    let (_dir, mut cfg) = setup(0);
    let good = cfg.data.catalog.clone();
    cfg.data.catalog = good.with_file_name("missing.json");
    let err = cmd_ingest(&cfg).unwrap_err().to_string();
    assert!(err.contains("catalog"), "{err}");
    cfg.data.catalog = good;
    cfg.split.train = 0.9;
    assert!(cmd_ingest(&cfg).is_err());
}

#[test]
fn ingest_reports_schema_errors_with_line() {
    let (dir, mut cfg) = setup(0);
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "player_id,game_id,dwelling_time\np1,g0000,2\np1,g0001,oops\n").unwrap();
    cfg.data.interactions = bad;
    let err = format!("{:#}", cmd_ingest(&cfg).unwrap_err());
    assert!(err.contains("bad.csv:3"), "{err}");
}

#[test]
fn train_without_prg_and_with_zero_alpha() {
    let (_dir, mut cfg) = setup(2);
    cmd_ingest(&cfg).unwrap();
    cfg.prg.mode = PrgMode::Off;
    cfg.prg.client.endpoint = "http://unreachable.invalid".into();
    cfg.preference.alpha = 0.0;
    let out = cmd_train(&cfg).unwrap();
    assert_eq!(out.log.len(), 3);
    assert!(out.checkpoint.is_file());
    let log = fs::read_to_string(cfg.train_log_path()).unwrap();
    assert_eq!(log.lines().count(), 4);
    // player game per penr combined; every PER column is zero
    let dump = fs::read_to_string(cfg.out_dir.join("edge_weights.txt")).unwrap();
    assert!(dump.lines().all(|l| l.split(' ').nth(2) == Some("0")));
}

#[test]
fn same_seed_gives_same_final_loss() {
    let (_dir, mut cfg) = setup(2);
    cfg.prg.mode = PrgMode::Stub;
    cfg.prg.stub_dim = 8;
    cmd_ingest(&cfg).unwrap();
    let a = cmd_train(&cfg).unwrap();
    let b = cmd_train(&cfg).unwrap();
    assert_eq!(a.log.last().unwrap().stats.loss, b.log.last().unwrap().stats.loss);
    cfg.train.seed = 99;
    let c = cmd_train(&cfg).unwrap();
    assert_ne!(a.log.last().unwrap().stats.loss, c.log.last().unwrap().stats.loss);
}

#[test]
fn divergence_keeps_partial_log() {
    let (_dir, mut cfg) = setup(0);
    cmd_ingest(&cfg).unwrap();
    cfg.train.learning_rate = 1e200;
    cfg.train.batch_size = 16;
    let err = cmd_train(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("diverged"), "{err:#}");
    let log = fs::read_to_string(cfg.train_log_path()).unwrap();
    assert!(log.starts_with("epoch,loss"));
    assert!(!cfg.checkpoint_path().exists());
}

#[test]
fn evaluate_reports_every_metric_for_every_k() {
    let (_dir, mut cfg) = setup(0);
    cmd_ingest(&cfg).unwrap();
    // freshly initialised model
    cfg.train.epochs = 0;
    cmd_train(&cfg).unwrap();
    cfg.eval.ks = vec![1, 3, 5];
    let report = cmd_evaluate(&cfg, None, EvalSplit::Test).unwrap();
    assert_eq!(report.per_k.len(), 3);
    let text = fs::read_to_string(cfg.out_dir.join("report.txt")).unwrap();
    for m in &report.per_k {
        for (name, v) in m.entries() {
            assert!(v.is_finite());
            assert!(text.contains(&format!("{name}@{} ", m.k)), "{name}@{}", m.k);
        }
    }
    let csv = fs::read_to_string(cfg.out_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["per_k"].as_array().unwrap().len(), 3);
    assert!(cmd_evaluate(&cfg, None, EvalSplit::Valid).is_ok());
}

#[test]
fn evaluate_without_checkpoint_fails() {
    let (_dir, cfg) = setup(0);
    cmd_ingest(&cfg).unwrap();
    let err = cmd_evaluate(&cfg, None, EvalSplit::Test).unwrap_err().to_string();
    assert!(err.contains("checkpoint"), "{err}");
    assert!(cmd_evaluate(&cfg, Some(Path::new("nope.json")), EvalSplit::Test).is_err());
}

#[test]
fn analyze_commands_write_reports() {
    let (_dir, cfg) = setup(2);
    cmd_ingest(&cfg).unwrap();

    let inf = cmd_analyze(
        &cfg,
        &AnalyzeCommand::Influence {
            e_h: 5.0,
            n_h: 0.2,
            n_l: 6.0,
            convention: DegreeConvention::Plain,
        },
    )
    .unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&inf[0]).unwrap()).unwrap();
    let sum: f64 = ["inf_i0", "inf_i1", "inf_u0", "inf_u1"].iter().map(|k| v[k].as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);

    let tr = cmd_analyze(&cfg, &AnalyzeCommand::Tr).unwrap();
    let text = fs::read_to_string(&tr[0]).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[0].starts_with("0.1,") && rows[9].starts_with("1.0,1,"));

    let ks = cmd_analyze(&cfg, &AnalyzeCommand::Ks { min_sample: 10 }).unwrap();
    let text = fs::read_to_string(&ks[0]).unwrap();
    assert!(text.lines().skip(1).any(|l| l.starts_with('g')), "{text}");

    let conn = cmd_analyze(&cfg, &AnalyzeCommand::Connections).unwrap();
    assert_eq!(fs::read_to_string(&conn[0]).unwrap().lines().count(), 7);

    // spectrum needs a model
    let spectrum = AnalyzeCommand::Spectrum {
        player: Some("p0003".into()),
        max_nodes: 12,
        checkpoint: None,
    };
    assert!(cmd_analyze(&cfg, &spectrum).is_err());
    cmd_train(&cfg).unwrap();
    let files = cmd_analyze(&cfg, &spectrum).unwrap();
    let text = fs::read_to_string(&files[0]).unwrap();
    let energy: f64 = text.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse::<f64>().unwrap()).sum();
    assert_eq!(text.lines().count(), 13);
    assert!((energy - 1.0).abs() < 1e-9);
}

#[test]
fn binary_runs_the_pipeline_from_a_config_file() {
    let (dir, cfg) = setup(0);
    let config = dir.path().join("run.toml");
    let text = "out_dir = \"out\"\n[data]\ninteractions = \"data/interactions.csv\"\ncatalog = \"data/catalog.json\"\n[train]\nepochs = 1\nd_shared = 8\n[eval]\nks = [5]\n";
    fs::write(&config, text).unwrap();
    let bin = env!("CARGO_BIN_EXE_gamerec");
    let run = |args: &[&str]| {
        Command::new(bin)
            .arg("--config")
            .arg(&config)
            .args(args)
            .output()
            .unwrap()
    };
    assert!(run(&["ingest"]).status.success());
    assert!(run(&["train", "--epochs", "2", "--prg", "stub"]).status.success());
    let out = run(&["evaluate"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("recall@5"));
    assert_eq!(
        fs::read_to_string(cfg.train_log_path()).unwrap().lines().count(),
        3,
        "flag overrides the file"
    );
    let out = run(&["analyze", "influence", "--weights", "5", "0.2", "6"]);
    assert!(out.status.success());
    let bad = run(&["evaluate", "--checkpoint", "missing.json"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8(bad.stderr).unwrap().starts_with("error:"));
}
