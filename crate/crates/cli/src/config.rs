//! Run configuration: one TOML file, overridable from the command line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use gamerec::dataset::SplitRatios;
use gamerec::model::TrainConfig;
use gamerec::pipeline::{PopularityConfig, PreferenceConfig};
use gamerec::prg::{FusionMode, HttpClientConfig};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Interaction records (`.csv`, `.tsv` or `.jsonl`).
    pub interactions: PathBuf,
    /// Catalog records (`.json` array or `.jsonl`).
    pub catalog: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        Self {
            train: r.train,
            valid: r.valid,
            test: r.test,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            valid: self.valid,
            test: self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrgMode {
    #[default]
    Off,
    /// Deterministic offline generator and embedder.
    Stub,
    /// HTTP text service.
    Live,
}

impl fmt::Display for PrgMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrgMode::Off => "off",
            PrgMode::Stub => "stub",
            PrgMode::Live => "live",
        })
    }
}

impl FromStr for PrgMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(PrgMode::Off),
            "stub" => Ok(PrgMode::Stub),
            "live" => Ok(PrgMode::Live),
            other => bail!("unknown PRG mode `{other}` (expected off, stub or live)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrgConfig {
    pub mode: PrgMode,
    pub fusion: FusionMode,
    /// Embedding width of the stub embedder.
    pub stub_dim: usize,
    /// Description cache; defaults to `<out>/descriptions.jsonl` in live mode
    /// and to memory in stub mode.
    pub cache: Option<PathBuf>,
    pub client: HttpClientConfig,
}

impl Default for PrgConfig {
    fn default() -> Self {
        Self {
            mode: PrgMode::Off,
            fusion: FusionMode::Mlp,
            stub_dim: 64,
            cache: None,
            client: HttpClientConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ks: vec![5, 10, 20] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub preference: PreferenceConfig,
    pub popularity: PopularityConfig,
    pub prg: PrgConfig,
    pub eval: EvalConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            split: SplitConfig::default(),
            train: TrainConfig::default(),
            preference: PreferenceConfig::default(),
            popularity: PopularityConfig::default(),
            prg: PrgConfig::default(),
            eval: EvalConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses a TOML file. Relative data paths resolve against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.data.interactions, &mut cfg.data.catalog, &mut cfg.out_dir] {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(c) = cfg.prg.cache.as_mut().filter(|c| c.is_relative()) {
            *c = base.join(&*c);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Checks every setting that does not need the data files.
    pub fn validate(&self) -> Result<()> {
        self.split.ratios().validate()?;
        self.train.validate()?;
        ensure!(
            self.train.fusion.is_none(),
            "set the fusion mode under [prg], not [train]"
        );
        let a = self.preference.alpha;
        ensure!(
            a == 0.0 || (a > 0.0 && a <= 0.5),
            "preference.alpha must be 0 (disabled) or lie in (0, 0.5], got {a}"
        );
        ensure!(!self.eval.ks.is_empty(), "eval.ks must list at least one K");
        ensure!(self.eval.ks.iter().all(|&k| k >= 1), "every K in eval.ks must be at least 1");
        ensure!(self.prg.stub_dim >= 1, "prg.stub_dim must be at least 1");
        Ok(())
    }

    /// [`validate`](Self::validate) plus existence of the input files.
    pub fn validate_inputs(&self) -> Result<()> {
        self.validate()?;
        for (name, p) in [("interactions", &self.data.interactions), ("catalog", &self.data.catalog)] {
            ensure!(!p.as_os_str().is_empty(), "data.{name} is not set");
            ensure!(p.is_file(), "data.{name} file {} does not exist", p.display());
        }
        Ok(())
    }

    /// Training settings with the fusion mode implied by the PRG mode.
    pub fn effective_train(&self) -> TrainConfig {
        TrainConfig {
            fusion: (self.prg.mode != PrgMode::Off).then_some(self.prg.fusion),
            ..self.train.clone()
        }
    }

    pub fn max_k(&self) -> usize {
        self.eval.ks.iter().copied().max().unwrap_or(1)
    }

    pub fn bundle_path(&self) -> PathBuf {
        self.out_dir.join("bundle.json")
    }

    pub fn id_map_path(&self) -> PathBuf {
        self.out_dir.join("id_map.json")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out_dir.join("checkpoint.json")
    }

    pub fn train_log_path(&self) -> PathBuf {
        self.out_dir.join("train_log.csv")
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.out_dir.join("analysis")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: RunConfig = toml::from_str(
            "[split]\nseed = 7\n[train]\nepochs = 3\n[preference]\nalpha = 0.1\n[prg]\nmode = \"stub\"\n",
        )
        .unwrap();
        assert_eq!(cfg.split.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.d_shared, TrainConfig::default().d_shared);
        assert_eq!(cfg.effective_train().fusion, Some(FusionMode::Mlp));
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3\n").is_err());
    }

    #[test]
    fn validation_errors() {
        let mut cfg = RunConfig::default();
        cfg.split.train = 0.7;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.eval.ks = vec![5, 0];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.preference.alpha = 0.7;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.data.catalog = "does/not/exist.json".into();
        cfg.data.interactions = "does/not/exist.csv".into();
        assert!(cfg.validate_inputs().is_err());
    }
}
