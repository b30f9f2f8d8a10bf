//! Project configuration: one JSON document holding every knob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wordspot_core::augment::SyntheticCorpusConfig;
use wordspot_core::embedder::TrainConfig;
use wordspot_core::eval::EvalConfig;
use wordspot_core::geometry::MatchConfig;
use wordspot_core::index::IndexConfig;
use wordspot_core::text::TextEmbedder;

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "WORDSPOT_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingChoice {
    Phoc,
    #[default]
    Dctow,
}

impl EmbeddingChoice {
    pub fn embedder(self) -> TextEmbedder {
        match self {
            EmbeddingChoice::Phoc => TextEmbedder::phoc(),
            EmbeddingChoice::Dctow => TextEmbedder::dctow(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub index: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub paths: Paths,
    pub embedding: EmbeddingChoice,
    pub synth: SyntheticCorpusConfig,
    pub train: TrainConfig,
    /// Proposal labeling used to build training crops.
    pub matching: MatchConfig,
    pub index: IndexConfig,
    pub eval: EvalConfig,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ProjectConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Writes the config with every default spelled out.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.index.dtp.validate()?;
        self.index.query.validate()?;
        self.eval.validate()?;
        self.matching.validate()?;
        self.synth.augment.validate()?;
        if self.index.resize_target == 0 {
            return Err(Error::Usage("index.resize_target must be positive".into()));
        }
        Ok(())
    }

    /// The config file to use: `explicit`, else `$WORDSPOT_CONFIG`.
    pub fn locate(explicit: Option<&Path>) -> Option<PathBuf> {
        explicit.map(Path::to_path_buf).or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
    }

    /// Loads the located config, or the defaults when there is none.
    pub fn resolve(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        match Self::locate(explicit) {
            Some(p) => Ok((Self::load(&p)?, Some(p))),
            None => Ok((Self::default(), None)),
        }
    }
}
