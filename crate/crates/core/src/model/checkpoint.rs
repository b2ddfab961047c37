use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Model;
use crate::dataset::IdMap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

/// SHA-256 over the player and game id lists.
pub fn id_map_digest(ids: &IdMap) -> String {
    let mut h = Sha256::new();
    for (tag, list) in [("players", &ids.players), ("games", &ids.games)] {
        h.update(tag.as_bytes());
        h.update((list.len() as u64).to_le_bytes());
        for id in list {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// A model together with the id map it was trained against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub version: u32,
    pub id_map_digest: String,
    pub model: Model<T>,
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> Checkpoint<T> {
    pub fn new(model: Model<T>, ids: &IdMap) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            id_map_digest: id_map_digest(ids),
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint and checks it against `ids`.
    pub fn load(path: &Path, ids: &IdMap) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Self = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        let expected = id_map_digest(ids);
        if ck.id_map_digest != expected {
            return Err(Error::Checkpoint(format!(
                "id map digest mismatch: checkpoint {}, dataset {expected}",
                ck.id_map_digest
            )));
        }
        Ok(ck)
    }
}
