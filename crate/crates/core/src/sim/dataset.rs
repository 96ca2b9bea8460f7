use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::episode::{generate_episode, Episode};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::par;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub t: usize,
    pub n: usize,
    pub w: usize,
    pub h: usize,
}

/// Index of a generated dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub base_seed: u64,
    pub shape_ids: Vec<usize>,
    pub sim: SimConfig,
    pub episodes: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn total_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.t).sum()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            what: "manifest",
            path,
            msg: e.to_string(),
        })
    }
}

/// Generates `count` episodes from seeds `base_seed, base_seed + 1, ...` into
/// `dir` and writes the manifest last.
pub fn generate_dataset(
    name: &str,
    cfg: &SimConfig,
    count: usize,
    base_seed: u64,
    dir: &Path,
) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = par::try_map(count, |i| {
        let seed = base_seed + i as u64;
        let ep = generate_episode(cfg, seed)?;
        let file = format!("{name}_{i:05}.odyn");
        ep.save(&dir.join(&file))?;
        Ok(ManifestEntry {
            file,
            seed,
            t: ep.len(),
            n: ep.n,
            w: ep.w,
            h: ep.h,
        })
    })?;
    let manifest = Manifest {
        dataset: name.to_string(),
        base_seed,
        shape_ids: cfg.shape_ids.clone(),
        sim: cfg.clone(),
        episodes: entries,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

/// A dataset loaded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub episodes: Vec<Episode>,
}

/// Reads the manifest in `dir` and every episode it lists, checking that the
/// recorded dimensions agree.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(dir)?;
    let episodes = par::try_map(manifest.episodes.len(), |i| {
        let entry = &manifest.episodes[i];
        let path = dir.join(&entry.file);
        let ep = Episode::load(&path)?;
        if (ep.len(), ep.n, ep.w, ep.h) != (entry.t, entry.n, entry.w, entry.h) {
            return Err(Error::Format {
                what: "episode",
                path,
                msg: format!("dimensions disagree with the manifest entry {entry:?}"),
            });
        }
        Ok(ep)
    })?;
    Ok(Dataset {
        name: manifest.dataset.clone(),
        dir: dir.to_path_buf(),
        manifest,
        episodes,
    })
}
