//! On-disk datasets: scene and template files plus a JSON manifest listing
//! the pairs of each split.
//!
//! ```json
//! { "version": 1,
//!   "splits": { "train": [ { "template": "templates/synth-0.txt",
//!                            "target": "scenes/synth-1.txt",
//!                            "matches": "matches/train-0.txt" } ] } }
//! ```
//! Paths are relative to the manifest. `matches` may be omitted.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bench::synthetic::SyntheticDataset;
use crate::error::{Error, Result};
use crate::io::{load_matches, load_scene, load_template, save_matches, save_scene, save_template, LegacyDims};
use crate::types::{MatchInstance, Scene, TemplateShape};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub template: PathBuf,
    pub target: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub splits: BTreeMap<String, Vec<PairEntry>>,
}

/// A loaded manifest: instances per split name.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub splits: BTreeMap<String, Vec<MatchInstance>>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Result<&[MatchInstance]> {
        self.splits
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidConfig(format!("dataset has no `{name}` split")))
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

/// Writes every image once as a scene and once as a template, the match
/// files, and `manifest.json`. Returns the manifest path.
pub fn write_synthetic(ds: &SyntheticDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["scenes", "templates", "matches"] {
        mkdir(&dir.join(sub))?;
    }
    for img in &ds.images {
        let id = img.scene.id();
        save_scene(&img.scene, dir.join(format!("scenes/{id}.txt")))?;
        let t = TemplateShape::new(img.scene.clone(), img.shape_index.clone())?;
        save_template(&t, dir.join(format!("templates/{id}.txt")))?;
    }
    let mut splits = BTreeMap::new();
    for (name, pairs) in [("train", &ds.train), ("val", &ds.val), ("test", &ds.test)] {
        let mut entries = Vec::with_capacity(pairs.len());
        for (k, inst) in pairs.iter().enumerate() {
            let matches = PathBuf::from(format!("matches/{name}-{k}.txt"));
            if let Some(gt) = inst.ground_truth() {
                save_matches(gt, dir.join(&matches))?;
            }
            entries.push(PairEntry {
                template: format!("templates/{}.txt", inst.template().scene().id()).into(),
                target: format!("scenes/{}.txt", inst.target().id()).into(),
                matches: inst.ground_truth().map(|_| matches),
            });
        }
        splits.insert(name.to_string(), entries);
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        splits,
    };
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::file(&path, e))?;
    Ok(path)
}

/// Loads a manifest; scene files shared between pairs are read once.
pub fn load_dataset(path: impl AsRef<Path>, legacy: Option<LegacyDims>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::VersionMismatch {
            expected: MANIFEST_VERSION,
            found: manifest.version,
        });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut scenes: HashMap<PathBuf, Arc<Scene>> = HashMap::new();
    let mut templates: HashMap<PathBuf, TemplateShape> = HashMap::new();
    let mut out = Dataset::default();
    for (name, entries) in manifest.splits {
        let mut insts = Vec::with_capacity(entries.len());
        for e in entries {
            let tp = base.join(&e.template);
            let template = match templates.get(&tp) {
                Some(t) => t.clone(),
                None => {
                    let t = load_template(&tp, legacy)?;
                    templates.insert(tp, t.clone());
                    t
                }
            };
            let sp = base.join(&e.target);
            let target = match scenes.get(&sp) {
                Some(s) => s.clone(),
                None => {
                    let s = Arc::new(load_scene(&sp, legacy)?);
                    scenes.insert(sp, s.clone());
                    s
                }
            };
            let gt = e
                .matches
                .map(|m| load_matches(base.join(m), template.len(), target.len()))
                .transpose()?;
            insts.push(MatchInstance::new(template, target, gt)?);
        }
        out.splits.insert(name, insts);
    }
    Ok(out)
}
