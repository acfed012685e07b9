//! Fixed-baseline pairing of frames from a landmark sequence.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::features::{with_shape_context, ShapeContextConfig};
use crate::io::{load_scene, LegacyDims};
use crate::types::{Assignment, MatchInstance, Scene, TemplateShape};

/// Landmark files in `dir`, ordered by the trailing number in their names
/// (then by name).
pub fn frame_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    let key = |p: &PathBuf| {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let digits: String = name
            .chars()
            .rev()
            .skip_while(|c| !c.is_ascii_digit())
            .take_while(|c| c.is_ascii_digit())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        (digits.parse::<u64>().unwrap_or(u64::MAX), name)
    };
    paths.sort_by_key(key);
    Ok(paths)
}

pub fn load_frames(dir: impl AsRef<Path>, legacy: Option<LegacyDims>) -> Result<Vec<Arc<Scene>>> {
    let paths = frame_paths(dir)?;
    paths
        .iter()
        .map(|p| load_scene(p, legacy).map(Arc::new))
        .collect()
}

/// Point indices sorted by angle around the centroid, starting from the
/// positive x axis.
pub fn angular_order(scene: &Scene) -> Vec<usize> {
    let n = scene.len() as f64;
    let (cx, cy) = scene
        .points()
        .iter()
        .fold((0.0, 0.0), |(x, y), p| (x + p.x / n, y + p.y / n));
    let mut idx: Vec<usize> = (0..scene.len()).collect();
    let ang = |i: usize| {
        let p = scene.point(i);
        (p.y - cy).atan2(p.x - cx)
    };
    idx.sort_by(|&a, &b| ang(a).total_cmp(&ang(b)).then(a.cmp(&b)));
    idx
}

/// All pairs `(f, f + baseline)`. The template is frame `f` in angular
/// order; landmark `k` of one frame corresponds to landmark `k` of every
/// other. Frames without descriptors get Shape Context descriptors.
pub fn house_pairs(
    frames: &[Arc<Scene>],
    baseline: usize,
    sc: &ShapeContextConfig,
) -> Result<Vec<MatchInstance>> {
    if baseline >= frames.len() {
        return Err(Error::InvalidConfig(format!(
            "baseline {baseline} needs more than {} frames",
            frames.len()
        )));
    }
    let n = frames[0].len();
    if let Some(f) = frames.iter().find(|f| f.len() != n) {
        return Err(Error::InvalidScene(format!(
            "frame `{}` has {} landmarks, expected {n}",
            f.id(),
            f.len()
        )));
    }
    let frames: Vec<Arc<Scene>> = frames
        .iter()
        .map(|f| {
            if f.has_descriptors() {
                Ok(f.clone())
            } else {
                with_shape_context(f, sc).map(Arc::new)
            }
        })
        .collect::<Result<_>>()?;
    (0..frames.len() - baseline)
        .map(|f| {
            let order = angular_order(&frames[f]);
            let target = frames[f + baseline].clone();
            let gt = Assignment::new(order.clone(), target.len())?;
            let template = TemplateShape::new(frames[f].clone(), order)?;
            MatchInstance::new(template, target, Some(gt))
        })
        .collect()
}

/// Splits a pair list into consecutive thirds: train, validation, test.
pub fn split_thirds<T: Clone>(pairs: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = pairs.len();
    let a = n / 3;
    let b = 2 * n / 3;
    (pairs[..a].to_vec(), pairs[a..b].to_vec(), pairs[b..].to_vec())
}
