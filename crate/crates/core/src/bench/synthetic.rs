//! Synthetic silhouette data: shape points and outliers scattered along a
//! closed polyline, perturbed independently in each generated image.

use std::f64::consts::TAU;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{with_shape_context, ShapeContextConfig};
use crate::types::{Assignment, MatchInstance, Point2, Scene, TemplateShape};

/// A closed polyline; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    vertices: Vec<Point2>,
    cumulative: Vec<f64>,
}

impl Silhouette {
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 2 || vertices.iter().any(|p| !p.is_finite()) {
            return Err(Error::Degenerate(
                "a silhouette needs at least two finite vertices".into(),
            ));
        }
        let n = vertices.len();
        let mut cumulative = Vec::with_capacity(n + 1);
        cumulative.push(0.0);
        for i in 0..n {
            let d = vertices[i].dist(vertices[(i + 1) % n]);
            cumulative.push(cumulative[i] + d);
        }
        if !(cumulative[n] > 0.0) {
            return Err(Error::Degenerate("silhouette has zero length".into()));
        }
        Ok(Silhouette {
            vertices,
            cumulative,
        })
    }

    /// Smooth star-shaped blob of `vertices` points from a few random
    /// harmonics, centred in a `width x height` image.
    pub fn random_blob(seed: u64, vertices: usize, width: f64, height: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let harmonics: Vec<(f64, f64)> = (2..=6)
            .map(|k| {
                let amp = rng.gen_range(-0.3..0.3) / k as f64;
                (amp, rng.gen_range(0.0..TAU))
            })
            .collect();
        let (cx, cy) = (width / 2.0, height / 2.0);
        let radius = 0.35 * width.min(height);
        let pts = (0..vertices)
            .map(|v| {
                let t = TAU * v as f64 / vertices as f64;
                let r = harmonics
                    .iter()
                    .enumerate()
                    .fold(1.0, |acc, (j, (a, phase))| {
                        acc + a * ((j as f64 + 2.0) * t + phase).cos()
                    });
                Point2::new(cx + radius * r * t.cos(), cy + radius * r * t.sin())
            })
            .collect();
        Silhouette::new(pts)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("nonempty")
    }

    /// Point at arc length `s` from the first vertex, `0 <= s < length`.
    pub fn at(&self, s: f64) -> Point2 {
        let n = self.vertices.len();
        let s = s.rem_euclid(self.length());
        let seg = self.cumulative.partition_point(|&c| c <= s).clamp(1, n) - 1;
        let (a, b) = (self.vertices[seg], self.vertices[(seg + 1) % n]);
        let len = self.cumulative[seg + 1] - self.cumulative[seg];
        let t = if len > 0.0 { (s - self.cumulative[seg]) / len } else { 0.0 };
        Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    /// `count` points uniform by arc length, in sampling order.
    pub fn sample(&self, rng: &mut ChaCha8Rng, count: usize) -> Vec<Point2> {
        (0..count)
            .map(|_| self.at(rng.gen_range(0.0..self.length())))
            .collect()
    }

    /// Plain `x y` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pts = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(k + 1, e.to_string()))?;
            if vals.len() != 2 {
                return Err(Error::parse(k + 1, format!("expected `x y`, found {} values", vals.len())));
            }
            pts.push(Point2::new(vals[0], vals[1]));
        }
        Silhouette::new(pts)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Silhouette::parse(&text)
    }

    pub fn format(&self) -> String {
        let mut s = String::from("# closed polyline, one `x y` vertex per line\n");
        for p in &self.vertices {
            s.push_str(&format!("{} {}\n", p.x, p.y));
        }
        s
    }
}

fn default_n_shape() -> usize {
    25
}
fn default_n_images() -> usize {
    10
}
fn default_width() -> f64 {
    640.0
}
fn default_height() -> f64 {
    480.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    #[serde(default = "default_n_shape")]
    pub n_shape: usize,
    #[serde(default)]
    pub n_outliers: usize,
    /// Each coordinate moves by up to `epsilon / 2` pixels.
    #[serde(default)]
    pub epsilon: f64,
    /// Images per split.
    #[serde(default = "default_n_images")]
    pub n_images: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "default_height")]
    pub height: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_shape: default_n_shape(),
            n_outliers: 0,
            epsilon: 0.0,
            n_images: default_n_images(),
            seed: 0,
            width: default_width(),
            height: default_height(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_shape < 3 {
            return Err(Error::InvalidConfig("n_shape must be at least 3".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig("epsilon must be finite and nonnegative".into()));
        }
        if self.n_images < 2 {
            return Err(Error::InvalidConfig("need at least two images per split".into()));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidConfig("image size must be positive".into()));
        }
        Ok(())
    }
}

/// One generated image: a scene whose points are shuffled, and where each
/// shape point ended up.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticImage {
    pub scene: Arc<Scene>,
    /// `shape_index[k]` is the scene index of shape point `k`.
    pub shape_index: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    /// The unperturbed shape points in template order.
    pub shape: Vec<Point2>,
    pub train: Vec<MatchInstance>,
    pub val: Vec<MatchInstance>,
    pub test: Vec<MatchInstance>,
    pub images: Vec<SyntheticImage>,
}

fn perturb(p: Point2, eps: f64, rng: &mut ChaCha8Rng) -> Point2 {
    if eps == 0.0 {
        return p;
    }
    let h = eps / 2.0;
    Point2::new(p.x + rng.gen_range(-h..=h), p.y + rng.gen_range(-h..=h))
}

/// Generates `3 * n_images` images and every unordered pair within each
/// split. Shape points keep their sampling order as the template order;
/// outliers are drawn afresh along the silhouette for every image, and the
/// scene order is shuffled so that indices carry no information.
pub fn gen_synthetic(
    cfg: &SyntheticConfig,
    silhouette: &Silhouette,
    sc: &ShapeContextConfig,
) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = silhouette.sample(&mut rng, cfg.n_shape);
    let total = cfg.n_shape + cfg.n_outliers;

    let mut images = Vec::with_capacity(3 * cfg.n_images);
    for img in 0..3 * cfg.n_images {
        let mut pts: Vec<Point2> = shape.iter().map(|&p| perturb(p, cfg.epsilon, &mut rng)).collect();
        for q in silhouette.sample(&mut rng, cfg.n_outliers) {
            pts.push(perturb(q, cfg.epsilon, &mut rng));
        }
        let mut perm: Vec<usize> = (0..total).collect();
        perm.shuffle(&mut rng);
        // perm[j] is the original index placed at scene position j.
        let mut shape_index = vec![0; cfg.n_shape];
        let mut placed = Vec::with_capacity(total);
        for (j, &orig) in perm.iter().enumerate() {
            placed.push(pts[orig]);
            if orig < cfg.n_shape {
                shape_index[orig] = j;
            }
        }
        let scene = Scene::new(format!("synth-{img}"), placed, None, cfg.width, cfg.height)?;
        let scene = with_shape_context(&scene, sc)?;
        images.push(SyntheticImage {
            scene: Arc::new(scene),
            shape_index,
        });
    }

    let split = |k: usize| -> Result<Vec<MatchInstance>> {
        let imgs = &images[k * cfg.n_images..(k + 1) * cfg.n_images];
        let mut out = Vec::with_capacity(cfg.n_images * (cfg.n_images - 1) / 2);
        for a in 0..imgs.len() {
            for b in a + 1..imgs.len() {
                let template = TemplateShape::new(imgs[a].scene.clone(), imgs[a].shape_index.clone())?;
                let gt = Assignment::new(imgs[b].shape_index.clone(), imgs[b].scene.len())?;
                out.push(MatchInstance::new(template, imgs[b].scene.clone(), Some(gt))?);
            }
        }
        Ok(out)
    };
    Ok(SyntheticDataset {
        shape,
        train: split(0)?,
        val: split(1)?,
        test: split(2)?,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_length_parametrisation() {
        let sq = Silhouette::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.0, 2.0),
            Point2::new(0.0, 2.0),
        ])
        .unwrap();
        assert_eq!(sq.length(), 8.0);
        assert_eq!(sq.at(1.0), Point2::new(1.0, 0.0));
        assert_eq!(sq.at(3.0), Point2::new(2.0, 1.0));
        assert_eq!(sq.at(7.5), Point2::new(0.0, 0.5));
    }

    #[test]
    fn zero_length_is_rejected() {
        let p = Point2::new(1.0, 1.0);
        assert!(Silhouette::new(vec![p, p, p]).is_err());
    }

    #[test]
    fn blob_round_trips_through_text() {
        let b = Silhouette::random_blob(3, 200, 640.0, 480.0).unwrap();
        assert_eq!(b.vertices().len(), 200);
        let again = Silhouette::parse(&b.format()).unwrap();
        assert_eq!(again, b);
    }
}
