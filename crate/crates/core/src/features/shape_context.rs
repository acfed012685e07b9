//! Log-polar Shape Context histograms computed from landmark geometry.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Point2, Scene};

/// Histogram layout. Bins are radial-major: entry `r * angular_bins + a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeContextConfig {
    pub radial_bins: usize,
    pub angular_bins: usize,
    /// Inner and outer radial edges, as multiples of the mean pairwise
    /// distance of the scene.
    pub r_inner: f64,
    pub r_outer: f64,
}

impl Default for ShapeContextConfig {
    fn default() -> Self {
        ShapeContextConfig {
            radial_bins: 5,
            angular_bins: 12,
            r_inner: 0.125,
            r_outer: 2.0,
        }
    }
}

impl ShapeContextConfig {
    pub fn dim(&self) -> usize {
        self.radial_bins * self.angular_bins
    }

    pub fn validate(&self) -> Result<()> {
        if self.radial_bins == 0 || self.angular_bins == 0 {
            return Err(Error::InvalidConfig("Shape Context needs at least one bin".into()));
        }
        if !(self.r_inner > 0.0 && self.r_outer > self.r_inner && self.r_outer.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "Shape Context radii must satisfy 0 < r_inner < r_outer (got {} and {})",
                self.r_inner, self.r_outer
            )));
        }
        Ok(())
    }

    /// Log-spaced radial edges, `radial_bins + 1` values from `r_inner` to
    /// `r_outer`.
    pub fn radial_edges(&self) -> Vec<f64> {
        let (lo, hi) = (self.r_inner.ln(), self.r_outer.ln());
        let steps = self.radial_bins as f64;
        (0..=self.radial_bins)
            .map(|k| (lo + (hi - lo) * k as f64 / steps).exp())
            .collect()
    }

    fn radial_bin(&self, r: f64, edges: &[f64]) -> usize {
        // Bin k covers [edges[k], edges[k+1]); anything below the inner edge
        // joins the first bin, anything beyond the outer edge the last.
        let inner = &edges[1..self.radial_bins];
        inner.iter().take_while(|&&e| r >= e).count()
    }

    fn angular_bin(&self, dx: f64, dy: f64) -> usize {
        let theta = dy.atan2(dx).rem_euclid(TAU);
        let bin = (theta / TAU * self.angular_bins as f64) as usize;
        bin.min(self.angular_bins - 1)
    }
}

/// Mean distance over all unordered pairs.
pub fn mean_pairwise_distance(points: &[Point2]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += points[i].dist(points[j]);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

fn histogram(
    points: &[Point2],
    i: usize,
    mean: f64,
    cfg: &ShapeContextConfig,
    edges: &[f64],
) -> Vec<f64> {
    let mut h = vec![0.0; cfg.dim()];
    let centre = points[i];
    for (j, p) in points.iter().enumerate() {
        if j == i {
            continue;
        }
        let (dx, dy) = (p.x - centre.x, p.y - centre.y);
        let r = dx.hypot(dy) / mean;
        let bin = cfg.radial_bin(r, edges) * cfg.angular_bins + cfg.angular_bin(dx, dy);
        h[bin] += 1.0;
    }
    let total = (points.len() - 1) as f64;
    h.iter_mut().for_each(|v| *v /= total);
    h
}

fn check(points: &[Point2], cfg: &ShapeContextConfig) -> Result<f64> {
    cfg.validate()?;
    if points.len() < 2 {
        return Err(Error::Degenerate(
            "Shape Context needs at least two points".into(),
        ));
    }
    let mean = mean_pairwise_distance(points);
    if !(mean > 0.0) {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    Ok(mean)
}

/// Normalised histogram of the other points around point `i` of `scene`.
pub fn shape_context(scene: &Scene, i: usize, cfg: &ShapeContextConfig) -> Result<Vec<f64>> {
    if i >= scene.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: scene.len(),
        });
    }
    let mean = check(scene.points(), cfg)?;
    Ok(histogram(scene.points(), i, mean, cfg, &cfg.radial_edges()))
}

/// Descriptors for every point of `points`.
pub fn shape_context_all(points: &[Point2], cfg: &ShapeContextConfig) -> Result<Vec<Vec<f64>>> {
    let mean = check(points, cfg)?;
    let edges = cfg.radial_edges();
    Ok((0..points.len())
        .map(|i| histogram(points, i, mean, cfg, &edges))
        .collect())
}

/// Returns `scene` with Shape Context descriptors replacing any it had.
pub fn with_shape_context(scene: &Scene, cfg: &ShapeContextConfig) -> Result<Scene> {
    scene.with_descriptors(shape_context_all(scene.points(), cfg)?)
}

/// Like [`with_shape_context`], but histograms only count the points in
/// `subset`. Points outside the subset get the histogram of the subset
/// around them.
pub fn with_shape_context_subset(
    scene: &Scene,
    subset: &[usize],
    cfg: &ShapeContextConfig,
) -> Result<Scene> {
    let sub: Vec<Point2> = subset.iter().map(|&i| scene.point(i)).collect();
    let mean = check(&sub, cfg)?;
    let edges = cfg.radial_edges();
    let descriptors = (0..scene.len())
        .map(|i| {
            let mut pts = sub.clone();
            let pos = subset.iter().position(|&s| s == i).unwrap_or_else(|| {
                pts.push(scene.point(i));
                pts.len() - 1
            });
            histogram(&pts, pos, mean, cfg, &edges)
        })
        .collect();
    scene.with_descriptors(descriptors)
}
