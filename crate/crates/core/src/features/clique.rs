//! Per-clique feature vectors for the loop-of-cliques model.
//!
//! Clique `i` covers template positions `(i, i+1, i+2)` (cyclic). Its
//! feature vector has one entry per active group:
//!
//! | group            | value                                                    |
//! |------------------|----------------------------------------------------------|
//! | unary            | `<theta0, phi0(s_i, y_i)>`                               |
//! | distance         | `phi1(s_i, s_i+1, ..) + phi1(s_i, s_i+2, ..)`            |
//! | adjacency        | `A(s_i, s_i+1, ..) + A(s_i, s_i+2, ..)`                  |
//! | scaled distance  | `phi2(s_i, s_i+1, s_i+2, ..) + phi2(s_i, s_i+2, s_i+1, ..)` |
//! | angle            | `phi3(s_i, s_i+1, s_i+2, ..)`                            |
//!
//! Each entry is multiplied by the model's scale factor for its group. Going
//! around the loop, every pair `(i, i+1)` and `(i, i+2)` is counted once.

use crate::error::{Error, Result};
use crate::features::delaunay::{delaunay, AdjacencyGraph};
use crate::features::geometry::{angle, d2};
use crate::features::unary::collapse_unary;
use crate::model::{FeatureConfig, FeatureGroup};
use crate::types::{Point2, Scene, TemplateShape};

/// Scaled clique features, one value per active group.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueFeatureVector {
    pub groups: Vec<FeatureGroup>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct TemplateClique {
    d1_next: f64,
    d1_second: f64,
    d2_next: Option<f64>,
    d2_second: Option<f64>,
    angle: Option<f64>,
}

/// Everything needed to evaluate clique features for one template/target
/// pair: collapsed unary scores, Delaunay graphs and template-side geometry
/// are computed once.
#[derive(Debug, Clone)]
pub struct CliqueContext<'a> {
    template: &'a TemplateShape,
    target: &'a Scene,
    groups: Vec<FeatureGroup>,
    penalty: f64,
    template_width: f64,
    unary: Option<Vec<f64>>,
    graphs: Option<(AdjacencyGraph, AdjacencyGraph)>,
    cliques: Vec<TemplateClique>,
}

impl<'a> CliqueContext<'a> {
    /// `theta0` is required when the unary group is active.
    pub fn new(
        template: &'a TemplateShape,
        target: &'a Scene,
        config: &FeatureConfig,
        theta0: Option<&[f64]>,
    ) -> Result<Self> {
        let groups = config.groups.active();
        let unary = if config.groups.unary {
            let theta0 = theta0.ok_or_else(|| {
                Error::InvalidModel("the unary group needs stage-1 weights".into())
            })?;
            Some(collapsed_unary_matrix(template, target, theta0)?)
        } else {
            None
        };
        let graphs = if config.groups.adjacency {
            Some((delaunay(template.scene().points())?, delaunay(target.points())?))
        } else {
            None
        };
        let template_width = if config.template_own_width {
            template.scene().width()
        } else {
            target.width()
        };
        let cliques = (0..template.len())
            .map(|i| {
                let (s1, s2, s3) = (template.point(i), template.point(i + 1), template.point(i + 2));
                TemplateClique {
                    d1_next: s1.dist(s2) / template_width,
                    d1_second: s1.dist(s3) / template_width,
                    d2_next: d2(s1, s2, s3).ok(),
                    d2_second: d2(s1, s3, s2).ok(),
                    angle: angle(s1, s2, s3).ok(),
                }
            })
            .collect();
        Ok(CliqueContext {
            template,
            target,
            groups,
            penalty: config.degenerate_penalty,
            template_width,
            unary,
            graphs,
            cliques,
        })
    }

    pub fn template(&self) -> &TemplateShape {
        self.template
    }

    pub fn target(&self) -> &Scene {
        self.target
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.template.len()
    }

    pub fn template_width(&self) -> f64 {
        self.template_width
    }

    /// Collapsed unary score `<theta0, phi0(s_i, u)>`.
    pub fn unary(&self, i: usize, u: usize) -> Option<f64> {
        self.unary
            .as_ref()
            .map(|m| m[i * self.target.len() + u])
    }

    /// Unscaled group values for clique `i` with targets `(a, b, c)` written
    /// into `out` (length = number of active groups).
    pub fn raw_into(&self, i: usize, a: usize, b: usize, c: usize, out: &mut [f64]) {
        let t = &self.cliques[i];
        let (ya, yb, yc) = (self.target.point(a), self.target.point(b), self.target.point(c));
        let width = self.target.width();
        for (slot, group) in out.iter_mut().zip(&self.groups) {
            *slot = match group {
                FeatureGroup::Unary => self.unary(i, a).expect("unary matrix present"),
                FeatureGroup::Distance => {
                    let e1 = t.d1_next - ya.dist(yb) / width;
                    let e2 = t.d1_second - ya.dist(yc) / width;
                    e1 * e1 + e2 * e2
                }
                FeatureGroup::Adjacency => {
                    let (tg, ug) = self.graphs.as_ref().expect("graphs present");
                    let s0 = self.template.scene_index(i);
                    let s1 = self.template.scene_index(i + 1);
                    let s2 = self.template.scene_index(i + 2);
                    let e1 = tg.has_edge(s0, s1) && ug.has_edge(a, b);
                    let e2 = tg.has_edge(s0, s2) && ug.has_edge(a, c);
                    e1 as u8 as f64 + e2 as u8 as f64
                }
                FeatureGroup::ScaledDistance => {
                    match (t.d2_next, t.d2_second, target_d2(ya, yb, yc)) {
                        (Some(sn), Some(ss), Some((un, us))) => {
                            (sn - un) * (sn - un) + (ss - us) * (ss - us)
                        }
                        _ => self.penalty,
                    }
                }
                FeatureGroup::Angle => match (t.angle, angle(ya, yb, yc).ok()) {
                    (Some(sa), Some(ua)) => (sa - ua) * (sa - ua),
                    _ => self.penalty,
                },
            };
        }
    }

    /// Scaled feature vector for clique `i` with targets `(a, b, c)`.
    pub fn clique_feature(
        &self,
        i: usize,
        a: usize,
        b: usize,
        c: usize,
        scale_factors: &[f64],
    ) -> Result<CliqueFeatureVector> {
        let n = self.n();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let m = self.target.len();
        for idx in [a, b, c] {
            if idx >= m {
                return Err(Error::IndexOutOfRange { index: idx, len: m });
            }
        }
        if scale_factors.len() != self.groups.len() {
            return Err(Error::DimensionMismatch {
                expected: self.groups.len(),
                found: scale_factors.len(),
            });
        }
        let mut values = vec![0.0; self.groups.len()];
        self.raw_into(i, a, b, c, &mut values);
        values
            .iter_mut()
            .zip(scale_factors)
            .for_each(|(v, s)| *v *= s);
        Ok(CliqueFeatureVector {
            groups: self.groups.clone(),
            values,
        })
    }
}

/// Both triangle-normalised distances of a target triple, sharing one mean.
fn target_d2(a: Point2, b: Point2, c: Point2) -> Option<(f64, f64)> {
    let (ab, bc, ac) = (a.dist(b), b.dist(c), a.dist(c));
    let mean = (ab + bc + ac) / 3.0;
    (mean > 0.0).then(|| (ab / mean, ac / mean))
}

/// `n x m` matrix of `<theta0, phi0(s_i, u)>`, row-major by template position.
pub fn collapsed_unary_matrix(
    template: &TemplateShape,
    target: &Scene,
    theta0: &[f64],
) -> Result<Vec<f64>> {
    let m = target.len();
    let mut out = Vec::with_capacity(template.len() * m);
    for i in 0..template.len() {
        let s = template.descriptor(i)?;
        for u in 0..m {
            out.push(collapse_unary(theta0, s, target.require_descriptor(u)?)?);
        }
    }
    Ok(out)
}
