//! Scenes, template shapes, assignments and match instances.
//!
//! Every type here is immutable once constructed; constructors enforce the
//! invariants so downstream code can index without re-checking.

use std::sync::Arc;

use crate::error::{Error, Result};

/// A landmark position in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn sub(self, other: Point2) -> Point2 {
        Point2::new(self.x - other.x, self.y - other.y)
    }
}

/// Per-point descriptor vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
struct Descriptors {
    dim: usize,
    data: Vec<f64>,
}

/// A set of landmarks extracted from one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    id: String,
    points: Vec<Point2>,
    descriptors: Option<Descriptors>,
    width: f64,
    height: f64,
}

impl Scene {
    /// Builds a scene. `descriptors`, when given, must hold one vector per
    /// point, all of the same (nonzero) dimension.
    pub fn new(
        id: impl Into<String>,
        points: Vec<Point2>,
        descriptors: Option<Vec<Vec<f64>>>,
        width: f64,
        height: f64,
    ) -> Result<Self> {
        let id = id.into();
        if points.is_empty() {
            return Err(Error::InvalidScene(format!("scene `{id}` has no points")));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "scene `{id}`: point {i} has a non-finite coordinate"
            )));
        }
        if !(width > 0.0 && width.is_finite()) || !(height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidScene(format!(
                "scene `{id}`: width and height must be positive (got {width} x {height})"
            )));
        }
        let descriptors = match descriptors {
            None => None,
            Some(rows) => {
                if rows.len() != points.len() {
                    return Err(Error::InvalidScene(format!(
                        "scene `{id}`: {} descriptors for {} points",
                        rows.len(),
                        points.len()
                    )));
                }
                let dim = rows[0].len();
                if dim == 0 {
                    None
                } else {
                    let mut data = Vec::with_capacity(dim * rows.len());
                    for (i, row) in rows.iter().enumerate() {
                        if row.len() != dim {
                            return Err(Error::InvalidScene(format!(
                                "scene `{id}`: inconsistent descriptor dimension at point {i} \
                                 (expected {dim}, found {})",
                                row.len()
                            )));
                        }
                        if row.iter().any(|v| !v.is_finite()) {
                            return Err(Error::InvalidScene(format!(
                                "scene `{id}`: non-finite descriptor at point {i}"
                            )));
                        }
                        data.extend_from_slice(row);
                    }
                    Some(Descriptors { dim, data })
                }
            }
        };
        Ok(Scene {
            id,
            points,
            descriptors,
            width,
            height,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point2 {
        self.points[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn has_descriptors(&self) -> bool {
        self.descriptors.is_some()
    }

    /// Descriptor dimension, or `None` when the scene carries none.
    pub fn descriptor_dim(&self) -> Option<usize> {
        self.descriptors.as_ref().map(|d| d.dim)
    }

    pub fn descriptor(&self, i: usize) -> Option<&[f64]> {
        self.descriptors
            .as_ref()
            .map(|d| &d.data[i * d.dim..(i + 1) * d.dim])
    }

    /// Like [`Scene::descriptor`] but fails with `MissingDescriptors`.
    pub fn require_descriptor(&self, i: usize) -> Result<&[f64]> {
        self.descriptor(i)
            .ok_or_else(|| Error::MissingDescriptors(self.id.clone()))
    }

    /// Returns a copy of this scene with its descriptors replaced.
    pub fn with_descriptors(&self, descriptors: Vec<Vec<f64>>) -> Result<Scene> {
        Scene::new(
            self.id.clone(),
            self.points.clone(),
            Some(descriptors),
            self.width,
            self.height,
        )
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Scene {
        self.id = id.into();
        self
    }
}

/// An ordered, cyclic subset of a scene's points: the query shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateShape {
    scene: Arc<Scene>,
    order: Vec<usize>,
}

impl TemplateShape {
    pub fn new(scene: Arc<Scene>, order: Vec<usize>) -> Result<Self> {
        if order.len() < 3 {
            return Err(Error::InvalidTemplate(format!(
                "a template needs at least 3 points, got {}",
                order.len()
            )));
        }
        let mut seen = vec![false; scene.len()];
        for &i in &order {
            if i >= scene.len() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: scene.len(),
                });
            }
            if seen[i] {
                return Err(Error::InvalidTemplate(format!("duplicate point index {i}")));
            }
            seen[i] = true;
        }
        Ok(TemplateShape { scene, order })
    }

    /// Uses every point of `scene`, in file order.
    pub fn whole_scene(scene: Arc<Scene>) -> Result<Self> {
        let order = (0..scene.len()).collect();
        TemplateShape::new(scene, order)
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn scene_arc(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Scene index of template position `i`, taken cyclically.
    pub fn scene_index(&self, i: usize) -> usize {
        self.order[i % self.order.len()]
    }

    /// Coordinates of template position `i`, taken cyclically.
    pub fn point(&self, i: usize) -> Point2 {
        self.scene.point(self.scene_index(i))
    }

    pub fn next(&self, i: usize) -> usize {
        (i + 1) % self.order.len()
    }

    pub fn second_next(&self, i: usize) -> usize {
        (i + 2) % self.order.len()
    }

    pub fn descriptor(&self, i: usize) -> Result<&[f64]> {
        self.scene.require_descriptor(self.scene_index(i))
    }

    /// Replaces the underlying scene, keeping the order.
    pub fn with_scene(&self, scene: Arc<Scene>) -> Result<Self> {
        TemplateShape::new(scene, self.order.clone())
    }
}

/// A map from template positions to target scene indices. Not required to
/// be injective.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    /// Validates every entry against `target_len`.
    pub fn new(map: Vec<usize>, target_len: usize) -> Result<Self> {
        if let Some(&bad) = map.iter().find(|&&u| u >= target_len) {
            return Err(Error::InvalidAssignment(format!(
                "target index {bad} out of range for a scene of {target_len} points"
            )));
        }
        Ok(Assignment(map))
    }

    /// Builds an assignment without range checks. Callers must guarantee
    /// every entry indexes the intended target scene.
    pub fn from_vec_unchecked(map: Vec<usize>) -> Self {
        Assignment(map)
    }

    pub fn identity(n: usize) -> Self {
        Assignment((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> usize {
        self.0[i]
    }

    /// Number of template points that share a target with an earlier one.
    pub fn collisions(&self) -> usize {
        let mut sorted = self.0.clone();
        sorted.sort_unstable();
        sorted.windows(2).filter(|w| w[0] == w[1]).count()
    }

    pub fn check_against(&self, template_len: usize, target_len: usize) -> Result<()> {
        if self.0.len() != template_len {
            return Err(Error::InvalidAssignment(format!(
                "assignment has {} entries for a template of {template_len} points",
                self.0.len()
            )));
        }
        if let Some(&bad) = self.0.iter().find(|&&u| u >= target_len) {
            return Err(Error::InvalidAssignment(format!(
                "target index {bad} out of range for a scene of {target_len} points"
            )));
        }
        Ok(())
    }
}

/// One template/target pair, optionally labelled.
#[derive(Debug, Clone)]
pub struct MatchInstance {
    template: TemplateShape,
    target: Arc<Scene>,
    ground_truth: Option<Assignment>,
}

impl MatchInstance {
    pub fn new(
        template: TemplateShape,
        target: Arc<Scene>,
        ground_truth: Option<Assignment>,
    ) -> Result<Self> {
        if let Some(gt) = &ground_truth {
            gt.check_against(template.len(), target.len())?;
        }
        Ok(MatchInstance {
            template,
            target,
            ground_truth,
        })
    }

    pub fn template(&self) -> &TemplateShape {
        &self.template
    }

    pub fn target(&self) -> &Scene {
        &self.target
    }

    pub fn target_arc(&self) -> &Arc<Scene> {
        &self.target
    }

    pub fn ground_truth(&self) -> Option<&Assignment> {
        self.ground_truth.as_ref()
    }

    pub fn require_ground_truth(&self) -> Result<&Assignment> {
        self.ground_truth.as_ref().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "instance `{}` -> `{}` has no ground truth",
                self.template.scene().id(),
                self.target.id()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Arc<Scene> {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ];
        Arc::new(Scene::new("sq", pts, None, 10.0, 10.0).unwrap())
    }

    #[test]
    fn cyclic_neighbours_wrap() {
        let t = TemplateShape::whole_scene(square()).unwrap();
        let n = t.len();
        assert_eq!(t.next(n - 1), 0);
        assert_eq!(t.second_next(n - 2), 0);
        assert_eq!(t.second_next(n - 1), 1);
        assert_eq!(t.point(n), t.point(0));
    }

    #[test]
    fn template_rejects_duplicates_and_short_orders() {
        assert!(TemplateShape::new(square(), vec![0, 1]).is_err());
        assert!(TemplateShape::new(square(), vec![0, 1, 1]).is_err());
        assert!(TemplateShape::new(square(), vec![0, 1, 7]).is_err());
    }

    #[test]
    fn scene_rejects_bad_input() {
        let p = vec![Point2::new(f64::NAN, 0.0)];
        assert!(Scene::new("a", p, None, 1.0, 1.0).is_err());
        let p = vec![Point2::new(0.0, 0.0)];
        assert!(Scene::new("a", p.clone(), None, 0.0, 1.0).is_err());
        let d = Some(vec![vec![1.0, 2.0]]);
        assert!(Scene::new("a", p.clone(), d, 1.0, 1.0).is_ok());
        let d = Some(vec![vec![1.0], vec![2.0]]);
        assert!(Scene::new("a", p, d, 1.0, 1.0).is_err());
    }

    #[test]
    fn collisions_count_shared_targets() {
        let a = Assignment::new(vec![5, 5, 2, 5], 6).unwrap();
        assert_eq!(a.collisions(), 2);
        assert_eq!(Assignment::identity(4).collisions(), 0);
        assert!(Assignment::new(vec![6], 6).is_err());
    }
}
