//! Delaunay adjacency for landmark sets.
//!
//! A lexicographic sweep builds an initial triangulation, then Lawson flips
//! make every edge locally Delaunay. Predicates are exact (adaptive
//! precision). Co-circular ties are resolved by lifting each point by an
//! infinitesimal that shrinks with its index, so the lowest-indexed point
//! of a co-circular quadruple decides the diagonal.

use std::collections::HashMap;

use robust::Coord;

use crate::error::{Error, Result};
use crate::types::Point2;

/// Undirected graph over landmark indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    matrix: Vec<bool>,
}

impl AdjacencyGraph {
    /// Builds a graph from unordered pairs. Self-loops and out-of-range
    /// indices are rejected; duplicates collapse.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut matrix = vec![false; n * n];
        for (a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b),
                    len: n,
                });
            }
            if a == b {
                return Err(Error::InvalidConfig(format!("self-loop at {a}")));
            }
            matrix[a * n + b] = true;
            matrix[b * n + a] = true;
        }
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if matrix[a * n + b] {
                    edges.push((a, b));
                }
            }
        }
        Ok(AdjacencyGraph { n, edges, matrix })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.n && b < self.n && self.matrix[a * self.n + b]
    }
}

/// 1.0 when `(p1, p2)` is a template edge and `(q1, q2)` a target edge.
pub fn adjacency_feature(
    template: &AdjacencyGraph,
    target: &AdjacencyGraph,
    p1: usize,
    p2: usize,
    q1: usize,
    q2: usize,
) -> Result<f64> {
    for (i, g) in [(p1, template), (p2, template), (q1, target), (q2, target)] {
        if i >= g.n() {
            return Err(Error::IndexOutOfRange { index: i, len: g.n() });
        }
    }
    Ok(if template.has_edge(p1, p2) && target.has_edge(q1, q2) {
        1.0
    } else {
        0.0
    })
}

fn coord(p: Point2) -> Coord<f64> {
    Coord { x: p.x, y: p.y }
}

fn orient(pts: &[Point2], a: usize, b: usize, c: usize) -> f64 {
    robust::orient2d(coord(pts[a]), coord(pts[b]), coord(pts[c]))
}

/// Positive when `d` is strictly inside the circle through the
/// counter-clockwise triangle `(a, b, c)`.
fn incircle(pts: &[Point2], a: usize, b: usize, c: usize, d: usize) -> f64 {
    robust::incircle(coord(pts[a]), coord(pts[b]), coord(pts[c]), coord(pts[d]))
}

/// In-circle test under the index-ordered lifting perturbation. Never ties
/// for four distinct points with `(a, b, c)` counter-clockwise.
fn inside_perturbed(pts: &[Point2], a: usize, b: usize, c: usize, d: usize) -> bool {
    let v = incircle(pts, a, b, c, d);
    if v != 0.0 {
        return v > 0.0;
    }
    // Raising the lifted `d` pushes it outside; raising a vertex of the
    // triangle raises the plane at `d` in proportion to d's barycentric
    // coordinate for that vertex.
    let lowest = *[a, b, c, d].iter().min().expect("nonempty");
    if lowest == d {
        false
    } else if lowest == a {
        orient(pts, d, b, c) > 0.0
    } else if lowest == b {
        orient(pts, a, d, c) > 0.0
    } else {
        orient(pts, a, b, d) > 0.0
    }
}

/// Counter-clockwise triangles of the Delaunay triangulation.
pub fn triangulate(points: &[Point2]) -> Result<Vec<[usize; 3]>> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Degenerate(format!(
            "Delaunay triangulation needs at least 3 points, got {n}"
        )));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::Degenerate(format!("point {i} is not finite")));
    }
    let mut sorted: Vec<usize> = (0..n).collect();
    sorted.sort_by(|&i, &j| {
        points[i]
            .x
            .total_cmp(&points[j].x)
            .then(points[i].y.total_cmp(&points[j].y))
            .then(i.cmp(&j))
    });
    for w in sorted.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(Error::Degenerate(format!(
                "points {} and {} coincide",
                w[0].min(w[1]),
                w[0].max(w[1])
            )));
        }
    }

    let first = sorted[0];
    let k = (2..n)
        .find(|&k| orient(points, first, sorted[1], sorted[k]) != 0.0)
        .ok_or_else(|| Error::Degenerate("all points are collinear".into()))?;
    let apex = sorted[k];

    let mut tris: Vec<[usize; 3]> = Vec::with_capacity(2 * n);
    let mut hull: Vec<usize>;
    if orient(points, first, sorted[1], apex) > 0.0 {
        for i in 0..k - 1 {
            tris.push([sorted[i], sorted[i + 1], apex]);
        }
        hull = sorted[..k].to_vec();
        hull.push(apex);
    } else {
        for i in 0..k - 1 {
            tris.push([sorted[i + 1], sorted[i], apex]);
        }
        hull = sorted[..k].iter().rev().copied().collect();
        hull.push(apex);
    }

    for &q in &sorted[k + 1..] {
        let h = hull.len();
        let visible: Vec<bool> = (0..h)
            .map(|i| orient(points, hull[i], hull[(i + 1) % h], q) < 0.0)
            .collect();
        let start = (0..h)
            .find(|&i| visible[i] && !visible[(i + h - 1) % h])
            .ok_or_else(|| Error::Internal("sweep point sees no hull edge".into()))?;
        let mut count = 0;
        while visible[(start + count) % h] {
            let a = hull[(start + count) % h];
            let b = hull[(start + count + 1) % h];
            tris.push([b, a, q]);
            count += 1;
        }
        // Keep hull[start] and hull[start + count], drop everything between.
        hull.rotate_left(start);
        hull.splice(1..count, [q]);
    }

    lawson_flip(points, &mut tris);
    Ok(tris)
}

fn opposite(tri: &[usize; 3], u: usize, v: usize) -> Option<usize> {
    (0..3)
        .find(|&k| tri[k] == u && tri[(k + 1) % 3] == v)
        .map(|k| tri[(k + 2) % 3])
}

fn lawson_flip(points: &[Point2], tris: &mut [[usize; 3]]) {
    let mut owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(tris.len() * 3);
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            owner.insert((tri[k], tri[(k + 1) % 3]), t);
        }
    }
    let mut stack: Vec<(usize, usize)> = owner.keys().copied().filter(|(u, v)| u < v).collect();
    stack.sort_unstable();

    while let Some((u, v)) = stack.pop() {
        let (Some(&t1), Some(&t2)) = (owner.get(&(u, v)), owner.get(&(v, u))) else {
            continue;
        };
        let c = opposite(&tris[t1], u, v).expect("edge owner is consistent");
        let d = opposite(&tris[t2], v, u).expect("edge owner is consistent");
        if !inside_perturbed(points, u, v, c, d) {
            continue;
        }
        owner.remove(&(u, v));
        owner.remove(&(v, u));
        tris[t1] = [u, d, c];
        tris[t2] = [d, v, c];
        for (t, tri) in [(t1, tris[t1]), (t2, tris[t2])] {
            for k in 0..3 {
                owner.insert((tri[k], tri[(k + 1) % 3]), t);
            }
        }
        for (a, b) in [(u, d), (d, v), (v, c), (c, u)] {
            stack.push((a.min(b), a.max(b)));
        }
    }
}

/// Edge set of the Delaunay triangulation of `points`.
pub fn delaunay(points: &[Point2]) -> Result<AdjacencyGraph> {
    let tris = triangulate(points)?;
    let pairs = tris
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]);
    AdjacencyGraph::new(points.len(), pairs)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const P: fn(f64, f64) -> Point2 = Point2::new;

    #[test]
    fn incircle_sign_convention() {
        let pts = [P(0.0, 0.0), P(2.0, 0.0), P(0.0, 2.0), P(0.5, 0.5), P(5.0, 5.0)];
        assert!(orient(&pts, 0, 1, 2) > 0.0);
        assert!(incircle(&pts, 0, 1, 2, 3) > 0.0);
        assert!(incircle(&pts, 0, 1, 2, 4) < 0.0);
    }

    #[test]
    fn perturbation_matches_an_explicit_lift() {
        // Four co-circular points; the decision must agree with raising the
        // lowest-indexed one by a small amount.
        let pts = [P(1.0, 0.0), P(0.0, 1.0), P(-1.0, 0.0), P(0.0, -1.0)];
        assert_eq!(incircle(&pts, 0, 1, 2, 3), 0.0);
        // Point 0 lowest: raising it makes 3 fall inside circle(0,1,2) when
        // 3 is on the same side of (1,2) as 0.
        assert!(inside_perturbed(&pts, 0, 1, 2, 3));
        assert!(!inside_perturbed(&pts, 1, 2, 3, 0));
    }

    #[test]
    fn single_triangle() {
        let g = delaunay(&[P(0.0, 0.0), P(1.0, 0.0), P(0.0, 1.0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn convex_quad_has_five_edges() {
        let g = delaunay(&[P(0.0, 0.0), P(3.0, 0.2), P(3.3, 2.0), P(0.1, 2.5)]).unwrap();
        assert_eq!(g.edges().len(), 5);
    }

    #[test]
    fn cocircular_square_is_deterministic() {
        let sq = [P(0.0, 0.0), P(1.0, 0.0), P(1.0, 1.0), P(0.0, 1.0)];
        let g = delaunay(&sq).unwrap();
        assert_eq!(g.edges().len(), 5);
        let again = delaunay(&sq).unwrap();
        assert_eq!(g, again);
        // A regular grid: every cell co-circular.
        let grid: Vec<Point2> = (0..5)
            .flat_map(|i| (0..5).map(move |j| P(i as f64, j as f64)))
            .collect();
        let g = delaunay(&grid).unwrap();
        assert_eq!(g.edges().len(), 3 * 25 - 3 - 16);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(delaunay(&[P(0.0, 0.0), P(1.0, 1.0)]).is_err());
        assert!(delaunay(&[P(0.0, 0.0), P(1.0, 1.0), P(2.0, 2.0), P(3.0, 3.0)]).is_err());
        assert!(delaunay(&[P(0.0, 0.0), P(1.0, 0.0), P(1.0, 0.0), P(0.0, 1.0)]).is_err());
    }

    #[test]
    fn collinear_prefix_is_handled() {
        let pts = [P(0.0, 0.0), P(0.0, 1.0), P(0.0, 2.0), P(0.0, 3.0), P(1.0, 1.5)];
        let g = delaunay(&pts).unwrap();
        // Fan from the apex plus the chain.
        assert_eq!(g.edges().len(), 7);
    }

    #[test]
    fn empty_circumcircle_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let pts: Vec<Point2> = (0..40)
                .map(|_| P(rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)))
                .collect();
            let tris = triangulate(&pts).unwrap();
            for t in &tris {
                assert!(orient(&pts, t[0], t[1], t[2]) > 0.0);
                for d in 0..pts.len() {
                    if !t.contains(&d) {
                        assert!(incircle(&pts, t[0], t[1], t[2], d) <= 0.0);
                    }
                }
            }
            let g = delaunay(&pts).unwrap();
            assert!(g.edges().len() <= 3 * pts.len() - 6);
        }
    }

    #[test]
    fn adjacency_feature_cases() {
        let t = AdjacencyGraph::new(3, [(0, 1)]).unwrap();
        let u = AdjacencyGraph::new(4, [(2, 3)]).unwrap();
        assert_eq!(adjacency_feature(&t, &u, 0, 1, 3, 2).unwrap(), 1.0);
        assert_eq!(adjacency_feature(&t, &u, 0, 1, 0, 2).unwrap(), 0.0);
        assert_eq!(adjacency_feature(&t, &u, 1, 2, 0, 1).unwrap(), 0.0);
        assert!(adjacency_feature(&t, &u, 0, 5, 0, 1).is_err());
        assert!(AdjacencyGraph::new(2, [(1, 1)]).is_err());
    }
}
