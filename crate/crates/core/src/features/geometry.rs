//! Pairwise and triangle features.
//!
//! `phi1` is invariant to isometries of either pair (given equal widths);
//! `phi2` and `phi3` are invariant to similarities of either triangle.

use crate::error::{Error, Result};
use crate::types::Point2;

/// Euclidean distance scaled by the width of the scene the points live in.
pub fn d1(a: Point2, b: Point2, scene_width: f64) -> Result<f64> {
    if !(scene_width > 0.0) {
        return Err(Error::Degenerate(format!(
            "scene width must be positive, got {scene_width}"
        )));
    }
    Ok(a.dist(b) / scene_width)
}

/// Squared difference of width-normalised distances between a template pair
/// and a target pair.
pub fn phi1(
    s1: Point2,
    s2: Point2,
    y1: Point2,
    y2: Point2,
    template_width: f64,
    target_width: f64,
) -> Result<f64> {
    let diff = d1(s1, s2, template_width)? - d1(y1, y2, target_width)?;
    Ok(diff * diff)
}

/// `|a - b|` divided by the mean of the three side lengths of `(a, b, c)`.
pub fn d2(a: Point2, b: Point2, c: Point2) -> Result<f64> {
    let ab = a.dist(b);
    let mean = (ab + b.dist(c) + a.dist(c)) / 3.0;
    if !(mean > 0.0) {
        return Err(Error::Degenerate("coincident triangle vertices".into()));
    }
    Ok(ab / mean)
}

pub fn phi2(
    s1: Point2,
    s2: Point2,
    s3: Point2,
    y1: Point2,
    y2: Point2,
    y3: Point2,
) -> Result<f64> {
    let diff = d2(s1, s2, s3)? - d2(y1, y2, y3)?;
    Ok(diff * diff)
}

/// Angle at `b` between the rays towards `a` and `c`, in `[0, pi]`.
pub fn angle(a: Point2, b: Point2, c: Point2) -> Result<f64> {
    let u = a.sub(b);
    let v = c.sub(b);
    if (u.x == 0.0 && u.y == 0.0) || (v.x == 0.0 && v.y == 0.0) {
        return Err(Error::Degenerate("zero-length angle arm".into()));
    }
    let cross = u.x * v.y - u.y * v.x;
    let dot = u.x * v.x + u.y * v.y;
    Ok(cross.abs().atan2(dot))
}

/// Squared difference of the angles at the middle vertex of each triple.
pub fn phi3(
    s1: Point2,
    s2: Point2,
    s3: Point2,
    y1: Point2,
    y2: Point2,
    y3: Point2,
) -> Result<f64> {
    let diff = angle(s1, s2, s3)? - angle(y1, y2, y3)?;
    Ok(diff * diff)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI};

    use super::*;

    const P: fn(f64, f64) -> Point2 = Point2::new;

    fn equilateral() -> [Point2; 3] {
        [P(0.0, 0.0), P(1.0, 0.0), P(0.5, 3f64.sqrt() / 2.0)]
    }

    #[test]
    fn d1_examples() {
        assert_eq!(d1(P(1.0, 1.0), P(1.0, 1.0), 5.0).unwrap(), 0.0);
        assert_eq!(d1(P(0.0, 0.0), P(3.0, 4.0), 10.0).unwrap(), 0.5);
        assert_eq!(d1(P(1.0, 2.0), P(7.0, 10.0), 640.0).unwrap(), 0.015625);
        assert!(d1(P(0.0, 0.0), P(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn phi1_examples() {
        let (s1, s2) = (P(3.0, 1.0), P(8.0, -2.0));
        let (y1, y2) = (P(13.0, 11.0), P(18.0, 8.0));
        assert_eq!(phi1(s1, s2, y1, y2, 100.0, 100.0).unwrap(), 0.0);
        // d1(s) = 0.5, d1(y) = 0.3
        let v = phi1(P(0.0, 0.0), P(5.0, 0.0), P(0.0, 0.0), P(3.0, 0.0), 10.0, 10.0).unwrap();
        assert!((v - 0.04).abs() < 1e-15);
    }

    #[test]
    fn d2_examples() {
        let [a, b, c] = equilateral();
        for (x, y, z) in [(a, b, c), (b, c, a), (c, a, b), (b, a, c)] {
            assert!((d2(x, y, z).unwrap() - 1.0).abs() < 1e-15);
        }
        let (a, b, c) = (P(0.0, 0.0), P(2.0, 0.0), P(1.0, 0.0));
        assert!((d2(a, b, c).unwrap() - 1.5).abs() < 1e-15);
        let s = |p: Point2| P(7.0 * p.x, 7.0 * p.y);
        assert!((d2(s(a), s(b), s(c)).unwrap() - 1.5).abs() < 1e-15);
        assert!(d2(a, a, a).is_err());
    }

    #[test]
    fn phi2_examples() {
        let [a, b, c] = equilateral();
        let t = |p: Point2| {
            let (sn, cs) = 0.7f64.sin_cos();
            P(3.0 * (cs * p.x - sn * p.y) + 5.0, 3.0 * (sn * p.x + cs * p.y) - 1.0)
        };
        assert!(phi2(a, b, c, t(a), t(b), t(c)).unwrap() < 1e-24);
        // d2 = 1.5 against d2 = 1.0
        let v = phi2(P(0.0, 0.0), P(2.0, 0.0), P(1.0, 0.0), a, b, c).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn angle_examples() {
        assert!((angle(P(-1.0, 0.0), P(0.0, 0.0), P(2.0, 0.0)).unwrap() - PI).abs() < 1e-15);
        assert!((angle(P(1.0, 0.0), P(0.0, 0.0), P(0.0, 1.0)).unwrap() - FRAC_PI_2).abs() < 1e-15);
        let [a, b, c] = equilateral();
        assert!((angle(a, b, c).unwrap() - FRAC_PI_3).abs() < 1e-15);
        assert!(angle(a, a, c).is_err());
    }

    #[test]
    fn phi3_examples() {
        let [a, b, c] = equilateral();
        assert!(phi3(a, b, c, a, b, c).unwrap() == 0.0);
        let right = [P(1.0, 0.0), P(0.0, 0.0), P(0.0, 1.0)];
        let v = phi3(right[0], right[1], right[2], a, b, c).unwrap();
        assert!((v - FRAC_PI_6 * FRAC_PI_6).abs() < 1e-15);
        assert!((v - 0.27416).abs() < 1e-5);
    }
}
