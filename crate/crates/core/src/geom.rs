//! Planar vectors and wall segments.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Vec2::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise rotation by `angle` radians.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// `[-y, x]`, the tangent convention used for wall friction.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn hadamard(self, other: Vec2) -> Vec2 {
        Vec2::new(self.x * other.x, self.y * other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Unit vector, or `None` when the norm is below `eps`.
    pub fn normalized(self, eps: f64) -> Option<Vec2> {
        let n = self.norm();
        (n >= eps).then(|| self / n)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A static straight wall between two distinct endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallSegment {
    a: Vec2,
    b: Vec2,
}

impl WallSegment {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParams("wall endpoints must be finite".into()));
        }
        if a == b {
            return Err(Error::InvalidParams(format!(
                "wall endpoints coincide at ({}, {})",
                a.x, a.y
            )));
        }
        Ok(WallSegment { a, b })
    }

    pub fn a(&self) -> Vec2 {
        self.a
    }

    pub fn b(&self) -> Vec2 {
        self.b
    }

    /// Orthogonal projection of `p` clamped to the segment.
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let t = ((p - self.a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
        self.a + ab * t
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        p.distance(self.closest_point(p))
    }

    pub fn translated(&self, offset: Vec2) -> WallSegment {
        WallSegment {
            a: self.a + offset,
            b: self.b + offset,
        }
    }

    pub fn rotated(&self, angle: f64) -> WallSegment {
        WallSegment {
            a: self.a.rotate(angle),
            b: self.b.rotate(angle),
        }
    }
}

/// Distance and outward unit normal from the closest point of the nearest wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallContact {
    pub distance: f64,
    pub normal: Vec2,
}

/// Closest wall to `p`, or `None` for an empty wall list. Ties keep the first wall.
pub fn nearest_wall(p: Vec2, walls: &[WallSegment]) -> Result<Option<WallContact>> {
    let mut best: Option<(f64, Vec2)> = None;
    for wall in walls {
        let q = wall.closest_point(p);
        let d = p.distance(q);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, q));
        }
    }
    match best {
        None => Ok(None),
        Some((d, q)) => {
            if d < crate::sfm::DEGENERACY_EPS {
                return Err(Error::CoincidentPoint { distance: d });
            }
            Ok(Some(WallContact {
                distance: d,
                normal: (p - q) / d,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closest_point_clamps_to_endpoints() {
        let w = WallSegment::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0)).unwrap();
        assert_eq!(w.closest_point(Vec2::new(1.0, 3.0)), Vec2::new(1.0, 0.0));
        assert_eq!(w.closest_point(Vec2::new(-1.0, 1.0)), Vec2::new(0.0, 0.0));
        assert_eq!(w.closest_point(Vec2::new(5.0, -1.0)), Vec2::new(2.0, 0.0));
        assert!((w.distance(Vec2::new(3.0, 1.0)) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_segment_rejected() {
        let p = Vec2::new(1.0, 1.0);
        assert!(WallSegment::new(p, p).is_err());
    }

    #[test]
    fn nearest_wall_picks_minimum() {
        let walls = [
            WallSegment::new(Vec2::new(-5.0, 1.0), Vec2::new(5.0, 1.0)).unwrap(),
            WallSegment::new(Vec2::new(-5.0, -2.0), Vec2::new(5.0, -2.0)).unwrap(),
        ];
        let c = nearest_wall(Vec2::new(0.0, 0.25), &walls).unwrap().unwrap();
        assert!((c.distance - 0.75).abs() < 1e-15);
        assert_eq!(c.normal, Vec2::new(0.0, -1.0));
        assert!(nearest_wall(Vec2::ZERO, &[]).unwrap().is_none());
    }

    #[test]
    fn rotation_preserves_norm() {
        let v = Vec2::new(3.0, -4.0);
        assert!((v.rotate(1.234).norm() - 5.0).abs() < 1e-14);
        assert_eq!(Vec2::new(1.0, 0.0).perp(), Vec2::new(0.0, 1.0));
    }
}
