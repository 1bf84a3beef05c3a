use nalgebra::Rotation2;

use crate::geometry::{AgentGeometry, Vec2};

/// Rectangle with its long axis along `heading`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, geom: &AgentGeometry) -> Self {
        Self {
            center,
            heading,
            half_length: 0.5 * geom.length,
            half_width: 0.5 * geom.width,
        }
    }

    fn axes(&self) -> [Vec2; 2] {
        let (s, c) = self.heading.sin_cos();
        [Vec2::new(c, s), Vec2::new(-s, c)]
    }

    /// Half-extent of the box projected on a unit axis.
    fn radius_along(&self, axis: &Vec2) -> f64 {
        let [u, v] = self.axes();
        self.half_length * u.dot(axis).abs() + self.half_width * v.dot(axis).abs()
    }

    /// Separating-axis test over the four edge normals. Touching counts as
    /// overlap.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let d = other.center - self.center;
        self.axes()
            .iter()
            .chain(other.axes().iter())
            .all(|axis| d.dot(axis).abs() <= self.radius_along(axis) + other.radius_along(axis))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let local = Rotation2::new(-self.heading) * (p - self.center);
        local.x.abs() <= self.half_length && local.y.abs() <= self.half_width
    }
}
