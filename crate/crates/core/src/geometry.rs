//! Planar geometry shared by the simulation modules.

use serde::{Deserialize, Serialize};

/// Imaging-plane vector, metres.
pub type Vec2 = nalgebra::Vector2<f64>;

/// Axis-aligned rectangle, `min` inclusive, `max` exclusive for binning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn from_center(center: Vec2, width: f64, height: f64) -> Self {
        let half = Vec2::new(0.5 * width, 0.5 * height);
        Self {
            min: center - half,
            max: center + half,
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Vec2 {
        0.5 * (self.min + self.max)
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Closest point of the rectangle to `p`.
    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    /// Shrinks every side by `margin` (never past the centre).
    pub fn inset(&self, margin: f64) -> Rect {
        let c = self.center();
        let mx = margin.min(0.5 * self.width());
        let my = margin.min(0.5 * self.height());
        Rect {
            min: Vec2::new((self.min.x + mx).min(c.x), (self.min.y + my).min(c.y)),
            max: Vec2::new((self.max.x - mx).max(c.x), (self.max.y - my).max(c.y)),
        }
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}
