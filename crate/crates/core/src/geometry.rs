//! Planar geometry in kilometres.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    pub fn offset(&self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }
}

/// Uniform point in the closed disk of `radius` around `center`.
pub fn uniform_in_disk<R: Rng + ?Sized>(center: Point, radius: f64, rng: &mut R) -> Point {
    if radius <= 0.0 {
        return center;
    }
    let r = radius * rng.random::<f64>().sqrt();
    let theta = TAU * rng.random::<f64>();
    center.offset(r * theta.cos(), r * theta.sin())
}

/// Axis-aligned square `[min, min + side]²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Square {
    pub min: Point,
    pub side: f64,
}

impl Square {
    pub fn new(min: Point, side: f64) -> Self {
        Self { min, side }
    }

    pub fn centered(center: Point, side: f64) -> Self {
        Self { min: center.offset(-side / 2.0, -side / 2.0), side }
    }

    pub fn center(&self) -> Point {
        self.min.offset(self.side / 2.0, self.side / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x
            && p.x <= self.min.x + self.side
            && p.y >= self.min.y
            && p.y <= self.min.y + self.side
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.min.offset(self.side * rng.random::<f64>(), self.side * rng.random::<f64>())
    }

    /// Intersection with another square, if it has positive area.
    pub fn intersect(&self, other: &Square) -> Option<Rect> {
        let x0 = self.min.x.max(other.min.x);
        let y0 = self.min.y.max(other.min.y);
        let x1 = (self.min.x + self.side).min(other.min.x + other.side);
        let y1 = (self.min.y + self.side).min(other.min.y + other.side);
        (x1 > x0 && y1 > y0).then_some(Rect { min: Point::new(x0, y0), max: Point::new(x1, y1) })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point::new(
            self.min.x + (self.max.x - self.min.x) * rng.random::<f64>(),
            self.min.y + (self.max.y - self.min.y) * rng.random::<f64>(),
        )
    }
}
