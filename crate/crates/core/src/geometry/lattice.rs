//! Exact integer lattice machinery.
//!
//! Every unit cell is cut by both diagonals into four quarter wedges
//! (south, east, north, west). A half-cell isosceles right triangle is the
//! union of two adjacent wedges, so overlap, area and boundary tests reduce
//! to set operations on wedges.

use serde::{Deserialize, Serialize};
use std::fmt;

/// A lattice point (cell corner).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub const fn new(x: i32, y: i32) -> Self {
        Point { x, y }
    }

    /// Quarter turn counter-clockwise about the origin.
    pub fn rot90(self) -> Self {
        Point::new(-self.y, self.x)
    }

    pub fn rotate(self, quarter_turns: u8) -> Self {
        (0..quarter_turns % 4).fold(self, |p, _| p.rot90())
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Point::new(self.x + dx, self.y + dy)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

/// One of the four wedges of a unit cell, named by the cell side it rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Quarter {
    S = 0,
    E = 1,
    N = 2,
    W = 3,
}

impl Quarter {
    pub const ALL: [Quarter; 4] = [Quarter::S, Quarter::E, Quarter::N, Quarter::W];

    pub fn from_index(i: u8) -> Quarter {
        Quarter::ALL[(i % 4) as usize]
    }

    pub fn rot90(self) -> Quarter {
        Quarter::from_index(self as u8 + 1)
    }
}

/// A wedge at triangle resolution: cell `(x, y)` plus a quarter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Wedge {
    pub x: i32,
    pub y: i32,
    pub q: Quarter,
}

impl Wedge {
    pub const fn new(x: i32, y: i32, q: Quarter) -> Self {
        Wedge { x, y, q }
    }

    /// Quarter turn counter-clockwise about the origin; cell `(x, y)` lands on
    /// cell `(-y - 1, x)`.
    pub fn rot90(self) -> Wedge {
        Wedge::new(-self.y - 1, self.x, self.q.rot90())
    }

    pub fn transform(self, pose: Pose) -> Wedge {
        let w = (0..pose.rot % 4).fold(self, |w, _| w.rot90());
        Wedge::new(w.x + pose.dx, w.y + pose.dy, w.q)
    }

    /// Corners of the wedge in doubled coordinates, counter-clockwise:
    /// outer edge start, outer edge end, cell centre.
    pub fn corners2(self) -> [Point; 3] {
        let (x, y) = (2 * self.x, 2 * self.y);
        let c = Point::new(x + 1, y + 1);
        match self.q {
            Quarter::S => [Point::new(x, y), Point::new(x + 2, y), c],
            Quarter::E => [Point::new(x + 2, y), Point::new(x + 2, y + 2), c],
            Quarter::N => [Point::new(x + 2, y + 2), Point::new(x, y + 2), c],
            Quarter::W => [Point::new(x, y + 2), Point::new(x, y), c],
        }
    }
}

/// Orientation of a half-cell triangle, named by its right-angle corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Half {
    Sw,
    Se,
    Ne,
    Nw,
}

impl Half {
    pub fn quarters(self) -> [Quarter; 2] {
        match self {
            Half::Sw => [Quarter::S, Quarter::W],
            Half::Se => [Quarter::S, Quarter::E],
            Half::Ne => [Quarter::N, Quarter::E],
            Half::Nw => [Quarter::N, Quarter::W],
        }
    }

    pub fn parse(s: &str) -> Option<Half> {
        match s.to_ascii_lowercase().as_str() {
            "sw" => Some(Half::Sw),
            "se" => Some(Half::Se),
            "ne" => Some(Half::Ne),
            "nw" => Some(Half::Nw),
            _ => None,
        }
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Half::Sw => "sw",
            Half::Se => "se",
            Half::Ne => "ne",
            Half::Nw => "nw",
        };
        f.write_str(s)
    }
}

/// A half-cell triangle placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triangle {
    pub x: i32,
    pub y: i32,
    pub half: Half,
}

impl Triangle {
    pub const fn new(x: i32, y: i32, half: Half) -> Self {
        Triangle { x, y, half }
    }

    pub fn wedges(self) -> [Wedge; 2] {
        let [a, b] = self.half.quarters();
        [Wedge::new(self.x, self.y, a), Wedge::new(self.x, self.y, b)]
    }

    /// Vertices in plain lattice coordinates, counter-clockwise.
    pub fn vertices(self) -> [Point; 3] {
        let (x, y) = (self.x, self.y);
        match self.half {
            Half::Sw => [Point::new(x, y), Point::new(x + 1, y), Point::new(x, y + 1)],
            Half::Se => [Point::new(x, y), Point::new(x + 1, y), Point::new(x + 1, y + 1)],
            Half::Ne => [Point::new(x + 1, y), Point::new(x + 1, y + 1), Point::new(x, y + 1)],
            Half::Nw => [Point::new(x, y), Point::new(x + 1, y + 1), Point::new(x, y + 1)],
        }
    }
}

/// Rigid placement: rotate by `rot` quarter turns about the origin, then
/// translate by whole cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct Pose {
    pub rot: u8,
    pub dx: i32,
    pub dy: i32,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { rot: 0, dx: 0, dy: 0 };

    pub fn new(rot: u8, dx: i32, dy: i32) -> Self {
        Pose { rot: rot % 4, dx, dy }
    }

    pub fn apply(self, p: Point) -> Point {
        p.rotate(self.rot).offset(self.dx, self.dy)
    }

    /// `self ∘ inner`: first place by `inner`, then by `self`.
    pub fn compose(self, inner: Pose) -> Pose {
        let t = Point::new(inner.dx, inner.dy).rotate(self.rot);
        Pose::new(self.rot + inner.rot, t.x + self.dx, t.y + self.dy)
    }

    pub fn inverse(self) -> Pose {
        let back = (4 - self.rot % 4) % 4;
        let t = Point::new(-self.dx, -self.dy).rotate(back);
        Pose::new(back, t.x, t.y)
    }
}

/// Length class of a boundary side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SideLength {
    /// Axis-aligned unit edge.
    Unit,
    /// Cell diagonal, length √2.
    Diagonal,
}

impl SideLength {
    pub fn value(self) -> f64 {
        match self {
            SideLength::Unit => 1.0,
            SideLength::Diagonal => std::f64::consts::SQRT_2,
        }
    }
}

/// A directed boundary side; interior lies to the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Side {
    pub from: Point,
    pub to: Point,
    pub length: SideLength,
}

impl Side {
    pub fn transform(self, pose: Pose) -> Side {
        Side { from: pose.apply(self.from), to: pose.apply(self.to), length: self.length }
    }

    pub fn direction(self) -> Point {
        self.to - self.from
    }

    /// Same segment regardless of direction.
    pub fn coincides(self, other: Side) -> bool {
        (self.from == other.from && self.to == other.to)
            || (self.from == other.to && self.to == other.from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_compose_matches_sequential_application() {
        let a = Pose::new(1, 3, -2);
        let b = Pose::new(3, -1, 4);
        let p = Point::new(5, 7);
        assert_eq!(a.compose(b).apply(p), a.apply(b.apply(p)));
        assert_eq!(a.inverse().apply(a.apply(p)), p);
        assert_eq!(a.compose(a.inverse()), Pose::IDENTITY);
    }

    #[test]
    fn wedge_rotation_moves_cell_with_corners() {
        let w = Wedge::new(2, 5, Quarter::S);
        let r = w.rot90();
        // outer edge of the rotated wedge is the rotated outer edge
        let [a, b, _] = w.corners2();
        let [ra, rb, _] = r.corners2();
        assert_eq!(a.rot90(), ra);
        assert_eq!(b.rot90(), rb);
        let mut v = w;
        for _ in 0..4 {
            v = v.rot90();
        }
        assert_eq!(v, w);
    }

    #[test]
    fn half_triangle_wedges_are_adjacent() {
        for h in [Half::Sw, Half::Se, Half::Ne, Half::Nw] {
            let [a, b] = h.quarters();
            let d = (a as u8 + 4 - b as u8) % 4;
            assert!(d == 1 || d == 3);
        }
    }
}
