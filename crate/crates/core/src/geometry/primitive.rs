use super::lattice::{Half, Point, Pose, Side, SideLength, Triangle, Wedge};
use super::GeometryError;
use std::collections::{BTreeMap, BTreeSet, HashSet};

/// An atomic visual part: four half-cell triangles forming a simple polygon
/// of area 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Primitive {
    pub id: String,
    /// Normalized so that the minimum occupied cell is `(0, 0)`.
    pub triangles: Vec<Triangle>,
    wedges: Vec<Wedge>,
    boundary: Vec<Point>,
    sides: Vec<Side>,
}

impl Primitive {
    pub fn wedges(&self) -> &[Wedge] {
        &self.wedges
    }

    /// Boundary polygon vertices, counter-clockwise, including collinear
    /// lattice points between unit sides.
    pub fn boundary(&self) -> &[Point] {
        &self.boundary
    }

    /// Boundary sides, counter-clockwise, interior on the left.
    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    /// Area in grid units (a wedge is a quarter cell).
    pub fn area(&self) -> f64 {
        self.wedges.len() as f64 / 4.0
    }

    pub fn placed_wedges(&self, pose: Pose) -> impl Iterator<Item = Wedge> + '_ {
        self.wedges.iter().map(move |w| w.transform(pose))
    }

    pub fn placed_sides(&self, pose: Pose) -> impl Iterator<Item = Side> + '_ {
        self.sides.iter().map(move |s| s.transform(pose))
    }

    /// Number of quarter turns `k` in 1..=3 that map the shape onto itself
    /// (up to translation); 4-fold symmetric shapes report `[1, 2, 3]`.
    pub fn symmetries(&self) -> Vec<u8> {
        let base = normalized(self.wedges.iter().copied());
        (1..4)
            .filter(|&k| normalized(self.wedges.iter().map(|w| w.transform(Pose::new(k, 0, 0)))) == base)
            .collect()
    }
}

fn normalized(ws: impl Iterator<Item = Wedge>) -> Vec<Wedge> {
    let mut v: Vec<Wedge> = ws.collect();
    let mx = v.iter().map(|w| w.x).min().unwrap_or(0);
    let my = v.iter().map(|w| w.y).min().unwrap_or(0);
    for w in &mut v {
        w.x -= mx;
        w.y -= my;
    }
    v.sort_unstable();
    v
}

/// Validate four triangle placements and derive the primitive's boundary.
pub fn build_primitive(id: &str, triangles: &[Triangle]) -> Result<Primitive, GeometryError> {
    if triangles.len() != 4 {
        return Err(GeometryError::WrongTriangleCount(triangles.len()));
    }
    let mut seen = HashSet::new();
    for w in triangles.iter().flat_map(|t| t.wedges()) {
        if !seen.insert(w) {
            return Err(GeometryError::Overlap);
        }
    }
    if !edge_connected(triangles) {
        return Err(GeometryError::Disconnected);
    }

    let mx = triangles.iter().map(|t| t.x).min().unwrap();
    let my = triangles.iter().map(|t| t.y).min().unwrap();
    let mut tris: Vec<Triangle> =
        triangles.iter().map(|t| Triangle::new(t.x - mx, t.y - my, t.half)).collect();
    tris.sort_unstable();
    let mut wedges: Vec<Wedge> = tris.iter().flat_map(|t| t.wedges()).collect();
    wedges.sort_unstable();

    let (boundary, sides) = trace_boundary(&wedges)?;
    Ok(Primitive { id: id.to_string(), triangles: tris, wedges, boundary, sides })
}

/// Two triangles are joined when they share two vertices (hence a full edge).
fn edge_connected(tris: &[Triangle]) -> bool {
    let verts: Vec<BTreeSet<Point>> = tris.iter().map(|t| t.vertices().into_iter().collect()).collect();
    let mut reached = vec![false; tris.len()];
    let mut stack = vec![0];
    reached[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..tris.len() {
            if !reached[j] && verts[i].intersection(&verts[j]).count() >= 2 {
                reached[j] = true;
                stack.push(j);
            }
        }
    }
    reached.into_iter().all(|r| r)
}

/// Directed boundary of a wedge region, with half-diagonals through cell
/// centres merged into full diagonals. Fails unless the boundary is a single
/// simple cycle.
pub(crate) fn trace_boundary(wedges: &[Wedge]) -> Result<(Vec<Point>, Vec<Side>), GeometryError> {
    let mut edges: HashSet<(Point, Point)> = HashSet::new();
    for w in wedges {
        let [a, b, c] = w.corners2();
        for e in [(a, b), (b, c), (c, a)] {
            if !edges.remove(&(e.1, e.0)) {
                edges.insert(e);
            }
        }
    }
    let mut succ: BTreeMap<Point, Point> = BTreeMap::new();
    for &(a, b) in &edges {
        if succ.insert(a, b).is_some() {
            return Err(GeometryError::NotSimple);
        }
    }
    // merge u -> centre -> v into a single diagonal u -> v
    let centres: Vec<Point> = succ.keys().copied().filter(|p| p.x % 2 != 0).collect();
    for c in centres {
        let next = succ.remove(&c).unwrap();
        let prev = succ.iter().find(|(_, &v)| v == c).map(|(&k, _)| k).ok_or(GeometryError::NotSimple)?;
        succ.insert(prev, next);
    }

    let start = *succ.keys().next().ok_or(GeometryError::NotSimple)?;
    let mut boundary = vec![];
    let mut sides = vec![];
    let mut cur = start;
    loop {
        let next = succ[&cur];
        let d = next - cur;
        let length = if d.x != 0 && d.y != 0 { SideLength::Diagonal } else { SideLength::Unit };
        boundary.push(Point::new(cur.x / 2, cur.y / 2));
        sides.push(Side { from: Point::new(cur.x / 2, cur.y / 2), to: Point::new(next.x / 2, next.y / 2), length });
        cur = next;
        if cur == start {
            break;
        }
        if sides.len() > succ.len() {
            return Err(GeometryError::NotSimple);
        }
    }
    if sides.len() != succ.len() {
        // more than one cycle: a hole or a second component
        return Err(GeometryError::NotSimple);
    }
    Ok((boundary, sides))
}

/// Parse a `[x, y, half]` triple as found in bank files.
pub fn triangle_from_json(v: &serde_json::Value) -> Result<Triangle, GeometryError> {
    let arr = v.as_array().filter(|a| a.len() == 3).ok_or_else(|| {
        GeometryError::Malformed(format!("triangle must be [x, y, half], got {v}"))
    })?;
    let coord = |i: usize| -> Result<i32, GeometryError> {
        arr[i]
            .as_i64()
            .and_then(|c| i32::try_from(c).ok())
            .ok_or_else(|| GeometryError::Malformed(format!("non-lattice coordinate {}", arr[i])))
    };
    let half = arr[2]
        .as_str()
        .and_then(Half::parse)
        .ok_or_else(|| GeometryError::Malformed(format!("unknown half {}", arr[2])))?;
    Ok(Triangle::new(coord(0)?, coord(1)?, half))
}
