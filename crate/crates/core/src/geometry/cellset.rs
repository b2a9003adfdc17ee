use super::bank::PrimId;
use super::lattice::{Pose, Wedge};
use serde::{Deserialize, Serialize};

/// One placed primitive inside a figure: its label and occupied wedges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Piece {
    pub prim: PrimId,
    pub wedges: Vec<Wedge>,
}

/// Triangle-resolution occupancy map of a figure, one labelled piece per
/// placed primitive.
///
/// The canonical form is translated so the minimum occupied cell is `(0, 0)`
/// and has its pieces sorted, so equality of canonical cell sets is visual
/// identity of the figures.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct CellSet {
    pieces: Vec<Piece>,
}

impl CellSet {
    pub fn new(pieces: Vec<Piece>) -> Self {
        let mut c = CellSet { pieces };
        c.canonicalize_in_place();
        c
    }

    pub fn empty() -> Self {
        CellSet::default()
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn wedges(&self) -> impl Iterator<Item = (PrimId, Wedge)> + '_ {
        self.pieces.iter().flat_map(|p| p.wedges.iter().map(move |&w| (p.prim, w)))
    }

    /// Inclusive cell bounds `(min_x, min_y, max_x, max_y)`, or `None` when empty.
    pub fn bounds(&self) -> Option<(i32, i32, i32, i32)> {
        let mut it = self.wedges().map(|(_, w)| (w.x, w.y));
        let (x0, y0) = it.next()?;
        Some(it.fold((x0, y0, x0, y0), |(a, b, c, d), (x, y)| (a.min(x), b.min(y), c.max(x), d.max(y))))
    }

    fn canonicalize_in_place(&mut self) {
        if let Some((mx, my, _, _)) = self.bounds() {
            for p in &mut self.pieces {
                for w in &mut p.wedges {
                    w.x -= mx;
                    w.y -= my;
                }
                p.wedges.sort_unstable();
            }
        }
        self.pieces.sort_unstable();
    }

    pub fn canonicalize(&self) -> CellSet {
        let mut c = self.clone();
        c.canonicalize_in_place();
        c
    }

    pub fn translate(&self, dx: i32, dy: i32) -> CellSet {
        self.transform_raw(Pose::new(0, dx, dy))
    }

    fn transform_raw(&self, pose: Pose) -> CellSet {
        CellSet {
            pieces: self
                .pieces
                .iter()
                .map(|p| Piece { prim: p.prim, wedges: p.wedges.iter().map(|w| w.transform(pose)).collect() })
                .collect(),
        }
    }

    /// Rigid rotation by `quarter_turns · 90°` counter-clockwise, then
    /// re-canonicalized.
    pub fn rotate(&self, quarter_turns: u8) -> CellSet {
        let mut c = self.transform_raw(Pose::new(quarter_turns, 0, 0));
        c.canonicalize_in_place();
        c
    }

    /// Smallest canonical form over the four rotations: a key for identity up
    /// to rotation and translation.
    pub fn rotation_key(&self) -> CellSet {
        (0..4).map(|k| self.rotate(k)).min().unwrap()
    }

    /// Number of quarter turns in 0..4 that leave the figure unchanged.
    pub fn rotational_order(&self) -> usize {
        let c = self.canonicalize();
        (0..4).filter(|&k| self.rotate(k) == c).count()
    }

    pub fn prims(&self) -> impl Iterator<Item = PrimId> + '_ {
        self.pieces.iter().map(|p| p.prim)
    }
}

/// Free-function form used across the crate.
pub fn rotate_cells(c: &CellSet, quarter_turns: u8) -> CellSet {
    c.rotate(quarter_turns)
}

pub fn canonicalize(c: &CellSet) -> CellSet {
    c.canonicalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::lattice::Quarter;
    use proptest::prelude::*;

    fn full_cell(prim: u16, x: i32, y: i32) -> Piece {
        Piece { prim: PrimId(prim), wedges: Quarter::ALL.iter().map(|&q| Wedge::new(x, y, q)).collect() }
    }

    #[test]
    fn rotation_identities() {
        let c = CellSet::new(vec![full_cell(0, 3, 4), full_cell(1, 4, 4)]);
        assert_eq!(rotate_cells(&c, 0), canonicalize(&c));
        let mut r = c.clone();
        for _ in 0..4 {
            r = rotate_cells(&r, 1);
        }
        assert_eq!(r, canonicalize(&c));
        let square = CellSet::new(vec![full_cell(2, 7, -3)]);
        assert_eq!(rotate_cells(&square, 1), square);
        assert_eq!(square.rotational_order(), 4);
    }

    fn arb_cellset() -> impl Strategy<Value = CellSet> {
        prop::collection::vec((0u16..3, -5i32..5, -5i32..5, 0u8..4), 1..10).prop_map(|ws| {
            let pieces = ws
                .into_iter()
                .map(|(p, x, y, q)| Piece { prim: PrimId(p), wedges: vec![Wedge::new(x, y, Quarter::from_index(q))] })
                .collect();
            CellSet::new(pieces)
        })
    }

    proptest! {
        #[test]
        fn rotation_is_a_bijection_with_period_four(c in arb_cellset(), dx in -9i32..9, dy in -9i32..9) {
            let a = c.rotate(1);
            prop_assert_eq!(a.rotate(3), c.canonicalize());
            prop_assert_eq!(c.translate(dx, dy).canonicalize(), c.canonicalize());
            prop_assert_eq!(c.rotate(2).rotate(2), c.canonicalize());
            prop_assert_eq!(c.rotation_key(), c.rotate(1).rotation_key());
        }
    }
}
