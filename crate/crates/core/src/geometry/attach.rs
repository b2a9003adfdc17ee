//! Exhaustive enumeration of valid two-part attachments.
//!
//! A placement of `b` next to `a` is valid when the parts are interior
//! disjoint and some boundary side of `b` lands exactly on an equal-length
//! side of `a`. Placements that produce the same figure up to a global
//! rotation are one configuration; the stored representative is the
//! placement with the smallest `(rot, dx, dy)`.

use super::bank::{PrimId, PrimitiveBank};
use super::cellset::{CellSet, Piece};
use super::lattice::{Pose, Wedge};
use super::primitive::Primitive;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Relative placement of part `b` in the frame of part `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    /// 1-based position in the canonical ordering for the pair.
    pub id: u16,
    pub pose: Pose,
}

/// Figure of two parts: `a` at the identity, `b` at `pose`.
pub fn pair_cells(a: &Primitive, a_id: PrimId, b: &Primitive, b_id: PrimId, pose: Pose) -> CellSet {
    CellSet::new(vec![
        Piece { prim: a_id, wedges: a.wedges().to_vec() },
        Piece { prim: b_id, wedges: b.placed_wedges(pose).collect() },
    ])
}

/// All configurations of `b` attached to `a`, in canonical order.
pub fn enumerate_attachments(a: &Primitive, a_id: PrimId, b: &Primitive, b_id: PrimId) -> Vec<Configuration> {
    let a_wedges: HashSet<Wedge> = a.wedges().iter().copied().collect();
    let mut placements: Vec<Pose> = vec![];
    for rot in 0..4u8 {
        let turned = Pose::new(rot, 0, 0);
        for sb in b.placed_sides(turned) {
            for sa in a.sides() {
                // both boundaries run counter-clockwise, so touching sides are antiparallel
                if sa.length != sb.length || sb.direction() != sa.from - sa.to {
                    continue;
                }
                let t = sa.from - sb.to;
                let pose = Pose::new(rot, t.x, t.y);
                if b.placed_wedges(pose).all(|w| !a_wedges.contains(&w)) {
                    placements.push(pose);
                }
            }
        }
    }
    placements.sort_unstable();
    placements.dedup();

    let mut seen: HashSet<CellSet> = HashSet::new();
    let mut reps = vec![];
    for pose in placements {
        if seen.insert(pair_cells(a, a_id, b, b_id, pose).rotation_key()) {
            reps.push(pose);
        }
    }
    reps.into_iter()
        .enumerate()
        .map(|(i, pose)| Configuration { id: i as u16 + 1, pose })
        .collect()
}

/// Attachment configurations for every ordered pair of a bank.
#[derive(Debug, Clone)]
pub struct AttachmentTable {
    n: usize,
    configs: Vec<Vec<Configuration>>,
    keys: Vec<Vec<CellSet>>,
}

impl AttachmentTable {
    pub fn build(bank: &PrimitiveBank) -> Self {
        let n = bank.len();
        let mut configs = Vec::with_capacity(n * n);
        let mut keys = Vec::with_capacity(n * n);
        for a in bank.ids() {
            for b in bank.ids() {
                let cs = enumerate_attachments(bank.get(a), a, bank.get(b), b);
                keys.push(
                    cs.iter()
                        .map(|c| pair_cells(bank.get(a), a, bank.get(b), b, c.pose).rotation_key())
                        .collect(),
                );
                configs.push(cs);
            }
        }
        AttachmentTable { n, configs, keys }
    }

    fn slot(&self, a: PrimId, b: PrimId) -> usize {
        a.0 as usize * self.n + b.0 as usize
    }

    pub fn configs(&self, a: PrimId, b: PrimId) -> &[Configuration] {
        &self.configs[self.slot(a, b)]
    }

    pub fn count(&self, a: PrimId, b: PrimId) -> usize {
        self.configs(a, b).len()
    }

    pub fn get(&self, a: PrimId, b: PrimId, id: u16) -> Option<&Configuration> {
        self.configs(a, b).get((id as usize).checked_sub(1)?)
    }

    /// Largest configuration count over ordered pairs drawn from `prims`.
    pub fn max_count(&self, prims: &[PrimId]) -> usize {
        prims
            .iter()
            .flat_map(|&a| prims.iter().map(move |&b| (a, b)))
            .map(|(a, b)| self.count(a, b))
            .max()
            .unwrap_or(0)
    }

    /// The id of the same figure in the `(b, a)` table.
    pub fn cross_index(&self, a: PrimId, b: PrimId, id: u16) -> Option<u16> {
        let key = self.keys[self.slot(a, b)].get((id as usize).checked_sub(1)?)?;
        self.keys[self.slot(b, a)].iter().position(|k| k == key).map(|i| i as u16 + 1)
    }

    /// Serializable export `{pair: [a, b], configs: [{id, rot, dx, dy}]}` for every ordered pair.
    pub fn export(&self, bank: &PrimitiveBank) -> Vec<AttachmentExport> {
        let mut out = vec![];
        for a in bank.ids() {
            for b in bank.ids() {
                out.push(AttachmentExport {
                    pair: [bank.name(a).to_string(), bank.name(b).to_string()],
                    configs: self
                        .configs(a, b)
                        .iter()
                        .map(|c| ConfigExport { id: c.id, rot: c.pose.rot, dx: c.pose.dx, dy: c.pose.dy })
                        .collect(),
                });
            }
        }
        out
    }

    pub fn summary(&self, bank: &PrimitiveBank) -> BTreeMap<String, usize> {
        bank.ids()
            .flat_map(|a| bank.ids().map(move |b| (a, b)))
            .map(|(a, b)| (format!("{}{}", bank.name(a), bank.name(b)), self.count(a, b)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachmentExport {
    pub pair: [String; 2],
    pub configs: Vec<ConfigExport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigExport {
    pub id: u16,
    pub rot: u8,
    pub dx: i32,
    pub dy: i32,
}

/// Map from figure key to configuration id, used when a placement must be
/// resolved back to its stored configuration.
pub fn config_index(
    bank: &PrimitiveBank,
    table: &AttachmentTable,
    a: PrimId,
    b: PrimId,
) -> HashMap<CellSet, u16> {
    table
        .configs(a, b)
        .iter()
        .map(|c| (pair_cells(bank.get(a), a, bank.get(b), b, c.pose).rotation_key(), c.id))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::bank::default_bank;
    use crate::geometry::lattice::SideLength;

    #[test]
    fn enumeration_is_deterministic_and_ids_are_dense() {
        let bank = default_bank();
        let (a, b) = (PrimId(0), PrimId(5));
        let one = enumerate_attachments(bank.get(a), a, bank.get(b), b);
        let two = enumerate_attachments(bank.get(a), a, bank.get(b), b);
        assert_eq!(one, two);
        assert!(!one.is_empty());
        for (i, c) in one.iter().enumerate() {
            assert_eq!(c.id as usize, i + 1);
        }
    }

    #[test]
    fn every_configuration_is_disjoint_and_edge_joined() {
        let bank = default_bank();
        let table = AttachmentTable::build(&bank);
        for a in bank.ids() {
            for b in bank.ids() {
                for c in table.configs(a, b) {
                    let pa = bank.get(a);
                    let pb = bank.get(b);
                    let aw: HashSet<_> = pa.wedges().iter().collect();
                    assert!(pb.placed_wedges(c.pose).all(|w| !aw.contains(&w)));
                    let joined = pb
                        .placed_sides(c.pose)
                        .any(|sb| pa.sides().iter().any(|sa| sa.length == sb.length && sa.coincides(sb)));
                    assert!(joined, "{}{} #{}", bank.name(a), bank.name(b), c.id);
                }
            }
        }
    }

    #[test]
    fn no_unit_to_diagonal_joins() {
        let bank = default_bank();
        // the diamond has only diagonal sides, the domino only unit sides
        let (dom, dia) = (PrimId(0), PrimId(2));
        assert!(bank.get(dia).sides().iter().all(|s| s.length == SideLength::Diagonal));
        assert!(enumerate_attachments(bank.get(dom), dom, bank.get(dia), dia).is_empty());
    }

    #[test]
    fn orbit_representatives_are_unique() {
        let bank = default_bank();
        let table = AttachmentTable::build(&bank);
        for a in bank.ids() {
            for b in bank.ids() {
                let cells: Vec<CellSet> = table
                    .configs(a, b)
                    .iter()
                    .map(|c| pair_cells(bank.get(a), a, bank.get(b), b, c.pose))
                    .collect();
                for (i, ci) in cells.iter().enumerate() {
                    for k in 1..4 {
                        let r = ci.rotate(k);
                        for (j, cj) in cells.iter().enumerate() {
                            if i != j {
                                assert_ne!(&r, cj);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn swapped_pairs_cover_the_same_figures() {
        let bank = default_bank();
        let table = AttachmentTable::build(&bank);
        for a in bank.ids() {
            for b in bank.ids() {
                assert_eq!(table.count(a, b), table.count(b, a));
                for c in table.configs(a, b) {
                    let j = table.cross_index(a, b, c.id).expect("cross index");
                    assert_eq!(table.cross_index(b, a, j), Some(c.id));
                }
            }
        }
    }
}
