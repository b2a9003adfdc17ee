//! Brute-force attachment enumeration that shares nothing with the library's
//! side-matching search: every rotation and every translation in a window is
//! tried, boundaries are traced from wedge adjacency, and figures are
//! compared by a locally computed rotation-invariant key.

use forge_core::geometry::{Configuration, Pose, PrimId, Primitive};
use std::collections::{BTreeSet, HashSet};

/// `(x, y, quarter)` with quarters S, E, N, W as 0..4.
pub type W = (i32, i32, u8);
/// Undirected segment in doubled coordinates.
pub type Seg = ((i32, i32), (i32, i32));

const WINDOW: i32 = 6;

fn rot1((x, y, q): W) -> W {
    (-y - 1, x, (q + 1) % 4)
}

pub fn place(ws: &[W], rot: u8, dx: i32, dy: i32) -> Vec<W> {
    ws.iter()
        .map(|&w| {
            let (x, y, q) = (0..rot).fold(w, |w, _| rot1(w));
            (x + dx, y + dy, q)
        })
        .collect()
}

pub fn wedges_of(p: &Primitive) -> Vec<W> {
    p.wedges().iter().map(|w| (w.x, w.y, w.q as u8)).collect()
}

fn seg(a: (i32, i32), b: (i32, i32)) -> Seg {
    if a <= b { (a, b) } else { (b, a) }
}

/// Unit and diagonal boundary sides between lattice points.
pub fn sides(ws: &[W]) -> HashSet<Seg> {
    let set: HashSet<W> = ws.iter().copied().collect();
    let has = |w: W| set.contains(&w);
    let mut out = HashSet::new();
    for &(x, y, q) in ws {
        let (x2, y2) = (2 * x, 2 * y);
        let (nb, s) = match q {
            0 => ((x, y - 1, 2), seg((x2, y2), (x2 + 2, y2))),
            1 => ((x + 1, y, 3), seg((x2 + 2, y2), (x2 + 2, y2 + 2))),
            2 => ((x, y + 1, 0), seg((x2, y2 + 2), (x2 + 2, y2 + 2))),
            _ => ((x - 1, y, 1), seg((x2, y2), (x2, y2 + 2))),
        };
        if !has(nb) {
            out.insert(s);
        }
    }
    let cells: BTreeSet<(i32, i32)> = ws.iter().map(|&(x, y, _)| (x, y)).collect();
    for (x, y) in cells {
        // half diagonal from the centre towards a corner lies between two wedges
        let half = |a: u8, b: u8| has((x, y, a)) != has((x, y, b));
        let (sw, se, ne, nw) = (half(3, 0), half(0, 1), half(1, 2), half(2, 3));
        let (x2, y2) = (2 * x, 2 * y);
        if sw && ne {
            out.insert(seg((x2, y2), (x2 + 2, y2 + 2)));
        }
        if se && nw {
            out.insert(seg((x2 + 2, y2), (x2, y2 + 2)));
        }
    }
    out
}

pub type Key = Vec<(u16, Vec<W>)>;

fn normalized(pieces: &[(u16, Vec<W>)]) -> Key {
    let mx = pieces.iter().flat_map(|p| &p.1).map(|w| w.0).min().unwrap();
    let my = pieces.iter().flat_map(|p| &p.1).map(|w| w.1).min().unwrap();
    let mut k: Key = pieces
        .iter()
        .map(|(l, ws)| {
            let mut v: Vec<W> = ws.iter().map(|&(x, y, q)| (x - mx, y - my, q)).collect();
            v.sort_unstable();
            (*l, v)
        })
        .collect();
    k.sort();
    k
}

/// Figure identity up to translation and global rotation.
pub fn figure_key(pieces: &[(u16, Vec<W>)]) -> Key {
    (0..4u8)
        .map(|r| normalized(&pieces.iter().map(|(l, ws)| (*l, place(ws, r, 0, 0))).collect::<Vec<_>>()))
        .min()
        .unwrap()
}

pub fn valid(wa: &[W], wb: &[W]) -> bool {
    let sa: HashSet<W> = wa.iter().copied().collect();
    wb.iter().all(|w| !sa.contains(w)) && !sides(wa).is_disjoint(&sides(wb))
}

/// Distinct two-part figures of `b` attached to `a`.
pub fn oracle_figures(a: &Primitive, a_id: PrimId, b: &Primitive, b_id: PrimId) -> BTreeSet<Key> {
    let (wa, wb) = (wedges_of(a), wedges_of(b));
    let mut out = BTreeSet::new();
    for rot in 0..4 {
        for dx in -WINDOW..=WINDOW {
            for dy in -WINDOW..=WINDOW {
                let pb = place(&wb, rot, dx, dy);
                if valid(&wa, &pb) {
                    out.insert(figure_key(&[(a_id.0, wa.clone()), (b_id.0, pb)]));
                }
            }
        }
    }
    out
}

pub fn config_key(a: &Primitive, a_id: PrimId, b: &Primitive, b_id: PrimId, pose: Pose) -> Key {
    figure_key(&[(a_id.0, wedges_of(a)), (b_id.0, place(&wedges_of(b), pose.rot, pose.dx, pose.dy))])
}

/// `Ok(n)` when the configurations are valid, pairwise distinct and cover
/// exactly the oracle's figures.
pub fn check_pair(a: &Primitive, a_id: PrimId, b: &Primitive, b_id: PrimId, cs: &[Configuration]) -> Result<usize, String> {
    let oracle = oracle_figures(a, a_id, b, b_id);
    let mut got = BTreeSet::new();
    for c in cs {
        let pb = place(&wedges_of(b), c.pose.rot, c.pose.dx, c.pose.dy);
        if !valid(&wedges_of(a), &pb) {
            return Err(format!("config {} {:?} is not a valid placement", c.id, c.pose));
        }
        if !got.insert(config_key(a, a_id, b, b_id, c.pose)) {
            return Err(format!("config {} duplicates an earlier figure", c.id));
        }
    }
    if got != oracle {
        return Err(format!("{} configurations vs {} oracle figures", got.len(), oracle.len()));
    }
    Ok(oracle.len())
}
