use super::{assemble, format_parts, parse_token, Part, Token, TokenError, MAX_PARTS};
use crate::geometry::{AttachmentTable, CellSet, Pose, PrimId, PrimitiveBank, Quarter};
use serde::{Deserialize, Serialize};
use rand::Rng;
use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

/// Default ceiling on the number of distinct tokens in one universe.
pub const UNIVERSE_CAP: usize = 500_000;
const NONE: u32 = u32::MAX;

/// Per-token data kept after enumeration.
#[derive(Debug, Clone)]
pub struct TokenRec {
    /// Canonical (lexicographically least) string.
    pub string: String,
    pub cells: CellSet,
    pub n_parts: u8,
    /// Bit `i` set when local primitive `i` occurs.
    pub prim_mask: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniverseCounts {
    pub one: usize,
    pub two: usize,
    pub three: usize,
}

/// Every token over one trial bank, with lookup tables that let programs be
/// evaluated by index arithmetic.
///
/// Tokens are numbered by `(part count, canonical string)`. The build tables
/// give the unrotated token of a 1-, 2- or 3-part build sequence expressed in
/// local primitive indices.
#[derive(Debug, Clone)]
pub struct Universe {
    prims: Vec<PrimId>,
    recs: Vec<TokenRec>,
    by_cells: HashMap<CellSet, u32>,
    by_string: HashMap<String, u32>,
    rot: Vec<u32>,
    null_logp: Vec<f64>,
    seq1: Vec<u32>,
    pair_off: Vec<u32>,
    pair_counts: Vec<u16>,
    seq2: Vec<u32>,
    builds2: Vec<(u8, u8, u16)>,
    ext_off: Vec<u32>,
    seq3: Vec<u32>,
    kmax: u16,
    has: Vec<Vec<u32>>,
    within: Vec<Vec<u32>>,
}

struct Seq {
    parts: Vec<Part>,
    cells: CellSet,
    prob: f64,
}

impl Universe {
    pub fn build(bank: &PrimitiveBank, table: &AttachmentTable, prims: &[PrimId]) -> Result<Universe, TokenError> {
        Universe::build_capped(bank, table, prims, UNIVERSE_CAP)
    }

    pub fn build_capped(
        bank: &PrimitiveBank,
        table: &AttachmentTable,
        prims: &[PrimId],
        cap: usize,
    ) -> Result<Universe, TokenError> {
        let mut prims = prims.to_vec();
        prims.sort_unstable();
        prims.dedup();
        let k = prims.len();
        assert!((1..=8).contains(&k), "a trial bank has 1 to 8 primitives");
        let kf = k as f64;
        let count = |a: usize, b: usize| table.count(prims[a], prims[b]);

        // -- build sequences with their null-model probabilities (orientation excluded)
        let mut seqs: Vec<Seq> = vec![];
        let mut seq1_ix = vec![0usize; k];
        let mut pair_off = vec![0u32; k * k + 1];
        let mut builds2 = vec![];
        let mut seq2_ix = vec![];
        let mut ext_off = vec![0u32];
        let mut seq3_ix: Vec<usize> = vec![];

        for a in 0..k {
            let dead = (0..k).filter(|&d| count(a, d) == 0).count();
            let p1 = 1.0 / kf;
            let parts = vec![Part { prim: prims[a], attach: None }];
            let cells = assemble(&parts, &[Pose::IDENTITY], bank).expect("single part");
            seq1_ix[a] = seqs.len();
            seqs.push(Seq { parts, cells, prob: p1 * (1.0 + dead as f64) / (kf + 1.0) });
        }
        for a in 0..k {
            for b in 0..k {
                pair_off[a * k + b] = builds2.len() as u32;
                for cfg in table.configs(prims[a], prims[b]) {
                    let p2 = 1.0 / kf / (kf + 1.0) / count(a, b) as f64;
                    let parts =
                        vec![Part { prim: prims[a], attach: None }, Part { prim: prims[b], attach: Some((0, cfg.id)) }];
                    let poses = [Pose::IDENTITY, cfg.pose];
                    let cells = assemble(&parts, &poses, bank).expect("stored configurations never overlap");

                    // third-part options for every added primitive
                    let mut options: Vec<Vec<Option<Seq>>> = vec![];
                    for d in 0..k {
                        for j in 0..2u8 {
                            let anchor = parts[j as usize].prim;
                            let row = table
                                .configs(anchor, prims[d])
                                .iter()
                                .map(|c3| {
                                    let mut ps = parts.clone();
                                    ps.push(Part { prim: prims[d], attach: Some((j, c3.id)) });
                                    let pose3 = poses[j as usize].compose(c3.pose);
                                    assemble(&ps, &[poses[0], poses[1], pose3], bank)
                                        .map(|cells| Seq { parts: ps, cells, prob: 0.0 })
                                })
                                .collect();
                            options.push(row);
                        }
                    }
                    let valid: Vec<usize> = (0..k)
                        .map(|d| options[2 * d].iter().chain(&options[2 * d + 1]).filter(|o| o.is_some()).count())
                        .collect();
                    let dead = valid.iter().filter(|&&v| v == 0).count();

                    builds2.push((a as u8, b as u8, cfg.id));
                    seq2_ix.push(seqs.len());
                    seqs.push(Seq { parts, cells, prob: p2 * (1.0 + dead as f64) / (kf + 1.0) });
                    for (slot, row) in options.into_iter().enumerate() {
                        let d = slot / 2;
                        for o in row {
                            match o {
                                Some(mut s) => {
                                    s.prob = p2 / (kf + 1.0) / valid[d] as f64;
                                    seq3_ix.push(seqs.len());
                                    seqs.push(s);
                                }
                                None => seq3_ix.push(usize::MAX),
                            }
                        }
                        ext_off.push(seq3_ix.len() as u32);
                    }
                }
            }
        }
        pair_off[k * k] = builds2.len() as u32;

        // -- dedup figures over all sequences and orientations
        let mut best: HashMap<CellSet, String> = HashMap::new();
        let mut oriented: Vec<[CellSet; 4]> = Vec::with_capacity(seqs.len());
        for s in &seqs {
            let rots = [s.cells.clone(), s.cells.rotate(1), s.cells.rotate(2), s.cells.rotate(3)];
            for (o, c) in rots.iter().enumerate() {
                let text = format_parts(&s.parts, o as u8, bank);
                match best.get_mut(c) {
                    Some(cur) if *cur <= text => {}
                    Some(cur) => *cur = text,
                    None => {
                        best.insert(c.clone(), text);
                    }
                }
            }
            if best.len() > cap {
                return Err(TokenError::BudgetExceeded(cap));
            }
            oriented.push(rots);
        }
        let mut order: Vec<(CellSet, String)> = best.into_iter().collect();
        order.sort_by(|x, y| (x.0.pieces().len(), &x.1).cmp(&(y.0.pieces().len(), &y.1)));

        let local: HashMap<PrimId, u8> = prims.iter().enumerate().map(|(i, &p)| (p, i as u8)).collect();
        let mut by_cells = HashMap::with_capacity(order.len());
        let mut by_string = HashMap::with_capacity(order.len());
        let mut recs = Vec::with_capacity(order.len());
        for (i, (cells, string)) in order.into_iter().enumerate() {
            let prim_mask = cells.prims().fold(0u8, |m, p| m | 1 << local[&p]);
            by_string.insert(string.clone(), i as u32);
            recs.push(TokenRec { n_parts: cells.pieces().len() as u8, prim_mask, string, cells: cells.clone() });
            by_cells.insert(cells, i as u32);
        }

        let mut null_p = vec![0.0f64; recs.len()];
        for (s, rots) in seqs.iter().zip(&oriented) {
            for c in rots {
                null_p[by_cells[c] as usize] += s.prob / 4.0;
            }
        }
        let rot: Vec<u32> = recs.iter().map(|r| by_cells[&r.cells.rotate(1)]).collect();
        let id_of = |ix: usize| if ix == usize::MAX { NONE } else { by_cells[&oriented[ix][0]] };
        let seq1 = seq1_ix.iter().map(|&i| id_of(i)).collect();
        let seq2 = seq2_ix.iter().map(|&i| id_of(i)).collect();
        let seq3 = seq3_ix.iter().map(|&i| id_of(i)).collect();
        let pair_counts = (0..k * k).map(|s| count(s / k, s % k) as u16).collect();
        let kmax = table.max_count(&prims) as u16;
        let mut has = vec![vec![]; k];
        let mut within = vec![vec![]; 1 << k];
        for (i, r) in recs.iter().enumerate() {
            for (p, list) in has.iter_mut().enumerate() {
                if r.prim_mask >> p & 1 == 1 {
                    list.push(i as u32);
                }
            }
            for (m, list) in within.iter_mut().enumerate() {
                if r.prim_mask as usize & !m == 0 {
                    list.push(i as u32);
                }
            }
        }

        Ok(Universe {
            prims,
            recs,
            by_cells,
            by_string,
            rot,
            null_logp: null_p.into_iter().map(f64::ln).collect(),
            seq1,
            pair_off,
            pair_counts,
            seq2,
            builds2,
            ext_off,
            seq3,
            kmax,
            has,
            within,
        })
    }

    pub fn len(&self) -> usize {
        self.recs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recs.is_empty()
    }

    pub fn prims(&self) -> &[PrimId] {
        &self.prims
    }

    pub fn local(&self, p: PrimId) -> Option<u8> {
        self.prims.iter().position(|&q| q == p).map(|i| i as u8)
    }

    pub fn rec(&self, id: u32) -> &TokenRec {
        &self.recs[id as usize]
    }

    pub fn string(&self, id: u32) -> &str {
        &self.recs[id as usize].string
    }

    pub fn cells(&self, id: u32) -> &CellSet {
        &self.recs[id as usize].cells
    }

    pub fn find(&self, cells: &CellSet) -> Option<u32> {
        self.by_cells.get(cells).copied()
    }

    pub fn find_token(&self, t: &Token) -> Option<u32> {
        self.find(&t.cells)
    }

    /// Resolve any valid spelling of a token, canonical or not.
    pub fn lookup(&self, s: &str, bank: &PrimitiveBank, table: &AttachmentTable) -> Result<u32, TokenError> {
        if let Some(&id) = self.by_string.get(s) {
            return Ok(id);
        }
        let t = parse_token(s, bank, table)?;
        self.find(&t.cells).ok_or_else(|| TokenError::NotInUniverse(s.to_string()))
    }

    pub fn canonical_string(&self, t: &Token) -> Option<&str> {
        self.find_token(t).map(|i| self.string(i))
    }

    /// Index of the token turned by `quarter_turns` counter-clockwise.
    pub fn rotate(&self, id: u32, quarter_turns: u8) -> u32 {
        (0..quarter_turns % 4).fold(id, |i, _| self.rot[i as usize])
    }

    pub fn null_logp(&self) -> &[f64] {
        &self.null_logp
    }

    pub fn counts(&self) -> UniverseCounts {
        let mut c = UniverseCounts::default();
        for r in &self.recs {
            match r.n_parts {
                1 => c.one += 1,
                2 => c.two += 1,
                _ => c.three += 1,
            }
        }
        c
    }

    /// Token ids whose primitives all lie in `mask` and, when `require` is
    /// nonzero, that contain at least one of the `require` primitives.
    pub fn filter_mask(&self, mask: u8, require: u8) -> Vec<u32> {
        (0..self.recs.len() as u32)
            .filter(|&i| {
                let m = self.recs[i as usize].prim_mask;
                m & !mask == 0 && (require == 0 || m & require != 0)
            })
            .collect()
    }

    // -- build tables, all in local primitive indices

    /// Tokens containing local primitive `p`.
    pub fn with_part(&self, p: u8) -> &[u32] {
        &self.has[p as usize]
    }

    /// Tokens made only of primitives in the local bit set `mask`.
    pub fn within(&self, mask: u8) -> &[u32] {
        &self.within[mask as usize]
    }

    pub fn kmax(&self) -> u16 {
        self.kmax
    }

    pub fn n_configs(&self, a: u8, b: u8) -> u16 {
        self.pair_counts[a as usize * self.prims.len() + b as usize]
    }

    pub fn single(&self, a: u8) -> u32 {
        self.seq1[a as usize]
    }

    /// Build-2 handle of `(a, b, config)`, if the config exists.
    pub fn build2(&self, a: u8, b: u8, config: u16) -> Option<u32> {
        if config == 0 || config > self.n_configs(a, b) {
            return None;
        }
        Some(self.pair_off[a as usize * self.prims.len() + b as usize] + config as u32 - 1)
    }

    pub fn builds2_of(&self, a: u8, b: u8) -> std::ops::Range<u32> {
        let s = a as usize * self.prims.len() + b as usize;
        self.pair_off[s]..self.pair_off[s + 1]
    }

    pub fn build2_parts(&self, b2: u32) -> (u8, u8, u16) {
        self.builds2[b2 as usize]
    }

    pub fn token2(&self, b2: u32) -> u32 {
        self.seq2[b2 as usize]
    }

    /// Tokens reachable by attaching local primitive `d` to part `j` (0 or 1)
    /// of a 2-part build, indexed by `config - 1`; `None` where parts overlap.
    pub fn extensions(&self, b2: u32, d: u8, j: u8) -> impl Iterator<Item = Option<u32>> + '_ {
        let slot = (b2 as usize * self.prims.len() + d as usize) * 2 + j as usize;
        self.seq3[self.ext_off[slot] as usize..self.ext_off[slot + 1] as usize]
            .iter()
            .map(|&t| (t != NONE).then_some(t))
    }

    pub fn extension(&self, b2: u32, d: u8, j: u8, config: u16) -> Option<u32> {
        self.extensions(b2, d, j).nth((config as usize).checked_sub(1)?).flatten()
    }

    pub fn export(&self, bank: &PrimitiveBank, table: &AttachmentTable) -> Vec<UniverseExport> {
        self.recs
            .iter()
            .map(|r| {
                let t = parse_token(&r.string, bank, table).expect("canonical strings parse");
                UniverseExport {
                    string: r.string.clone(),
                    parts: t.parts.iter().map(|p| bank.name(p.prim).to_string()).collect(),
                    orientation: t.degrees(),
                    cells: r
                        .cells
                        .wedges()
                        .map(|(p, w)| {
                            let q = match w.q {
                                Quarter::S => "s",
                                Quarter::E => "e",
                                Quarter::N => "n",
                                Quarter::W => "w",
                            };
                            (w.x, w.y, q.to_string(), bank.name(p).to_string())
                        })
                        .collect(),
                }
            })
            .collect()
    }
}

impl Universe {
    /// Draw a token from the null distribution by running the sequential
    /// build process directly.
    pub fn sample_null<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let k = self.prims.len();
        let a = rng.gen_range(0..k) as u8;
        let body = 'build: {
            let b = rng.gen_range(0..=k);
            if b == k || self.n_configs(a, b as u8) == 0 {
                break 'build self.single(a);
            }
            let cfg = rng.gen_range(1..=self.n_configs(a, b as u8));
            let b2 = self.build2(a, b as u8, cfg).expect("config in range");
            let d = rng.gen_range(0..=k);
            if d == k {
                break 'build self.token2(b2);
            }
            let options: Vec<u32> =
                (0..2).flat_map(|j| self.extensions(b2, d as u8, j).flatten()).collect();
            if options.is_empty() {
                break 'build self.token2(b2);
            }
            options[rng.gen_range(0..options.len())]
        };
        self.rotate(body, rng.gen_range(0..4))
    }
}

/// Universes keyed by their sorted primitive list, evicting the oldest entry
/// once `cap` are held.
#[derive(Debug)]
pub struct UniverseCache {
    bank: Arc<PrimitiveBank>,
    table: Arc<AttachmentTable>,
    cap: usize,
    entries: Mutex<VecDeque<(Vec<PrimId>, Arc<Universe>)>>,
}

impl UniverseCache {
    pub fn new(bank: Arc<PrimitiveBank>, table: Arc<AttachmentTable>, cap: usize) -> Self {
        UniverseCache { bank, table, cap: cap.max(1), entries: Mutex::new(VecDeque::new()) }
    }

    pub fn bank(&self) -> &Arc<PrimitiveBank> {
        &self.bank
    }

    pub fn table(&self) -> &Arc<AttachmentTable> {
        &self.table
    }

    pub fn get(&self, prims: &[PrimId]) -> Result<Arc<Universe>, TokenError> {
        let mut key = prims.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some((_, u)) = self.entries.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return Ok(u.clone());
        }
        // built outside the lock; a racing builder produces an identical universe
        let u = Arc::new(Universe::build(&self.bank, &self.table, &key)?);
        let mut entries = self.entries.lock().unwrap();
        if let Some((_, existing)) = entries.iter().find(|(k, _)| *k == key) {
            return Ok(existing.clone());
        }
        if entries.len() == self.cap {
            entries.pop_front();
        }
        entries.push_back((key, u.clone()));
        Ok(u)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One line of the universe JSONL export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniverseExport {
    pub string: String,
    pub parts: Vec<String>,
    pub orientation: u16,
    /// `(x, y, quarter, primitive)` wedges of the canonical figure.
    pub cells: Vec<(i32, i32, String, String)>,
}

const _: () = assert!(MAX_PARTS == 3);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_bank;

    fn small() -> (PrimitiveBank, AttachmentTable, Universe) {
        let bank = default_bank();
        let table = AttachmentTable::build(&bank);
        let prims: Vec<PrimId> = ["p2", "p5", "p6", "p8"].iter().map(|n| bank.lookup(n).unwrap()).collect();
        let u = Universe::build(&bank, &table, &prims).unwrap();
        (bank, table, u)
    }

    #[test]
    fn null_distribution_normalizes() {
        let (_, _, u) = small();
        let total: f64 = u.null_logp().iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn closed_under_rotation_and_deduplicated() {
        let (_, _, u) = small();
        for i in 0..u.len() as u32 {
            assert_eq!(u.rotate(i, 4), i);
            assert_eq!(u.cells(u.rotate(i, 1)), &u.cells(i).rotate(1));
        }
        assert_eq!(u.by_cells.len(), u.len());
    }

    #[test]
    fn sequential_null_sampler_matches_the_table() {
        use rand::SeedableRng;
        let bank = default_bank();
        let table = AttachmentTable::build(&bank);
        let prims: Vec<PrimId> = ["p1", "p3", "p4"].iter().map(|n| bank.lookup(n).unwrap()).collect();
        let u = Universe::build(&bank, &table, &prims).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut hits = vec![0u32; u.len()];
        for _ in 0..n {
            hits[u.sample_null(&mut rng) as usize] += 1;
        }
        for (i, &h) in hits.iter().enumerate() {
            let p = u.null_logp()[i].exp();
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((h as f64 - n as f64 * p).abs() <= 4.0 * sd + 1.0, "{} {h} vs {}", u.string(i as u32), n as f64 * p);
        }
    }

    #[test]
    fn cache_evicts_oldest() {
        let bank = Arc::new(default_bank());
        let table = Arc::new(AttachmentTable::build(&bank));
        let cache = UniverseCache::new(bank.clone(), table, 1);
        let a = cache.get(&[PrimId(0)]).unwrap();
        assert!(Arc::ptr_eq(&a, &cache.get(&[PrimId(0), PrimId(0)]).unwrap()));
        cache.get(&[PrimId(2)]).unwrap();
        assert_eq!(cache.len(), 1);
        assert!(!Arc::ptr_eq(&a, &cache.get(&[PrimId(0)]).unwrap()));
    }

    #[test]
    fn canonical_strings_parse_back_to_their_token() {
        let (bank, table, u) = small();
        for i in (0..u.len() as u32).step_by(97) {
            let t = parse_token(u.string(i), &bank, &table).unwrap();
            assert_eq!(u.find_token(&t), Some(i));
        }
    }
}
