//! Alien-figure tokens and their string form.
//!
//! A token string has three `+`-separated fields: the parts in build order,
//! the attachments and the global orientation in degrees.
//!
//! ```text
//! (p3)++0                 one part
//! (p1p2)+1+180            p2 on p1 with configuration 1
//! (p1p2p4)+1:3.2:1+90     p2 on part 1 via config 3, p4 on part 2 via config 1
//! ```
//!
//! For three parts each attachment is `target:config` with a 1-based target
//! index; two-part strings keep the bare config id.

mod universe;

pub use universe::{Universe, UniverseCache, UniverseCounts, UniverseExport, UNIVERSE_CAP};

use crate::geometry::{AttachmentTable, CellSet, GeometryError, Piece, PrimId, PrimitiveBank, Pose, Wedge};
use std::collections::HashSet;
use std::fmt;

pub const MAX_PARTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("cannot parse token {0:?}: {1}")]
    Parse(String, String),
    #[error("unknown primitive {0}")]
    UnknownPrimitive(String),
    #[error("configuration {id} does not exist for ({a}, {b})")]
    InvalidConfigId { a: String, b: String, id: u16 },
    #[error("parts of {0} overlap")]
    Overlap(String),
    #[error("{0} is not in the trial universe")]
    NotInUniverse(String),
    #[error("universe exceeds {0} tokens")]
    BudgetExceeded(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One placed part: the first part has no attachment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Part {
    pub prim: PrimId,
    /// `(target part index, configuration id)`, target 0-based.
    pub attach: Option<(u8, u16)>,
}

/// A build sequence plus global orientation, with its derived figure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub parts: Vec<Part>,
    /// Quarter turns counter-clockwise.
    pub orientation: u8,
    pub cells: CellSet,
}

impl Token {
    pub fn degrees(&self) -> u16 {
        self.orientation as u16 * 90
    }

    /// Visual identity: same canonical figure.
    pub fn same_figure(&self, other: &Token) -> bool {
        self.cells == other.cells
    }
}

/// Poses of every part of a build sequence in the frame of part 0.
pub fn part_poses(parts: &[Part], bank: &PrimitiveBank, table: &AttachmentTable) -> Result<Vec<Pose>, TokenError> {
    let mut poses: Vec<Pose> = Vec::with_capacity(parts.len());
    for (i, p) in parts.iter().enumerate() {
        match (i, p.attach) {
            (0, None) => poses.push(Pose::IDENTITY),
            (0, Some(_)) => return Err(TokenError::Parse(String::new(), "first part cannot attach".into())),
            (_, None) => return Err(TokenError::Parse(String::new(), format!("part {} lacks an attachment", i + 1))),
            (_, Some((target, id))) => {
                let t = target as usize;
                if t >= i {
                    return Err(TokenError::Parse(String::new(), format!("part {} attaches to a later part", i + 1)));
                }
                let anchor = parts[t].prim;
                let cfg = table.get(anchor, p.prim, id).ok_or_else(|| TokenError::InvalidConfigId {
                    a: bank.name(anchor).to_string(),
                    b: bank.name(p.prim).to_string(),
                    id,
                })?;
                poses.push(poses[t].compose(cfg.pose));
            }
        }
    }
    Ok(poses)
}

/// Assemble a build sequence into its unrotated canonical figure, or `None`
/// when two parts overlap.
pub fn assemble(parts: &[Part], poses: &[Pose], bank: &PrimitiveBank) -> Option<CellSet> {
    let mut taken: HashSet<Wedge> = HashSet::new();
    let mut pieces = Vec::with_capacity(parts.len());
    for (p, &pose) in parts.iter().zip(poses) {
        let ws: Vec<Wedge> = bank.get(p.prim).placed_wedges(pose).collect();
        for w in &ws {
            if !taken.insert(*w) {
                return None;
            }
        }
        pieces.push(Piece { prim: p.prim, wedges: ws });
    }
    Some(CellSet::new(pieces))
}

pub fn build_token(
    parts: Vec<Part>,
    orientation: u8,
    bank: &PrimitiveBank,
    table: &AttachmentTable,
) -> Result<Token, TokenError> {
    if parts.is_empty() || parts.len() > MAX_PARTS {
        return Err(TokenError::Parse(String::new(), format!("{} parts (allowed 1 to {MAX_PARTS})", parts.len())));
    }
    let poses = part_poses(&parts, bank, table)?;
    let cells = assemble(&parts, &poses, bank).ok_or_else(|| TokenError::Overlap(format_parts(&parts, orientation, bank)))?;
    Ok(Token { cells: cells.rotate(orientation % 4), parts, orientation: orientation % 4 })
}

/// Serialize the token's own build sequence.
pub fn token_to_string(t: &Token, bank: &PrimitiveBank) -> String {
    format_parts(&t.parts, t.orientation, bank)
}

pub fn format_parts(parts: &[Part], orientation: u8, bank: &PrimitiveBank) -> String {
    use fmt::Write;
    let mut s = String::from("(");
    for p in parts {
        s.push_str(bank.name(p.prim));
    }
    s.push_str(")+");
    if parts.len() == 2 {
        if let Some((_, id)) = parts[1].attach {
            write!(s, "{id}").unwrap();
        }
    } else {
        let specs: Vec<String> =
            parts.iter().filter_map(|p| p.attach).map(|(t, id)| format!("{}:{id}", t + 1)).collect();
        s.push_str(&specs.join("."));
    }
    write!(s, "+{}", orientation as u16 * 90).unwrap();
    s
}

/// Split a string into its three fields without consulting a bank.
pub fn split_fields(s: &str) -> Result<(&str, &str, &str), TokenError> {
    let bad = |why: &str| TokenError::Parse(s.to_string(), why.to_string());
    let mut it = s.trim().splitn(3, '+');
    let (Some(a), Some(b), Some(c)) = (it.next(), it.next(), it.next()) else {
        return Err(bad("expected three '+'-separated fields"));
    };
    let inner = a.strip_prefix('(').and_then(|x| x.strip_suffix(')')).ok_or_else(|| bad("parts must be parenthesised"))?;
    Ok((inner, b, c))
}

/// Split `p1p12q3` into primitive symbols (letters followed by digits).
pub fn split_prims(inner: &str) -> Option<Vec<&str>> {
    let bytes = inner.as_bytes();
    let mut out = vec![];
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
            i += 1;
        }
        let letters_end = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if letters_end == start || i == letters_end {
            return None;
        }
        out.push(&inner[start..i]);
    }
    Some(out)
}

pub fn parse_degrees(s: &str) -> Option<u8> {
    match s {
        "0" => Some(0),
        "90" => Some(1),
        "180" => Some(2),
        "270" => Some(3),
        _ => None,
    }
}

pub fn parse_token(s: &str, bank: &PrimitiveBank, table: &AttachmentTable) -> Result<Token, TokenError> {
    let bad = |why: &str| TokenError::Parse(s.to_string(), why.to_string());
    let (inner, attach, deg) = split_fields(s)?;
    let names = split_prims(inner).ok_or_else(|| bad("parts must be primitive symbols"))?;
    if names.is_empty() || names.len() > MAX_PARTS {
        return Err(bad("a token has 1 to 3 parts"));
    }
    let orientation = parse_degrees(deg).ok_or_else(|| bad("orientation must be 0, 90, 180 or 270"))?;
    let prims = names
        .iter()
        .map(|n| bank.lookup(n).ok_or_else(|| TokenError::UnknownPrimitive(n.to_string())))
        .collect::<Result<Vec<_>, _>>()?;

    let specs: Vec<(u8, u16)> = match names.len() {
        1 if attach.is_empty() => vec![],
        1 => return Err(bad("a single part takes no attachment")),
        2 => {
            let (t, id) = match attach.split_once(':') {
                Some((t, id)) => (t, id),
                None => ("1", attach),
            };
            vec![parse_spec(t, id).ok_or_else(|| bad("bad attachment"))?]
        }
        _ => {
            let specs = attach
                .split('.')
                .map(|x| x.split_once(':').and_then(|(t, id)| parse_spec(t, id)))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad("bad attachment list"))?;
            if specs.len() != names.len() - 1 {
                return Err(bad("one attachment per added part"));
            }
            specs
        }
    };

    let mut parts = vec![Part { prim: prims[0], attach: None }];
    for (i, (&prim, &(t, id))) in prims[1..].iter().zip(&specs).enumerate() {
        if t as usize > i {
            return Err(bad("attachment target must be an earlier part"));
        }
        parts.push(Part { prim, attach: Some((t, id)) });
    }
    build_token(parts, orientation, bank, table).map_err(|e| match e {
        TokenError::Overlap(_) => TokenError::Overlap(s.to_string()),
        other => other,
    })
}

fn parse_spec(target: &str, id: &str) -> Option<(u8, u16)> {
    let t: u8 = target.parse().ok()?;
    let id: u16 = id.parse().ok()?;
    (t >= 1 && id >= 1).then_some((t - 1, id))
}
