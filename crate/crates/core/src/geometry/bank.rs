use super::lattice::{Half, Triangle};
use super::primitive::{build_primitive, triangle_from_json, Primitive};
use super::GeometryError;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// Index of a primitive inside its [`PrimitiveBank`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimId(pub u16);

impl fmt::Display for PrimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

pub type Rgb = [u8; 3];

/// The global set of primitives a study draws its 4-primitive trial banks from.
#[derive(Debug, Clone)]
pub struct PrimitiveBank {
    prims: Vec<Primitive>,
    colors: Vec<Rgb>,
    by_name: HashMap<String, PrimId>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BankEntry {
    id: String,
    triangles: Vec<serde_json::Value>,
    color: String,
}

impl PrimitiveBank {
    pub fn new(entries: Vec<(Primitive, Rgb)>) -> Result<Self, GeometryError> {
        let mut by_name = HashMap::new();
        let mut prims = vec![];
        let mut colors = vec![];
        for (i, (p, c)) in entries.into_iter().enumerate() {
            if !valid_symbol(&p.id) {
                return Err(GeometryError::Malformed(format!(
                    "primitive id {:?} must be letters followed by digits",
                    p.id
                )));
            }
            if by_name.insert(p.id.clone(), PrimId(i as u16)).is_some() {
                return Err(GeometryError::Malformed(format!("duplicate primitive id {}", p.id)));
            }
            prims.push(p);
            colors.push(c);
        }
        Ok(PrimitiveBank { prims, colors, by_name })
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let entries: Vec<BankEntry> =
            serde_json::from_str(text).map_err(|e| GeometryError::Malformed(e.to_string()))?;
        let mut out = vec![];
        for e in entries {
            let tris = e.triangles.iter().map(triangle_from_json).collect::<Result<Vec<_>, _>>()?;
            let prim = build_primitive(&e.id, &tris)?;
            out.push((prim, parse_color(&e.color)?));
        }
        PrimitiveBank::new(out)
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<BankEntry> = self
            .prims
            .iter()
            .zip(&self.colors)
            .map(|(p, c)| BankEntry {
                id: p.id.clone(),
                triangles: p
                    .triangles
                    .iter()
                    .map(|t| serde_json::json!([t.x, t.y, t.half.to_string()]))
                    .collect(),
                color: format!("#{:02X}{:02X}{:02X}", c[0], c[1], c[2]),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("bank serializes")
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = PrimId> {
        (0..self.prims.len() as u16).map(PrimId)
    }

    pub fn get(&self, id: PrimId) -> &Primitive {
        &self.prims[id.0 as usize]
    }

    pub fn name(&self, id: PrimId) -> &str {
        &self.prims[id.0 as usize].id
    }

    pub fn color(&self, id: PrimId) -> Rgb {
        self.colors[id.0 as usize]
    }

    pub fn lookup(&self, name: &str) -> Option<PrimId> {
        self.by_name.get(name).copied()
    }

    pub fn resolve(&self, name: &str) -> Result<PrimId, GeometryError> {
        self.lookup(name).ok_or_else(|| GeometryError::UnknownPrimitive(name.to_string()))
    }
}

fn valid_symbol(s: &str) -> bool {
    let letters = s.chars().take_while(|c| c.is_ascii_alphabetic()).count();
    letters > 0 && letters < s.len() && s[letters..].chars().all(|c| c.is_ascii_digit())
}

fn parse_color(s: &str) -> Result<Rgb, GeometryError> {
    let hex = s.strip_prefix('#').unwrap_or(s);
    if hex.len() != 6 {
        return Err(GeometryError::Malformed(format!("bad colour {s}")));
    }
    let byte = |i: usize| {
        u8::from_str_radix(&hex[i..i + 2], 16).map_err(|_| GeometryError::Malformed(format!("bad colour {s}")))
    };
    Ok([byte(0)?, byte(2)?, byte(4)?])
}

/// A reconstructed bank of nine four-triangle primitives `p1`..`p9`.
///
/// The shapes are approximations chosen to cover the symmetry classes seen in
/// the original stimuli (4-fold, 2-fold, mirror-only and asymmetric).
pub fn default_bank() -> PrimitiveBank {
    use Half::*;
    let t = Triangle::new;
    let specs: [(&str, [Triangle; 4], Rgb); 9] = [
        // 1x2 domino
        ("p1", [t(0, 0, Sw), t(0, 0, Ne), t(1, 0, Sw), t(1, 0, Ne)], [0xE4, 0x1A, 0x1C]),
        // right triangle with legs 2
        ("p2", [t(0, 0, Sw), t(0, 0, Ne), t(1, 0, Sw), t(0, 1, Sw)], [0x37, 0x7E, 0xB8]),
        // diamond (square of side √2)
        ("p3", [t(0, 0, Ne), t(1, 0, Nw), t(0, 1, Se), t(1, 1, Sw)], [0x4D, 0xAF, 0x4A]),
        // parallelogram
        ("p4", [t(1, 0, Sw), t(1, 0, Ne), t(2, 0, Nw), t(0, 0, Se)], [0x98, 0x4E, 0xA3]),
        // isosceles trapezoid
        ("p5", [t(1, 0, Sw), t(1, 0, Ne), t(2, 0, Sw), t(0, 0, Se)], [0xFF, 0x7F, 0x00]),
        // square with two side wedges
        ("p6", [t(0, 0, Sw), t(0, 0, Ne), t(1, 0, Sw), t(0, 1, Se)], [0xA6, 0x56, 0x28]),
        // square with an offset roof
        ("p7", [t(0, 0, Sw), t(0, 0, Ne), t(0, 1, Se), t(1, 1, Sw)], [0xF7, 0x81, 0xBF]),
        // skewed step
        ("p8", [t(0, 0, Se), t(1, 0, Nw), t(1, 1, Sw), t(1, 1, Ne)], [0x99, 0x99, 0x99]),
        // chevron
        ("p9", [t(0, 0, Ne), t(1, 0, Nw), t(0, 1, Sw), t(1, 1, Se)], [0x1B, 0x9E, 0x77]),
    ];
    let entries = specs
        .iter()
        .map(|(id, tris, c)| (build_primitive(id, tris).expect("default bank shapes are valid"), *c))
        .collect();
    PrimitiveBank::new(entries).expect("default bank ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bank_is_valid_and_round_trips() {
        let bank = default_bank();
        assert_eq!(bank.len(), 9);
        for id in bank.ids() {
            assert_eq!(bank.get(id).area(), 2.0);
        }
        let again = PrimitiveBank::from_json(&bank.to_json()).unwrap();
        for id in bank.ids() {
            assert_eq!(again.get(id), bank.get(id));
            assert_eq!(again.color(id), bank.color(id));
        }
    }

    #[test]
    fn default_bank_spans_symmetry_classes() {
        let bank = default_bank();
        let orders: Vec<usize> = bank.ids().map(|id| bank.get(id).symmetries().len()).collect();
        assert!(orders.contains(&3), "needs a 4-fold shape");
        assert!(orders.contains(&1), "needs a 2-fold shape");
        assert!(orders.contains(&0), "needs an asymmetric shape");
    }

    #[test]
    fn symbols_must_be_letters_then_digits() {
        assert!(valid_symbol("p12"));
        assert!(!valid_symbol("12"));
        assert!(!valid_symbol("p"));
        assert!(!valid_symbol("p1x"));
    }
}
