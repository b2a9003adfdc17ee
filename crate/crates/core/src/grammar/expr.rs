//! Program syntax trees and their s-expression surface form.

use super::GrammarError;
use crate::geometry::{PrimId, PrimitiveBank};
use std::fmt::Write;

/// A set of primitives: the whole trial bank, or an explicit subset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PartSet {
    All,
    /// Sorted, deduplicated.
    Of(Vec<PrimId>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    /// `(rotate SET)`: closure over all four orientations.
    RotateAll,
    /// `(rotate* SET ANGLE)`.
    RotateAt,
    /// `(attach A B)`: every configuration.
    Attach,
    /// `(attach* A B CONFIG)`: one configuration.
    AttachAt,
    Has,
    Single,
    OneOf,
    Union,
    /// `(map (lambda x BODY) PARTSET)`.
    Map,
    Var,
    Part(PrimId),
    Config(u16),
    /// Quarter turns.
    Angle(u8),
    PartSet(PartSet),
}

/// A concept program. Children are ordered as in the surface syntax.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr {
    pub op: Op,
    pub kids: Vec<Expr>,
}

pub type Program = Expr;

impl Expr {
    pub fn new(op: Op, kids: Vec<Expr>) -> Self {
        Expr { op, kids }
    }

    pub fn leaf(op: Op) -> Self {
        Expr { op, kids: vec![] }
    }

    pub fn part(p: PrimId) -> Self {
        Expr::leaf(Op::Part(p))
    }

    pub fn var() -> Self {
        Expr::leaf(Op::Var)
    }

    pub fn config(c: u16) -> Self {
        Expr::leaf(Op::Config(c))
    }

    pub fn angle(quarter_turns: u8) -> Self {
        Expr::leaf(Op::Angle(quarter_turns % 4))
    }

    pub fn part_set(s: PartSet) -> Self {
        Expr::leaf(Op::PartSet(s))
    }

    pub fn rotate_all(set: Expr) -> Self {
        Expr::new(Op::RotateAll, vec![set])
    }

    pub fn rotate_at(set: Expr, quarter_turns: u8) -> Self {
        Expr::new(Op::RotateAt, vec![set, Expr::angle(quarter_turns)])
    }

    pub fn attach(a: Expr, b: Expr) -> Self {
        Expr::new(Op::Attach, vec![a, b])
    }

    pub fn attach_at(a: Expr, b: Expr, c: u16) -> Self {
        Expr::new(Op::AttachAt, vec![a, b, Expr::config(c)])
    }

    pub fn has(p: PrimId) -> Self {
        Expr::new(Op::Has, vec![Expr::part(p)])
    }

    pub fn single(p: PrimId) -> Self {
        Expr::new(Op::Single, vec![Expr::part(p)])
    }

    pub fn one_of(s: PartSet) -> Self {
        Expr::new(Op::OneOf, vec![Expr::part_set(s)])
    }

    pub fn union(a: Expr, b: Expr) -> Self {
        Expr::new(Op::Union, vec![a, b])
    }

    pub fn map(body: Expr, s: PartSet) -> Self {
        Expr::new(Op::Map, vec![body, Expr::part_set(s)])
    }

    /// Tree depth; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.kids.iter().map(Expr::depth).max().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        1 + self.kids.iter().map(Expr::size).sum::<usize>()
    }

    pub fn at(&self, path: &[u8]) -> &Expr {
        path.iter().fold(self, |e, &i| &e.kids[i as usize])
    }

    pub fn at_mut(&mut self, path: &[u8]) -> &mut Expr {
        path.iter().fold(self, |e, &i| &mut e.kids[i as usize])
    }

    pub fn replaced(&self, path: &[u8], sub: Expr) -> Expr {
        let mut e = self.clone();
        *e.at_mut(path) = sub;
        e
    }

    /// Pre-order walk.
    pub fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        pred(self) || self.kids.iter().any(|k| k.any(pred))
    }

    pub fn prims(&self, out: &mut Vec<PrimId>) {
        match &self.op {
            Op::Part(p) => out.push(*p),
            Op::PartSet(PartSet::Of(ps)) => out.extend(ps),
            _ => {}
        }
        for k in &self.kids {
            k.prims(out);
        }
    }

    pub fn to_sexpr(&self, bank: &PrimitiveBank) -> String {
        let mut s = String::new();
        self.write_sexpr(bank, &mut s);
        s
    }

    fn write_sexpr(&self, bank: &PrimitiveBank, s: &mut String) {
        let head = match &self.op {
            Op::RotateAll => "rotate",
            Op::RotateAt => "rotate*",
            Op::Attach => "attach",
            Op::AttachAt => "attach*",
            Op::Has => "has",
            Op::Single => "single",
            Op::OneOf => "oneof",
            Op::Union => "union",
            Op::Map => {
                s.push_str("(map (lambda x ");
                self.kids[0].write_sexpr(bank, s);
                s.push_str(") ");
                self.kids[1].write_sexpr(bank, s);
                s.push(')');
                return;
            }
            Op::Var => return s.push('x'),
            Op::Part(p) => return s.push_str(bank.name(*p)),
            Op::Config(c) => return write!(s, "{c}").unwrap(),
            Op::Angle(a) => return write!(s, "{}", *a as u16 * 90).unwrap(),
            Op::PartSet(PartSet::All) => return s.push('S'),
            Op::PartSet(PartSet::Of(ps)) => {
                s.push_str("(set");
                for p in ps {
                    s.push(' ');
                    s.push_str(bank.name(*p));
                }
                s.push(')');
                return;
            }
        };
        s.push('(');
        s.push_str(head);
        for k in &self.kids {
            s.push(' ');
            k.write_sexpr(bank, s);
        }
        s.push(')');
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sx {
    Atom(String),
    List(Vec<Sx>),
}

fn read_sx(text: &str) -> Result<Sx, GrammarError> {
    let spaced = text.replace('(', " ( ").replace(')', " ) ");
    let mut toks = spaced.split_whitespace().peekable();
    fn go<'a>(toks: &mut std::iter::Peekable<impl Iterator<Item = &'a str>>) -> Result<Sx, GrammarError> {
        match toks.next() {
            None => Err(GrammarError::Parse("unexpected end of input".into())),
            Some(")") => Err(GrammarError::Parse("unexpected ')'".into())),
            Some("(") => {
                let mut items = vec![];
                loop {
                    match toks.peek() {
                        None => return Err(GrammarError::Parse("missing ')'".into())),
                        Some(&")") => {
                            toks.next();
                            return Ok(Sx::List(items));
                        }
                        _ => items.push(go(toks)?),
                    }
                }
            }
            Some(a) => Ok(Sx::Atom(a.to_string())),
        }
    }
    let sx = go(&mut toks)?;
    if toks.next().is_some() {
        return Err(GrammarError::Parse("trailing input".into()));
    }
    Ok(sx)
}

/// Parse the surface syntax. Lambda variables may have any name; they are
/// normalized to `x`.
pub fn parse_program(text: &str, bank: &PrimitiveBank) -> Result<Expr, GrammarError> {
    to_expr(&read_sx(text)?, bank, None)
}

fn to_expr(sx: &Sx, bank: &PrimitiveBank, var: Option<&str>) -> Result<Expr, GrammarError> {
    let bad = |m: String| GrammarError::Parse(m);
    match sx {
        Sx::Atom(a) => {
            if Some(a.as_str()) == var {
                return Ok(Expr::var());
            }
            if let Ok(n) = a.parse::<u16>() {
                return Ok(Expr::config(n));
            }
            if a == "S" {
                return Ok(Expr::part_set(PartSet::All));
            }
            bank.lookup(a).map(Expr::part).ok_or_else(|| bad(format!("unknown symbol {a}")))
        }
        Sx::List(items) => {
            let Some(Sx::Atom(head)) = items.first() else {
                return Err(bad("expected an operator".into()));
            };
            let args = &items[1..];
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(bad(format!("{head} takes {n} arguments")))
                }
            };
            let sub = |i: usize| to_expr(&args[i], bank, var);
            let angle = |i: usize| match &args[i] {
                Sx::Atom(a) => match a.as_str() {
                    "0" => Ok(0),
                    "90" => Ok(1),
                    "180" => Ok(2),
                    "270" => Ok(3),
                    _ => Err(bad(format!("bad angle {a}"))),
                },
                _ => Err(bad("angle must be a number".into())),
            };
            let config = |i: usize| match sub(i)?.op {
                Op::Config(c) => Ok(c),
                _ => Err(bad("expected a configuration id".into())),
            };
            match head.as_str() {
                "rotate" => {
                    arity(1)?;
                    Ok(Expr::rotate_all(sub(0)?))
                }
                "rotate*" => {
                    arity(2)?;
                    Ok(Expr::rotate_at(sub(0)?, angle(1)?))
                }
                "attach" => {
                    arity(2)?;
                    Ok(Expr::attach(sub(0)?, sub(1)?))
                }
                "attach*" => {
                    arity(3)?;
                    Ok(Expr::attach_at(sub(0)?, sub(1)?, config(2)?))
                }
                "has" | "single" | "oneof" => {
                    arity(1)?;
                    let op = match head.as_str() {
                        "has" => Op::Has,
                        "single" => Op::Single,
                        _ => Op::OneOf,
                    };
                    Ok(Expr::new(op, vec![sub(0)?]))
                }
                "union" => {
                    arity(2)?;
                    Ok(Expr::union(sub(0)?, sub(1)?))
                }
                "set" => {
                    let mut ps = args
                        .iter()
                        .map(|a| match to_expr(a, bank, var)?.op {
                            Op::Part(p) => Ok(p),
                            _ => Err(bad("set members must be primitives".into())),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    ps.sort_unstable();
                    ps.dedup();
                    if ps.is_empty() {
                        return Err(bad("empty set".into()));
                    }
                    Ok(Expr::part_set(PartSet::Of(ps)))
                }
                "map" => {
                    arity(2)?;
                    let Sx::List(lam) = &args[0] else {
                        return Err(bad("map needs a lambda".into()));
                    };
                    match lam.as_slice() {
                        [Sx::Atom(l), Sx::Atom(v), body] if l == "lambda" => {
                            let body = to_expr(body, bank, Some(v))?;
                            Ok(Expr::new(Op::Map, vec![body, sub(1)?]))
                        }
                        _ => Err(bad("malformed lambda".into())),
                    }
                }
                other => Err(bad(format!("unknown operator {other}"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::default_bank;

    #[test]
    fn surface_syntax_round_trips() {
        let bank = default_bank();
        for text in [
            "(rotate* (attach* p2 p4 1) 180)",
            "(rotate (map (lambda x (attach x x)) S))",
            "(rotate (has p3))",
            "(rotate* (oneof (set p1 p2)) 0)",
            "(rotate (union (single p1) (attach (attach* p1 p2 3) p4)))",
            "(rotate (map (lambda x (attach (attach p1 p2) x)) (set p5 p6)))",
        ] {
            let e = parse_program(text, &bank).unwrap();
            assert_eq!(e.to_sexpr(&bank), text);
        }
    }

    #[test]
    fn lambda_variables_are_renamed() {
        let bank = default_bank();
        let e = parse_program("(rotate (map (lambda y (attach y y)) S))", &bank).unwrap();
        assert_eq!(e.to_sexpr(&bank), "(rotate (map (lambda x (attach x x)) S))");
    }

    #[test]
    fn malformed_programs_fail() {
        let bank = default_bank();
        for text in ["(rotate", "(rotate* (has p1) 45)", "(attach p1)", "(frob p1)", "(has q7)", "(rotate (has p1)) x"] {
            assert!(parse_program(text, &bank).is_err(), "{text}");
        }
    }
}
