use super::*;
use crate::geometry::{default_bank, AttachmentTable, PrimId};
use crate::grammar::{default_grammar, parse_program};
use crate::token::parse_token;

struct Fx {
    bank: PrimitiveBank,
    table: AttachmentTable,
    u: Universe,
}

fn fx() -> Fx {
    let bank = default_bank();
    let table = AttachmentTable::build(&bank);
    let prims: Vec<PrimId> = ["p1", "p2", "p4", "p6"].iter().map(|n| bank.lookup(n).unwrap()).collect();
    let u = Universe::build(&bank, &table, &prims).unwrap();
    Fx { bank, table, u }
}

impl Fx {
    fn eval(&self, text: &str) -> Extension {
        evaluate(&parse_program(text, &self.bank).unwrap(), &self.u).unwrap()
    }

    fn tok(&self, s: &str) -> u32 {
        self.u.lookup(s, &self.bank, &self.table).unwrap()
    }

    fn strings(&self, e: &Extension) -> Vec<String> {
        e.tokens().iter().map(|&t| self.u.string(t).to_string()).collect()
    }
}

#[test]
fn fixed_attachment_at_fixed_angle_is_a_singleton() {
    let f = fx();
    let e = f.eval("(rotate* (attach* p2 p4 1) 180)");
    assert_eq!(e.size(), 1);
    assert!(e.contains(f.tok("(p2p4)+1+180")));
}

#[test]
fn map_over_attach_gives_all_identical_pairs() {
    let f = fx();
    let e = f.eval("(rotate* (map (lambda x (attach x x)) S) 0)");
    let mut want = vec![];
    for p in f.u.prims() {
        for c in f.table.configs(*p, *p) {
            want.push(f.tok(&format!("({0}{0})+{1}+0", f.bank.name(*p), c.id)));
        }
    }
    want.sort_unstable();
    want.dedup();
    assert_eq!(e.tokens(), &want[..]);
}

#[test]
fn rotation_closure_merges_symmetric_orientations() {
    let f = fx();
    // find a configuration whose figure is 2-fold symmetric
    let p1 = f.bank.lookup("p1").unwrap();
    let sym = f
        .table
        .configs(p1, p1)
        .iter()
        .find(|c| f.u.cells(f.tok(&format!("(p1p1)+{}+0", c.id))).rotational_order() == 2)
        .expect("a symmetric domino pair");
    let e = f.eval(&format!("(rotate (attach* p1 p1 {}))", sym.id));
    let t0 = f.tok(&format!("(p1p1)+{}+0", sym.id));
    let oracle: std::collections::BTreeSet<_> = (0..4).map(|k| f.u.cells(t0).rotate(k)).collect();
    assert_eq!(e.size(), 2);
    assert_eq!(oracle.len(), 2);
}

#[test]
fn rotate_all_is_rotation_invariant() {
    let f = fx();
    for text in ["(rotate (attach p2 p4))", "(rotate (has p6))", "(rotate (attach (attach* p1 p2 2) p4))"] {
        let e = f.eval(text);
        let mut turned: Vec<u32> = e.tokens().iter().map(|&t| f.u.rotate(t, 1)).collect();
        turned.sort_unstable();
        assert_eq!(turned, e.tokens(), "{text}");
    }
}

#[test]
fn has_and_oneof_match_brute_force() {
    let f = fx();
    let p4 = f.bank.lookup("p4").unwrap();
    let e = f.eval("(rotate* (has p4) 0)");
    let want: Vec<u32> = (0..f.u.len() as u32).filter(|&t| f.u.cells(t).prims().any(|p| p == p4)).collect();
    assert_eq!(e.tokens(), &want[..]);
    let e = f.eval("(rotate* (oneof (set p1 p2)) 0)");
    let allowed = [f.bank.lookup("p1").unwrap(), f.bank.lookup("p2").unwrap()];
    let want: Vec<u32> = (0..f.u.len() as u32).filter(|&t| f.u.cells(t).prims().all(|p| allowed.contains(&p))).collect();
    assert_eq!(e.tokens(), &want[..]);
    assert_eq!(f.eval("(rotate (oneof S))").size(), f.u.len());
}

#[test]
fn map_is_the_union_of_its_instances() {
    let f = fx();
    let whole = f.eval("(rotate (map (lambda x (attach (attach* p1 p2 1) x)) (set p2 p4 p6)))");
    let mut parts = vec![];
    for p in ["p2", "p4", "p6"] {
        parts.extend_from_slice(f.eval(&format!("(rotate (attach (attach* p1 p2 1) {p}))")).tokens());
    }
    parts.sort_unstable();
    parts.dedup();
    assert_eq!(whole.tokens(), &parts[..]);
}

#[test]
fn extended_pairs_have_three_parts_containing_the_pair() {
    let f = fx();
    let e = f.eval("(rotate* (attach* (attach* p1 p2 1) p4 1) 0)");
    assert!(e.size() <= 1);
    let e = f.eval("(rotate* (attach (attach* p1 p2 1) p4) 0)");
    for s in f.strings(&e) {
        let t = parse_token(&s, &f.bank, &f.table).unwrap();
        assert_eq!(t.parts.len(), 3);
    }
}

#[test]
fn likelihood_follows_the_size_principle() {
    let f = fx();
    let ext = Extension::from_sorted(vec![1, 5, 9, 12]);
    assert!((log_likelihood(&ext, &[5, 9], 1.0) - (1.0f64 / 16.0).ln()).abs() < 1e-12);
    assert_eq!(log_likelihood(&ext, &[5, 6], 1.0), f64::NEG_INFINITY);
    let small = f.eval("(rotate (attach* p2 p4 1))");
    let big = f.eval("(rotate (attach p2 p4))");
    let x = [f.tok("(p2p4)+1+90")];
    assert!(log_likelihood(&small, &x, 1.0) > log_likelihood(&big, &x, 1.0));
}

#[test]
fn membership_and_dump() {
    let f = fx();
    let g = default_grammar();
    let h = Hypothesis::new(parse_program("(rotate (has p2))", &f.bank).unwrap(), &f.bank, &f.u, &g).unwrap();
    assert!(membership(f.tok("(p2p4)+1+0"), &h));
    assert!(!membership(f.tok("(p1p4)+1+0"), &h));
    let d = h.dump(&f.u);
    assert_eq!(d.extension_sample.len(), 20);
    assert_eq!(d.program_sexpr, "(rotate (has p2))");
}

#[test]
fn empty_extensions_are_flagged() {
    let f = fx();
    // domino and the parallelogram share unit sides, but choose an id past the end
    let p = parse_program("(rotate (attach* p1 p1 40))", &f.bank).unwrap();
    assert_eq!(evaluate(&p, &f.u), Err(EvalError::EmptyExtension));
}
