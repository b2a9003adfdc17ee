use super::*;
use crate::geometry::{default_bank, AttachmentTable, PrimId, PrimitiveBank};
use crate::grammar::{enumerate_programs, parse_program, Expr};
use crate::trials::Trial;
use crate::token::UniverseCache;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

fn universe(bank: &PrimitiveBank, names: &[&str]) -> Arc<Universe> {
    let table = AttachmentTable::build(bank);
    let prims: Vec<PrimId> = names.iter().map(|n| bank.lookup(n).unwrap()).collect();
    Arc::new(Universe::build(bank, &table, &prims).unwrap())
}

fn fake_row(size: u32, tokens: Vec<u32>) -> Row {
    Row {
        entry: 0,
        counts: RuleCounts::default(),
        fixed: -3.0,
        size,
        member: vec![],
        extension: Arc::new(Extension::from_sorted(tokens)),
    }
}

fn fake_view(u: Arc<Universe>, rows: Vec<Row>, exemplars: Vec<u32>) -> TrialView {
    TrialView { trial_id: "t".into(), universe: u, exemplars, queries: vec![], rows }
}

#[test]
fn size_principle_arithmetic() {
    let bank = default_bank();
    let u = universe(&bank, &["p3", "p9"]);
    let view = fake_view(u, vec![fake_row(2, vec![0, 1]), fake_row(4, vec![0, 1, 2, 3])], vec![0]);
    let p = view.posterior_with::<f64>(&[0.0; N_RULES], 1.0, 1.0).unwrap();
    assert!((p.weights[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((p.weights[1] - 1.0 / 3.0).abs() < 1e-12);
    // a hot likelihood leaves only the (equal) prior
    let p = view.posterior_with::<f64>(&[0.0; N_RULES], 1.0, 1e12).unwrap();
    assert!((p.weights[0] - 0.5).abs() < 1e-9);
    let p32 = view.posterior_with::<f32>(&[0.0; N_RULES], 1.0, 1.0).unwrap();
    assert!((p32.weights[0] - 2.0 / 3.0).abs() < 1e-6);
}

#[test]
fn empty_support_is_an_error() {
    let bank = default_bank();
    let u = universe(&bank, &["p3", "p9"]);
    let view = fake_view(u.clone(), vec![], vec![0]);
    assert_eq!(
        view.posterior_with::<f64>(&[0.0; N_RULES], 1.0, 1.0).unwrap_err(),
        InferenceError::NoViableHypothesis
    );
    let mut row = fake_row(2, vec![0, 1]);
    row.counts.0[9] = 1;
    let view = fake_view(u, vec![row], vec![0]);
    let mut lt = [0.0; N_RULES];
    lt[9] = f64::NEG_INFINITY;
    assert!(view.posterior_with::<f64>(&lt, 1.0, 1.0).is_err());
}

#[test]
fn classification_bounds_and_limits() {
    let bank = default_bank();
    let u = universe(&bank, &["p3", "p9"]);
    let view = fake_view(u, vec![fake_row(2, vec![0, 1]), fake_row(3, vec![0, 2, 5])], vec![0]);
    let p = view.posterior_with::<f64>(&[0.0; N_RULES], 1.0, 1.0).unwrap();
    assert!((p.classify(&view, 0, 1.0, 0.3) - 1.0).abs() < 1e-12);
    for y in 0..6 {
        assert!((p.classify(&view, y, 0.0, 0.3) - 0.3).abs() < 1e-12);
        let c = p.classify(&view, y, 0.8, 0.3);
        assert!(c >= 0.2 * 0.3 - 1e-12 && c <= 0.8 + 0.2 * 0.3 + 1e-12);
    }
    assert!(p.classify(&view, 0, 0.8, 0.0) >= 0.8 - 1e-12);
}

#[test]
fn predictive_normalizes_and_reduces_to_its_limits() {
    let bank = default_bank();
    let u = universe(&bank, &["p1", "p2", "p4", "p6"]);
    let view = fake_view(u.clone(), vec![fake_row(4, vec![3, 7, 11, 40]), fake_row(2, vec![3, 8])], vec![3]);
    let p = view.posterior_with::<f64>(&[0.0; N_RULES], 1.0, 1.0).unwrap();
    for alpha in [0.0, 0.3, 1.0] {
        let total: f64 = (0..u.len() as u32).map(|y| p.predictive_logprob(&view, y, alpha).exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{alpha}: {total}");
        let table: f64 = p.predictive_table(&view, alpha).iter().sum();
        assert!((table - 1.0).abs() < 1e-9);
    }
    for y in [0u32, 3, 50] {
        assert!((p.predictive_logprob(&view, y, 0.0) - null_token_logprob(&u, y)).abs() < 1e-12);
    }
    let single = fake_view(u.clone(), vec![fake_row(4, vec![3, 7, 11, 40])], vec![3]);
    let p = single.posterior_with::<f64>(&[0.0; N_RULES], 1.0, 1.0).unwrap();
    assert!((p.predictive_logprob(&single, 7, 1.0).exp() - 0.25).abs() < 1e-12);
    assert_eq!(p.predictive_logprob(&single, 8, 1.0), f64::NEG_INFINITY);
}

#[test]
fn predictive_samples_follow_the_logprob() {
    let bank = default_bank();
    let u = universe(&bank, &["p1", "p3"]);
    let view = fake_view(u.clone(), vec![fake_row(3, vec![0, 1, 2]), fake_row(2, vec![1, 4])], vec![1]);
    let p = view.posterior_with::<f64>(&[0.0; N_RULES], 1.0, 1.0).unwrap();
    let probs = p.predictive_table(&view, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let mut hits = vec![0u32; u.len()];
    for _ in 0..n {
        hits[p.sample_predictive(&view, 0.7, &mut rng) as usize] += 1;
    }
    for (y, &h) in hits.iter().enumerate() {
        let e = n as f64 * probs[y];
        let sd = (e * (1.0 - probs[y])).sqrt();
        assert!((h as f64 - e).abs() <= 4.0 * sd + 1.0, "{y}: {h} vs {e}");
    }
}

#[test]
fn asymmetric_single_part_null_probability() {
    let bank = default_bank();
    let u = universe(&bank, &["p5", "p6", "p7", "p9"]);
    let table = AttachmentTable::build(&bank);
    let y = u.lookup("(p5)++0", &bank, &table).unwrap();
    assert!((null_token_logprob(&u, y).exp() - 1.0 / 80.0).abs() < 1e-12);
    let max_of = |n: u8| {
        (0..u.len() as u32).filter(|&i| u.rec(i).n_parts == n).map(|i| null_token_logprob(&u, i)).fold(f64::MIN, f64::max)
    };
    assert!(max_of(1) > max_of(3));
}

fn toy_posterior(g: &Grammar, u: &Universe, xs: &[u32]) -> HashMap<Expr, f64> {
    let progs = enumerate_programs(g, u, g.max_depth);
    let scored: Vec<(Expr, f64)> = progs
        .into_iter()
        .filter_map(|(e, lp)| {
            let ext = evaluate(&e, u).ok()?;
            let ll = crate::interpreter::log_likelihood(&ext, xs, 1.0);
            ll.is_finite().then_some((e, lp + ll))
        })
        .collect();
    let z = log_sum_exp(&scored.iter().map(|s| s.1).collect::<Vec<_>>());
    scored.into_iter().map(|(e, s)| (e, (s - z).exp())).collect()
}

#[test]
fn chain_visits_match_the_enumerated_posterior() {
    let bank = default_bank();
    let u = universe(&bank, &["p3", "p9"]);
    let g = Grammar::default().with_max_depth(4);
    let table = AttachmentTable::build(&bank);
    let xs = vec![u.lookup("(p9)++0", &bank, &table).unwrap()];
    let exact = toy_posterior(&g, &u, &xs);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let res = mcmc_chain(&g, &bank, &u, &xs, 60_000, &mut LikMemo::new(), &mut rng);
    let n = res.trace.len() as f64;
    let mut tv = 0.0;
    for st in &res.states {
        tv += (st.visits as f64 / n - exact.get(&st.program).copied().unwrap_or(0.0)).abs();
    }
    let visited: std::collections::HashSet<&Expr> = res.states.iter().map(|s| &s.program).collect();
    tv += exact.iter().filter(|(e, _)| !visited.contains(e)).map(|(_, p)| p).sum::<f64>();
    tv /= 2.0;
    assert!(tv < 0.06, "tv {tv} over {} programs", exact.len());
}

#[test]
fn chains_are_deterministic_and_zero_steps_keeps_the_start() {
    let bank = default_bank();
    let u = universe(&bank, &["p1", "p2", "p4", "p6"]);
    let g = Grammar::default();
    let xs = vec![5, 9];
    let run = |steps| {
        let mut rng = chain_rng(7, 0, 1);
        mcmc_chain(&g, &bank, &u, &xs, steps, &mut LikMemo::new(), &mut rng)
    };
    let a = run(400);
    let b = run(400);
    assert_eq!(a.trace, b.trace);
    assert_eq!(
        a.states.iter().map(|s| &s.sexpr).collect::<Vec<_>>(),
        b.states.iter().map(|s| &s.sexpr).collect::<Vec<_>>()
    );
    let z = run(0);
    assert_eq!(z.states.len(), 1);
    assert_eq!(z.trace, vec![0]);
}

fn two_trials() -> (Arc<PrimitiveBank>, Vec<crate::trials::ResolvedTrial>) {
    let bank = Arc::new(default_bank());
    let table = Arc::new(AttachmentTable::build(&bank));
    let cache = UniverseCache::new(bank.clone(), table, 4);
    let t1 = Trial {
        trial_id: "a".into(),
        bank: vec!["p1".into(), "p2".into(), "p4".into(), "p6".into()],
        exemplars: vec!["(p2p4)+1+0".into(), "(p2p4)+1+90".into()],
        test_items: vec![],
    };
    let t2 = Trial {
        trial_id: "b".into(),
        bank: vec!["p5".into(), "p6".into(), "p7".into(), "p9".into()],
        exemplars: vec!["(p5p5)+1+0".into()],
        test_items: vec![],
    };
    let rs = [t1, t2].iter().map(|t| t.resolve(&cache).unwrap()).collect();
    (bank, rs)
}

#[test]
fn space_build_bounds_membership_and_round_trip() {
    let (bank, trials) = two_trials();
    let g = Grammar::default();
    let one = build_space(&g, &bank, &trials, &SpaceConfig { chains: 2, steps: 300, top_k: 1, seed: 1 });
    assert!(one.len() <= trials.len());
    let cfg = SpaceConfig { chains: 2, steps: 1500, top_k: 20, seed: 1 };
    let space = build_space(&g, &bank, &trials, &cfg);
    assert_eq!(space.len(), build_space(&g, &bank, &trials, &cfg).len());
    for t in &trials {
        let view = TrialView::new(&space, t, &[]);
        let retained: Vec<usize> =
            space.provenance(t.id()).iter().map(|(e, _)| space.get(&e.sexpr).map(|_| 0).unwrap_or(0)).collect();
        assert!(!retained.is_empty());
        assert!(!view.rows.is_empty());
        for &x in &t.exemplars {
            assert!(view.rows.iter().any(|r| r.extension.contains(x)));
        }
    }
    let mut buf = vec![];
    space.write_jsonl(&mut buf, &g, &trials).unwrap();
    let back = HypothesisSpace::read_jsonl(&buf[..], &bank).unwrap();
    assert_eq!(back.len(), space.len());
    for e in space.entries() {
        assert_eq!(back.get(&e.sexpr).unwrap().found_in, e.found_in);
    }
}

#[test]
fn lesioned_restriction_is_a_subset_with_equal_extensions() {
    let (bank, trials) = two_trials();
    let g = Grammar::default();
    let space = build_space(&g, &bank, &trials, &SpaceConfig { chains: 2, steps: 1500, top_k: 50, seed: 4 });
    let nodp = g.lesion(Lesions::NO_DP).unwrap();
    let u = &trials[0].universe;
    let sub = space.restricted_to(&nodp, u);
    assert!(sub.len() <= space.len());
    for e in sub.entries() {
        let full = space.get(&e.sexpr).unwrap();
        assert_eq!(evaluate(&full.program, u), evaluate(&e.program, u));
        assert!(!e.program.any(&|x: &Expr| matches!(x.op, crate::grammar::Op::Has | crate::grammar::Op::OneOf)));
    }
    let p = parse_program("(rotate (has p1))", &bank).unwrap();
    assert!(!space::derivable(&nodp, &p, u));
}
