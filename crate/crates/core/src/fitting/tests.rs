use super::*;
use crate::geometry::{default_bank, AttachmentTable, PrimId};
use crate::grammar::RuleCounts;
use crate::inference::{Row, TrialView};
use crate::interpreter::Extension;
use crate::token::Universe;
use proptest::prelude::*;
use std::sync::Arc;

#[test]
fn binomial_arithmetic() {
    assert!((binomial_nll(0.5, 1, 2) - -(0.5f64.ln())).abs() < 1e-12);
    assert!((ln_choose(10, 3) - 120f64.ln()).abs() < 1e-12);
    assert_eq!(ln_choose(4, 0), 0.0);
    assert_eq!(binomial_nll(1.0, 0, 3), f64::INFINITY);
    assert_eq!(binomial_nll(1.0, 3, 3), 0.0);
}

fn row(counts: RuleCounts, fixed: f64, size: u32, member: bool) -> Row {
    Row {
        entry: 0,
        counts,
        fixed,
        size,
        member: vec![member],
        extension: Arc::new(Extension::from_sorted((0..size).collect())),
    }
}

/// Two consistent hypotheses that differ only in the START rule; the query
/// is in the first.
fn toy(k: u32, n: u32) -> Vec<ClsTrialData> {
    let bank = default_bank();
    let table = AttachmentTable::build(&bank);
    let u = Arc::new(Universe::build(&bank, &table, &[PrimId(2)]).unwrap());
    let mut c1 = RuleCounts::default();
    c1.0[0] = 1;
    let mut c2 = RuleCounts::default();
    c2.0[1] = 1;
    let view = TrialView {
        trial_id: "toy".into(),
        universe: u,
        exemplars: vec![0],
        queries: vec![7],
        rows: vec![row(c1, 0.0, 8, true), row(c2, 0.25f64.ln(), 2, false)],
    };
    vec![ClsTrialData { view, obs: vec![(0, k, n)] }]
}

fn toy_space() -> ParamSpace {
    let base = FitParams { alpha: 1.0, beta: 0.5, ..FitParams::default() };
    ParamSpace { base, lesions: Lesions::NONE, theta: true, alpha: false, beta: false, temperatures: false }
}

#[test]
fn reparameterized_fit_matches_the_closed_form_optimum() {
    let (k, n) = (30, 100);
    let data = toy(k, n);
    // w1 = (p/8) / (p/8 + (1-p)/(4·2)) = p, so the MLE is p_RI = k/n
    let r = k as f64 / n as f64;
    let opts = FitOptions { starts: 3, optim: OptimOptions { grad_tol: 1e-10, ..Default::default() }, ..Default::default() };
    let rep = fit(Dataset::Classification(&data), &toy_space(), &opts).unwrap();
    assert!((rep.params.theta.p_ri - r).abs() < 1e-6, "{}", rep.params.theta.p_ri);
    assert!((rep.params.theta.set.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    for s in &rep.starts {
        assert!(s.trace.windows(2).all(|w| w[1] <= w[0]));
    }
    // a direct scan over the constrained coordinate agrees
    let scan = (1..10_000)
        .map(|i| i as f64 / 10_000.0)
        .min_by(|&a, &b| {
            let at = |p: f64| {
                let mut q = toy_space().base;
                q.theta.p_ri = p;
                nll_classification(&data, &q, Lesions::NONE).unwrap()
            };
            at(a).total_cmp(&at(b))
        })
        .unwrap();
    assert!((scan - r).abs() < 1e-4);
}

#[test]
fn fit_started_at_the_optimum_stays_there() {
    let data = toy(45, 100);
    let mut space = toy_space();
    space.base.theta.p_ri = 0.45;
    let opts = FitOptions { starts: 1, ..Default::default() };
    let rep = fit(Dataset::Classification(&data), &space, &opts).unwrap();
    assert!((rep.params.theta.p_ri - 0.45).abs() < 1e-6);
    assert_eq!(rep.starts.len(), 1);
}

#[test]
fn impossible_data_without_lapse_is_infinite() {
    let data = toy(0, 10);
    let mut p = toy_space().base;
    p.theta.p_ri = 1.0;
    assert_eq!(nll_classification(&data, &p, Lesions::NONE).unwrap(), f64::INFINITY);
    p.alpha = 0.9;
    assert!(nll_classification(&data, &p, Lesions::NONE).unwrap().is_finite());
}

#[test]
fn lesioned_space_drops_the_lesioned_branch() {
    let s = ParamSpace::new(FitParams::default(), Lesions::NO_DP, Task::Generate);
    assert_eq!(s.dim(), 2 + 4 + 1 + 2);
    let p = s.decode(&vec![0.3; s.dim()]);
    assert_eq!(p.theta.set[SetRule::Dp as usize], 0.0);
    assert!(!s.names().contains(&"beta".to_string()));
}

proptest! {
    #[test]
    fn decoded_points_satisfy_the_constraints(u in prop::collection::vec(-30.0f64..30.0, 12)) {
        let s = ParamSpace::new(FitParams::default(), Lesions::NONE, Task::Classify);
        let p = s.decode(&u[..s.dim()]);
        prop_assert!(check_constraints(&p).is_ok());
        prop_assert!((p.theta.set.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn encode_inverts_decode(u in prop::collection::vec(-4.0f64..4.0, 12)) {
        let s = ParamSpace::new(FitParams::default(), Lesions::NONE, Task::Classify);
        let p = s.decode(&u[..s.dim()]);
        let q = s.decode(&s.encode(&p));
        prop_assert!((p.theta.p_ri - q.theta.p_ri).abs() < 1e-9);
        prop_assert!((p.alpha - q.alpha).abs() < 1e-9);
        prop_assert!((p.t_l / q.t_l - 1.0).abs() < 1e-6);
        for i in 0..6 {
            prop_assert!((p.theta.set[i] - q.theta.set[i]).abs() < 1e-9);
        }
    }
}
