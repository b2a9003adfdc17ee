use forge_core::geometry::{default_bank, AttachmentTable};
use forge_core::grammar::{Grammar, Lesions};
use forge_core::harness::{run_experiment, ExperimentConfig, ModelId};
use std::sync::Arc;
use std::time::Instant;

#[test]
fn smoke_run_is_fast_reproducible_and_recomputable() {
    let bank = Arc::new(default_bank());
    let table = Arc::new(AttachmentTable::build(&bank));
    let cfg = ExperimentConfig::smoke();
    let t0 = Instant::now();
    let a = run_experiment(&cfg, bank.clone(), table.clone()).unwrap();
    let took = t0.elapsed();
    assert!(took.as_secs() < 60, "smoke run took {took:?}");

    let b = run_experiment(&cfg, bank.clone(), table.clone()).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(da.path()).unwrap();
    b.write(db.path()).unwrap();
    for f in ["report.json", "classification.csv", "generation.csv", "bias.csv"] {
        assert_eq!(std::fs::read(da.path().join(f)).unwrap(), std::fs::read(db.path().join(f)).unwrap(), "{f}");
    }

    assert_eq!(a.report.trials.len(), 2);
    assert_eq!(a.runs.len(), 4);
    // metrics recomputed from the per-item rows
    let mut rdr = csv::Reader::from_path(da.path().join("classification.csv")).unwrap();
    let mut nll: std::collections::BTreeMap<String, f64> = Default::default();
    for row in rdr.records() {
        let row = row.unwrap();
        *nll.entry(row[0].to_string()).or_default() -= row[6].parse::<f64>().unwrap();
    }
    for m in ModelId::ALL {
        let want = a.report.models[m.name()].cls_nll;
        assert!((nll[m.name()] - want).abs() < 1e-6 * want.abs().max(1.0), "{}", m.name());
    }
    let full = &a.report.models["bayes-full"];
    assert!(full.cls_vs_full.is_none());
    assert!(a.report.models["bayes-no-dp"].cls_vs_full.is_some());

    // lesioned models only see programs their grammar derives
    for rt in &a.trials {
        for l in [Lesions::NO_DP, Lesions::NO_VAR] {
            let g = Grammar::default().lesion(l).unwrap();
            let sub = a.space.restricted_to(&g, &rt.universe);
            assert!(sub.len() <= a.space.len());
        }
    }
}
