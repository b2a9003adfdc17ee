#[path = "support/attach_oracle.rs"]
mod attach_oracle;

use forge_core::geometry::{default_bank, enumerate_attachments, AttachmentTable};
use std::path::Path;
use std::time::Instant;

const GOLDEN: &str = "tests/golden/attachments.json";

#[test]
fn every_pair_matches_the_brute_force_oracle() {
    let bank = default_bank();
    let table = AttachmentTable::build(&bank);
    let mut nonempty = 0;
    for a in bank.ids() {
        for b in bank.ids() {
            let t = Instant::now();
            let n = attach_oracle::check_pair(bank.get(a), a, bank.get(b), b, table.configs(a, b))
                .unwrap_or_else(|e| panic!("{}{}: {e}", bank.name(a), bank.name(b)));
            assert!(t.elapsed().as_secs_f64() < 5.0);
            nonempty += (n > 0) as usize;
        }
    }
    // the diamond has only diagonal sides and the domino only unit sides
    assert!(nonempty >= 70, "{nonempty}");
}

#[test]
fn reversed_pairs_describe_the_same_figures() {
    let bank = default_bank();
    let table = AttachmentTable::build(&bank);
    for a in bank.ids() {
        for b in bank.ids() {
            assert_eq!(table.count(a, b), table.count(b, a));
            for c in table.configs(a, b) {
                let back = table.cross_index(a, b, c.id).expect("cross index");
                let there = table.get(b, a, back).unwrap();
                let k1 = attach_oracle::config_key(bank.get(a), a, bank.get(b), b, c.pose);
                let k2 = attach_oracle::config_key(bank.get(b), b, bank.get(a), a, there.pose);
                assert_eq!(k1, k2);
            }
        }
    }
}

/// The configuration order is frozen; `FORGE_BLESS=1` rewrites the file.
#[test]
fn configuration_order_matches_the_golden_file() {
    let bank = default_bank();
    let table = AttachmentTable::build(&bank);
    let now = serde_json::to_string_pretty(&table.export(&bank)).unwrap() + "\n";
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("FORGE_BLESS").is_some() {
        std::fs::write(&path, &now).unwrap();
    }
    let frozen = std::fs::read_to_string(&path).expect("golden attachment file");
    assert!(frozen == now, "attachment order changed; rerun with FORGE_BLESS=1 if intended");
    let a = bank.lookup("p2").unwrap();
    let b = bank.lookup("p5").unwrap();
    assert_eq!(enumerate_attachments(bank.get(a), a, bank.get(b), b), table.configs(a, b));
}
