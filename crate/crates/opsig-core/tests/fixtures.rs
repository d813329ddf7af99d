//! End-to-end checks over the checked-in sample bundles.

use std::path::PathBuf;

use opsig_core::analytics::{jaccard_similarity, ClassSigSet};
use opsig_core::apitable::{ApiTable, PermissionMap};
use opsig_core::hash::HashAlg;
use opsig_core::ingest::ingest_path;
use opsig_core::signature::{sign_app, SignOptions};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn table() -> ApiTable {
    ApiTable::load(&fixture("api_table.tsv")).unwrap()
}

#[test]
fn sample_apps_ingest_and_sign() {
    let table = table();
    let one = ingest_path(&fixture("app1"), &table, HashAlg::Md5).unwrap();
    assert_eq!(one.app.package, "com.example.freegame");
    assert_eq!(one.app.classes.len(), 5);
    assert_eq!(one.app.payloads.len(), 1);
    assert_eq!(one.stats.smali_files, 5);
    assert!(one.stats.warnings.is_empty(), "{:?}", one.stats.warnings);

    let out = sign_app(&one.app, &table, &SignOptions::default());
    let bundle = out.bundle;
    // MainActivity, Billing, SmsReceiver, Device sign; Debug is dead
    // and the native payload carries no API weight.
    assert_eq!(bundle.classes.len(), 5);
    let set = ClassSigSet::from_bundle(&bundle);
    assert_eq!(set.total_api_calls(), 17);

    let dead = ingest_path(&fixture("app1"), &table, HashAlg::Md5).unwrap();
    let kept = sign_app(
        &dead.app,
        &table,
        &SignOptions {
            keep_dead: true,
            ..SignOptions::default()
        },
    );
    assert_eq!(kept.bundle.classes.len(), 6);
    assert_ne!(kept.bundle.lev1, bundle.lev1);
}

#[test]
fn repackaged_variant_scores_high_but_not_identical() {
    let table = table();
    let one = ingest_path(&fixture("app1"), &table, HashAlg::Md5).unwrap();
    let two = ingest_path(&fixture("app2"), &table, HashAlg::Md5).unwrap();
    let a = sign_app(&one.app, &table, &SignOptions::default()).bundle;
    let b = sign_app(&two.app, &table, &SignOptions::default()).bundle;
    assert_ne!(a.lev1, b.lev1);

    let report = jaccard_similarity(&a, &b).unwrap();
    assert!(report.score > 0.7 && report.score < 1.0, "{}", report.score);
    // All four code classes are common; each side keeps one private
    // digest (the native payload hash and the grafted ad module).
    assert_eq!(report.only_a.len(), 1);
    assert_eq!(report.only_b.len(), 1);
    assert_eq!(report.common.len(), 4);
}

#[test]
fn permission_rollup_matches_declared_abuse() {
    let table = table();
    let pmap = PermissionMap::load(&fixture("perm_map.tsv")).unwrap();
    let one = ingest_path(&fixture("app1"), &table, HashAlg::Md5).unwrap();
    let out = sign_app(
        &one.app,
        &table,
        &SignOptions {
            perm_map: Some(&pmap),
            ..SignOptions::default()
        },
    );
    let perms: Vec<&str> = out
        .bundle
        .classes
        .iter()
        .flat_map(|c| &c.permissions)
        .map(String::as_str)
        .collect();
    for expected in ["SEND_SMS", "RECEIVE_SMS", "READ_PHONE_STATE", "INTERNET"] {
        assert!(perms.contains(&expected), "missing {expected}");
    }
}
