//! Similarity scoring, permission rollups, and class association.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::apitable::PermissionMap;
use crate::error::{Error, Result};
use crate::ir::{AppIr, ClassIr, MethodIr};
use crate::signature::SignatureBundle;
use crate::store::Store;

/// The distinct class digests of one app, each weighted by its API call
/// count. Weighting by API calls is what makes a shared 400-call class
/// count for more than a shared 3-call helper.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassSigSet {
    entries: BTreeMap<String, u64>,
}

impl ClassSigSet {
    pub fn from_bundle(bundle: &SignatureBundle) -> ClassSigSet {
        let mut entries = BTreeMap::new();
        for class in &bundle.classes {
            entries.entry(class.lev2.clone()).or_insert(class.api_count);
        }
        ClassSigSet { entries }
    }

    /// Total API call weight over the whole set. Payload content
    /// signatures carry weight zero, so they can overlap without
    /// inflating scores.
    pub fn total_api_calls(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.entries.contains_key(digest)
    }

    pub fn weight_of(&self, digest: &str) -> Option<u64> {
        self.entries.get(digest).copied()
    }

    pub fn digests(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.entries.iter().map(|(d, &w)| (d.as_str(), w))
    }

    /// Weights are taken from `self`; the other side agrees on them for
    /// any digest produced under the same table.
    pub fn intersection(&self, other: &ClassSigSet) -> ClassSigSet {
        ClassSigSet {
            entries: self
                .entries
                .iter()
                .filter(|(d, _)| other.contains(d))
                .map(|(d, &w)| (d.clone(), w))
                .collect(),
        }
    }

    pub fn union(&self, other: &ClassSigSet) -> ClassSigSet {
        let mut entries = self.entries.clone();
        for (d, &w) in &other.entries {
            entries.entry(d.clone()).or_insert(w);
        }
        ClassSigSet { entries }
    }

    pub fn difference(&self, other: &ClassSigSet) -> ClassSigSet {
        ClassSigSet {
            entries: self
                .entries
                .iter()
                .filter(|(d, _)| !other.contains(d))
                .map(|(d, &w)| (d.clone(), w))
                .collect(),
        }
    }

    /// Weight shared with `other`, without materializing the overlap.
    pub fn shared_weight(&self, other: &ClassSigSet) -> u64 {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .entries
            .iter()
            .filter(|(d, _)| large.contains(d))
            .map(|(_, &w)| w)
            .sum()
    }

    /// Drop every digest in `whitelist` (shared libraries, ad SDKs).
    pub fn without(&self, whitelist: &BTreeSet<String>) -> ClassSigSet {
        ClassSigSet {
            entries: self
                .entries
                .iter()
                .filter(|(d, _)| !whitelist.contains(*d))
                .map(|(d, &w)| (d.clone(), w))
                .collect(),
        }
    }
}

/// One class digest in a similarity report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRow {
    pub lev2: String,
    pub api_count: u64,
    pub permissions: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Shared API weight over union API weight.
    pub score: f64,
    pub numerator: u64,
    pub denominator: u64,
    /// True when both apps have zero total weight; score is then 1
    /// by convention (two empty apps are identical).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
    pub common: Vec<ClassRow>,
    pub only_a: Vec<ClassRow>,
    pub only_b: Vec<ClassRow>,
}

/// Weighted Jaccard similarity between two signed apps.
pub fn jaccard_similarity(
    a: &SignatureBundle,
    b: &SignatureBundle,
) -> Result<SimilarityReport> {
    check_comparable(a, b)?;
    let set_a = ClassSigSet::from_bundle(a);
    let set_b = ClassSigSet::from_bundle(b);

    let inter = set_a.intersection(&set_b);
    let numerator = inter.total_api_calls();
    let denominator = set_a.union(&set_b).total_api_calls();
    let degenerate = denominator == 0;
    let score = if degenerate {
        1.0
    } else {
        numerator as f64 / denominator as f64
    };

    Ok(SimilarityReport {
        score,
        numerator,
        denominator,
        degenerate,
        common: rows_for(&inter, &[a, b]),
        only_a: rows_for(&set_a.difference(&set_b), &[a]),
        only_b: rows_for(&set_b.difference(&set_a), &[b]),
    })
}

fn check_comparable(a: &SignatureBundle, b: &SignatureBundle) -> Result<()> {
    if a.table_fp != b.table_fp {
        return Err(Error::TableMismatch {
            a: a.table_fp.clone(),
            b: b.table_fp.clone(),
        });
    }
    if a.hash_alg != b.hash_alg {
        return Err(Error::TableMismatch {
            a: a.hash_alg.to_string(),
            b: b.hash_alg.to_string(),
        });
    }
    Ok(())
}

fn rows_for(set: &ClassSigSet, sources: &[&SignatureBundle]) -> Vec<ClassRow> {
    set.iter()
        .map(|(digest, weight)| {
            let mut permissions = BTreeSet::new();
            for bundle in sources {
                for class in bundle.classes.iter().filter(|c| c.lev2 == digest) {
                    permissions.extend(class.permissions.iter().cloned());
                }
            }
            ClassRow {
                lev2: digest.to_string(),
                api_count: weight,
                permissions,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedMatch {
    pub app_id: String,
    pub package: String,
    pub label: crate::store::Label,
    pub report: SimilarityReport,
}

#[derive(Debug, Serialize)]
pub struct TopMatches {
    pub matches: Vec<RankedMatch>,
    /// Store records actually scored.
    pub considered: usize,
    /// Store records signed under a different table or algorithm.
    pub skipped_incompatible: usize,
}

/// Score `target` against everything stored and keep the top
/// `percent`% (rounded up). Ties rank by app id.
pub fn top_similar(
    target: &SignatureBundle,
    store: &Store,
    percent: f64,
) -> Result<TopMatches> {
    if !(0.0..=100.0).contains(&percent) || percent.is_nan() {
        return Err(Error::Config(format!(
            "percent must be within 0..=100, got {percent}"
        )));
    }
    let total = store.len();
    let keep = ((percent / 100.0) * total as f64).ceil() as usize;

    let mut matches: Vec<RankedMatch> = Vec::new();
    let mut skipped = 0usize;
    for record in store.records() {
        match jaccard_similarity(target, &record.bundle) {
            Ok(report) => matches.push(RankedMatch {
                app_id: record.bundle.app_id.clone(),
                package: record.bundle.package.clone(),
                label: record.label,
                report,
            }),
            Err(Error::TableMismatch { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let considered = matches.len();
    matches.sort_by(|x, y| {
        rank_cmp(&y.report, &x.report).then_with(|| x.app_id.cmp(&y.app_id))
    });
    matches.truncate(keep);
    Ok(TopMatches {
        matches,
        considered,
        skipped_incompatible: skipped,
    })
}

/// Exact fraction comparison; degenerate reports count as score 1.
fn rank_cmp(a: &SimilarityReport, b: &SimilarityReport) -> std::cmp::Ordering {
    let (an, ad) = if a.denominator == 0 {
        (1u64, 1u64)
    } else {
        (a.numerator, a.denominator)
    };
    let (bn, bd) = if b.denominator == 0 {
        (1u64, 1u64)
    } else {
        (b.numerator, b.denominator)
    };
    (an as u128 * bd as u128).cmp(&(bn as u128 * ad as u128))
}

/// Permission rollup of one app: method, class, and app level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PermissionAnnotation {
    /// Keyed by `class;->name(descriptor)`; payload classes are scoped
    /// as `payloadpath!class`.
    pub method_perms: BTreeMap<String, BTreeSet<String>>,
    pub class_perms: BTreeMap<String, BTreeSet<String>>,
    pub app_perms: BTreeSet<String>,
}

/// Tag every method with the permissions its API calls require, roll
/// the tags up to classes and the app, and write the class-level sets
/// into the bundle's records.
pub fn annotate_permissions(
    bundle: &mut SignatureBundle,
    app: &AppIr,
    pmap: &PermissionMap,
) -> Result<PermissionAnnotation> {
    if bundle.app_id != app.app_id {
        return Err(Error::Validation(format!(
            "bundle {} does not describe app {}",
            bundle.app_id, app.app_id
        )));
    }

    let mut annotation = PermissionAnnotation::default();
    let mut tag_class = |scope_name: String, class: &ClassIr| {
        let mut class_set = BTreeSet::new();
        for method in &class.methods {
            let perms = method_permissions(method, pmap);
            class_set.extend(perms.iter().cloned());
            annotation.method_perms.insert(
                format!("{scope_name};->{}{}", method.name, method.descriptor),
                perms,
            );
        }
        annotation.app_perms.extend(class_set.iter().cloned());
        annotation.class_perms.insert(scope_name, class_set);
    };

    for class in &app.classes {
        tag_class(class.name.clone(), class);
    }
    for payload in &app.payloads {
        if let Some(classes) = &payload.embedded_classes {
            for class in classes {
                tag_class(format!("{}!{}", payload.path, class.name), class);
            }
        }
    }

    for record in &mut bundle.classes {
        if let Some(perms) = annotation.class_perms.get(&record.class_name) {
            record.permissions = perms.clone();
        }
    }
    Ok(annotation)
}

/// Permissions required by the API calls inside one method.
pub fn method_permissions(method: &MethodIr, pmap: &PermissionMap) -> BTreeSet<String> {
    let mut perms = BTreeSet::new();
    for call in &method.calls {
        perms.extend(pmap.perms_for(&call.target).iter().cloned());
    }
    perms
}

/// How one class digest is distributed over the stored corpus.
#[derive(Debug, Clone, Serialize)]
pub struct AssociationRecord {
    pub class_digest: String,
    pub api_count: u64,
    pub permissions: BTreeSet<String>,
    pub benign_count: usize,
    pub malicious_count: usize,
    pub unknown_count: usize,
    pub apps: Vec<String>,
}

/// Count how many stored benign/malicious/unknown apps contain the
/// class. A digest seen only in malware is a strong downloader-chain
/// indicator even when the hosting apps look unrelated.
pub fn class_association(digest: &str, store: &Store) -> AssociationRecord {
    let apps: Vec<String> = store.apps_with_lev2(digest).to_vec();
    let mut record = AssociationRecord {
        class_digest: digest.to_string(),
        api_count: 0,
        permissions: BTreeSet::new(),
        benign_count: 0,
        malicious_count: 0,
        unknown_count: 0,
        apps,
    };
    for app_id in &record.apps {
        match store.label_of(app_id) {
            crate::store::Label::Benign => record.benign_count += 1,
            crate::store::Label::Malicious => record.malicious_count += 1,
            crate::store::Label::Unknown => record.unknown_count += 1,
        }
        if let Some(stored) = store.get(app_id) {
            for class in stored.bundle.classes.iter().filter(|c| c.lev2 == digest) {
                record.api_count = class.api_count;
                record.permissions.extend(class.permissions.iter().cloned());
            }
        }
    }
    record
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apitable::ApiTable;
    use crate::ir::{CallSite, MethodRef};
    use crate::signature::{sign_app, SigOrigin, SignOptions};

    fn table() -> ApiTable {
        ApiTable::parse(
            "api/Sms;->send\t00010\n\
             api/Net;->open\t00020\n\
             api/Contacts;->read\t00030\n\
             api/Disk;->write\t00040\n",
        )
        .unwrap()
    }

    fn pmap() -> PermissionMap {
        PermissionMap::parse(
            "api/Sms;->send\tSEND_SMS\n\
             api/Net;->open\tINTERNET,ACCESS_NETWORK_STATE\n\
             api/Contacts;->read\tREAD_CONTACTS\n",
        )
        .unwrap()
    }

    /// One class per entry: `(name, &[api calls])`, every method live.
    fn app_of(id_byte: u8, classes: &[(&str, &[&str])]) -> AppIr {
        let mut app = AppIr::new(format!("{id_byte:02x}").repeat(16), "com.t");
        for (name, calls) in classes {
            let mut class = ClassIr::new(*name);
            let mut m = MethodIr::new("run", "()V");
            for c in *calls {
                m.calls.push(CallSite::new(*c));
            }
            class.methods.push(m);
            app.classes.push(class);
        }
        app.classify_calls(&table());
        app
    }

    fn sign(app: &AppIr) -> SignatureBundle {
        sign_app(app, &table(), &SignOptions::default()).bundle
    }

    #[test]
    fn jaccard_counts_shared_weight() {
        // a: {X(2 calls), Y(1)}; b: {X(2), Z(3)}
        let a = sign(&app_of(1, &[
            ("t/X", &["api/Sms;->send", "api/Net;->open"]),
            ("t/Y", &["api/Contacts;->read"]),
        ]));
        let b = sign(&app_of(2, &[
            ("t/X", &["api/Sms;->send", "api/Net;->open"]),
            ("t/Z", &["api/Disk;->write", "api/Disk;->write", "api/Net;->open"]),
        ]));
        let report = jaccard_similarity(&a, &b).unwrap();
        assert_eq!(report.numerator, 2);
        assert_eq!(report.denominator, 6);
        assert!((report.score - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(report.common.len(), 1);
        assert_eq!(report.only_a.len(), 1);
        assert_eq!(report.only_b.len(), 1);
        assert!(!report.degenerate);
    }

    #[test]
    fn jaccard_identical_apps_score_one() {
        let a = sign(&app_of(1, &[("t/X", &["api/Sms;->send"])]));
        let mut b = a.clone();
        b.app_id = "f".repeat(32);
        let report = jaccard_similarity(&a, &b).unwrap();
        assert_eq!(report.score, 1.0);
        assert_eq!(report.numerator, report.denominator);
        assert!(report.only_a.is_empty() && report.only_b.is_empty());
    }

    #[test]
    fn jaccard_disjoint_apps_score_zero() {
        let a = sign(&app_of(1, &[("t/X", &["api/Sms;->send"])]));
        let b = sign(&app_of(2, &[("t/Y", &["api/Net;->open"])]));
        let report = jaccard_similarity(&a, &b).unwrap();
        assert_eq!(report.score, 0.0);
        assert_eq!(report.numerator, 0);
    }

    #[test]
    fn jaccard_both_empty_is_degenerate_one() {
        let a = sign(&AppIr::new("a".repeat(32), "p"));
        let b = sign(&AppIr::new("b".repeat(32), "p"));
        let report = jaccard_similarity(&a, &b).unwrap();
        assert!(report.degenerate);
        assert_eq!(report.score, 1.0);
        assert_eq!(report.denominator, 0);
    }

    #[test]
    fn jaccard_rejects_cross_table_bundles() {
        let a = sign(&app_of(1, &[("t/X", &["api/Sms;->send"])]));
        let other = ApiTable::parse("api/Sms;->send\t00011\n").unwrap();
        let b = sign_app(
            &app_of(2, &[("t/X", &["api/Sms;->send"])]),
            &other,
            &SignOptions::default(),
        )
        .bundle;
        assert!(matches!(
            jaccard_similarity(&a, &b),
            Err(Error::TableMismatch { .. })
        ));
    }

    #[test]
    fn payload_overlap_counts_zero_weight() {
        let mut app_a = app_of(1, &[("t/X", &["api/Sms;->send"])]);
        let mut app_b = app_of(2, &[("t/Y", &["api/Net;->open"])]);
        let blob = crate::ir::PayloadFile {
            path: "lib/shared.so".into(),
            bytes: b"\x7fELFshared".to_vec(),
            detected_type: crate::ir::FileType::Elf,
            embedded_classes: None,
        };
        app_a.payloads.push(blob.clone());
        app_b.payloads.push(blob);
        let report = jaccard_similarity(&sign(&app_a), &sign(&app_b)).unwrap();
        assert_eq!(report.common.len(), 1);
        assert_eq!(report.numerator, 0);
        assert_eq!(report.denominator, 2);
        assert_eq!(report.score, 0.0);
    }

    #[test]
    fn annotation_rolls_up_and_fills_records() {
        let mut app = app_of(1, &[
            ("t/Main", &["api/Sms;->send", "own/Helper;->x"]),
            ("t/Net", &["api/Net;->open"]),
            ("t/Quiet", &[]),
        ]);
        app.classes[0]
            .methods
            .push(MethodIr::new("idle", "()V"));
        let mut bundle = sign(&app);
        let ann = annotate_permissions(&mut bundle, &app, &pmap()).unwrap();

        assert_eq!(
            ann.method_perms["t/Main;->run()V"],
            BTreeSet::from(["SEND_SMS".to_string()])
        );
        assert!(ann.method_perms["t/Main;->idle()V"].is_empty());
        assert_eq!(ann.class_perms["t/Main"].len(), 1);
        assert!(ann.class_perms["t/Quiet"].is_empty());
        assert_eq!(
            ann.app_perms,
            BTreeSet::from([
                "ACCESS_NETWORK_STATE".to_string(),
                "INTERNET".to_string(),
                "SEND_SMS".to_string(),
            ])
        );

        let main_record = bundle
            .classes
            .iter()
            .find(|c| c.class_name == "t/Main")
            .unwrap();
        assert_eq!(main_record.permissions, ann.class_perms["t/Main"]);
    }

    #[test]
    fn annotation_invariants_hold() {
        let app = app_of(1, &[
            ("t/A", &["api/Sms;->send", "api/Contacts;->read"]),
            ("t/B", &["api/Net;->open"]),
        ]);
        let mut bundle = sign(&app);
        let ann = annotate_permissions(&mut bundle, &app, &pmap()).unwrap();
        for (class, perms) in &ann.class_perms {
            let from_methods: BTreeSet<String> = ann
                .method_perms
                .iter()
                .filter(|(k, _)| k.starts_with(&format!("{class};->")))
                .flat_map(|(_, v)| v.iter().cloned())
                .collect();
            assert_eq!(&from_methods, perms, "class {class}");
        }
        let from_classes: BTreeSet<String> =
            ann.class_perms.values().flatten().cloned().collect();
        assert_eq!(from_classes, ann.app_perms);
    }

    #[test]
    fn annotation_rejects_mismatched_pair() {
        let app = app_of(1, &[("t/A", &["api/Sms;->send"])]);
        let mut bundle = sign(&app_of(2, &[("t/A", &["api/Sms;->send"])]));
        assert!(annotate_permissions(&mut bundle, &app, &pmap()).is_err());
    }

    #[test]
    fn annotation_covers_payload_classes() {
        let mut app = app_of(1, &[("t/A", &["api/Net;->open"])]);
        let mut hidden = ClassIr::new("evil/H");
        let mut m = MethodIr::new("run", "()V");
        m.calls.push(CallSite::new("api/Sms;->send"));
        hidden.methods.push(m);
        app.payloads.push(crate::ir::PayloadFile {
            path: "assets/x.dex".into(),
            bytes: b"dex\n035\x00".to_vec(),
            detected_type: crate::ir::FileType::Dex,
            embedded_classes: Some(vec![hidden]),
        });
        app.classify_calls(&table());
        let mut bundle = sign(&app);
        let ann = annotate_permissions(&mut bundle, &app, &pmap()).unwrap();
        assert!(ann.app_perms.contains("SEND_SMS"));
        let payload_record = bundle
            .classes
            .iter()
            .find(|c| c.class_name == "assets/x.dex!evil/H")
            .unwrap();
        assert_eq!(payload_record.origin, SigOrigin::Code);
        assert!(payload_record.permissions.contains("SEND_SMS"));
    }

    fn store_with(bundles: Vec<SignatureBundle>) -> (tempfile::TempDir, Store) {
        let tmp = tempfile::tempdir().unwrap();
        let mut store = Store::open(tmp.path()).unwrap();
        for b in bundles {
            store.insert(b).unwrap();
        }
        (tmp, store)
    }

    #[test]
    fn top_similar_ranks_and_truncates() {
        let target_app = app_of(9, &[
            ("t/X", &["api/Sms;->send", "api/Net;->open"]),
            ("t/Y", &["api/Contacts;->read"]),
        ]);
        let target = sign(&target_app);
        let mut twin = target.clone();
        twin.app_id = "e".repeat(32);

        let half = sign(&app_of(2, &[
            ("t/X", &["api/Sms;->send", "api/Net;->open"]),
        ]));
        let stranger = sign(&app_of(3, &[("t/Z", &["api/Disk;->write"])]));
        let (_tmp, store) = store_with(vec![stranger, half, twin.clone()]);

        let top = top_similar(&target, &store, 100.0).unwrap();
        assert_eq!(top.matches.len(), 3);
        assert_eq!(top.matches[0].app_id, twin.app_id);
        assert_eq!(top.matches[0].report.score, 1.0);
        assert!(top.matches[1].report.score > top.matches[2].report.score);

        let narrow = top_similar(&target, &store, 34.0).unwrap();
        assert_eq!(narrow.matches.len(), 2, "ceil(0.34 * 3) = 2");

        assert!(top_similar(&target, &store, 101.0).is_err());
        assert!(top_similar(&target, &store, -1.0).is_err());
    }

    #[test]
    fn top_similar_skips_incompatible_records() {
        let target = sign(&app_of(1, &[("t/X", &["api/Sms;->send"])]));
        let other_table = ApiTable::parse("api/Sms;->send\t00011\n").unwrap();
        let foreign = sign_app(
            &app_of(2, &[("t/X", &["api/Sms;->send"])]),
            &other_table,
            &SignOptions::default(),
        )
        .bundle;
        let native = sign(&app_of(3, &[("t/X", &["api/Sms;->send"])]));
        let (_tmp, store) = store_with(vec![foreign, native]);
        let top = top_similar(&target, &store, 100.0).unwrap();
        assert_eq!(top.skipped_incompatible, 1);
        assert_eq!(top.considered, 1);
        assert_eq!(top.matches.len(), 1);
    }

    #[test]
    fn association_counts_labels() {
        let shared = ("t/Shared", ["api/Sms;->send", "api/Net;->open"]);
        let mk = |seed: u8, with_shared: bool| {
            let mut classes: Vec<(&str, &[&str])> = vec![("t/Own", &[][..])];
            if with_shared {
                classes.push((shared.0, &shared.1[..]));
            }
            let mut app = app_of(seed, &classes);
            app.classes[0].methods[0]
                .calls
                .push(CallSite::new("api/Disk;->write"));
            // Distinct filler call counts keep t/Own digests distinct.
            for _ in 0..seed {
                app.classes[0].methods[0]
                    .calls
                    .push(CallSite::new("api/Disk;->write"));
            }
            app.classify_calls(&table());
            sign(&app)
        };
        let carriers: Vec<SignatureBundle> = vec![mk(1, true), mk(2, true), mk(3, true)];
        let shared_digest = {
            let set_a = ClassSigSet::from_bundle(&carriers[0]);
            let set_b = ClassSigSet::from_bundle(&carriers[1]);
            set_a.intersection(&set_b).digests().next().unwrap().to_string()
        };
        let mut all = carriers;
        all.push(mk(4, false));
        let ids: Vec<String> = all.iter().map(|b| b.app_id.clone()).collect();
        let (_tmp, mut store) = store_with(all);
        store
            .import_labels(&format!(
                "{}\tmalicious\tfeed\n{}\tbenign\tfeed\n",
                ids[0], ids[1]
            ))
            .unwrap();

        let assoc = class_association(&shared_digest, &store);
        assert_eq!(assoc.apps.len(), 3);
        assert_eq!(assoc.malicious_count, 1);
        assert_eq!(assoc.benign_count, 1);
        assert_eq!(assoc.unknown_count, 1);
        assert_eq!(assoc.api_count, 2);
        assert!(!assoc.apps.contains(&ids[3]));

        let missing = class_association(&"0".repeat(32), &store);
        assert!(missing.apps.is_empty());
        assert_eq!(missing.api_count, 0);
    }

    #[test]
    fn class_sig_set_operations() {
        let a = ClassSigSet {
            entries: BTreeMap::from([
                ("d1".to_string(), 5u64),
                ("d2".to_string(), 3),
            ]),
        };
        let b = ClassSigSet {
            entries: BTreeMap::from([
                ("d2".to_string(), 3u64),
                ("d3".to_string(), 7),
            ]),
        };
        assert_eq!(a.total_api_calls(), 8);
        assert_eq!(a.intersection(&b).total_api_calls(), 3);
        assert_eq!(a.union(&b).total_api_calls(), 15);
        assert_eq!(a.shared_weight(&b), 3);
        assert_eq!(b.shared_weight(&a), 3);
        assert_eq!(a.difference(&b).digests().collect::<Vec<_>>(), ["d1"]);
        let wl = BTreeSet::from(["d2".to_string()]);
        assert_eq!(a.without(&wl).total_api_calls(), 5);
    }

    #[test]
    fn set_weights_survive_duplicate_class_digests() {
        // Two classes with identical content collapse to one set entry.
        let app = app_of(1, &[
            ("t/A", &["api/Sms;->send"]),
            ("t/B", &["api/Sms;->send"]),
        ]);
        let bundle = sign(&app);
        assert_eq!(bundle.classes.len(), 2);
        let set = ClassSigSet::from_bundle(&bundle);
        assert_eq!(set.len(), 1);
        assert_eq!(set.total_api_calls(), 1);
    }

    #[test]
    fn method_ref_keys_are_parseable() {
        let app = app_of(1, &[("t/A", &["api/Sms;->send"])]);
        let mut bundle = sign(&app);
        let ann = annotate_permissions(&mut bundle, &app, &pmap()).unwrap();
        for key in ann.method_perms.keys() {
            assert!(MethodRef::parse(key).is_some(), "bad key {key}");
        }
    }
}
