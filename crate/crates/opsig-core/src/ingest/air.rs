//! AIR: a JSON document format for pre-disassembled apps, used when the
//! input pipeline already ran its own disassembler. Unknown fields are
//! rejected rather than skipped so that producer-side typos surface
//! immediately instead of silently dropping data.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::apitable::ApiTable;
use crate::error::{Error, Result};
use crate::hash::HashAlg;
use crate::ingest::{magic, IngestStats, Ingested};
use crate::ir::{AppIr, CallSite, ClassIr, MethodIr, MethodRef, PayloadFile};

pub const AIR_VERSION: u32 = 1;

fn default_version() -> u32 {
    AIR_VERSION
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AirDoc {
    #[serde(default = "default_version")]
    air_version: u32,
    app_id: String,
    package: String,
    #[serde(default)]
    permissions: Vec<String>,
    #[serde(default)]
    receivers: Vec<String>,
    #[serde(default)]
    entry_points: Vec<String>,
    classes: Vec<AirClass>,
    #[serde(default)]
    payloads: Vec<AirPayload>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AirClass {
    name: String,
    #[serde(default)]
    methods: Vec<AirMethod>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AirMethod {
    name: String,
    descriptor: String,
    #[serde(default)]
    calls: Vec<AirCall>,
    #[serde(default)]
    is_entry: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AirCall {
    target: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AirPayload {
    path: String,
    bytes_b64: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedded_classes: Option<Vec<AirClass>>,
}

/// Parse an AIR document and build the app behind it.
pub fn from_json(text: &str, table: &ApiTable) -> Result<Ingested> {
    let doc: AirDoc = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: format!("line {} column {}", e.line(), e.column()),
        msg: e.to_string(),
    })?;
    if doc.air_version != AIR_VERSION {
        return Err(Error::Schema {
            path: "air_version".into(),
            msg: format!("unsupported air_version {}, expected {AIR_VERSION}", doc.air_version),
        });
    }

    let mut stats = IngestStats::default();
    let mut app = AppIr::new(doc.app_id, doc.package);
    app.declared_permissions = doc.permissions.into_iter().collect();
    app.receivers = doc.receivers;

    for (i, entry) in doc.entry_points.iter().enumerate() {
        let r = MethodRef::parse(entry).ok_or_else(|| Error::Schema {
            path: format!("entry_points[{i}]"),
            msg: format!("`{entry}` is not `class;->name(descriptor)`"),
        })?;
        app.entry_points.insert(r);
    }

    for class in doc.classes {
        app.classes.push(class_ir(class));
    }

    // A method can be flagged inline instead of (or as well as) being
    // listed at the top; both spellings end up in the entry set.
    for class in &app.classes {
        for method in &class.methods {
            if method.is_entry {
                let r = MethodRef::new(
                    class.name.clone(),
                    method.name.clone(),
                    method.descriptor.clone(),
                );
                if app.entry_points.insert(r.clone()) {
                    stats
                        .warnings
                        .push(format!("method `{r}` flagged is_entry but absent from entry_points"));
                }
            }
        }
    }

    for (i, payload) in doc.payloads.into_iter().enumerate() {
        let bytes = B64.decode(payload.bytes_b64.as_bytes()).map_err(|e| Error::Schema {
            path: format!("payloads[{i}].bytes_b64"),
            msg: e.to_string(),
        })?;
        app.payloads.push(PayloadFile {
            path: payload.path,
            detected_type: magic::detect_file_type(&bytes),
            bytes,
            embedded_classes: payload
                .embedded_classes
                .map(|cs| cs.into_iter().map(class_ir).collect()),
        });
        stats.payload_files += 1;
    }

    app.apply_entry_flags();
    app.classify_calls(table);
    app.validate()?;
    Ok(Ingested { app, stats })
}

fn class_ir(class: AirClass) -> ClassIr {
    ClassIr {
        name: class.name,
        methods: class
            .methods
            .into_iter()
            .map(|m| MethodIr {
                name: m.name,
                descriptor: m.descriptor,
                calls: m.calls.into_iter().map(|c| CallSite::new(c.target)).collect(),
                is_entry: m.is_entry,
            })
            .collect(),
    }
}

/// Serialize an app as a compact AIR document. Output is canonical:
/// the same app always renders to the same bytes.
pub fn to_json(app: &AppIr) -> String {
    serde_json::to_string(&air_doc(app, &app.app_id)).expect("AIR serialization cannot fail")
}

/// Digest of the app's canonical AIR rendering with the id field blanked.
/// This is how derived apps (mutants, embedded stages) get their own id:
/// any structural change shows up in the digest.
pub fn content_digest(app: &AppIr, alg: HashAlg) -> String {
    let doc = air_doc(app, "");
    alg.hex32(serde_json::to_string(&doc).expect("AIR serialization cannot fail").as_bytes())
}

fn air_doc(app: &AppIr, app_id: &str) -> AirDoc {
    AirDoc {
        air_version: AIR_VERSION,
        app_id: app_id.to_string(),
        package: app.package.clone(),
        permissions: app.declared_permissions.iter().cloned().collect(),
        receivers: app.receivers.clone(),
        entry_points: app.entry_points.iter().map(MethodRef::render).collect(),
        classes: app.classes.iter().map(air_class).collect(),
        payloads: app
            .payloads
            .iter()
            .map(|p| AirPayload {
                path: p.path.clone(),
                bytes_b64: B64.encode(&p.bytes),
                embedded_classes: p
                    .embedded_classes
                    .as_ref()
                    .map(|cs| cs.iter().map(air_class).collect()),
            })
            .collect(),
    }
}

fn air_class(class: &ClassIr) -> AirClass {
    AirClass {
        name: class.name.clone(),
        methods: class
            .methods
            .iter()
            .map(|m| AirMethod {
                name: m.name.clone(),
                descriptor: m.descriptor.clone(),
                calls: m
                    .calls
                    .iter()
                    .map(|c| AirCall {
                        target: c.target.clone(),
                    })
                    .collect(),
                is_entry: m.is_entry,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{CallKind, FileType};

    fn table() -> ApiTable {
        ApiTable::parse("android/content/Intent;-><init>\t30291\n").unwrap()
    }

    const DOC: &str = r#"{
      "air_version": 1,
      "app_id": "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa",
      "package": "com.ex",
      "permissions": ["SEND_SMS"],
      "receivers": ["com/ex/Boot"],
      "entry_points": ["com/ex/Main;->onCreate(Landroid/os/Bundle;)V"],
      "classes": [
        {"name": "com/ex/Main", "methods": [
          {"name": "onCreate", "descriptor": "(Landroid/os/Bundle;)V",
           "calls": [{"target": "android/content/Intent;-><init>"},
                     {"target": "com/ex/Util;->go"}]}
        ]},
        {"name": "com/ex/Util", "methods": [
          {"name": "go", "descriptor": "()V", "calls": []}
        ]}
      ],
      "payloads": [
        {"path": "assets/stage2.dex", "bytes_b64": "ZGV4CjAzNQBhYmM="}
      ]
    }"#;

    #[test]
    fn parses_document() {
        let out = from_json(DOC, &table()).unwrap();
        let app = out.app;
        assert_eq!(app.package, "com.ex");
        assert_eq!(app.classes.len(), 2);
        assert!(app.classes[0].methods[0].is_entry);
        assert_eq!(app.classes[0].methods[0].calls[0].kind, CallKind::Api);
        assert_eq!(app.classes[0].methods[0].calls[1].kind, CallKind::Internal);
        assert_eq!(app.payloads[0].detected_type, FileType::Dex);
        assert_eq!(out.stats.payload_files, 1);
    }

    #[test]
    fn minimal_document_parses() {
        let doc = r#"{"app_id": "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "package": "p", "classes": []}"#;
        let out = from_json(doc, &table()).unwrap();
        assert!(out.app.classes.is_empty());
        assert!(out.app.payloads.is_empty());
    }

    #[test]
    fn unknown_field_rejected() {
        let doc = r#"{"app_id": "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "package": "p", "classes": [], "extra": 1}"#;
        let err = from_json(doc, &table()).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }), "{err:?}");
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn version_mismatch_rejected() {
        let doc = r#"{"air_version": 2, "app_id": "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "package": "p", "classes": []}"#;
        let err = from_json(doc, &table()).unwrap_err();
        assert!(err.to_string().contains("air_version"));
    }

    #[test]
    fn bad_base64_rejected_with_path() {
        let doc = r#"{"app_id": "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "package": "p", "classes": [],
                      "payloads": [{"path": "x", "bytes_b64": "@@@"}]}"#;
        let err = from_json(doc, &table()).unwrap_err();
        assert!(err.to_string().contains("payloads[0]"), "{err}");
    }

    #[test]
    fn inline_entry_flag_joins_entry_points() {
        let doc = r#"{"app_id": "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "package": "p",
          "classes": [{"name": "a/B", "methods": [
            {"name": "run", "descriptor": "()V", "is_entry": true}]}]}"#;
        let out = from_json(doc, &table()).unwrap();
        assert_eq!(out.app.entry_points.len(), 1);
        assert_eq!(out.stats.warnings.len(), 1);
    }

    #[test]
    fn round_trip_is_identity() {
        let out = from_json(DOC, &table()).unwrap();
        let json = to_json(&out.app);
        let back = from_json(&json, &table()).unwrap();
        assert_eq!(out.app, back.app);
        assert_eq!(json, to_json(&back.app));
    }

    #[test]
    fn content_digest_ignores_app_id_tracks_structure() {
        let out = from_json(DOC, &table()).unwrap();
        let mut relabeled = out.app.clone();
        relabeled.app_id = "b".repeat(32);
        assert_eq!(
            content_digest(&out.app, HashAlg::Md5),
            content_digest(&relabeled, HashAlg::Md5)
        );
        let mut edited = out.app.clone();
        edited.classes[1].methods[0]
            .calls
            .push(CallSite::new("x/Y;->z"));
        assert_ne!(
            content_digest(&out.app, HashAlg::Md5),
            content_digest(&edited, HashAlg::Md5)
        );
    }

    #[test]
    fn embedded_classes_round_trip() {
        let doc = r#"{"app_id": "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa", "package": "p",
          "classes": [],
          "payloads": [{"path": "inner.dex", "bytes_b64": "ZGV4CjAzNQA=",
            "embedded_classes": [{"name": "x/Hidden", "methods": [
              {"name": "run", "descriptor": "()V",
               "calls": [{"target": "android/content/Intent;-><init>"}]}]}]}]}"#;
        let out = from_json(doc, &table()).unwrap();
        let payload = &out.app.payloads[0];
        assert_eq!(payload.detected_type, FileType::Dex);
        let embedded = payload.embedded_classes.as_ref().unwrap();
        assert_eq!(embedded[0].methods[0].calls[0].kind, CallKind::Api);
        let back = from_json(&to_json(&out.app), &table()).unwrap();
        assert_eq!(out.app, back.app);
    }
}
