//! Three-level opcode signatures.
//!
//! Level 3 hashes the sequence of API ids a method calls, in
//! instruction order. Level 2 hashes the sorted multiset of its class's
//! method digests. Level 1 hashes the sorted multiset of class digests,
//! including signatures derived from bundled payload files. Sorting at
//! levels 2 and 1 is what makes the scheme robust against repackaging:
//! moving code around changes nothing, changing code changes everything
//! above it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::apitable::{ApiFilter, ApiTable, PermissionMap};
use crate::callgraph::{compute_reachability, ReachabilitySet};
use crate::hash::HashAlg;
use crate::ir::{AppIr, ClassIr, FileType, MethodIr, PayloadFile};

/// Nested payload apps inside payload apps are not chased past this.
const MAX_PAYLOAD_DEPTH: usize = 2;

/// Where a class-level signature came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigOrigin {
    /// Disassembled code, either the app's own classes or classes
    /// embedded in a dex/jar payload.
    Code,
    /// Opaque payload content: native libraries, undecoded blobs.
    PayloadNative,
    /// A whole Android package carried as a payload.
    PayloadApk,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSig {
    pub lev3: String,
    pub api_count: u64,
    /// The concatenated API ids the digest was computed over. Kept so
    /// the API sequence can be decoded back out of a stored signature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_string: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSig {
    pub lev2: String,
    pub api_count: u64,
    pub origin: SigOrigin,
    pub methods: Vec<MethodSig>,
    pub permissions: BTreeSet<String>,
    /// Source class (scoped by payload path for embedded classes).
    /// In-memory only; never serialized.
    #[serde(skip)]
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureBundle {
    pub app_id: String,
    pub package: String,
    pub lev1: String,
    pub classes: Vec<ClassSig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Fingerprint of the API table and filter this bundle was signed
    /// under. Bundles only compare when these match.
    pub table_fp: String,
    pub hash_alg: HashAlg,
    /// True when the app produced no class signatures at all.
    #[serde(default, skip_serializing_if = "is_false")]
    pub degenerate: bool,
}

fn is_false(b: &bool) -> bool {
    !b
}

impl SignatureBundle {
    /// Canonical compact rendering; identical bundles are identical bytes.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serialization cannot fail")
    }

    pub fn from_json(text: &str) -> crate::Result<SignatureBundle> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SignOptions<'a> {
    pub alg: HashAlg,
    pub filter: Option<&'a ApiFilter>,
    pub perm_map: Option<&'a PermissionMap>,
    /// Skip reachability and sign dead code too.
    pub keep_dead: bool,
}

#[derive(Debug, Clone)]
pub struct SignOutcome {
    pub bundle: SignatureBundle,
    /// Bundles for app payloads carried inside this app, outermost first.
    pub nested: Vec<SignatureBundle>,
    pub warnings: Vec<String>,
}

/// Hash the method's API id sequence. Methods that call no (unfiltered)
/// API produce no signature at all.
pub fn lev3_sign(
    method: &MethodIr,
    table: &ApiTable,
    filter: Option<&ApiFilter>,
    alg: HashAlg,
) -> Option<MethodSig> {
    let mut id_string = String::new();
    let mut api_count = 0u64;
    for call in &method.calls {
        let Some(id) = table.lookup(&call.target) else {
            continue;
        };
        if filter.is_some_and(|f| f.contains(&call.target)) {
            continue;
        }
        id_string.push_str(&id.render());
        api_count += 1;
    }
    if api_count == 0 {
        return None;
    }
    Some(MethodSig {
        lev3: alg.hex32(id_string.as_bytes()),
        api_count,
        id_string: Some(id_string),
    })
}

/// Hash the sorted multiset of live-method digests of one class.
pub fn lev2_sign(
    class: &ClassIr,
    live: &ReachabilitySet,
    table: &ApiTable,
    filter: Option<&ApiFilter>,
    alg: HashAlg,
) -> Option<ClassSig> {
    let methods: Vec<MethodSig> = class
        .methods
        .iter()
        .filter(|m| live.is_live(&class.name, m))
        .filter_map(|m| lev3_sign(m, table, filter, alg))
        .collect();
    class_sig_from_methods(methods, class.name.clone(), alg)
}

fn class_sig_from_methods(
    mut methods: Vec<MethodSig>,
    class_name: String,
    alg: HashAlg,
) -> Option<ClassSig> {
    if methods.is_empty() {
        return None;
    }
    methods.sort_by(|a, b| a.lev3.cmp(&b.lev3));
    let concat: String = methods.iter().map(|m| m.lev3.as_str()).collect();
    let api_count = methods.iter().map(|m| m.api_count).sum();
    Some(ClassSig {
        lev2: alg.hex32(concat.as_bytes()),
        api_count,
        origin: SigOrigin::Code,
        methods,
        permissions: BTreeSet::new(),
        class_name,
    })
}

#[derive(Debug, Default)]
pub struct PayloadSigs {
    pub sigs: Vec<ClassSig>,
    /// A payload that is itself an app, reconstructed for its own
    /// signing pass.
    pub nested_app: Option<AppIr>,
    pub warnings: Vec<String>,
}

/// Signatures contributed by one payload file. Payload classes are not
/// subject to the host's reachability: dynamically loaded code has no
/// static callers by definition.
pub fn payload_sign(
    payload: &PayloadFile,
    table: &ApiTable,
    filter: Option<&ApiFilter>,
    alg: HashAlg,
) -> PayloadSigs {
    let mut out = PayloadSigs::default();
    match payload.detected_type {
        FileType::Png => {}
        FileType::Dex | FileType::ZipJar => match &payload.embedded_classes {
            Some(classes) => {
                for class in classes {
                    let methods: Vec<MethodSig> = class
                        .methods
                        .iter()
                        .filter_map(|m| lev3_sign(m, table, filter, alg))
                        .collect();
                    let scoped = format!("{}!{}", payload.path, class.name);
                    if let Some(sig) = class_sig_from_methods(methods, scoped, alg) {
                        out.sigs.push(sig);
                    }
                }
            }
            None => {
                out.warnings.push(format!(
                    "payload `{}` is {} but carries no disassembly; signed as opaque content",
                    payload.path, payload.detected_type
                ));
                out.sigs.push(content_sig(payload, SigOrigin::PayloadNative, alg));
            }
        },
        FileType::Elf | FileType::Unknown => {
            out.sigs.push(content_sig(payload, SigOrigin::PayloadNative, alg));
        }
        FileType::Apk => {
            out.sigs.push(content_sig(payload, SigOrigin::PayloadApk, alg));
            match &payload.embedded_classes {
                Some(classes) => {
                    let mut inner = AppIr::new(alg.hex32(&payload.bytes), payload.path.clone());
                    inner.classes = classes.clone();
                    for class in &mut inner.classes {
                        for method in &mut class.methods {
                            method.is_entry = false;
                        }
                    }
                    out.nested_app = Some(inner);
                }
                None => {
                    out.warnings.push(format!(
                        "payload `{}` is an app but carries no disassembly; only its content hash was signed",
                        payload.path
                    ));
                }
            }
        }
    }
    out
}

fn content_sig(payload: &PayloadFile, origin: SigOrigin, alg: HashAlg) -> ClassSig {
    ClassSig {
        lev2: alg.hex32(&payload.bytes),
        api_count: 0,
        origin,
        methods: Vec::new(),
        permissions: BTreeSet::new(),
        class_name: payload.path.clone(),
    }
}

/// Sign a whole app: every live class, every payload, and recursively
/// any app carried as a payload.
pub fn sign_app(app: &AppIr, table: &ApiTable, opts: &SignOptions) -> SignOutcome {
    sign_app_at_depth(app, table, opts, 0)
}

fn sign_app_at_depth(
    app: &AppIr,
    table: &ApiTable,
    opts: &SignOptions,
    depth: usize,
) -> SignOutcome {
    let live = if opts.keep_dead {
        ReachabilitySet::all()
    } else {
        compute_reachability(app)
    };

    let mut sigs: Vec<ClassSig> = Vec::new();
    let mut nested: Vec<SignatureBundle> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    for class in &app.classes {
        if let Some(sig) = lev2_sign(class, &live, table, opts.filter, opts.alg) {
            sigs.push(sig);
        }
    }

    for payload in &app.payloads {
        let mut p = payload_sign(payload, table, opts.filter, opts.alg);
        sigs.append(&mut p.sigs);
        warnings.append(&mut p.warnings);
        if let Some(inner) = p.nested_app {
            if depth + 1 < MAX_PAYLOAD_DEPTH {
                let mut outcome = sign_app_at_depth(&inner, table, opts, depth + 1);
                nested.push(outcome.bundle);
                nested.append(&mut outcome.nested);
                warnings.append(&mut outcome.warnings);
            } else {
                warnings.push(format!(
                    "payload `{}` nests deeper than {MAX_PAYLOAD_DEPTH} levels; not analyzed",
                    payload.path
                ));
            }
        }
    }

    sigs.sort_by(|a, b| {
        (&a.lev2, a.origin, &a.class_name).cmp(&(&b.lev2, b.origin, &b.class_name))
    });
    let concat: String = sigs.iter().map(|s| s.lev2.as_str()).collect();
    let degenerate = sigs.is_empty();

    let mut bundle = SignatureBundle {
        app_id: app.app_id.clone(),
        package: app.package.clone(),
        lev1: opts.alg.hex32(concat.as_bytes()),
        classes: sigs,
        label: None,
        table_fp: table.fingerprint(opts.alg, opts.filter),
        hash_alg: opts.alg,
        degenerate,
    };

    if let Some(pmap) = opts.perm_map {
        crate::analytics::annotate_permissions(&mut bundle, app, pmap)
            .expect("bundle was built from this app");
    }

    SignOutcome {
        bundle,
        nested,
        warnings,
    }
}

/// Sign many apps. Runs on the rayon pool when the `parallel` feature
/// is enabled; order of results always matches input order.
#[cfg(feature = "parallel")]
pub fn sign_corpus(apps: &[AppIr], table: &ApiTable, opts: &SignOptions) -> Vec<SignOutcome> {
    use rayon::prelude::*;
    apps.par_iter()
        .map(|app| sign_app(app, table, opts))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn sign_corpus(apps: &[AppIr], table: &ApiTable, opts: &SignOptions) -> Vec<SignOutcome> {
    sign_corpus_seq(apps, table, opts)
}

/// Single-threaded corpus signing, mostly for measurement baselines.
pub fn sign_corpus_seq(apps: &[AppIr], table: &ApiTable, opts: &SignOptions) -> Vec<SignOutcome> {
    apps.iter().map(|app| sign_app(app, table, opts)).collect()
}
