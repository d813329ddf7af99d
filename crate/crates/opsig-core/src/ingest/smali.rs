//! Parser for the smali subset: `.class`, `.super`, `.method`,
//! `.end method`, and the five plain invoke forms. Everything else in a
//! file is skipped, with counters so the caller can see how much was
//! ignored. Keeping the accepted subset this narrow is what makes
//! signatures reproducible across different disassembler versions.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::hash::HashAlg;
use crate::ingest::{magic, IngestStats, Ingested};
use crate::ir::{AppIr, CallSite, ClassIr, MethodIr, MethodRef, PayloadFile};

const INVOKE_OPS: [&str; 5] = [
    "invoke-virtual",
    "invoke-direct",
    "invoke-static",
    "invoke-interface",
    "invoke-super",
];

/// Assemble an app from named bundle files: any number of `*.smali`
/// documents, a root `manifest.txt`, and arbitrary payload files.
/// `app_id` is a digest over the sorted file contents, so renaming,
/// editing or adding any file produces a different id.
pub fn parse_bundle(
    mut files: Vec<(String, Vec<u8>)>,
    table: &crate::apitable::ApiTable,
    alg: HashAlg,
) -> Result<Ingested> {
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let mut stats = IngestStats::default();

    let mut app = AppIr::new(bundle_digest(&files, alg), String::new());
    let mut saw_manifest = false;

    for (name, bytes) in &files {
        if name == "manifest.txt" {
            let text = text_of(name, bytes)?;
            parse_manifest(&text, &mut app, &mut stats)?;
            saw_manifest = true;
        } else if name.ends_with(".smali") {
            let text = text_of(name, bytes)?;
            let class = parse_smali(name, &text, &mut stats)?;
            app.classes.push(class);
            stats.smali_files += 1;
        } else {
            app.payloads.push(PayloadFile {
                path: name.clone(),
                detected_type: magic::detect_file_type(bytes),
                bytes: bytes.clone(),
                embedded_classes: None,
            });
            stats.payload_files += 1;
        }
    }

    if !saw_manifest {
        return Err(Error::Validation("bundle has no manifest.txt".into()));
    }

    app.apply_entry_flags();
    app.classify_calls(table);
    app.validate()?;
    Ok(Ingested { app, stats })
}

/// Digest over `path NUL content NUL` for every file in sorted order.
/// Text files are newline normalized first so checkouts on different
/// platforms agree on the id.
fn bundle_digest(sorted_files: &[(String, Vec<u8>)], alg: HashAlg) -> String {
    let mut stream = Vec::new();
    for (name, bytes) in sorted_files {
        stream.extend_from_slice(name.as_bytes());
        stream.push(0);
        if is_text_member(name) {
            match std::str::from_utf8(bytes) {
                Ok(text) => stream.extend_from_slice(text.replace("\r\n", "\n").as_bytes()),
                Err(_) => stream.extend_from_slice(bytes),
            }
        } else {
            stream.extend_from_slice(bytes);
        }
        stream.push(0);
    }
    alg.hex32(&stream)
}

fn is_text_member(name: &str) -> bool {
    name == "manifest.txt" || name.ends_with(".smali")
}

fn text_of(name: &str, bytes: &[u8]) -> Result<String> {
    String::from_utf8(bytes.to_vec())
        .map_err(|_| Error::parse(0, format!("{name}: not valid UTF-8")))
}

fn parse_manifest(text: &str, app: &mut AppIr, stats: &mut IngestStats) -> Result<()> {
    let mut package: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(lineno, format!("manifest.txt: expected key=value, got `{line}`"))
        })?;
        let value = value.trim();
        match key.trim() {
            "package" => {
                if package.is_some() {
                    return Err(Error::parse(lineno, "manifest.txt: duplicate package line"));
                }
                if value.is_empty() {
                    return Err(Error::parse(lineno, "manifest.txt: empty package"));
                }
                package = Some(value.to_string());
            }
            "permission" => {
                app.declared_permissions.insert(value.to_string());
            }
            "receiver" => {
                app.receivers.push(value.to_string());
            }
            "entry" => {
                let r = MethodRef::parse(value).ok_or_else(|| {
                    Error::parse(
                        lineno,
                        format!("manifest.txt: bad entry point `{value}`"),
                    )
                })?;
                app.entry_points.insert(r);
            }
            other => {
                stats
                    .warnings
                    .push(format!("manifest.txt:{lineno}: unknown key `{other}`"));
            }
        }
    }
    app.package =
        package.ok_or_else(|| Error::Validation("manifest.txt has no package line".into()))?;
    Ok(())
}

/// One `.smali` file defines exactly one class.
fn parse_smali(file: &str, text: &str, stats: &mut IngestStats) -> Result<ClassIr> {
    let mut class: Option<ClassIr> = None;
    let mut method: Option<MethodIr> = None;
    let mut seen_supers: BTreeSet<String> = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let op = line.split_whitespace().next().unwrap_or("");
        match op {
            ".class" => {
                if class.is_some() {
                    return Err(Error::parse(lineno, format!("{file}: second .class directive")));
                }
                let name = line
                    .split_whitespace()
                    .last()
                    .and_then(type_name)
                    .ok_or_else(|| {
                        Error::parse(lineno, format!("{file}: malformed .class directive"))
                    })?;
                class = Some(ClassIr::new(name));
            }
            ".super" => {
                if class.is_none() {
                    return Err(Error::parse(lineno, format!("{file}: .super before .class")));
                }
                let name = line
                    .split_whitespace()
                    .last()
                    .and_then(type_name)
                    .ok_or_else(|| {
                        Error::parse(lineno, format!("{file}: malformed .super directive"))
                    })?;
                seen_supers.insert(name.to_string());
            }
            ".method" => {
                if class.is_none() {
                    return Err(Error::parse(lineno, format!("{file}: .method before .class")));
                }
                if method.is_some() {
                    return Err(Error::parse(
                        lineno,
                        format!("{file}: .method inside another method"),
                    ));
                }
                let sig = line.split_whitespace().last().unwrap_or("");
                let paren = sig.find('(').ok_or_else(|| {
                    Error::parse(lineno, format!("{file}: .method without descriptor"))
                })?;
                let (name, descriptor) = sig.split_at(paren);
                if name.is_empty() || !descriptor.contains(')') {
                    return Err(Error::parse(
                        lineno,
                        format!("{file}: malformed method signature `{sig}`"),
                    ));
                }
                method = Some(MethodIr::new(name, descriptor));
            }
            ".end" => {
                if line == ".end method" {
                    let m = method.take().ok_or_else(|| {
                        Error::parse(lineno, format!("{file}: .end method without .method"))
                    })?;
                    class
                        .as_mut()
                        .expect("method implies class")
                        .methods
                        .push(m);
                } else {
                    stats.ignored_lines += 1;
                }
            }
            op if INVOKE_OPS.contains(&op) => {
                let Some(m) = method.as_mut() else {
                    return Err(Error::parse(
                        lineno,
                        format!("{file}: invoke outside method body"),
                    ));
                };
                match parse_invoke_target(line) {
                    InvokeTarget::Call(target) => m.calls.push(CallSite::new(target)),
                    InvokeTarget::Unrepresentable => {
                        stats.warnings.push(format!(
                            "{file}:{lineno}: skipped invoke with non-class receiver"
                        ));
                    }
                    InvokeTarget::Malformed => {
                        return Err(Error::parse(
                            lineno,
                            format!("{file}: malformed invoke `{line}`"),
                        ));
                    }
                }
            }
            // Only invoke forms can carry calls we would miss, so they
            // alone deserve a warning; other directives are structure
            // or metadata and are silently counted.
            op if op.starts_with("invoke-") => {
                stats
                    .warnings
                    .push(format!("{file}:{lineno}: skipped call form `{op}`"));
            }
            op if op.starts_with('.') => {
                stats.ignored_lines += 1;
            }
            _ => {
                stats.ignored_lines += 1;
            }
        }
    }

    if method.is_some() {
        return Err(Error::parse(
            text.lines().count(),
            format!("{file}: unterminated .method at end of file"),
        ));
    }
    class.ok_or_else(|| Error::parse(0, format!("{file}: no .class directive")))
}

enum InvokeTarget {
    Call(String),
    /// Syntactically fine but the receiver is not a class type (arrays,
    /// primitives); the subset cannot represent it.
    Unrepresentable,
    Malformed,
}

/// Extract `class;->name` from an invoke line such as
/// `invoke-virtual {v0, v1}, Lcom/x/Y;->m(II)V`.
fn parse_invoke_target(line: &str) -> InvokeTarget {
    let Some(comma) = line.rfind(',') else {
        return InvokeTarget::Malformed;
    };
    let target = line[comma + 1..].trim();
    if target.is_empty() {
        return InvokeTarget::Malformed;
    }
    if !target.starts_with('L') {
        return if target.contains(";->") || target.contains("->") {
            InvokeTarget::Unrepresentable
        } else {
            InvokeTarget::Malformed
        };
    }
    let body = &target[1..];
    let Some((class_name, rest)) = body.split_once(";->") else {
        return InvokeTarget::Malformed;
    };
    let Some(paren) = rest.find('(') else {
        return InvokeTarget::Malformed;
    };
    let method_name = &rest[..paren];
    if class_name.is_empty() || method_name.is_empty() {
        return InvokeTarget::Malformed;
    }
    InvokeTarget::Call(format!("{class_name};->{method_name}"))
}

/// `Lcom/x/Y;` -> `com/x/Y`
fn type_name(token: &str) -> Option<&str> {
    token
        .strip_prefix('L')
        .and_then(|t| t.strip_suffix(';'))
        .filter(|t| !t.is_empty())
}
