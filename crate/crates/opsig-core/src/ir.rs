//! Intermediate representation of a disassembled application.
//!
//! Both front ends (smali bundles and AIR documents) produce the same
//! `AppIr`, so everything downstream of ingest is format agnostic.

use std::collections::{BTreeSet, HashSet};

use crate::apitable::ApiTable;
use crate::error::{Error, Result};
use crate::hash::is_hex32;

/// Reference to one method: class name, method name, descriptor.
/// Renders in smali notation, e.g. `com/ex/Main;->onCreate(Landroid/os/Bundle;)V`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodRef {
    pub class_name: String,
    pub method_name: String,
    pub descriptor: String,
}

impl MethodRef {
    pub fn new(
        class_name: impl Into<String>,
        method_name: impl Into<String>,
        descriptor: impl Into<String>,
    ) -> MethodRef {
        MethodRef {
            class_name: class_name.into(),
            method_name: method_name.into(),
            descriptor: descriptor.into(),
        }
    }

    pub fn render(&self) -> String {
        format!("{};->{}{}", self.class_name, self.method_name, self.descriptor)
    }

    pub fn parse(s: &str) -> Option<MethodRef> {
        let (class_name, rest) = s.split_once(";->")?;
        let paren = rest.find('(')?;
        let (method_name, descriptor) = rest.split_at(paren);
        if class_name.is_empty() || method_name.is_empty() {
            return None;
        }
        Some(MethodRef::new(class_name, method_name, descriptor))
    }
}

impl std::fmt::Display for MethodRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{};->{}{}", self.class_name, self.method_name, self.descriptor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallKind {
    /// Target is present in the API call table.
    Api,
    /// Anything else: app-internal methods, library code outside the table.
    Internal,
}

/// One invoke instruction. The target never carries a descriptor:
/// `android/content/Intent;-><init>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub target: String,
    pub kind: CallKind,
}

impl CallSite {
    pub fn new(target: impl Into<String>) -> CallSite {
        CallSite {
            target: target.into(),
            kind: CallKind::Internal,
        }
    }

    /// Class and method-name halves of the target.
    pub fn split_target(&self) -> Option<(&str, &str)> {
        self.target.split_once(";->")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodIr {
    pub name: String,
    pub descriptor: String,
    /// Call sites in original instruction order. Order matters: the
    /// method signature hashes the API id sequence as it appears here.
    pub calls: Vec<CallSite>,
    pub is_entry: bool,
}

impl MethodIr {
    pub fn new(name: impl Into<String>, descriptor: impl Into<String>) -> MethodIr {
        MethodIr {
            name: name.into(),
            descriptor: descriptor.into(),
            calls: Vec::new(),
            is_entry: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIr {
    pub name: String,
    pub methods: Vec<MethodIr>,
}

impl ClassIr {
    pub fn new(name: impl Into<String>) -> ClassIr {
        ClassIr {
            name: name.into(),
            methods: Vec::new(),
        }
    }

    pub fn method(&self, name: &str, descriptor: &str) -> Option<&MethodIr> {
        self.methods
            .iter()
            .find(|m| m.name == name && m.descriptor == descriptor)
    }
}

/// File type detected from payload magic numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileType {
    Elf,
    Dex,
    ZipJar,
    Apk,
    Png,
    Unknown,
}

impl std::fmt::Display for FileType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            FileType::Elf => "elf",
            FileType::Dex => "dex",
            FileType::ZipJar => "zipjar",
            FileType::Apk => "apk",
            FileType::Png => "png",
            FileType::Unknown => "unknown",
        };
        f.write_str(name)
    }
}

/// A bundled file that is not disassembled code: native libraries,
/// secondary dex/apk stages, resources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadFile {
    pub path: String,
    pub bytes: Vec<u8>,
    pub detected_type: FileType,
    /// Disassembly of the classes inside a dex/jar/apk payload, when the
    /// producing toolchain supplied one.
    pub embedded_classes: Option<Vec<ClassIr>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppIr {
    /// Content digest of the original artifact, 32 lowercase hex chars.
    pub app_id: String,
    pub package: String,
    pub declared_permissions: BTreeSet<String>,
    pub receivers: Vec<String>,
    pub entry_points: BTreeSet<MethodRef>,
    pub classes: Vec<ClassIr>,
    pub payloads: Vec<PayloadFile>,
}

impl AppIr {
    pub fn new(app_id: impl Into<String>, package: impl Into<String>) -> AppIr {
        AppIr {
            app_id: app_id.into(),
            package: package.into(),
            declared_permissions: BTreeSet::new(),
            receivers: Vec::new(),
            entry_points: BTreeSet::new(),
            classes: Vec::new(),
            payloads: Vec::new(),
        }
    }

    pub fn class(&self, name: &str) -> Option<&ClassIr> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn method(&self, r: &MethodRef) -> Option<&MethodIr> {
        self.class(&r.class_name)
            .and_then(|c| c.method(&r.method_name, &r.descriptor))
    }

    pub fn method_count(&self) -> usize {
        self.classes.iter().map(|c| c.methods.len()).sum()
    }

    /// Mark `is_entry` on exactly the methods listed in `entry_points`.
    pub fn apply_entry_flags(&mut self) {
        for class in &mut self.classes {
            for method in &mut class.methods {
                method.is_entry = self.entry_points.contains(&MethodRef::new(
                    class.name.clone(),
                    method.name.clone(),
                    method.descriptor.clone(),
                ));
            }
        }
    }

    /// Recompute every call site's kind against `table`. A target is an
    /// API call exactly when the table maps it.
    pub fn classify_calls(&mut self, table: &ApiTable) {
        let classify = |calls: &mut Vec<CallSite>| {
            for call in calls {
                call.kind = if table.lookup(&call.target).is_some() {
                    CallKind::Api
                } else {
                    CallKind::Internal
                };
            }
        };
        for class in &mut self.classes {
            for method in &mut class.methods {
                classify(&mut method.calls);
            }
        }
        for payload in &mut self.payloads {
            if let Some(classes) = &mut payload.embedded_classes {
                for class in classes {
                    for method in &mut class.methods {
                        classify(&mut method.calls);
                    }
                }
            }
        }
    }

    /// Check all structural invariants. Front ends call this after
    /// construction; mutation outputs are expected to satisfy it too.
    pub fn validate(&self) -> Result<()> {
        if !is_hex32(&self.app_id) {
            return Err(Error::Validation(format!(
                "app_id must be 32 lowercase hex chars, got `{}`",
                self.app_id
            )));
        }
        if self.package.is_empty() {
            return Err(Error::Validation("empty package name".into()));
        }
        let mut class_names = HashSet::new();
        for class in &self.classes {
            if !class_names.insert(class.name.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate class definition `{}`",
                    class.name
                )));
            }
            check_unique_methods(&class.name, &class.methods)?;
        }
        for payload in &self.payloads {
            if payload.path.is_empty() {
                return Err(Error::Validation("payload with empty path".into()));
            }
            if let Some(classes) = &payload.embedded_classes {
                let mut names = HashSet::new();
                for class in classes {
                    if !names.insert(class.name.as_str()) {
                        return Err(Error::Validation(format!(
                            "duplicate class `{}` in payload `{}`",
                            class.name, payload.path
                        )));
                    }
                    check_unique_methods(&class.name, &class.methods)?;
                }
            }
        }
        for entry in &self.entry_points {
            if self.method(entry).is_none() {
                return Err(Error::Validation(format!(
                    "entry point `{entry}` does not resolve to a method"
                )));
            }
        }
        for class in &self.classes {
            for method in &class.methods {
                let r = MethodRef::new(
                    class.name.clone(),
                    method.name.clone(),
                    method.descriptor.clone(),
                );
                if method.is_entry != self.entry_points.contains(&r) {
                    return Err(Error::Validation(format!(
                        "is_entry flag on `{r}` disagrees with entry point list"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_unique_methods(class_name: &str, methods: &[MethodIr]) -> Result<()> {
    let mut seen = HashSet::new();
    for m in methods {
        if !seen.insert((m.name.as_str(), m.descriptor.as_str())) {
            return Err(Error::Validation(format!(
                "duplicate method `{}{}` in class `{}`",
                m.name, m.descriptor, class_name
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_app() -> AppIr {
        let mut app = AppIr::new("0".repeat(32), "com.example");
        let mut main = ClassIr::new("com/example/Main");
        let mut on_create = MethodIr::new("onCreate", "(Landroid/os/Bundle;)V");
        on_create
            .calls
            .push(CallSite::new("android/content/Intent;-><init>"));
        on_create.calls.push(CallSite::new("com/example/Util;->helper"));
        main.methods.push(on_create);
        let mut util = ClassIr::new("com/example/Util");
        util.methods.push(MethodIr::new("helper", "()V"));
        app.classes.push(main);
        app.classes.push(util);
        app.entry_points.insert(MethodRef::new(
            "com/example/Main",
            "onCreate",
            "(Landroid/os/Bundle;)V",
        ));
        app.apply_entry_flags();
        app
    }

    #[test]
    fn method_ref_round_trip() {
        let r = MethodRef::new("com/ex/Main", "onCreate", "(Landroid/os/Bundle;)V");
        let s = r.render();
        assert_eq!(s, "com/ex/Main;->onCreate(Landroid/os/Bundle;)V");
        assert_eq!(MethodRef::parse(&s).unwrap(), r);
        assert!(MethodRef::parse("no-arrow").is_none());
        assert!(MethodRef::parse("a;->b").is_none());
    }

    #[test]
    fn method_ref_parses_init() {
        let r = MethodRef::parse("com/ex/A;-><init>()V").unwrap();
        assert_eq!(r.method_name, "<init>");
        assert_eq!(r.descriptor, "()V");
    }

    #[test]
    fn validate_accepts_sample() {
        sample_app().validate().unwrap();
    }

    #[test]
    fn validate_rejects_bad_app_id() {
        let mut app = sample_app();
        app.app_id = "XYZ".into();
        assert!(matches!(app.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn validate_rejects_duplicate_class() {
        let mut app = sample_app();
        let dup = app.classes[0].clone();
        app.classes.push(dup);
        let err = app.validate().unwrap_err();
        assert!(err.to_string().contains("duplicate class"), "{err}");
    }

    #[test]
    fn validate_rejects_duplicate_method_but_allows_overload() {
        let mut app = sample_app();
        app.classes[1].methods.push(MethodIr::new("helper", "(I)V"));
        app.validate().unwrap();
        app.classes[1].methods.push(MethodIr::new("helper", "(I)V"));
        assert!(app.validate().is_err());
    }

    #[test]
    fn validate_rejects_dangling_entry_point() {
        let mut app = sample_app();
        app.entry_points
            .insert(MethodRef::new("com/example/Gone", "run", "()V"));
        assert!(app.validate().is_err());
    }

    #[test]
    fn validate_rejects_inconsistent_entry_flag() {
        let mut app = sample_app();
        app.classes[1].methods[0].is_entry = true;
        assert!(app.validate().is_err());
    }

    #[test]
    fn classify_marks_table_hits_only() {
        let table = crate::apitable::ApiTable::parse(
            "android/content/Intent;-><init>\t30291\n",
        )
        .unwrap();
        let mut app = sample_app();
        app.classify_calls(&table);
        let calls = &app.classes[0].methods[0].calls;
        assert_eq!(calls[0].kind, CallKind::Api);
        assert_eq!(calls[1].kind, CallKind::Internal);
    }
}
