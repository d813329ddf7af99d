//! Semantics-preserving app transformations that imitate repackaging
//! and cheap obfuscation. Every mutation changes the app's content
//! digest (it is a different artifact) while leaving its application
//! signature untouched under default signing, which is the whole point
//! of signing opcodes instead of bytes.
//!
//! Dead insertions stay invisible because unreachable code is excluded
//! from signatures; signing with `keep_dead` will of course see them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::apitable::ApiTable;
use crate::error::Error;
use crate::hash::HashAlg;
use crate::ingest::air;
use crate::ir::{AppIr, CallSite, ClassIr, FileType, MethodIr, MethodRef, PayloadFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationKind {
    /// Permute class order (repackaging reorders archive members).
    ReorderClasses,
    /// Permute method order inside classes.
    ReorderMethods,
    /// Rename classes and methods consistently, API targets untouched.
    RenameIdentifiers,
    /// Add an uncalled method with arbitrary API calls.
    InsertDeadMethod,
    /// Add a whole uncalled class.
    InsertDeadClass,
    /// Add a resource-like payload (repackagers swap icons and assets).
    TouchResources,
}

impl MutationKind {
    pub const ALL: [MutationKind; 6] = [
        MutationKind::ReorderClasses,
        MutationKind::ReorderMethods,
        MutationKind::RenameIdentifiers,
        MutationKind::InsertDeadMethod,
        MutationKind::InsertDeadClass,
        MutationKind::TouchResources,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MutationKind::ReorderClasses => "reorder-classes",
            MutationKind::ReorderMethods => "reorder-methods",
            MutationKind::RenameIdentifiers => "rename-identifiers",
            MutationKind::InsertDeadMethod => "insert-dead-method",
            MutationKind::InsertDeadClass => "insert-dead-class",
            MutationKind::TouchResources => "touch-resources",
        }
    }
}

impl std::fmt::Display for MutationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MutationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<MutationKind, Error> {
        MutationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mutation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MutationSpec {
    pub kind: MutationKind,
    pub seed: u64,
}

/// Apply one mutation. The result is a valid app with a fresh app id;
/// its application signature equals the input's under default signing.
/// The table supplies API calls for inserted dead bodies.
pub fn mutate(app: &AppIr, spec: &MutationSpec, table: &ApiTable, alg: HashAlg) -> AppIr {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = app.clone();
    match spec.kind {
        MutationKind::ReorderClasses => reorder_classes(&mut out, &mut rng),
        MutationKind::ReorderMethods => reorder_methods(&mut out, &mut rng),
        MutationKind::RenameIdentifiers => rename_identifiers(&mut out, &mut rng),
        MutationKind::InsertDeadMethod => insert_dead_method(&mut out, table, &mut rng),
        MutationKind::InsertDeadClass => insert_dead_class(&mut out, table, &mut rng),
        MutationKind::TouchResources => touch_resources(&mut out, &mut rng),
    }
    out.app_id = air::content_digest(&out, alg);
    out.validate().expect("mutations preserve app validity");
    out
}

/// The standard battery: three repackaging moves, three single
/// obfuscations, and one combined obfuscation pass. Eight distinct
/// artifacts (with the original), one signature.
pub fn variant_suite(app: &AppIr, seed: u64, table: &ApiTable, alg: HashAlg) -> Vec<AppIr> {
    let step = |kind, offset| MutationSpec {
        kind,
        seed: seed.wrapping_add(offset),
    };
    let mut variants = vec![
        mutate(app, &step(MutationKind::ReorderClasses, 1), table, alg),
        mutate(app, &step(MutationKind::ReorderMethods, 2), table, alg),
        mutate(app, &step(MutationKind::TouchResources, 3), table, alg),
        mutate(app, &step(MutationKind::RenameIdentifiers, 4), table, alg),
        mutate(app, &step(MutationKind::InsertDeadMethod, 5), table, alg),
        mutate(app, &step(MutationKind::InsertDeadClass, 6), table, alg),
    ];
    let combined = mutate(app, &step(MutationKind::RenameIdentifiers, 7), table, alg);
    let combined = mutate(&combined, &step(MutationKind::InsertDeadMethod, 8), table, alg);
    let combined = mutate(&combined, &step(MutationKind::InsertDeadClass, 9), table, alg);
    variants.push(combined);
    variants
}

fn reorder_classes(app: &mut AppIr, rng: &mut ChaCha8Rng) {
    if app.classes.len() < 2 {
        push_marker_class(app, rng);
        return;
    }
    let before: Vec<String> = app.classes.iter().map(|c| c.name.clone()).collect();
    app.classes.shuffle(rng);
    if app.classes.iter().map(|c| &c.name).eq(before.iter()) {
        app.classes.rotate_left(1);
    }
}

fn reorder_methods(app: &mut AppIr, rng: &mut ChaCha8Rng) {
    let mut changed = false;
    for class in &mut app.classes {
        if class.methods.len() < 2 {
            continue;
        }
        let before: Vec<(String, String)> = class
            .methods
            .iter()
            .map(|m| (m.name.clone(), m.descriptor.clone()))
            .collect();
        class.methods.shuffle(rng);
        changed |= !class
            .methods
            .iter()
            .map(|m| (&m.name, &m.descriptor))
            .eq(before.iter().map(|(n, d)| (n, d)));
    }
    if !changed {
        match app.classes.iter_mut().find(|c| c.methods.len() >= 2) {
            Some(class) => class.methods.rotate_left(1),
            None => push_marker_class(app, rng),
        }
    }
}

fn rename_identifiers(app: &mut AppIr, rng: &mut ChaCha8Rng) {
    use std::collections::HashMap;
    let tag: String = format!("{:08x}", rng.gen::<u32>());

    let class_map: HashMap<String, String> = app
        .classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.clone(), format!("obf/{tag}/C{i}")))
        .collect();
    // Constructors keep their names; everything else in a class renames
    // by original name so overload groups stay grouped.
    let mut method_map: HashMap<(String, String), String> = HashMap::new();
    for class in &app.classes {
        let mut next = 0usize;
        for method in &class.methods {
            let key = (class.name.clone(), method.name.clone());
            if method.name.starts_with('<') || method_map.contains_key(&key) {
                continue;
            }
            method_map.insert(key, format!("m{tag}_{next}"));
            next += 1;
        }
    }

    let rename_target = |target: &str| -> Option<String> {
        let (class_name, method_name) = target.split_once(";->")?;
        let new_class = class_map.get(class_name)?;
        let new_method = method_map
            .get(&(class_name.to_string(), method_name.to_string()))
            .map(String::as_str)
            .unwrap_or(method_name);
        Some(format!("{new_class};->{new_method}"))
    };

    for class in &mut app.classes {
        for method in &mut class.methods {
            for call in &mut method.calls {
                if let Some(new_target) = rename_target(&call.target) {
                    call.target = new_target;
                }
            }
            if let Some(new_name) = method_map.get(&(class.name.clone(), method.name.clone())) {
                method.name = new_name.clone();
            }
        }
    }
    for class in &mut app.classes {
        class.name = class_map[&class.name].clone();
    }
    app.receivers = app
        .receivers
        .iter()
        .map(|r| class_map.get(r).cloned().unwrap_or_else(|| r.clone()))
        .collect();
    app.entry_points = app
        .entry_points
        .iter()
        .map(|e| {
            let class_name = class_map
                .get(&e.class_name)
                .cloned()
                .unwrap_or_else(|| e.class_name.clone());
            let method_name = method_map
                .get(&(e.class_name.clone(), e.method_name.clone()))
                .cloned()
                .unwrap_or_else(|| e.method_name.clone());
            MethodRef::new(class_name, method_name, e.descriptor.clone())
        })
        .collect();
}

fn insert_dead_method(app: &mut AppIr, table: &ApiTable, rng: &mut ChaCha8Rng) {
    if app.classes.is_empty() {
        push_marker_class(app, rng);
        return;
    }
    let idx = rng.gen_range(0..app.classes.len());
    let method = dead_method(app, table, rng);
    app.classes[idx].methods.push(method);
}

fn insert_dead_class(app: &mut AppIr, table: &ApiTable, rng: &mut ChaCha8Rng) {
    let mut class = loop {
        let name = format!("obf/Dead{:08x}", rng.gen::<u32>());
        if app.class(&name).is_none() {
            break ClassIr::new(name);
        }
    };
    for _ in 0..rng.gen_range(1..=3) {
        class.methods.push(dead_method(app, table, rng));
    }
    app.classes.push(class);
}

/// A method nothing calls. When the app has entry points the body can
/// call anything, reachability hides it; without entry points all code
/// counts as live, so the body must stay API-free to leave signatures
/// alone.
fn dead_method(app: &AppIr, table: &ApiTable, rng: &mut ChaCha8Rng) -> MethodIr {
    let mut m = MethodIr::new(format!("dead_{:08x}", rng.gen::<u32>()), "()V");
    let can_call_apis = !app.entry_points.is_empty() && !table.is_empty();
    if can_call_apis {
        let apis = table.methods();
        for _ in 0..rng.gen_range(1..=6) {
            let target = apis[rng.gen_range(0..apis.len())];
            m.calls.push(CallSite {
                target: target.to_string(),
                kind: crate::ir::CallKind::Api,
            });
        }
    } else {
        for _ in 0..rng.gen_range(1..=3) {
            m.calls.push(CallSite::new(format!(
                "void/Sink{:08x};->swallow",
                rng.gen::<u32>()
            )));
        }
    }
    m
}

/// A class that can never contribute a signature: one method, no calls.
/// Safe filler when a structural mutation has nothing to permute.
fn push_marker_class(app: &mut AppIr, rng: &mut ChaCha8Rng) {
    let name = loop {
        let name = format!("obf/Marker{:08x}", rng.gen::<u32>());
        if app.class(&name).is_none() {
            break name;
        }
    };
    let mut class = ClassIr::new(name);
    class.methods.push(MethodIr::new("noop", "()V"));
    app.classes.push(class);
}

fn touch_resources(app: &mut AppIr, rng: &mut ChaCha8Rng) {
    let mut bytes = b"\x89PNG\r\n\x1a\n".to_vec();
    for _ in 0..16 {
        bytes.push(rng.gen());
    }
    app.payloads.push(PayloadFile {
        path: format!("res/wp_{:08x}.png", rng.gen::<u32>()),
        detected_type: FileType::Png,
        bytes,
        embedded_classes: None,
    });
}
