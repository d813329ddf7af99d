//! Reachability over the internal call graph, used to keep dead code
//! out of signatures.
//!
//! Call targets carry no descriptor, so an internal edge goes to every
//! method whose class and name match: overloads are all reachable if
//! any of them is named. API calls never create edges. An app that
//! declares no entry points gets everything marked live, since there is
//! nothing to anchor a liveness argument on.

use std::collections::{HashMap, HashSet};

use crate::ir::{AppIr, CallKind, ClassIr, MethodIr, MethodRef};

#[derive(Debug, Clone)]
pub struct ReachabilitySet {
    live: HashSet<MethodRef>,
    everything: bool,
}

impl ReachabilitySet {
    /// The trivial set that treats every method as live.
    pub fn all() -> ReachabilitySet {
        ReachabilitySet {
            live: HashSet::new(),
            everything: true,
        }
    }

    pub fn is_live(&self, class_name: &str, method: &MethodIr) -> bool {
        self.everything
            || self.live.contains(&MethodRef::new(
                class_name.to_string(),
                method.name.clone(),
                method.descriptor.clone(),
            ))
    }

    pub fn contains(&self, r: &MethodRef) -> bool {
        self.everything || self.live.contains(r)
    }

    /// A class is live when any of its methods is.
    pub fn is_class_live(&self, class: &ClassIr) -> bool {
        self.everything
            || class
                .methods
                .iter()
                .any(|m| self.is_live(&class.name, m))
    }

    /// Number of explicitly marked methods; meaningless for `all()`.
    pub fn marked_count(&self) -> usize {
        self.live.len()
    }

    pub fn covers_everything(&self) -> bool {
        self.everything
    }
}

/// Forward closure from the app's entry points over internal edges.
pub fn compute_reachability(app: &AppIr) -> ReachabilitySet {
    if app.entry_points.is_empty() {
        return ReachabilitySet::all();
    }

    // (class, name) -> all matching methods, descriptors included.
    let mut by_name: HashMap<(&str, &str), Vec<MethodRef>> = HashMap::new();
    for class in &app.classes {
        for method in &class.methods {
            by_name
                .entry((class.name.as_str(), method.name.as_str()))
                .or_default()
                .push(MethodRef::new(
                    class.name.clone(),
                    method.name.clone(),
                    method.descriptor.clone(),
                ));
        }
    }

    let mut live: HashSet<MethodRef> = HashSet::new();
    let mut worklist: Vec<MethodRef> = Vec::new();
    for entry in &app.entry_points {
        if live.insert(entry.clone()) {
            worklist.push(entry.clone());
        }
    }

    while let Some(current) = worklist.pop() {
        let Some(method) = app.method(&current) else {
            continue;
        };
        for call in &method.calls {
            if call.kind != CallKind::Internal {
                continue;
            }
            let Some((class_name, method_name)) = call.split_target() else {
                continue;
            };
            let Some(overloads) = by_name.get(&(class_name, method_name)) else {
                continue;
            };
            for target in overloads {
                if !live.contains(target) {
                    live.insert(target.clone());
                    worklist.push(target.clone());
                }
            }
        }
    }

    ReachabilitySet {
        live,
        everything: false,
    }
}
