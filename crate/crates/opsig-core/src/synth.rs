//! Seeded generator of synthetic apps. Tests and benchmarks need
//! corpora with realistic shape (call graphs with dead regions, shared
//! API vocabulary, the odd payload) but fully reproducible content;
//! everything here is a pure function of the seed and the API table.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::apitable::ApiTable;
use crate::hash::HashAlg;
use crate::ingest::air;
use crate::ir::{AppIr, CallSite, ClassIr, FileType, MethodIr, MethodRef, PayloadFile};

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    /// Inclusive class count range. Clamped to at least 2 so structural
    /// mutations always have something to permute.
    pub classes: (usize, usize),
    /// Inclusive methods-per-class range.
    pub methods: (usize, usize),
    /// Inclusive calls-per-method range.
    pub calls: (usize, usize),
    /// Probability that a generated call targets the API table rather
    /// than another generated method.
    pub api_fraction: f64,
    /// Probability of promoting one extra method to an entry point.
    pub extra_entry_chance: f64,
    /// Probability of attaching one binary payload.
    pub payload_chance: f64,
}

impl Default for SynthConfig {
    fn default() -> SynthConfig {
        SynthConfig {
            classes: (3, 8),
            methods: (1, 5),
            calls: (0, 8),
            api_fraction: 0.6,
            extra_entry_chance: 0.4,
            payload_chance: 0.25,
        }
    }
}

const DESCRIPTORS: [&str; 5] = ["()V", "(I)V", "()I", "(Ljava/lang/String;)V", "(II)Z"];
const PERMISSIONS: [&str; 5] = [
    "INTERNET",
    "SEND_SMS",
    "READ_CONTACTS",
    "WAKE_LOCK",
    "ACCESS_FINE_LOCATION",
];

/// Generate one app. Same seed, table, config and hash always produce
/// the identical app, id included. Guarantees at least two classes,
/// two methods in the first class, and one entry point.
pub fn random_app(seed: u64, table: &ApiTable, cfg: &SynthConfig, alg: HashAlg) -> AppIr {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let apis = table.methods();

    let n_classes = range_sample(&mut rng, cfg.classes).max(2);
    let mut plan: Vec<(String, Vec<(String, String)>)> = Vec::with_capacity(n_classes);
    for ci in 0..n_classes {
        let floor = if ci == 0 { 2 } else { 1 };
        let n_methods = range_sample(&mut rng, cfg.methods).max(floor);
        let methods = (0..n_methods)
            .map(|mi| {
                let desc = DESCRIPTORS[rng.gen_range(0..DESCRIPTORS.len())];
                (format!("m{mi}"), desc.to_string())
            })
            .collect();
        plan.push((format!("gen/p{seed:x}/C{ci}"), methods));
    }

    let mut app = AppIr::new("0".repeat(32), format!("com.gen.a{seed:x}"));
    for (class_name, methods) in &plan {
        let mut class = ClassIr::new(class_name.clone());
        for (name, desc) in methods {
            let mut method = MethodIr::new(name.clone(), desc.clone());
            for _ in 0..range_sample(&mut rng, cfg.calls) {
                let target = if !apis.is_empty() && rng.gen_bool(cfg.api_fraction) {
                    apis[rng.gen_range(0..apis.len())].to_string()
                } else if rng.gen_bool(0.15) {
                    format!("ext/Lib{};->call", rng.gen_range(0..40))
                } else {
                    let (peer, peer_methods) = &plan[rng.gen_range(0..plan.len())];
                    let (peer_method, _) = &peer_methods[rng.gen_range(0..peer_methods.len())];
                    format!("{peer};->{peer_method}")
                };
                method.calls.push(CallSite::new(target));
            }
            class.methods.push(method);
        }
        app.classes.push(class);
    }

    let first = &plan[0];
    app.entry_points.insert(MethodRef::new(
        first.0.clone(),
        first.1[0].0.clone(),
        first.1[0].1.clone(),
    ));
    if rng.gen_bool(cfg.extra_entry_chance) {
        let (class_name, methods) = &plan[rng.gen_range(0..plan.len())];
        let (name, desc) = &methods[rng.gen_range(0..methods.len())];
        app.entry_points
            .insert(MethodRef::new(class_name.clone(), name.clone(), desc.clone()));
    }

    for perm in PERMISSIONS {
        if rng.gen_bool(0.3) {
            app.declared_permissions.insert(perm.to_string());
        }
    }
    if rng.gen_bool(0.2) {
        app.receivers.push(plan[plan.len() - 1].0.clone());
    }
    if rng.gen_bool(cfg.payload_chance) {
        app.payloads.push(random_payload(&mut rng));
    }

    app.apply_entry_flags();
    app.classify_calls(table);
    app.app_id = air::content_digest(&app, alg);
    app.validate().expect("generated apps are valid");
    app
}

/// `count` independent apps seeded `seed`, `seed + 1`, ...
pub fn random_corpus(
    seed: u64,
    count: usize,
    table: &ApiTable,
    cfg: &SynthConfig,
    alg: HashAlg,
) -> Vec<AppIr> {
    (0..count)
        .map(|i| random_app(seed.wrapping_add(i as u64), table, cfg, alg))
        .collect()
}

fn range_sample(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    if lo >= hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn random_payload(rng: &mut ChaCha8Rng) -> PayloadFile {
    let pick = rng.gen_range(0..3u8);
    let mut bytes: Vec<u8> = match pick {
        0 => b"\x7fELF".to_vec(),
        1 => b"\x89PNG\r\n\x1a\n".to_vec(),
        _ => Vec::new(),
    };
    for _ in 0..rng.gen_range(8..40) {
        bytes.push(rng.gen());
    }
    let (path, detected_type) = match pick {
        0 => (format!("lib/armeabi/libgen{:x}.so", rng.gen::<u16>()), FileType::Elf),
        1 => (format!("res/drawable/icon{:x}.png", rng.gen::<u16>()), FileType::Png),
        _ => (format!("assets/data{:x}.bin", rng.gen::<u16>()), FileType::Unknown),
    };
    PayloadFile {
        path,
        detected_type,
        bytes,
        embedded_classes: None,
    }
}
