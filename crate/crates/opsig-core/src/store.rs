//! Persistent signature store: an append-only JSONL log of signed
//! bundles plus a replayed label log and derived index sidecars.
//!
//! The record log is the source of truth. Index files exist so an
//! operator can grep them, and carry a byte-length watermark naming the
//! log state they were derived from; any mismatch on open and they are
//! rebuilt from the log. A torn trailing record (crash mid-append) is
//! dropped on open with a warning.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::is_hex32;
use crate::signature::SignatureBundle;

/// Classification of a stored app. Later labels only override earlier
/// ones of lower rank, so `malicious` sticks once applied.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    #[default]
    Unknown,
    Benign,
    Malicious,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Unknown => "unknown",
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Label> {
        match s {
            "benign" => Ok(Label::Benign),
            "malicious" => Ok(Label::Malicious),
            "unknown" => Ok(Label::Unknown),
            other => Err(Error::Validation(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoreRecord {
    pub bundle: SignatureBundle,
    pub ingest_time: u64,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_source: Option<String>,
}

/// What one records.jsonl line holds. Labels live in their own log.
#[derive(Debug, Serialize, Deserialize)]
struct DiskRecord {
    bundle: SignatureBundle,
    ingest_time: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LabelLine {
    app_id: String,
    label: Label,
    source: String,
}

#[derive(Debug, Default, Serialize)]
pub struct LabelImport {
    pub lines: usize,
    pub applied: usize,
    /// Label lines for apps not (yet) in the store. They are kept and
    /// replay against future inserts.
    pub unmatched: Vec<String>,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    records: Vec<StoreRecord>,
    by_app_id: BTreeMap<String, usize>,
    by_lev1: BTreeMap<String, Vec<String>>,
    by_lev2: BTreeMap<String, Vec<String>>,
    /// Labels seen for apps that are not stored yet.
    pending_labels: BTreeMap<String, (Label, String)>,
    /// Anything worth telling the operator about, drained by the caller.
    pub warnings: Vec<String>,
}

impl Store {
    /// Open (or create) a store directory and replay its logs.
    pub fn open(dir: &Path) -> Result<Store> {
        std::fs::create_dir_all(dir.join("index"))?;
        let mut store = Store {
            dir: dir.to_path_buf(),
            records: Vec::new(),
            by_app_id: BTreeMap::new(),
            by_lev1: BTreeMap::new(),
            by_lev2: BTreeMap::new(),
            pending_labels: BTreeMap::new(),
            warnings: Vec::new(),
        };
        store.replay_records()?;
        store.replay_labels()?;
        store.refresh_indexes_if_stale()?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, app_id: &str) -> Option<&StoreRecord> {
        self.by_app_id.get(app_id).map(|&i| &self.records[i])
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn label_of(&self, app_id: &str) -> Label {
        self.get(app_id).map(|r| r.label).unwrap_or_default()
    }

    /// Stored apps whose bundle has this application digest. Sorted.
    pub fn apps_with_lev1(&self, digest: &str) -> &[String] {
        self.by_lev1.get(digest).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Stored apps containing a class with this digest. Sorted.
    pub fn apps_with_lev2(&self, digest: &str) -> &[String] {
        self.by_lev2.get(digest).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Application digests ranked by how many stored apps share them:
    /// count descending, digest ascending.
    pub fn query_lev1_frequency(&self) -> Vec<(String, usize)> {
        let mut freq: Vec<(String, usize)> = self
            .by_lev1
            .iter()
            .map(|(digest, apps)| (digest.clone(), apps.len()))
            .collect();
        freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        freq
    }

    /// Append one signed bundle. Fails without touching anything if the
    /// app is already stored.
    pub fn insert(&mut self, bundle: SignatureBundle) -> Result<()> {
        if self.by_app_id.contains_key(&bundle.app_id) {
            return Err(Error::DuplicateApp(bundle.app_id));
        }
        let disk = DiskRecord {
            bundle,
            ingest_time: now_unix(),
        };
        let line = serde_json::to_string(&disk)?;
        append_line(&self.records_path(), &line)?;
        self.attach(disk);
        self.write_indexes()?;
        Ok(())
    }

    /// Parse a label document (`app_id TAB benign|malicious TAB source`
    /// per line) and apply it. The whole document is validated before
    /// anything is persisted.
    pub fn import_labels(&mut self, document: &str) -> Result<LabelImport> {
        let mut parsed: Vec<LabelLine> = Vec::new();
        for (idx, raw) in document.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(app_id), Some(label), Some(source), None) = (
                fields.next(),
                fields.next(),
                fields.next(),
                fields.next(),
            ) else {
                return Err(Error::parse(
                    lineno,
                    "expected `<app_id>\\t<benign|malicious>\\t<source>`",
                ));
            };
            if !is_hex32(app_id) {
                return Err(Error::parse(
                    lineno,
                    format!("`{app_id}` is not a 32-char hex app id"),
                ));
            }
            let label: Label = label
                .parse()
                .map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
            if label == Label::Unknown {
                return Err(Error::parse(lineno, "label must be benign or malicious"));
            }
            parsed.push(LabelLine {
                app_id: app_id.to_string(),
                label,
                source: source.to_string(),
            });
        }

        let mut report = LabelImport {
            lines: parsed.len(),
            ..Default::default()
        };
        let path = self.labels_path();
        for entry in parsed {
            append_line(&path, &serde_json::to_string(&entry)?)?;
            if self.apply_label(&entry) {
                report.applied += 1;
            } else {
                report.unmatched.push(entry.app_id.clone());
            }
        }
        report.unmatched.sort();
        report.unmatched.dedup();
        Ok(report)
    }

    /// True if the label landed on a stored record.
    fn apply_label(&mut self, entry: &LabelLine) -> bool {
        match self.by_app_id.get(&entry.app_id) {
            Some(&i) => {
                let record = &mut self.records[i];
                if entry.label > record.label {
                    record.label = entry.label;
                    record.label_source = Some(entry.source.clone());
                }
                true
            }
            None => {
                let slot = self
                    .pending_labels
                    .entry(entry.app_id.clone())
                    .or_insert((Label::Unknown, String::new()));
                if entry.label > slot.0 {
                    *slot = (entry.label, entry.source.clone());
                }
                false
            }
        }
    }

    fn attach(&mut self, disk: DiskRecord) {
        let app_id = disk.bundle.app_id.clone();
        let lev1 = disk.bundle.lev1.clone();
        let mut record = StoreRecord {
            bundle: disk.bundle,
            ingest_time: disk.ingest_time,
            label: Label::Unknown,
            label_source: None,
        };
        if let Some((label, source)) = self.pending_labels.remove(&app_id) {
            record.label = label;
            record.label_source = Some(source);
        }

        insert_sorted(self.by_lev1.entry(lev1).or_default(), &app_id);
        for class in &record.bundle.classes {
            insert_sorted(self.by_lev2.entry(class.lev2.clone()).or_default(), &app_id);
        }
        self.by_app_id.insert(app_id, self.records.len());
        self.records.push(record);
    }

    fn replay_records(&mut self) -> Result<()> {
        let path = self.records_path();
        let Ok(text) = std::fs::read_to_string(&path) else {
            return Ok(());
        };
        let mut good_bytes = 0usize;
        let mut torn = false;
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        for (idx, line) in lines.iter().enumerate() {
            let body = line.trim_end_matches('\n');
            if body.is_empty() {
                good_bytes += line.len();
                continue;
            }
            match serde_json::from_str::<DiskRecord>(body) {
                Ok(disk) => {
                    if self.by_app_id.contains_key(&disk.bundle.app_id) {
                        return Err(Error::Store(format!(
                            "records.jsonl line {}: duplicate app {}",
                            idx + 1,
                            disk.bundle.app_id
                        )));
                    }
                    self.attach(disk);
                    good_bytes += line.len();
                }
                Err(e) => {
                    if idx + 1 == lines.len() {
                        torn = true;
                        self.warnings.push(format!(
                            "dropped torn trailing record (line {}): {e}",
                            idx + 1
                        ));
                    } else {
                        return Err(Error::Store(format!(
                            "records.jsonl line {} is corrupt: {e}",
                            idx + 1
                        )));
                    }
                }
            }
        }
        if torn {
            let keep = text.as_bytes()[..good_bytes].to_vec();
            std::fs::write(&path, keep)?;
        }
        Ok(())
    }

    fn replay_labels(&mut self) -> Result<()> {
        let Ok(text) = std::fs::read_to_string(self.labels_path()) else {
            return Ok(());
        };
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: LabelLine = serde_json::from_str(line).map_err(|e| {
                Error::Store(format!("labels.jsonl line {} is corrupt: {e}", idx + 1))
            })?;
            self.apply_label(&entry);
        }
        Ok(())
    }

    fn records_path(&self) -> PathBuf {
        self.dir.join("records.jsonl")
    }

    fn labels_path(&self) -> PathBuf {
        self.dir.join("labels.jsonl")
    }

    fn index_path(&self, name: &str) -> PathBuf {
        self.dir.join("index").join(name)
    }

    fn records_len_on_disk(&self) -> u64 {
        std::fs::metadata(self.records_path())
            .map(|m| m.len())
            .unwrap_or(0)
    }

    fn refresh_indexes_if_stale(&mut self) -> Result<()> {
        let want = format!("#records={}\n", self.records_len_on_disk());
        let fresh = ["lev1.idx", "lev2.idx"].iter().all(|name| {
            std::fs::read_to_string(self.index_path(name))
                .map(|text| text.starts_with(&want))
                .unwrap_or(false)
        });
        if !fresh {
            self.write_indexes()?;
        }
        Ok(())
    }

    fn write_indexes(&self) -> Result<()> {
        let watermark = self.records_len_on_disk();
        write_index(&self.index_path("lev1.idx"), watermark, &self.by_lev1)?;
        write_index(&self.index_path("lev2.idx"), watermark, &self.by_lev2)?;
        Ok(())
    }
}

fn write_index(path: &Path, watermark: u64, map: &BTreeMap<String, Vec<String>>) -> Result<()> {
    let mut out = format!("#records={watermark}\n");
    for (digest, apps) in map {
        out.push_str(digest);
        out.push('\t');
        out.push_str(&apps.join(","));
        out.push('\n');
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, out)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn insert_sorted(v: &mut Vec<String>, item: &str) {
    if let Err(pos) = v.binary_search_by(|x| x.as_str().cmp(item)) {
        v.insert(pos, item.to_string());
    }
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    file.write_all(line.as_bytes())?;
    file.write_all(b"\n")?;
    file.sync_data()?;
    Ok(())
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
