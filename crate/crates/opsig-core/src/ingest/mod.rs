//! Front ends that turn on-disk inputs into `AppIr`.

pub mod air;
pub mod magic;
pub mod smali;

use std::io::Read;
use std::path::Path;

use crate::apitable::ApiTable;
use crate::error::{Error, Result};
use crate::hash::HashAlg;
use crate::ir::AppIr;

/// What ingest skipped or worked around, for operator visibility.
#[derive(Debug, Default, Clone)]
pub struct IngestStats {
    pub smali_files: usize,
    pub payload_files: usize,
    /// Plain opcode lines outside the accepted subset.
    pub ignored_lines: usize,
    /// Directives and constructs that were skipped but looked relevant.
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct Ingested {
    pub app: AppIr,
    pub stats: IngestStats,
}

/// Ingest anything we understand: a bundle directory, a `.tar` of a
/// bundle, or an AIR `.json`/`.air` document.
pub fn ingest_path(path: &Path, table: &ApiTable, alg: HashAlg) -> Result<Ingested> {
    let meta = std::fs::metadata(path)?;
    if meta.is_dir() {
        return smali::parse_bundle(read_bundle_dir(path)?, table, alg);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("tar") => smali::parse_bundle(read_bundle_tar(path)?, table, alg),
        _ => air::from_json(&std::fs::read_to_string(path)?, table),
    }
}

/// Collect every regular file under `dir`, keyed by `/`-separated
/// relative path.
pub fn read_bundle_dir(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    collect_files(dir, String::new(), &mut files)?;
    Ok(files)
}

fn collect_files(dir: &Path, prefix: String, out: &mut Vec<(String, Vec<u8>)>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let rel = if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}/{name}")
        };
        let ty = entry.file_type()?;
        if ty.is_dir() {
            collect_files(&entry.path(), rel, out)?;
        } else if ty.is_file() {
            out.push((rel, std::fs::read(entry.path())?));
        }
    }
    Ok(())
}

/// Read a bundle shipped as an uncompressed tar archive.
pub fn read_bundle_tar(path: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let file = std::fs::File::open(path)?;
    let mut archive = tar::Archive::new(file);
    let mut files = Vec::new();
    for entry in archive
        .entries()
        .map_err(|e| Error::Validation(format!("not a tar archive: {e}")))?
    {
        let mut entry = entry.map_err(|e| Error::Validation(format!("bad tar entry: {e}")))?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let name = entry
            .path()
            .map_err(|e| Error::Validation(format!("bad tar path: {e}")))?
            .to_string_lossy()
            .trim_start_matches("./")
            .to_string();
        if name.is_empty() {
            continue;
        }
        let mut bytes = Vec::new();
        entry.read_to_end(&mut bytes)?;
        files.push((name, bytes));
    }
    Ok(files)
}
