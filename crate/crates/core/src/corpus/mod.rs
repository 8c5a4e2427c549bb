//! Source-tree scanning, C-family function extraction and CVE label joins.

pub(crate) mod extract;
mod labels;

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{Error, Result};

pub use extract::{extract_functions, FileExtraction};
pub use labels::{load_cve_labels, merge_cve_labels, parse_cve_labels, CveLabelEntry, LabelMergeReport};

/// Default suffixes treated as C-family sources.
pub const DEFAULT_EXTENSIONS: &[&str] = &[".c", ".cc", ".cpp", ".cxx", ".h", ".hh", ".hpp"];

/// One extracted function definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub id: u64,
    pub name: String,
    pub file_path: String,
    pub line_start: usize,
    pub line_end: usize,
    pub body: String,
    pub param_count: usize,
    pub label: u8,
}

/// A non-fatal problem found while scanning or extracting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractWarning {
    pub file_path: String,
    pub line: usize,
    pub message: String,
}

/// Records for a whole tree plus everything that went wrong along the way.
#[derive(Debug, Clone, Default)]
pub struct CorpusExtraction {
    pub records: Vec<FunctionRecord>,
    pub warnings: Vec<ExtractWarning>,
}

/// Lists files under `root` whose name ends with one of `extensions`.
///
/// Paths are returned relative to `root`, `/`-separated and sorted.
/// An unreadable root is fatal; unreadable entries below it are logged and skipped.
pub fn scan_sources(root: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(root).map_err(|e| {
        Error::Config(format!("source root {} is not readable: {e}", root.display()))
    })?;
    if !meta.is_dir() {
        return Err(Error::Config(format!(
            "source root {} is not a directory",
            root.display()
        )));
    }
    fs::read_dir(root).map_err(|e| {
        Error::Config(format!("source root {} is not readable: {e}", root.display()))
    })?;

    let mut found: Vec<String> = Vec::new();
    for entry in WalkDir::new(root).follow_links(false) {
        let entry = match entry {
            Ok(entry) => entry,
            Err(err) => {
                warn!("skipping unreadable entry: {err}");
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        if !extensions.iter().any(|ext| name.ends_with(ext)) {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else {
            continue;
        };
        found.push(relative_key(rel));
    }
    found.sort();
    Ok(found.into_iter().map(PathBuf::from).collect())
}

fn relative_key(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Scans `root`, extracts every function and assigns ids in (file_path, line_start) order.
pub fn extract_corpus(root: &Path, extensions: &[&str]) -> Result<CorpusExtraction> {
    let files = scan_sources(root, extensions)?;
    let mut out = CorpusExtraction::default();
    for rel in files {
        let key = relative_key(&rel);
        let bytes = match fs::read(root.join(&rel)) {
            Ok(bytes) => bytes,
            Err(err) => {
                warn!("skipping unreadable file {key}: {err}");
                out.warnings.push(ExtractWarning {
                    file_path: key,
                    line: 0,
                    message: format!("unreadable: {err}"),
                });
                continue;
            }
        };
        let text = String::from_utf8_lossy(&bytes);
        let file = extract_functions(&text, &key);
        out.records.extend(file.records);
        out.warnings.extend(file.warnings);
    }
    out.records
        .sort_by(|a, b| (&a.file_path, a.line_start).cmp(&(&b.file_path, b.line_start)));
    for (i, rec) in out.records.iter_mut().enumerate() {
        rec.id = i as u64;
    }
    Ok(out)
}

pub fn write_records_jsonl(path: &Path, records: &[FunctionRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<FunctionRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FunctionRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: bad function record: {e}", path.display(), lineno + 1))
        })?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_sorts_and_filters() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.c"), "").unwrap();
        fs::write(dir.path().join("a.c"), "").unwrap();
        fs::write(dir.path().join("a.txt"), "").unwrap();
        let got = scan_sources(dir.path(), &[".c"]).unwrap();
        assert_eq!(got, vec![PathBuf::from("a.c"), PathBuf::from("b.c")]);
    }

    #[test]
    fn scan_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(scan_sources(dir.path(), &[".c"]).unwrap().is_empty());
    }

    #[test]
    fn scan_nested() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("src")).unwrap();
        fs::write(dir.path().join("src/x.cc"), "").unwrap();
        fs::write(dir.path().join("src/y.c"), "").unwrap();
        let got = scan_sources(dir.path(), &[".cc"]).unwrap();
        assert_eq!(got, vec![PathBuf::from("src/x.cc")]);
    }

    #[test]
    fn scan_missing_root_is_config_error() {
        let err = scan_sources(Path::new("/definitely/not/here"), &[".c"]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        let recs = vec![FunctionRecord {
            id: 0,
            name: "f".into(),
            file_path: "a.c".into(),
            line_start: 1,
            line_end: 3,
            body: "int f(void) {\n\t\"}\"\n}".into(),
            param_count: 0,
            label: 1,
        }];
        write_records_jsonl(&path, &recs).unwrap();
        assert_eq!(read_records_jsonl(&path).unwrap(), recs);
    }
}
