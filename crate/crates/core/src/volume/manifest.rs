//! Tab-separated dataset listing: `path<TAB>label<TAB>provenance` per line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::labels::{Label, Provenance};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Option<Label>,
    pub provenance: Provenance,
}

pub fn render(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let label = e.label.map_or("unlabeled", Label::as_str);
        writeln!(out, "{}\t{}\t{}", e.path.display(), label, e.provenance.as_str()).expect("write to string");
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |what: &str| Error::Config(format!("manifest line {}: {what}", n + 1));
        if fields.len() != 3 {
            return Err(bad(&format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let label = match fields[1] {
            "unlabeled" => None,
            s => Some(s.parse::<Label>().map_err(|_| bad(&format!("unknown label {s:?}")))?),
        };
        let provenance = fields[2]
            .parse::<Provenance>()
            .map_err(|_| bad(&format!("unknown provenance {:?}", fields[2])))?;
        entries.push(ManifestEntry {
            path: PathBuf::from(fields[0]),
            label,
            provenance,
        });
    }
    Ok(entries)
}

pub fn read(path: &Path) -> Result<Vec<ManifestEntry>> {
    parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    std::fs::write(path, render(entries)).map_err(|e| Error::io(path, e))
}
