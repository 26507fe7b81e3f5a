use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_HEADER: [&str; 4] = ["id", "path", "label", "source"];

/// Ground truth, only ever read by evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalLabel {
    #[serde(rename = "bonafide")]
    BonaFide,
    Attack,
}

impl EvalLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalLabel::BonaFide => "bonafide",
            EvalLabel::Attack => "attack",
        }
    }
}

impl fmt::Display for EvalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bonafide" => Ok(EvalLabel::BonaFide),
            "attack" => Ok(EvalLabel::Attack),
            other => Err(format!(
                "label {other:?} is not one of {{bonafide, attack, \"\"}}"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub id: String,
    pub path: PathBuf,
    pub eval_label: Option<EvalLabel>,
    pub source_tag: String,
}

/// Ordered list of samples with unique ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub schema_version: u32,
    pub records: Vec<SampleRecord>,
}

/// Training-facing record: deliberately has no label field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct UnlabeledRecord {
    pub id: String,
    pub path: PathBuf,
    pub source_tag: String,
}

/// Manifest with labels removed; the only manifest type the training side
/// accepts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnlabeledManifest {
    pub records: Vec<UnlabeledRecord>,
}

impl UnlabeledManifest {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Manifest {
    pub fn new(records: Vec<SampleRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_label(&self, label: EvalLabel) -> usize {
        self.records
            .iter()
            .filter(|r| r.eval_label == Some(label))
            .count()
    }

    /// Drops every label. This is the only way to obtain training input.
    pub fn strip_labels(&self) -> UnlabeledManifest {
        UnlabeledManifest {
            records: self
                .records
                .iter()
                .map(|r| UnlabeledRecord {
                    id: r.id.clone(),
                    path: r.path.clone(),
                    source_tag: r.source_tag.clone(),
                })
                .collect(),
        }
    }

    /// Reads a `id,path,label,source` CSV. Relative paths resolve against the
    /// manifest's directory; every path must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let manifest_err = |detail: String| Error::Manifest {
            path: path.to_path_buf(),
            detail,
        };
        let row_err = |row: usize, detail: String| Error::ManifestRow {
            path: path.to_path_buf(),
            row,
            detail,
        };
        if !path.is_file() {
            return Err(manifest_err("file not found".into()));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| manifest_err(e.to_string()))?;
        let header = reader.headers().map_err(|e| manifest_err(e.to_string()))?.clone();
        if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(manifest_err(format!(
                "header must be exactly {:?}, found {:?}",
                MANIFEST_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        for (i, row) in reader.records().enumerate() {
            // Row numbers count the header as row 1.
            let rownum = i + 2;
            let row = row.map_err(|e| row_err(rownum, e.to_string()))?;
            if row.len() != 4 {
                return Err(row_err(rownum, format!("expected 4 fields, got {}", row.len())));
            }
            let id = row[0].to_string();
            if id.is_empty() {
                return Err(row_err(rownum, "empty id".into()));
            }
            if !seen.insert(id.clone()) {
                return Err(row_err(rownum, format!("duplicate id {id:?}")));
            }
            let raw = PathBuf::from(&row[1]);
            let resolved = if raw.is_absolute() { raw } else { base.join(raw) };
            if !resolved.is_file() {
                return Err(row_err(
                    rownum,
                    format!("image path {} does not exist", resolved.display()),
                ));
            }
            let eval_label = match &row[2] {
                "" => None,
                s => Some(s.parse::<EvalLabel>().map_err(|e| row_err(rownum, e))?),
            };
            records.push(SampleRecord {
                id,
                path: resolved,
                eval_label,
                source_tag: row[3].to_string(),
            });
        }
        Ok(Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            records,
        })
    }

    /// Writes the CSV; paths are made relative to the manifest's directory
    /// when possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(MANIFEST_HEADER)?;
        for r in &self.records {
            let p = r.path.strip_prefix(base).unwrap_or(&r.path);
            w.write_record([
                r.id.as_str(),
                &p.to_string_lossy(),
                r.eval_label.map(EvalLabel::as_str).unwrap_or(""),
                r.source_tag.as_str(),
            ])?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }
}
