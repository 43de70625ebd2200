//! Curated library → upstream project table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::UnknownReason;
use crate::versioncmp::OsFamily;

const BUILTIN: &str = include_str!("../../data/upstream_meta.tsv");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpstreamMetaRecord {
    pub libname: String,
    pub family: OsFamily,
    pub os_package: String,
    pub project: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpstreamProject {
    pub id: String,
    pub source: String,
}

#[derive(Debug, thiserror::Error)]
pub enum MetaError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct MetaTable {
    records: BTreeMap<(String, OsFamily), UpstreamMetaRecord>,
}

impl MetaTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin upstream table")
    }

    pub fn load(path: &Path) -> Result<Self, MetaError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Tab-separated `libname family os_package project source`. A later
    /// record for the same `(libname, family)` is an error.
    pub fn parse(text: &str) -> Result<Self, MetaError> {
        let mut records = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| MetaError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 || f.iter().any(|s| s.is_empty()) {
                return Err(err("expected 5 non-empty tab-separated fields"));
            }
            let family: OsFamily = f[1].parse().unwrap();
            if family == OsFamily::Other {
                return Err(err("family must be debian or redhat"));
            }
            let rec = UpstreamMetaRecord {
                libname: f[0].to_string(),
                family,
                os_package: f[2].to_string(),
                project: f[3].to_string(),
                source: f[4].to_string(),
            };
            if records.insert((rec.libname.clone(), family), rec).is_some() {
                return Err(err("duplicate (libname, family)"));
            }
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, libname: &str, family: OsFamily) -> Option<&UpstreamMetaRecord> {
        self.records.get(&(libname.to_string(), family))
    }

    pub fn records_for<'a>(
        &'a self,
        libname: &'a str,
    ) -> impl Iterator<Item = &'a UpstreamMetaRecord> + 'a {
        self.records.values().filter(move |r| r.libname == libname)
    }

    pub fn records(&self) -> impl Iterator<Item = &UpstreamMetaRecord> {
        self.records.values()
    }
}

/// Upstream project of a normalized library name. Records for different
/// families are expected to agree; Red Hat is consulted first.
pub fn resolve_upstream_project(
    libname: &str,
    table: &MetaTable,
) -> Result<UpstreamProject, UnknownReason> {
    [OsFamily::Redhat, OsFamily::Debian]
        .into_iter()
        .find_map(|f| table.get(libname, f))
        .map(|r| UpstreamProject {
            id: r.project.clone(),
            source: r.source.clone(),
        })
        .ok_or(UnknownReason::NoMetadata)
}
