//! Curated vulnerability records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::versioncmp::{validate_os_version, OsFamily, UpstreamRange};

/// Fix state of one OS package in one distribution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OsFix {
    pub family: OsFamily,
    /// Distribution id, or `*` for every distribution of the family.
    pub distro: String,
    pub package: String,
    /// First fixed package version.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<String>,
    /// The distribution never shipped the vulnerable code.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub not_affected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnRecord {
    pub cve: String,
    pub project: String,
    /// Function names; shell-style globs allowed (`sqlite3_*printf`).
    pub symbols: Vec<String>,
    /// Disjunction of ranges, each a conjunction like `>=7.46.0 && <8.5.0`.
    pub upstream_ranges: Vec<String>,
    #[serde(default)]
    pub os_fixes: Vec<OsFix>,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("{cve}: {msg}")]
    Invalid { cve: String, msg: String },
    #[error("{path}: {msg}")]
    Load { path: String, msg: String },
}

/// A record with its predicates parsed.
#[derive(Debug, Clone)]
pub struct CompiledRecord {
    pub record: VulnRecord,
    pub ranges: Vec<UpstreamRange>,
    pub patterns: Vec<glob::Pattern>,
}

impl CompiledRecord {
    pub fn compile(record: VulnRecord) -> Result<Self, RecordError> {
        let bad = |msg: String| RecordError::Invalid {
            cve: record.cve.clone(),
            msg,
        };
        if record.cve.is_empty() || record.project.is_empty() {
            return Err(bad("empty cve or project".into()));
        }
        if record.symbols.is_empty() {
            return Err(bad("no vulnerable symbols".into()));
        }
        let patterns = record
            .symbols
            .iter()
            .map(|s| glob::Pattern::new(s).map_err(|e| bad(format!("symbol {s:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let ranges = record
            .upstream_ranges
            .iter()
            .map(|r| {
                let parsed: UpstreamRange =
                    r.parse().map_err(|e| bad(format!("range {r:?}: {e}")))?;
                if parsed.clauses.is_empty() {
                    return Err(bad(format!("empty range {r:?}")));
                }
                Ok(parsed)
            })
            .collect::<Result<Vec<_>, _>>()?;
        for fix in &record.os_fixes {
            match (&fix.fixed, fix.not_affected) {
                (Some(v), false) => {
                    validate_os_version(fix.family, v)
                        .map_err(|e| bad(format!("fix {v:?}: {e}")))?;
                }
                (None, true) => {}
                _ => {
                    return Err(bad(format!(
                        "{}: exactly one of fixed / not_affected",
                        fix.package
                    )))
                }
            }
        }
        Ok(Self {
            record,
            ranges,
            patterns,
        })
    }

    pub fn cve(&self) -> &str {
        &self.record.cve
    }

    pub fn matches_symbol(&self, name: &str) -> bool {
        self.patterns.iter().any(|p| p.matches(name))
    }

    pub fn upstream_vulnerable(&self, version: &str) -> bool {
        self.ranges.iter().any(|r| r.contains(version))
    }

    pub fn upstream_ambiguous(&self, version: &str) -> bool {
        self.ranges.iter().any(|r| r.is_ambiguous_for(version))
    }

    /// The fix entry for a package in `family/distro`, exact distro first.
    pub fn os_fix(&self, family: OsFamily, distro: &str, package: &str) -> Option<&OsFix> {
        let candidates = || {
            self.record
                .os_fixes
                .iter()
                .filter(move |f| f.family == family && f.package == package)
        };
        candidates()
            .find(|f| f.distro == distro)
            .or_else(|| candidates().find(|f| f.distro == "*"))
    }
}

/// Records sorted by CVE id.
#[derive(Debug, Clone, Default)]
pub struct VulnDb {
    pub records: Vec<CompiledRecord>,
}

impl VulnDb {
    pub fn new(records: impl IntoIterator<Item = VulnRecord>) -> Result<Self, RecordError> {
        let mut records = records
            .into_iter()
            .map(CompiledRecord::compile)
            .collect::<Result<Vec<_>, _>>()?;
        records.sort_by(|a, b| a.record.cve.cmp(&b.record.cve));
        Ok(Self { records })
    }

    /// Every `CVE-*.json` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, RecordError> {
        let load = |path: &Path, msg: String| RecordError::Load {
            path: path.display().to_string(),
            msg,
        };
        let mut out = Vec::new();
        let entries = std::fs::read_dir(dir).map_err(|e| load(dir, e.to_string()))?;
        for e in entries {
            let p = e.map_err(|e| load(dir, e.to_string()))?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if !(name.starts_with("CVE-") && name.ends_with(".json")) {
                continue;
            }
            let text = std::fs::read_to_string(&p).map_err(|e| load(&p, e.to_string()))?;
            let rec: VulnRecord =
                serde_json::from_str(&text).map_err(|e| load(&p, e.to_string()))?;
            out.push(rec);
        }
        Self::new(out)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn for_project<'a>(
        &'a self,
        project: &'a str,
    ) -> impl Iterator<Item = &'a CompiledRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.record.project == project)
    }
}
