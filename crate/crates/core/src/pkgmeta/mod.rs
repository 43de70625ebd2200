//! Wheel metadata and Python dependency resolution.

pub mod marker;
mod resolve;

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Cursor, Read};

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostics, Stage};
use crate::versioncmp::{PyVersion, VersionClause};

pub use resolve::{
    resolve_python_dep_tree, DirRepository, MemRepository, PythonDepTree, RepoError, Resolution,
    ResolveError, WheelRepository,
};

#[derive(Debug, thiserror::Error)]
pub enum MetadataError {
    #[error("not a wheel: {0}")]
    NotAWheel(String),
    #[error("malformed METADATA: {0}")]
    MalformedMetadata(String),
    #[error("line {line}: malformed requirement {text:?}")]
    MalformedSpecifier { line: usize, text: String },
}

/// Lowercase, with runs of `-`, `_` and `.` collapsed to a single `-`.
pub fn normalize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut sep = false;
    for c in name.trim().chars() {
        if matches!(c, '-' | '_' | '.') {
            sep = true;
        } else {
            if sep && !out.is_empty() {
                out.push('-');
            }
            sep = false;
            out.push(c.to_ascii_lowercase());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PackageId {
    pub name: String,
    pub version: String,
}

impl PackageId {
    pub fn new(name: &str, version: &str) -> Self {
        PackageId {
            name: normalize_name(name),
            version: version.trim().to_string(),
        }
    }
}

impl fmt::Display for PackageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.name, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencySpec {
    pub name: String,
    pub extras: Vec<String>,
    pub predicate: Vec<VersionClause>,
}

impl DependencySpec {
    pub fn admits(&self, v: &PyVersion) -> bool {
        crate::versioncmp::satisfies(v, &self.predicate)
    }
}

impl fmt::Display for DependencySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        let clauses: Vec<String> = self.predicate.iter().map(|c| c.to_string()).collect();
        f.write_str(&clauses.join(","))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub strict: bool,
    /// Extras requested for this distribution, already normalized.
    pub extras: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct WheelMetadata {
    pub id: PackageId,
    pub deps: Vec<DependencySpec>,
    /// Requirements whose marker could not be decided.
    pub unevaluable_markers: usize,
    pub diagnostics: Diagnostics,
}

/// Every member of a wheel, in archive order. Directories are skipped.
pub fn wheel_members(wheel: &[u8]) -> Result<Vec<(String, Vec<u8>)>, MetadataError> {
    let mut zip = zip::ZipArchive::new(Cursor::new(wheel))
        .map_err(|e| MetadataError::NotAWheel(e.to_string()))?;
    let mut out = Vec::with_capacity(zip.len());
    for i in 0..zip.len() {
        let mut f = zip
            .by_index(i)
            .map_err(|e| MetadataError::NotAWheel(e.to_string()))?;
        if f.is_dir() {
            continue;
        }
        let name = f.name().to_string();
        let mut buf = Vec::with_capacity(f.size() as usize);
        f.read_to_end(&mut buf)
            .map_err(|e| MetadataError::NotAWheel(format!("{name}: {e}")))?;
        out.push((name, buf));
    }
    Ok(out)
}

fn metadata_member(wheel: &[u8]) -> Result<String, MetadataError> {
    let mut zip = zip::ZipArchive::new(Cursor::new(wheel))
        .map_err(|e| MetadataError::NotAWheel(e.to_string()))?;
    let names: Vec<String> = zip
        .file_names()
        .filter(|n| {
            n.split_once('/')
                .is_some_and(|(dir, file)| dir.ends_with(".dist-info") && file == "METADATA")
        })
        .map(str::to_string)
        .collect();
    let name = match names.as_slice() {
        [one] => one.clone(),
        [] => {
            return Err(MetadataError::NotAWheel(
                "no .dist-info/METADATA member".into(),
            ))
        }
        _ => {
            return Err(MetadataError::NotAWheel(
                "several .dist-info/METADATA members".into(),
            ))
        }
    };
    let mut f = zip
        .by_name(&name)
        .map_err(|e| MetadataError::NotAWheel(e.to_string()))?;
    let mut text = String::new();
    f.read_to_string(&mut text)
        .map_err(|e| MetadataError::MalformedMetadata(e.to_string()))?;
    Ok(text)
}

pub fn parse_wheel_metadata(
    wheel: &[u8],
    opts: &ParseOptions,
) -> Result<WheelMetadata, MetadataError> {
    parse_metadata_text(&metadata_member(wheel)?, opts)
}

/// Header block of an RFC-822 style document as `(line, name, value)`.
fn headers(text: &str) -> Vec<(usize, String, String)> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            break;
        }
        if line.starts_with([' ', '\t']) {
            if let Some(last) = out.last_mut() {
                last.2.push(' ');
                last.2.push_str(line.trim());
            }
            continue;
        }
        if let Some((k, v)) = line.split_once(':') {
            out.push((i + 1, k.trim().to_ascii_lowercase(), v.trim().to_string()));
        }
    }
    out
}

pub fn parse_metadata_text(
    text: &str,
    opts: &ParseOptions,
) -> Result<WheelMetadata, MetadataError> {
    let hdrs = headers(text);
    let get = |key: &str| {
        hdrs.iter()
            .find(|(_, k, v)| k == key && !v.is_empty())
            .map(|(_, _, v)| v.clone())
    };
    let name =
        get("name").ok_or_else(|| MetadataError::MalformedMetadata("missing Name".into()))?;
    let version =
        get("version").ok_or_else(|| MetadataError::MalformedMetadata("missing Version".into()))?;
    if version.parse::<PyVersion>().is_err() {
        return Err(MetadataError::MalformedMetadata(format!(
            "bad Version {version:?}"
        )));
    }
    let id = PackageId::new(&name, &version);
    if id.name.is_empty() {
        return Err(MetadataError::MalformedMetadata("empty Name".into()));
    }

    let mut deps = Vec::new();
    let mut diags = Diagnostics::new();
    let mut unevaluable = 0;
    for (line, _, value) in hdrs.iter().filter(|(_, k, _)| k == "requires-dist") {
        let req = match parse_requirement(value) {
            Ok(r) => r,
            Err(()) => {
                if opts.strict {
                    return Err(MetadataError::MalformedSpecifier {
                        line: *line,
                        text: value.clone(),
                    });
                }
                diags.push(
                    Stage::Metadata,
                    "malformed-specifier",
                    format!("{id}: line {line}: {value:?} skipped"),
                );
                continue;
            }
        };
        if req.direct_url {
            diags.push(
                Stage::Metadata,
                "direct-reference",
                format!("{id}: {:?} pins a URL, treated as any version", value),
            );
        }
        if let Some(m) = &req.marker {
            match marker::evaluate(m, &opts.extras) {
                Some(marker::Tri::True) => {}
                Some(marker::Tri::False) => continue,
                Some(marker::Tri::Unknown) | None => {
                    unevaluable += 1;
                    if opts.strict {
                        diags.push(
                            Stage::Metadata,
                            "marker-skipped",
                            format!("{id}: {value:?} has an unevaluable marker"),
                        );
                        continue;
                    }
                }
            }
        }
        deps.push(req.spec);
    }
    Ok(WheelMetadata {
        id,
        deps,
        unevaluable_markers: unevaluable,
        diagnostics: diags,
    })
}

struct Requirement {
    spec: DependencySpec,
    marker: Option<String>,
    direct_url: bool,
}

fn parse_requirement(line: &str) -> Result<Requirement, ()> {
    let (body, marker) = match line.split_once(';') {
        Some((b, m)) => (b.trim(), Some(m.trim().to_string())),
        None => (line.trim(), None),
    };
    let name_end = body
        .find(|c: char| !(c.is_ascii_alphanumeric() || "-_.".contains(c)))
        .unwrap_or(body.len());
    let raw_name = &body[..name_end];
    if raw_name.is_empty() || !raw_name.starts_with(|c: char| c.is_ascii_alphanumeric()) {
        return Err(());
    }
    let mut rest = body[name_end..].trim_start();

    let mut extras = Vec::new();
    if let Some(r) = rest.strip_prefix('[') {
        let close = r.find(']').ok_or(())?;
        for e in r[..close].split(',') {
            let e = e.trim();
            if e.is_empty() {
                continue;
            }
            if !e
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            {
                return Err(());
            }
            extras.push(normalize_name(e));
        }
        rest = r[close + 1..].trim_start();
    }

    let mut direct_url = false;
    let spec_text = if let Some(url) = rest.strip_prefix('@') {
        if url.trim().is_empty() {
            return Err(());
        }
        direct_url = true;
        ""
    } else if let Some(r) = rest.strip_prefix('(') {
        let inner = r.strip_suffix(')').ok_or(())?;
        inner.trim()
    } else {
        rest
    };

    let mut predicate = Vec::new();
    if !spec_text.is_empty() {
        for clause in spec_text.split(',') {
            predicate.push(clause.trim().parse::<VersionClause>().map_err(|_| ())?);
        }
    }
    Ok(Requirement {
        spec: DependencySpec {
            name: normalize_name(raw_name),
            extras,
            predicate,
        },
        marker,
        direct_url,
    })
}
