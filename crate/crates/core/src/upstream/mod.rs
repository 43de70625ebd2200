//! Provenance of every binary in a dependency tree: OS package via the hash
//! database, otherwise the upstream release read out of the binary itself.

mod extract;
mod meta;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

pub use extract::{
    extract_upstream_version, printable_runs, scan_strings, version_from_match, ExtractError,
    ExtractorSpec, ProbeAdapter, Registry, RegistryError, Strategy,
};
pub use meta::{
    resolve_upstream_project, MetaError, MetaTable, UpstreamMetaRecord, UpstreamProject,
};

use crate::diag::{Diagnostics, Stage};
use crate::elfscan::{BinaryDepTree, BinaryKind, BinaryNode, BinaryPath, ContentSource};
use crate::pkgmeta::PackageId;
use crate::provdb::{extract_query_key, normalize_libname, HashDb, HashDbEntry, QueryKeyError};
use crate::versioncmp::OsFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownReason {
    NoHashMatch,
    NoMetadata,
    NoExtractor,
    ExtractionFailed,
    ProbeDisabled,
    NotInInventory,
    UnreadableContent,
    BadLibraryName,
}

impl UnknownReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnknownReason::NoHashMatch => "NoHashMatch",
            UnknownReason::NoMetadata => "NoMetadata",
            UnknownReason::NoExtractor => "NoExtractor",
            UnknownReason::ExtractionFailed => "ExtractionFailed",
            UnknownReason::ProbeDisabled => "ProbeDisabled",
            UnknownReason::NotInInventory => "NotInInventory",
            UnknownReason::UnreadableContent => "UnreadableContent",
            UnknownReason::BadLibraryName => "BadLibraryName",
        }
    }
}

impl fmt::Display for UnknownReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProvenanceTag {
    OsPackage {
        os: String,
        package: String,
        version: String,
    },
    Upstream {
        project: String,
        version: String,
    },
    OwningPythonPackage {
        package: PackageId,
    },
    HostSystem {
        os: String,
        package: String,
        version: String,
    },
    Unknown {
        reason: UnknownReason,
    },
}

impl ProvenanceTag {
    pub fn os_package(e: &HashDbEntry) -> Self {
        ProvenanceTag::OsPackage {
            os: e.os.clone(),
            package: e.package.clone(),
            version: e.version.clone(),
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, ProvenanceTag::Unknown { .. })
    }
}

impl fmt::Display for ProvenanceTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProvenanceTag::OsPackage {
                os,
                package,
                version,
            } => write!(f, "OsPackage({os}, {package}, {version})"),
            ProvenanceTag::Upstream { project, version } => {
                write!(f, "Upstream({project}, {version})")
            }
            ProvenanceTag::OwningPythonPackage { package } => {
                write!(f, "OwningPythonPackage({package})")
            }
            ProvenanceTag::HostSystem {
                os,
                package,
                version,
            } => write!(f, "HostSystem({os}, {package}, {version})"),
            ProvenanceTag::Unknown { reason } => write!(f, "Unknown({reason})"),
        }
    }
}

/// How a tag was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Owner,
    Inventory,
    HashMatch,
    VersionMatch,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tag: ProvenanceTag,
    /// Further OS packages whose entries matched the same hash.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<ProvenanceTag>,
    pub method: Method,
    /// Normalized library name, when the file name is a library name.
    pub libname: Option<String>,
    /// Upstream project id from the curated table.
    pub project: Option<String>,
}

impl Provenance {
    /// Primary tag followed by alternatives.
    pub fn all_tags(&self) -> impl Iterator<Item = &ProvenanceTag> {
        std::iter::once(&self.tag).chain(&self.alternatives)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HostPackage {
    pub os: String,
    pub package: String,
    pub version: String,
}

#[derive(Debug, thiserror::Error)]
pub enum InventoryError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which OS package owns each system library path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HostInventory {
    map: BTreeMap<PathBuf, HostPackage>,
}

fn usrmerge_alias(p: &Path) -> Option<PathBuf> {
    if let Ok(rest) = p.strip_prefix("/usr/lib") {
        Some(Path::new("/lib").join(rest))
    } else if let Ok(rest) = p.strip_prefix("/lib") {
        Some(Path::new("/usr/lib").join(rest))
    } else {
        None
    }
}

impl HostInventory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<PathBuf>, os: &str, package: &str, version: &str) {
        self.map.insert(
            path.into(),
            HostPackage {
                os: os.to_string(),
                package: package.to_string(),
                version: version.to_string(),
            },
        );
    }

    /// `path<TAB>os<TAB>package<TAB>version` per line.
    pub fn parse(text: &str) -> Result<Self, InventoryError> {
        let mut inv = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 || f.iter().any(|s| s.is_empty()) {
                return Err(InventoryError::Parse {
                    line: i + 1,
                    msg: "expected 4 non-empty tab-separated fields".into(),
                });
            }
            inv.insert(f[0], f[1], f[2], f[3]);
        }
        Ok(inv)
    }

    pub fn load(path: &Path) -> Result<Self, InventoryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`HostInventory::parse`].
    pub fn to_text(&self) -> String {
        self.map
            .iter()
            .map(|(p, h)| format!("{}\t{}\t{}\t{}\n", p.display(), h.os, h.package, h.version))
            .collect()
    }

    /// Exact path, then its `/lib` ↔ `/usr/lib` alias.
    pub fn lookup(&self, path: &Path) -> Option<&HostPackage> {
        self.map
            .get(path)
            .or_else(|| usrmerge_alias(path).and_then(|a| self.map.get(&a)))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Ask the host's dpkg database about each path. Paths it does not know
    /// are left out.
    pub fn from_dpkg<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Self {
        let os = host_os_id().unwrap_or_else(|| "debian/debian".to_string());
        let mut inv = Self::new();
        for p in paths {
            if let Some((pkg, ver)) = dpkg_owner(p) {
                inv.insert(p, &os, &pkg, &ver);
            }
        }
        inv
    }
}

fn host_os_id() -> Option<String> {
    let text = std::fs::read_to_string("/etc/os-release").ok()?;
    let id = text
        .lines()
        .find_map(|l| l.strip_prefix("ID="))?
        .trim_matches('"')
        .to_string();
    let family: OsFamily = id.parse().unwrap();
    Some(format!("{family}/{id}"))
}

/// Owning binary package and its installed version, via `dpkg-query`.
pub fn dpkg_owner(path: &Path) -> Option<(String, String)> {
    let candidates = std::iter::once(path.to_path_buf()).chain(usrmerge_alias(path));
    for p in candidates {
        let out = Command::new("dpkg-query").arg("-S").arg(&p).output().ok()?;
        if !out.status.success() {
            continue;
        }
        let text = String::from_utf8_lossy(&out.stdout);
        let pkg = text
            .lines()
            .filter_map(|l| l.split_once(": "))
            .find(|(_, f)| Path::new(f.trim()) == p)
            .map(|(pkg, _)| pkg.split(',').next().unwrap_or(pkg).trim().to_string())?;
        let out = Command::new("dpkg-query")
            .args(["-W", "-f=${Version}"])
            .arg(&pkg)
            .output()
            .ok()?;
        if out.status.success() {
            let ver = String::from_utf8_lossy(&out.stdout).trim().to_string();
            if !ver.is_empty() {
                return Some((pkg.split(':').next().unwrap().to_string(), ver));
            }
        }
    }
    None
}

/// Inputs shared by every node. All immutable.
#[derive(Clone, Copy)]
pub struct ProvenanceContext<'a> {
    pub db: &'a HashDb,
    pub meta: &'a MetaTable,
    pub registry: &'a Registry,
    pub inventory: &'a HostInventory,
    pub probe: Option<&'a ProbeAdapter>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub provenance: BTreeMap<String, Provenance>,
    pub diagnostics: Diagnostics,
}

/// Tag every node of `tree`. Per-node failures become `Unknown` tags with
/// a diagnostic; nothing is dropped.
pub fn annotate_provenance(
    tree: &BinaryDepTree,
    owner: &PackageId,
    ctx: &ProvenanceContext<'_>,
    src: &dyn ContentSource,
) -> Annotation {
    let mut out = Annotation::default();
    for node in tree.nodes.values() {
        let p = annotate_node(node, owner, ctx, src, &mut out.diagnostics);
        out.provenance.insert(node.id.clone(), p);
    }
    out
}

fn annotate_node(
    node: &BinaryNode,
    owner: &PackageId,
    ctx: &ProvenanceContext<'_>,
    src: &dyn ContentSource,
    diags: &mut Diagnostics,
) -> Provenance {
    let libname = normalize_libname(node.file_name()).ok().map(|n| n.basename);
    let project = libname
        .as_deref()
        .and_then(|l| resolve_upstream_project(l, ctx.meta).ok())
        .map(|p| p.id);
    let unknown = |reason| ProvenanceTag::Unknown { reason };
    let (tag, alternatives, method) = match node.kind {
        BinaryKind::NativeExtension => (
            ProvenanceTag::OwningPythonPackage {
                package: owner.clone(),
            },
            Vec::new(),
            Method::Owner,
        ),
        BinaryKind::System => {
            let path = match &node.path {
                BinaryPath::System(p) => p.clone(),
                BinaryPath::InWheel(p) => PathBuf::from(p),
            };
            match ctx.inventory.lookup(&path) {
                Some(h) => (
                    ProvenanceTag::HostSystem {
                        os: h.os.clone(),
                        package: h.package.clone(),
                        version: h.version.clone(),
                    },
                    Vec::new(),
                    Method::Inventory,
                ),
                None => {
                    diags.push(
                        Stage::Provenance,
                        "not-in-inventory",
                        format!("{}: no host package", node.id),
                    );
                    (
                        unknown(UnknownReason::NotInInventory),
                        Vec::new(),
                        Method::None,
                    )
                }
            }
        }
        BinaryKind::Vendored => vendored(
            node,
            libname.as_deref(),
            project.as_deref(),
            ctx,
            src,
            diags,
        ),
    };
    Provenance {
        tag,
        alternatives,
        method,
        libname,
        project,
    }
}

fn vendored(
    node: &BinaryNode,
    libname: Option<&str>,
    project: Option<&str>,
    ctx: &ProvenanceContext<'_>,
    src: &dyn ContentSource,
    diags: &mut Diagnostics,
) -> (ProvenanceTag, Vec<ProvenanceTag>, Method) {
    let fail = |reason, diags: &mut Diagnostics, code: &str, msg: String| {
        diags.push(Stage::Provenance, code, msg);
        (ProvenanceTag::Unknown { reason }, Vec::new(), Method::None)
    };
    let (lib, hash8) = match extract_query_key(node, src) {
        Ok(k) => k,
        Err(QueryKeyError::Read { id, source }) => {
            return fail(
                UnknownReason::UnreadableContent,
                diags,
                "unreadable",
                format!("{id}: {source}"),
            )
        }
        Err(e) => {
            return fail(
                UnknownReason::BadLibraryName,
                diags,
                "bad-library-name",
                e.to_string(),
            )
        }
    };
    let hits = ctx.db.query(&lib, &hash8);
    if let Some((first, rest)) = hits.split_first() {
        if !rest.is_empty() {
            let all: Vec<String> = hits
                .iter()
                .map(|e| format!("{}:{}/{}", e.os, e.package, e.version))
                .collect();
            diags.push(
                Stage::Provenance,
                "ambiguous-hash",
                format!("{}: {lib} {hash8} matches {}", node.id, all.join(", ")),
            );
        }
        return (
            ProvenanceTag::os_package(first),
            rest.iter().map(ProvenanceTag::os_package).collect(),
            Method::HashMatch,
        );
    }
    let Some(project) = project else {
        return fail(
            UnknownReason::NoMetadata,
            diags,
            "no-upstream-metadata",
            format!(
                "{}: no hash match and no upstream project for {lib}",
                node.id
            ),
        );
    };
    let specs = ctx.registry.get(libname.unwrap_or(&lib));
    if specs.is_empty() {
        return fail(
            UnknownReason::NoExtractor,
            diags,
            "no-extractor",
            format!("{}: no version extractor for {lib}", node.id),
        );
    }
    let bytes = match src.read(node) {
        Ok(b) => b,
        Err(e) => {
            return fail(
                UnknownReason::UnreadableContent,
                diags,
                "unreadable",
                format!("{}: {e}", node.id),
            )
        }
    };
    let mut errors = Vec::new();
    for spec in specs {
        match extract_upstream_version(&bytes, spec, ctx.probe, None) {
            Ok(version) => {
                return (
                    ProvenanceTag::Upstream {
                        project: project.to_string(),
                        version,
                    },
                    Vec::new(),
                    Method::VersionMatch,
                )
            }
            Err(e) => errors.push(e),
        }
    }
    let reason = if errors.iter().all(|e| *e == ExtractError::ProbeDisabled) {
        UnknownReason::ProbeDisabled
    } else {
        UnknownReason::ExtractionFailed
    };
    let msgs: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
    fail(
        reason,
        diags,
        "extraction-failed",
        format!("{}: {lib}: {}", node.id, msgs.join("; ")),
    )
}
