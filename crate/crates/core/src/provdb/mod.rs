//! Hash database of shared libraries shipped by OS packages.
//!
//! Each entry records `(os, package, version, libname, hash8)`: the library's
//! normalized base name and the first eight hex digits of its SHA-256.
//! Lookups always use the joint `(libname, hash8)` key.

pub mod cpio;
mod ingest;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use ingest::{ingest_deb, ingest_rpm, ingest_tree, IngestError, LIBNAME_WHITELIST};

use crate::elfscan::{BinaryKind, BinaryNode, ContentSource};
use crate::versioncmp::{validate_os_version, OsFamily};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NameError {
    #[error("{0:?} is not a shared library name")]
    NotALibraryName(String),
}

/// A library file name with its auditwheel hash and version suffix split off.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NormalizedLibName {
    pub basename: String,
    pub embedded_hash: Option<String>,
    pub version_suffix: Option<String>,
}

impl NormalizedLibName {
    /// The file name before vendoring: base name plus version suffix.
    pub fn original_filename(&self) -> String {
        match &self.version_suffix {
            Some(s) => format!("{}.{}", self.basename, s),
            None => self.basename.clone(),
        }
    }
}

fn is_hash8(s: &str) -> bool {
    s.len() == 8 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

/// `libxml2-3998bec4.so.2.9.1` becomes `libxml2.so` + hash `3998bec4` +
/// suffix `2.9.1`. The last `.so` component whose remainder is a dotted
/// numeric version (or nothing) is the split point.
pub fn normalize_libname(filename: &str) -> Result<NormalizedLibName, NameError> {
    let file = filename.rsplit('/').next().unwrap_or(filename);
    let err = || NameError::NotALibraryName(filename.to_string());
    let mut split = None;
    for (i, _) in file.match_indices(".so") {
        let rest = &file[i + 3..];
        let ok = rest.is_empty()
            || rest.strip_prefix('.').is_some_and(|v| {
                !v.is_empty()
                    && v.split('.')
                        .all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()))
            });
        if ok {
            split = Some(i);
        }
    }
    let i = split.ok_or_else(err)?;
    let stem = &file[..i];
    if stem.is_empty() {
        return Err(err());
    }
    let suffix = file[i + 3..].strip_prefix('.').map(str::to_string);
    let (stem, embedded_hash) = match stem.rsplit_once('-') {
        Some((head, h)) if !head.is_empty() && is_hash8(h) => (head, Some(h.to_ascii_lowercase())),
        _ => (stem, None),
    };
    Ok(NormalizedLibName {
        basename: format!("{stem}.so"),
        embedded_hash,
        version_suffix: suffix,
    })
}

/// First eight lowercase hex digits of SHA-256.
pub fn content_hash8(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..4])
}

#[derive(Debug, thiserror::Error)]
pub enum QueryKeyError {
    #[error(transparent)]
    Name(#[from] NameError),
    #[error("{0} is not a vendored library")]
    NotVendored(String),
    #[error("cannot read {id}: {source}")]
    Read {
        id: String,
        #[source]
        source: std::io::Error,
    },
}

/// `(libname, hash8)` for a vendored library. An auditwheel hash in the
/// file name is used as is: the copy's bytes were rewritten after hashing,
/// so its contents are never read in that case.
pub fn extract_query_key(
    node: &BinaryNode,
    src: &dyn ContentSource,
) -> Result<(String, String), QueryKeyError> {
    if node.kind != BinaryKind::Vendored {
        return Err(QueryKeyError::NotVendored(node.id.clone()));
    }
    let norm = normalize_libname(node.file_name())?;
    if let Some(h) = norm.embedded_hash {
        return Ok((norm.basename, h));
    }
    let bytes = src.read(node).map_err(|source| QueryKeyError::Read {
        id: node.id.clone(),
        source,
    })?;
    Ok((norm.basename, content_hash8(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HashDbEntry {
    /// `family/distribution`, e.g. `redhat/centos`.
    pub os: String,
    pub package: String,
    pub version: String,
    pub libname: String,
    pub hash8: String,
}

impl HashDbEntry {
    pub fn family(&self) -> OsFamily {
        family_of(&self.os)
    }

    pub fn distro(&self) -> &str {
        self.os.split_once('/').map(|(_, d)| d).unwrap_or(&self.os)
    }

    pub fn validate(&self) -> Result<(), DbError> {
        let bad = |m: String| DbError::Invalid(format!("{self}: {m}"));
        if !is_hash8(&self.hash8) || self.hash8.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(bad("hash8 must be 8 lowercase hex digits".into()));
        }
        if !self.libname.ends_with(".so")
            || !(self.libname.starts_with("lib")
                || LIBNAME_WHITELIST.contains(&self.libname.as_str()))
        {
            return Err(bad("libname must be lib*.so or whitelisted".into()));
        }
        for f in [&self.os, &self.package, &self.version, &self.libname] {
            if f.is_empty() || f.contains(['\t', '\n', '\r']) {
                return Err(bad("empty field or embedded tab/newline".into()));
            }
        }
        validate_os_version(self.family(), &self.version).map_err(|e| bad(e.to_string()))
    }
}

pub fn family_of(os: &str) -> OsFamily {
    os.split('/')
        .next()
        .unwrap_or(os)
        .parse()
        .unwrap_or(OsFamily::Other)
}

impl fmt::Display for HashDbEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.os, self.package, self.version, self.libname, self.hash8
        )
    }
}

impl FromStr for HashDbEntry {
    type Err = DbError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let f: Vec<&str> = line.split('\t').collect();
        let [os, package, version, libname, hash8] = f.as_slice() else {
            return Err(DbError::Invalid(format!(
                "expected 5 tab-separated fields: {line:?}"
            )));
        };
        let e = HashDbEntry {
            os: os.to_string(),
            package: package.to_string(),
            version: version.to_string(),
            libname: libname.to_string(),
            hash8: hash8.to_string(),
        };
        e.validate()?;
        Ok(e)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error("invalid entry: {0}")]
    Invalid(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Deduplicated entry set with an index on `(libname, hash8)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HashDb {
    entries: BTreeSet<HashDbEntry>,
    index: BTreeMap<(String, String), Vec<HashDbEntry>>,
}

impl HashDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = HashDbEntry>) -> Self {
        let mut db = HashDb::new();
        db.extend(entries);
        db
    }

    pub fn insert(&mut self, e: HashDbEntry) -> bool {
        if !self.entries.insert(e.clone()) {
            return false;
        }
        let slot = self
            .index
            .entry((e.libname.clone(), e.hash8.clone()))
            .or_default();
        let at = slot.partition_point(|x| x < &e);
        slot.insert(at, e);
        true
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = HashDbEntry>) {
        for e in entries {
            self.insert(e);
        }
    }

    pub fn merge(&mut self, other: &HashDb) {
        self.extend(other.entries.iter().cloned());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &HashDbEntry> {
        self.entries.iter()
    }

    /// Entries matching both `libname` and `hash8`, sorted.
    pub fn query(&self, libname: &str, hash8: &str) -> &[HashDbEntry] {
        self.index
            .get(&(libname.to_string(), hash8.to_ascii_lowercase()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn read(r: impl BufRead) -> Result<Self, DbError> {
        let mut db = HashDb::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let e: HashDbEntry = line.parse().map_err(|e: DbError| DbError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            db.insert(e);
        }
        Ok(db)
    }

    pub fn load(path: &Path) -> Result<Self, DbError> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    /// Sorted canonical form, one entry per line.
    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("entries are UTF-8")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }
}

/// Several versions of one OS package shipping a library with the same hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionWarning {
    pub os: String,
    pub package: String,
    pub libname: String,
    pub hash8: String,
    pub versions: Vec<String>,
}

impl fmt::Display for CollisionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "collision: {} {} {} {} shared by versions {}",
            self.os,
            self.package,
            self.libname,
            self.hash8,
            self.versions.join(", ")
        )
    }
}

pub fn detect_collisions(db: &HashDb) -> Vec<CollisionWarning> {
    let mut groups: BTreeMap<(&str, &str, &str, &str), BTreeSet<&str>> = BTreeMap::new();
    for e in db.entries() {
        groups
            .entry((&e.os, &e.package, &e.libname, &e.hash8))
            .or_default()
            .insert(&e.version);
    }
    groups
        .into_iter()
        .filter(|(_, v)| v.len() >= 2)
        .map(
            |((os, package, libname, hash8), versions)| CollisionWarning {
                os: os.to_string(),
                package: package.to_string(),
                libname: libname.to_string(),
                hash8: hash8.to_string(),
                versions: versions.into_iter().map(str::to_string).collect(),
            },
        )
        .collect()
}

/// Birthday bound for `n` samples in a 2^32 space:
/// `1 - exp(-n(n-1) / (2 * 2^32))`.
pub fn collision_probability(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let n = n as f64;
    -(-(n * (n - 1.0)) / (2.0 * 4_294_967_296.0)).exp_m1()
}
