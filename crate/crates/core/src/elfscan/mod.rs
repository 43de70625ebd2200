//! Binary dependency trees: ELF objects inside a wheel and the system
//! libraries they link against.

mod elf;

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use elf::{detect_elf, has_elf_magic, read_dynamic, read_needed, DynamicInfo, ElfError};

use crate::diag::{Diagnostics, Stage};
use crate::pkgmeta::{wheel_members, MetadataError, PackageId};
use crate::provdb::normalize_libname;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinaryKind {
    NativeExtension,
    Vendored,
    System,
}

impl fmt::Display for BinaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinaryKind::NativeExtension => "native-extension",
            BinaryKind::Vendored => "vendored",
            BinaryKind::System => "system",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryPath {
    /// Relative to the extracted wheel root.
    InWheel(String),
    /// Absolute host path.
    System(PathBuf),
}

impl BinaryPath {
    pub fn file_name(&self) -> &str {
        match self {
            BinaryPath::InWheel(p) => p.rsplit('/').next().unwrap_or(p),
            BinaryPath::System(p) => p.file_name().and_then(|s| s.to_str()).unwrap_or(""),
        }
    }
}

impl fmt::Display for BinaryPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinaryPath::InWheel(p) => f.write_str(p),
            BinaryPath::System(p) => write!(f, "{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryNode {
    /// Unit id: `"{package}:{wheel path}"` in a wheel, the absolute path
    /// for system libraries.
    pub id: String,
    pub path: BinaryPath,
    pub soname: Option<String>,
    pub kind: BinaryKind,
    pub needed: Vec<String>,
    /// Node id each `needed` entry resolved to, index-aligned.
    pub resolved: Vec<Option<String>>,
    pub dynsyms: BTreeSet<String>,
    pub imports: BTreeSet<String>,
    /// Set when symbol information came from an operator-supplied
    /// unstripped replacement.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substituted_from: Option<String>,
}

impl BinaryNode {
    pub fn file_name(&self) -> &str {
        self.path.file_name()
    }

    /// Resolved dependencies in DT_NEEDED order.
    pub fn deps(&self) -> impl Iterator<Item = &str> {
        self.resolved.iter().filter_map(|r| r.as_deref())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BinaryDepTree {
    pub owner: Option<PackageId>,
    pub nodes: BTreeMap<String, BinaryNode>,
    pub edges: BTreeSet<(String, String)>,
    #[serde(skip)]
    pub contents: BTreeMap<String, Arc<Vec<u8>>>,
}

impl BinaryDepTree {
    pub fn node(&self, id: &str) -> Option<&BinaryNode> {
        self.nodes.get(id)
    }

    pub fn content(&self, id: &str) -> Option<&[u8]> {
        self.contents.get(id).map(|b| b.as_slice())
    }
}

/// Anything that can hand out the bytes of a binary node.
pub trait ContentSource {
    fn read(&self, node: &BinaryNode) -> std::io::Result<Cow<'_, [u8]>>;
}

impl ContentSource for BinaryDepTree {
    fn read(&self, node: &BinaryNode) -> std::io::Result<Cow<'_, [u8]>> {
        self.content(&node.id).map(Cow::Borrowed).ok_or_else(|| {
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("no content for {}", node.id),
            )
        })
    }
}

fn exports_pyinit(syms: &BTreeSet<String>) -> bool {
    syms.iter().any(|s| s.starts_with("PyInit_"))
}

/// Lexically normalized absolute-or-relative path (`.` and `..` folded).
fn lexical(p: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

/// Kind of a binary located at `path`, given the wheel's extraction root.
pub fn classify_binary(path: &Path, wheel_root: &Path, dynsyms: &BTreeSet<String>) -> BinaryKind {
    let full = if path.is_absolute() {
        lexical(path)
    } else {
        lexical(&wheel_root.join(path))
    };
    if !full.starts_with(lexical(wheel_root)) {
        BinaryKind::System
    } else if exports_pyinit(dynsyms) {
        BinaryKind::NativeExtension
    } else {
        BinaryKind::Vendored
    }
}

pub fn classify(path: &BinaryPath, dynsyms: &BTreeSet<String>) -> BinaryKind {
    match path {
        BinaryPath::System(_) => BinaryKind::System,
        BinaryPath::InWheel(rel)
            if Path::new(rel).is_absolute() || lexical(Path::new(rel)).starts_with("..") =>
        {
            BinaryKind::System
        }
        BinaryPath::InWheel(_) if exports_pyinit(dynsyms) => BinaryKind::NativeExtension,
        BinaryPath::InWheel(_) => BinaryKind::Vendored,
    }
}

/// A system library located by a resolver.
#[derive(Debug, Clone)]
pub struct SystemLib {
    pub path: PathBuf,
    pub bytes: Option<Vec<u8>>,
}

pub trait SysResolver: Sync {
    fn resolve(&self, soname: &str) -> Option<SystemLib>;
}

/// Looks `soname` up in a list of directories under an optional sysroot.
/// Reported paths are the logical ones, without the sysroot prefix.
#[derive(Debug, Clone)]
pub struct SearchPathResolver {
    pub sysroot: PathBuf,
    pub dirs: Vec<PathBuf>,
}

pub const DEFAULT_SEARCH_PATH: &str = "/lib64:/usr/lib64:/lib:/usr/lib";

impl SearchPathResolver {
    pub fn new(sysroot: impl Into<PathBuf>, search_path: &str) -> Self {
        SearchPathResolver {
            sysroot: sysroot.into(),
            dirs: search_path
                .split(':')
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
                .collect(),
        }
    }

    pub fn host() -> Self {
        Self::new("/", DEFAULT_SEARCH_PATH)
    }
}

impl SysResolver for SearchPathResolver {
    fn resolve(&self, soname: &str) -> Option<SystemLib> {
        if soname.contains('/') {
            return None;
        }
        for dir in &self.dirs {
            let rel = dir.strip_prefix("/").unwrap_or(dir);
            let on_disk = self.sysroot.join(rel).join(soname);
            if on_disk.is_file() {
                return Some(SystemLib {
                    path: Path::new("/").join(rel).join(soname),
                    bytes: std::fs::read(&on_disk).ok(),
                });
            }
        }
        None
    }
}

/// Fixed soname table, for hermetic tests.
#[derive(Debug, Clone, Default)]
pub struct MapResolver(pub BTreeMap<String, (PathBuf, Option<Vec<u8>>)>);

impl MapResolver {
    pub fn insert(&mut self, soname: &str, path: &str, bytes: Option<Vec<u8>>) {
        self.0
            .insert(soname.to_string(), (PathBuf::from(path), bytes));
    }
}

impl SysResolver for MapResolver {
    fn resolve(&self, soname: &str) -> Option<SystemLib> {
        self.0.get(soname).map(|(p, b)| SystemLib {
            path: p.clone(),
            bytes: b.clone(),
        })
    }
}

/// Resolves nothing; every system dependency stays unresolved.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullResolver;

impl SysResolver for NullResolver {
    fn resolve(&self, _: &str) -> Option<SystemLib> {
        None
    }
}

#[derive(Debug, Clone)]
pub struct ExpandOptions {
    /// Levels of system libraries followed below the wheel's own objects.
    pub max_depth: usize,
    /// Unstripped replacements keyed by wheel path or system path.
    pub substitutions: BTreeMap<String, Vec<u8>>,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        ExpandOptions {
            max_depth: 8,
            substitutions: BTreeMap::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExpandError {
    #[error("cannot extract wheel: {0}")]
    WheelExtraction(#[from] MetadataError),
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub tree: BinaryDepTree,
    pub diagnostics: Diagnostics,
}

fn symbols_with_substitution(
    key: &str,
    info: &DynamicInfo,
    opts: &ExpandOptions,
    diags: &mut Diagnostics,
) -> (BTreeSet<String>, BTreeSet<String>, Option<String>) {
    let Some(repl) = opts.substitutions.get(key) else {
        return (info.exports.clone(), info.imports.clone(), None);
    };
    match read_dynamic(repl) {
        Ok(r) if r.soname == info.soname => (r.exports, r.imports, Some(key.to_string())),
        Ok(r) => {
            diags.push(
                Stage::Binary,
                "substitution-rejected",
                format!(
                    "{key}: replacement soname {:?} differs from {:?}",
                    r.soname, info.soname
                ),
            );
            (info.exports.clone(), info.imports.clone(), None)
        }
        Err(e) => {
            diags.push(
                Stage::Binary,
                "substitution-rejected",
                format!("{key}: {e}"),
            );
            (info.exports.clone(), info.imports.clone(), None)
        }
    }
}

/// Expand one package's wheel into its binary dependency tree.
///
/// Needed entries of wheel objects resolve against the wheel first (exact
/// soname, exact file name, then a unique match on the normalized library
/// name, which sees through auditwheel renames) and only then against
/// `sys`. System libraries are followed through `sys` alone, up to
/// `opts.max_depth` levels.
pub fn expand_binary_tree(
    pkg: &PackageId,
    wheel: &[u8],
    sys: &dyn SysResolver,
    opts: &ExpandOptions,
) -> Result<Expansion, ExpandError> {
    let mut diags = Diagnostics::new();
    let mut tree = BinaryDepTree {
        owner: Some(pkg.clone()),
        ..Default::default()
    };

    for (path, bytes) in wheel_members(wheel)? {
        if !has_elf_magic(&bytes) {
            continue;
        }
        let info = match read_dynamic(&bytes) {
            Ok(i) => i,
            Err(e @ ElfError::Unsupported { .. }) => {
                diags.push(
                    Stage::Binary,
                    "unsupported-elf",
                    format!("{pkg}: {path}: {e}"),
                );
                continue;
            }
            Err(e) => {
                diags.push(
                    Stage::Binary,
                    "malformed-elf",
                    format!("{pkg}: {path}: {e}"),
                );
                continue;
            }
        };
        let (dynsyms, imports, substituted_from) =
            symbols_with_substitution(&path, &info, opts, &mut diags);
        let bpath = BinaryPath::InWheel(path.clone());
        let id = format!("{}:{}", pkg.name, path);
        let node = BinaryNode {
            id: id.clone(),
            kind: classify(&bpath, &dynsyms),
            path: bpath,
            soname: info.soname.clone(),
            resolved: vec![None; info.needed.len()],
            needed: info.needed,
            dynsyms,
            imports,
            substituted_from,
        };
        tree.contents.insert(id.clone(), Arc::new(bytes));
        tree.nodes.insert(id, node);
    }

    // lookup tables over the wheel's own objects
    let wheel_ids: Vec<String> = tree.nodes.keys().cloned().collect();
    let mut by_soname: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut by_file: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut by_norm: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for id in &wheel_ids {
        let n = &tree.nodes[id];
        if let Some(s) = &n.soname {
            by_soname.entry(s.clone()).or_default().push(id.clone());
        }
        by_file
            .entry(n.file_name().to_string())
            .or_default()
            .push(id.clone());
        if let Ok(norm) = normalize_libname(n.file_name()) {
            by_norm.entry(norm.basename).or_default().push(id.clone());
        }
    }
    let in_wheel = |needed: &str| -> Option<String> {
        if let Some(ids) = by_soname.get(needed) {
            return ids.first().cloned();
        }
        if let Some(ids) = by_file.get(needed) {
            return ids.first().cloned();
        }
        let norm = normalize_libname(needed).ok()?;
        match by_norm.get(&norm.basename).map(Vec::as_slice) {
            Some([only]) => Some(only.clone()),
            _ => None,
        }
    };

    // (node id, depth of that node); wheel objects sit at depth 0
    let mut queue: VecDeque<(String, usize)> = wheel_ids.iter().map(|id| (id.clone(), 0)).collect();
    let mut sys_by_soname: BTreeMap<String, Option<String>> = BTreeMap::new();

    while let Some((id, depth)) = queue.pop_front() {
        let needed = tree.nodes[&id].needed.clone();
        let from_wheel = matches!(tree.nodes[&id].path, BinaryPath::InWheel(_));
        for (i, soname) in needed.iter().enumerate() {
            let target = if from_wheel { in_wheel(soname) } else { None };
            let target = match target {
                Some(t) => Some(t),
                None => {
                    if let Some(cached) = sys_by_soname.get(soname) {
                        cached.clone()
                    } else if depth >= opts.max_depth {
                        diags.push(
                            Stage::Binary,
                            "depth-limit",
                            format!(
                                "{pkg}: {id}: {soname} not followed beyond depth {}",
                                opts.max_depth
                            ),
                        );
                        continue;
                    } else {
                        let found = sys.resolve(soname).map(|lib| {
                            let sid = lib.path.to_string_lossy().into_owned();
                            if !tree.nodes.contains_key(&sid) {
                                let node = system_node(&sid, &lib, opts, &mut diags);
                                if let Some(bytes) = lib.bytes {
                                    tree.contents.insert(sid.clone(), Arc::new(bytes));
                                }
                                tree.nodes.insert(sid.clone(), node);
                                queue.push_back((sid.clone(), depth + 1));
                            }
                            sid
                        });
                        sys_by_soname.insert(soname.clone(), found.clone());
                        found
                    }
                }
            };
            match target {
                Some(t) => {
                    tree.edges.insert((id.clone(), t.clone()));
                    tree.nodes.get_mut(&id).expect("queued ids exist").resolved[i] = Some(t);
                }
                None => diags.push(
                    Stage::Binary,
                    "unresolved-needed",
                    format!("{pkg}: {id}: {soname} not found"),
                ),
            }
        }
    }

    Ok(Expansion {
        tree,
        diagnostics: diags,
    })
}

fn system_node(
    sid: &str,
    lib: &SystemLib,
    opts: &ExpandOptions,
    diags: &mut Diagnostics,
) -> BinaryNode {
    let info = match &lib.bytes {
        Some(b) => match read_dynamic(b) {
            Ok(i) => i,
            Err(e) => {
                diags.push(Stage::Binary, "malformed-elf", format!("{sid}: {e}"));
                DynamicInfo::default()
            }
        },
        None => DynamicInfo::default(),
    };
    let (dynsyms, imports, substituted_from) = symbols_with_substitution(sid, &info, opts, diags);
    BinaryNode {
        id: sid.to_string(),
        path: BinaryPath::System(lib.path.clone()),
        soname: info.soname,
        kind: BinaryKind::System,
        resolved: vec![None; info.needed.len()],
        needed: info.needed,
        dynsyms,
        imports,
        substituted_from,
    }
}
