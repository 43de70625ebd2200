use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{normalize_name, parse_wheel_metadata, MetadataError, PackageId, ParseOptions};
use crate::diag::{Diagnostics, Stage};
use crate::versioncmp::PyVersion;

#[derive(Debug, thiserror::Error)]
pub enum RepoError {
    #[error("repository I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} {1} not in repository")]
    Missing(String, String),
}

#[derive(Debug, thiserror::Error)]
pub enum ResolveError {
    #[error("root wheel: {0}")]
    Root(#[from] MetadataError),
    #[error(transparent)]
    Repository(#[from] RepoError),
    #[error("{pkg}: {source}")]
    Dependency {
        pkg: String,
        #[source]
        source: MetadataError,
    },
}

/// Read-only source of wheels, keyed by normalized project name.
pub trait WheelRepository: Sync {
    /// Available versions of `name`, in no particular order.
    fn versions(&self, name: &str) -> Result<Vec<String>, RepoError>;
    fn fetch(&self, name: &str, version: &str) -> Result<Vec<u8>, RepoError>;
}

/// A directory of `name-version-*.whl` files, indexed once at open time.
#[derive(Debug, Clone)]
pub struct DirRepository {
    index: BTreeMap<String, BTreeMap<String, PathBuf>>,
}

/// `(normalized name, version)` from a wheel filename.
pub fn parse_wheel_filename(file: &str) -> Option<(String, String)> {
    let stem = file.strip_suffix(".whl")?;
    let mut parts = stem.split('-');
    let name = parts.next()?;
    let version = parts.next()?;
    if name.is_empty() || version.parse::<PyVersion>().is_err() {
        return None;
    }
    Some((normalize_name(name), version.to_string()))
}

impl DirRepository {
    pub fn open(dir: &Path) -> Result<Self, RepoError> {
        let io = |source| RepoError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut index: BTreeMap<String, BTreeMap<String, PathBuf>> = BTreeMap::new();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let entry = entry.map_err(io)?;
            let fname = entry.file_name().to_string_lossy().into_owned();
            if let Some((name, version)) = parse_wheel_filename(&fname) {
                // several platform wheels of one release: keep the first by name
                index
                    .entry(name)
                    .or_default()
                    .entry(version)
                    .or_insert_with(|| entry.path());
            }
        }
        Ok(DirRepository { index })
    }

    pub fn len(&self) -> usize {
        self.index.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl WheelRepository for DirRepository {
    fn versions(&self, name: &str) -> Result<Vec<String>, RepoError> {
        Ok(self
            .index
            .get(&normalize_name(name))
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default())
    }

    fn fetch(&self, name: &str, version: &str) -> Result<Vec<u8>, RepoError> {
        let path = self
            .index
            .get(&normalize_name(name))
            .and_then(|m| m.get(version))
            .ok_or_else(|| RepoError::Missing(name.to_string(), version.to_string()))?;
        std::fs::read(path).map_err(|source| RepoError::Io {
            path: path.clone(),
            source,
        })
    }
}

/// In-memory repository for tests and synthesized bundles.
#[derive(Debug, Clone, Default)]
pub struct MemRepository {
    wheels: BTreeMap<String, BTreeMap<String, Vec<u8>>>,
}

impl MemRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, version: &str, wheel: Vec<u8>) {
        self.wheels
            .entry(normalize_name(name))
            .or_default()
            .insert(version.to_string(), wheel);
    }
}

impl WheelRepository for MemRepository {
    fn versions(&self, name: &str) -> Result<Vec<String>, RepoError> {
        Ok(self
            .wheels
            .get(&normalize_name(name))
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default())
    }

    fn fetch(&self, name: &str, version: &str) -> Result<Vec<u8>, RepoError> {
        self.wheels
            .get(&normalize_name(name))
            .and_then(|m| m.get(version))
            .cloned()
            .ok_or_else(|| RepoError::Missing(name.to_string(), version.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PythonDepTree {
    pub root: PackageId,
    pub nodes: BTreeSet<PackageId>,
    pub edges: BTreeSet<(PackageId, PackageId)>,
    /// Dependency names no repository version could satisfy, with the
    /// packages that asked for them.
    pub unresolved: BTreeMap<String, BTreeSet<PackageId>>,
}

impl PythonDepTree {
    pub fn get(&self, name: &str) -> Option<&PackageId> {
        let name = normalize_name(name);
        self.nodes.iter().find(|p| p.name == name)
    }

    pub fn direct_deps(&self, pkg: &PackageId) -> Vec<&PackageId> {
        self.edges
            .iter()
            .filter(|(a, _)| a == pkg)
            .map(|(_, b)| b)
            .collect()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.edges
            .iter()
            .any(|(a, b)| a.name == from && b.name == to)
    }
}

#[derive(Debug, Clone)]
pub struct Resolution {
    pub tree: PythonDepTree,
    pub unevaluable_markers: usize,
    pub diagnostics: Diagnostics,
}

fn pick_version(versions: &[String], spec: &super::DependencySpec) -> Option<String> {
    let mut ok: Vec<(PyVersion, &String)> = versions
        .iter()
        .filter_map(|v| v.parse::<PyVersion>().ok().map(|p| (p, v)))
        .filter(|(p, _)| spec.admits(p))
        .collect();
    // installers skip pre-releases unless nothing else fits
    if ok.iter().any(|(p, _)| !p.is_prerelease()) {
        ok.retain(|(p, _)| !p.is_prerelease());
    }
    // ties under the ordering (1.0 vs 1.0.0): the textually smallest wins
    ok.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(a.1)));
    ok.last().map(|(_, v)| (*v).clone())
}

/// Breadth-first flat resolution from `root`. Each name is resolved once,
/// to the highest repository version admitted by the first requirement
/// that mentions it; later conflicting requirements only raise a
/// diagnostic.
pub fn resolve_python_dep_tree(
    root: &[u8],
    repo: &dyn WheelRepository,
    opts: &ParseOptions,
) -> Result<Resolution, ResolveError> {
    let mut diags = Diagnostics::new();
    let root_md = parse_wheel_metadata(root, opts)?;
    let root_id = root_md.id.clone();
    let mut unevaluable = root_md.unevaluable_markers;
    diags.extend(root_md.diagnostics);

    let mut tree = PythonDepTree {
        root: root_id.clone(),
        nodes: BTreeSet::from([root_id.clone()]),
        edges: BTreeSet::new(),
        unresolved: BTreeMap::new(),
    };
    let mut resolved: BTreeMap<String, PackageId> =
        BTreeMap::from([(root_id.name.clone(), root_id.clone())]);
    let mut queue = VecDeque::from([(root_id, root_md.deps)]);

    while let Some((pkg, deps)) = queue.pop_front() {
        for dep in deps {
            if let Some(existing) = resolved.get(&dep.name) {
                let v: PyVersion = existing.version.parse().expect("resolved versions parse");
                if !dep.admits(&v) {
                    diags.push(
                        Stage::Resolve,
                        "version-conflict",
                        format!("{pkg} wants {dep} but {existing} was already selected"),
                    );
                }
                tree.edges.insert((pkg.clone(), existing.clone()));
                continue;
            }
            if let Some(askers) = tree.unresolved.get_mut(&dep.name) {
                askers.insert(pkg.clone());
                continue;
            }
            let versions = repo.versions(&dep.name)?;
            let Some(version) = pick_version(&versions, &dep) else {
                diags.push(
                    Stage::Resolve,
                    "unresolved-dependency",
                    format!("{pkg}: no repository wheel satisfies {dep}"),
                );
                tree.unresolved
                    .entry(dep.name.clone())
                    .or_default()
                    .insert(pkg.clone());
                continue;
            };
            let bytes = repo.fetch(&dep.name, &version)?;
            let dep_opts = ParseOptions {
                strict: opts.strict,
                extras: dep.extras.iter().cloned().collect(),
            };
            let md = match parse_wheel_metadata(&bytes, &dep_opts) {
                Ok(md) => md,
                Err(e) if opts.strict => {
                    return Err(ResolveError::Dependency {
                        pkg: format!("{}-{}", dep.name, version),
                        source: e,
                    })
                }
                Err(e) => {
                    diags.push(
                        Stage::Resolve,
                        "bad-wheel",
                        format!("{}-{version}: {e}", dep.name),
                    );
                    tree.unresolved
                        .entry(dep.name.clone())
                        .or_default()
                        .insert(pkg.clone());
                    continue;
                }
            };
            if md.id.name != dep.name {
                diags.push(
                    Stage::Resolve,
                    "name-mismatch",
                    format!("wheel for {} declares Name {}", dep.name, md.id.name),
                );
            }
            // identity comes from the repository index so lookups stay consistent
            let id = PackageId::new(&dep.name, &version);
            unevaluable += md.unevaluable_markers;
            diags.extend(md.diagnostics);
            resolved.insert(dep.name.clone(), id.clone());
            tree.nodes.insert(id.clone());
            tree.edges.insert((pkg.clone(), id.clone()));
            queue.push_back((id, md.deps));
        }
    }

    Ok(Resolution {
        tree,
        unevaluable_markers: unevaluable,
        diagnostics: diags,
    })
}
