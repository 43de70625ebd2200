use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nativereach_core::elfscan::{ExpandOptions, SearchPathResolver, DEFAULT_SEARCH_PATH};
use nativereach_core::pipeline::{provenance_listing, scan, ProvenanceListing, ScanInputs};
use nativereach_core::pkgmeta::marker::normalize_extra;
use nativereach_core::pkgmeta::{DirRepository, MemRepository, ParseOptions, WheelRepository};
use nativereach_core::provdb::{detect_collisions, ingest_deb, ingest_rpm, ingest_tree, HashDb};
use nativereach_core::upstream::{
    HostInventory, MetaTable, ProbeAdapter, ProvenanceContext, Registry,
};
use nativereach_core::vulnreach::{render_text, ScanReport, VulnDb, DEFAULT_K};
use nativereach_core::xecg::{load_bridge_map, load_call_graph_dir, BridgeMap};

#[derive(Parser)]
#[command(
    name = "nativereach",
    version,
    about = "Find native vulnerabilities reachable from Python packages"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build and query the hash database.
    #[command(subcommand)]
    Db(DbCmd),
    /// Scan a wheel and its dependencies.
    Scan(ScanArgs),
    /// List the provenance of every binary in one wheel.
    Provenance(ProvenanceArgs),
    /// Render a saved JSON report.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum DbCmd {
    /// Add the libraries of OS package artifacts (.deb, .rpm or an
    /// unpacked directory) to a database file, creating it if needed.
    Ingest {
        #[arg(long)]
        db: PathBuf,
        /// Distribution id, e.g. redhat/centos.
        #[arg(long)]
        os: String,
        #[arg(long)]
        package: String,
        #[arg(long = "version")]
        pkg_version: String,
        #[arg(required = true)]
        artifacts: Vec<PathBuf>,
    },
    /// Union several database files into one.
    Merge {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Report versions of one package sharing a library hash.
    CheckCollisions {
        #[arg(long)]
        db: PathBuf,
    },
    /// Print the entries for a library name and hash; exit 1 when none.
    Query {
        #[arg(long)]
        db: PathBuf,
        libname: String,
        hash8: String,
    },
}

#[derive(Args, Clone, Copy)]
struct Format {
    #[arg(long, conflicts_with = "text")]
    json: bool,
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct ScanArgs {
    /// Wheel to scan.
    wheel: Option<PathBuf>,
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of dependency wheels.
    #[arg(long)]
    repo: Option<PathBuf>,
    #[arg(long)]
    hash_db: Option<PathBuf>,
    /// Directory of CVE-*.json records.
    #[arg(long)]
    vuln_db: Option<PathBuf>,
    /// Directory of per-unit call graph documents.
    #[arg(long)]
    callgraphs: Option<PathBuf>,
    #[arg(long)]
    bridges: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Extras requested for the scanned package.
    #[arg(long = "extra")]
    extras: Vec<String>,
    /// Call chains listed per finding.
    #[arg(short, long)]
    k: Option<usize>,
    #[command(flatten)]
    format: Format,
}

#[derive(Args)]
struct Common {
    /// path<TAB>os<TAB>package<TAB>version lines for host libraries.
    #[arg(long)]
    inventory: Option<PathBuf>,
    /// Extra version extractors, added to the built-in ones.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Root directory system libraries are looked up under.
    #[arg(long)]
    sysroot: Option<PathBuf>,
    /// Colon-separated library directories.
    #[arg(long)]
    search_path: Option<String>,
    /// path<TAB>unstripped-file lines.
    #[arg(long)]
    substitutions: Option<PathBuf>,
    /// Program run to query versions from symbols; off when unset.
    #[arg(long)]
    probe: Option<PathBuf>,
    /// Reject malformed metadata and undecidable markers.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ProvenanceArgs {
    wheel: PathBuf,
    #[arg(long)]
    hash_db: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    /// Print identification coverage of vendored libraries.
    #[arg(long)]
    stats: bool,
    #[command(flatten)]
    format: Format,
}

#[derive(Args)]
struct ReportArgs {
    report: PathBuf,
    #[command(flatten)]
    format: Format,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Db(c) => cmd_db(c),
        Cmd::Scan(a) => cmd_scan(a),
        Cmd::Provenance(a) => cmd_provenance(a),
        Cmd::Report(a) => cmd_report(a),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn require_file(p: &Path, what: &str) -> Result<()> {
    if !p.is_file() {
        bail!("{what} {} does not exist or is not a file", p.display());
    }
    Ok(())
}

fn require_dir(p: &Path, what: &str) -> Result<()> {
    if !p.is_dir() {
        bail!(
            "{what} {} does not exist or is not a directory",
            p.display()
        );
    }
    Ok(())
}

fn cmd_db(c: DbCmd) -> Result<u8> {
    match c {
        DbCmd::Ingest {
            db,
            os,
            package,
            pkg_version,
            artifacts,
        } => {
            for a in &artifacts {
                if !a.exists() {
                    bail!("artifact {} does not exist", a.display());
                }
            }
            let mut out = if db.exists() {
                HashDb::load(&db).with_context(|| format!("loading {}", db.display()))?
            } else {
                HashDb::new()
            };
            for a in &artifacts {
                let entries = if a.is_dir() {
                    ingest_tree(a, &os, &package, &pkg_version)
                } else {
                    let bytes =
                        std::fs::read(a).with_context(|| format!("reading {}", a.display()))?;
                    match a.extension().and_then(|e| e.to_str()) {
                        Some("deb") => ingest_deb(&bytes, &os, &package, &pkg_version),
                        Some("rpm") => ingest_rpm(&bytes, &os, &package, &pkg_version),
                        _ => bail!("{}: expected a .deb, a .rpm or a directory", a.display()),
                    }
                }
                .with_context(|| format!("ingesting {}", a.display()))?;
                out.extend(entries);
            }
            out.save(&db)
                .with_context(|| format!("writing {}", db.display()))?;
            Ok(0)
        }
        DbCmd::Merge { out, inputs } => {
            for i in &inputs {
                require_file(i, "database")?;
            }
            let mut merged = HashDb::new();
            for i in &inputs {
                merged.merge(&HashDb::load(i).with_context(|| format!("loading {}", i.display()))?);
            }
            merged
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(0)
        }
        DbCmd::CheckCollisions { db } => {
            require_file(&db, "database")?;
            let warnings = detect_collisions(&HashDb::load(&db)?);
            for w in &warnings {
                println!("{w}");
            }
            Ok(u8::from(!warnings.is_empty()))
        }
        DbCmd::Query { db, libname, hash8 } => {
            require_file(&db, "database")?;
            let db = HashDb::load(&db)?;
            let hits = db.query(&libname, &hash8);
            for e in hits {
                println!("{}\t{}\t{}", e.os, e.package, e.version);
            }
            Ok(u8::from(hits.is_empty()))
        }
    }
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), i + 1);
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

const CONFIG_KEYS: &[&str] = &[
    "wheel",
    "repo",
    "hash-db",
    "vuln-db",
    "callgraphs",
    "bridges",
    "inventory",
    "registry",
    "sysroot",
    "search-path",
    "substitutions",
    "probe",
    "strict",
    "k",
    "extra",
];

struct Config(BTreeMap<String, String>);

impl Config {
    fn path(&self, flag: Option<PathBuf>, key: &str) -> Option<PathBuf> {
        flag.or_else(|| self.0.get(key).map(PathBuf::from))
    }

    fn string(&self, flag: Option<String>, key: &str) -> Option<String> {
        flag.or_else(|| self.0.get(key).cloned())
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        if flag {
            return Ok(true);
        }
        match self.0.get(key).map(String::as_str) {
            None | Some("false") | Some("no") | Some("0") => Ok(false),
            Some("true") | Some("yes") | Some("1") => Ok(true),
            Some(v) => bail!("config {key}: expected true or false, got {v:?}"),
        }
    }
}

fn load_substitutions(path: &Path) -> Result<BTreeMap<String, Vec<u8>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, file)) = line.split_once('\t') else {
            bail!(
                "{}:{}: expected path<TAB>replacement",
                path.display(),
                i + 1
            );
        };
        let bytes = std::fs::read(file)
            .with_context(|| format!("{}:{}: reading {file}", path.display(), i + 1))?;
        out.insert(key.to_string(), bytes);
    }
    Ok(out)
}

/// Inputs shared by `scan` and `provenance`, loaded after validation.
struct Loaded {
    db: HashDb,
    meta: MetaTable,
    registry: Registry,
    inventory: HostInventory,
    probe: Option<ProbeAdapter>,
    sys: SearchPathResolver,
    expand: ExpandOptions,
}

struct CommonPaths {
    hash_db: Option<PathBuf>,
    inventory: Option<PathBuf>,
    registry: Option<PathBuf>,
    sysroot: Option<PathBuf>,
    search_path: Option<String>,
    substitutions: Option<PathBuf>,
    probe: Option<PathBuf>,
}

impl CommonPaths {
    fn validate(&self) -> Result<()> {
        for (p, what) in [
            (&self.hash_db, "hash database"),
            (&self.inventory, "host inventory"),
            (&self.registry, "extractor registry"),
            (&self.substitutions, "substitution map"),
        ] {
            if let Some(p) = p {
                require_file(p, what)?;
            }
        }
        if let Some(p) = &self.sysroot {
            require_dir(p, "sysroot")?;
        }
        if let Some(p) = &self.probe {
            if !p.exists() {
                bail!("probe program {} does not exist", p.display());
            }
        }
        Ok(())
    }

    fn load(&self) -> Result<Loaded> {
        let db = match &self.hash_db {
            Some(p) => HashDb::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => HashDb::new(),
        };
        let inventory = match &self.inventory {
            Some(p) => {
                HostInventory::load(p).with_context(|| format!("loading {}", p.display()))?
            }
            None => HostInventory::new(),
        };
        let mut registry = Registry::builtin();
        if let Some(p) = &self.registry {
            registry.extend(Registry::load(p).with_context(|| format!("loading {}", p.display()))?);
        }
        let mut expand = ExpandOptions::default();
        if let Some(p) = &self.substitutions {
            expand.substitutions = load_substitutions(p)?;
        }
        Ok(Loaded {
            db,
            meta: MetaTable::builtin(),
            registry,
            inventory,
            probe: self.probe.as_ref().map(ProbeAdapter::new),
            sys: SearchPathResolver::new(
                self.sysroot.clone().unwrap_or_else(|| PathBuf::from("/")),
                self.search_path.as_deref().unwrap_or(DEFAULT_SEARCH_PATH),
            ),
            expand,
        })
    }
}

impl Loaded {
    fn ctx(&self) -> ProvenanceContext<'_> {
        ProvenanceContext {
            db: &self.db,
            meta: &self.meta,
            registry: &self.registry,
            inventory: &self.inventory,
            probe: self.probe.as_ref(),
        }
    }
}

fn cmd_scan(a: ScanArgs) -> Result<u8> {
    let conf = Config(match &a.config {
        Some(p) => {
            require_file(p, "config file")?;
            read_config(p)?
        }
        None => BTreeMap::new(),
    });
    if let Some(k) = conf.0.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        bail!("config: unknown key {k:?}");
    }
    let wheel = conf.path(a.wheel, "wheel").context("no wheel given")?;
    let vuln_dir = conf
        .path(a.vuln_db, "vuln-db")
        .context("no vulnerability database given (--vuln-db)")?;
    let repo_dir = conf.path(a.repo, "repo");
    let cg_dir = conf.path(a.callgraphs, "callgraphs");
    let bridges_path = conf.path(a.bridges, "bridges");
    let common = CommonPaths {
        hash_db: conf.path(a.hash_db, "hash-db"),
        inventory: conf.path(a.common.inventory, "inventory"),
        registry: conf.path(a.common.registry, "registry"),
        sysroot: conf.path(a.common.sysroot, "sysroot"),
        search_path: conf.string(a.common.search_path, "search-path"),
        substitutions: conf.path(a.common.substitutions, "substitutions"),
        probe: conf.path(a.common.probe, "probe"),
    };
    let strict = conf.flag(a.common.strict, "strict")?;
    let k = match a.k {
        Some(k) => k,
        None => match conf.0.get("k") {
            Some(v) => v
                .parse()
                .with_context(|| format!("config k: {v:?} is not a number"))?,
            None => DEFAULT_K,
        },
    };
    let mut extras = a.extras;
    if extras.is_empty() {
        if let Some(v) = conf.0.get("extra") {
            extras = v
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
        }
    }

    require_file(&wheel, "wheel")?;
    require_dir(&vuln_dir, "vulnerability database")?;
    if let Some(p) = &repo_dir {
        require_dir(p, "wheel repository")?;
    }
    if let Some(p) = &cg_dir {
        require_dir(p, "call graph directory")?;
    }
    if let Some(p) = &bridges_path {
        require_file(p, "bridge map")?;
    }
    common.validate()?;

    let vulns = VulnDb::load_dir(&vuln_dir)?;
    let graphs = match &cg_dir {
        Some(d) => load_call_graph_dir(d)?,
        None => Vec::new(),
    };
    let bridges = match &bridges_path {
        Some(p) => load_bridge_map(p)?,
        None => BridgeMap::default(),
    };
    let loaded = common.load()?;
    let repo: Box<dyn WheelRepository> = match &repo_dir {
        Some(d) => Box::new(DirRepository::open(d)?),
        None => Box::new(MemRepository::new()),
    };
    let bytes = std::fs::read(&wheel).with_context(|| format!("reading {}", wheel.display()))?;

    let out = scan(&ScanInputs {
        wheel: &bytes,
        repo: repo.as_ref(),
        sys: &loaded.sys,
        parse: ParseOptions {
            strict,
            extras: extras.iter().map(|e| normalize_extra(e)).collect(),
        },
        expand: loaded.expand.clone(),
        provenance: loaded.ctx(),
        graphs: &graphs,
        bridges: &bridges,
        vulns: &vulns,
        k,
    })?;
    print_report(&out.report, a.format);
    Ok(u8::from(out.report.has_findings()))
}

fn print_report(r: &ScanReport, f: Format) {
    if f.json {
        println!("{}", r.to_json());
    } else {
        print!("{}", render_text(r));
    }
}

fn render_listing(l: &ProvenanceListing, stats: bool) -> String {
    let mut out = String::new();
    for e in &l.entries {
        out.push_str(&format!("{}\t{}\t{}\n", e.path, e.kind, e.provenance.tag));
    }
    if stats {
        let s = &l.stats;
        out.push_str(&format!(
            "vendored {}: hash {} ({:.1}%), version {} ({:.1}%), unknown {} ({:.1}%)\n",
            s.vendored,
            s.hash_matched,
            s.hash_fraction() * 100.0,
            s.version_matched,
            s.version_fraction() * 100.0,
            s.unknown,
            s.unknown_fraction() * 100.0,
        ));
    }
    for d in l.diagnostics.iter() {
        eprintln!("{d}");
    }
    out
}

fn cmd_provenance(a: ProvenanceArgs) -> Result<u8> {
    require_file(&a.wheel, "wheel")?;
    let common = CommonPaths {
        hash_db: a.hash_db,
        inventory: a.common.inventory,
        registry: a.common.registry,
        sysroot: a.common.sysroot,
        search_path: a.common.search_path,
        substitutions: a.common.substitutions,
        probe: a.common.probe,
    };
    common.validate()?;
    let loaded = common.load()?;
    let bytes =
        std::fs::read(&a.wheel).with_context(|| format!("reading {}", a.wheel.display()))?;
    let opts = ParseOptions {
        strict: a.common.strict,
        ..Default::default()
    };
    let l = provenance_listing(&bytes, &opts, &loaded.sys, &loaded.expand, &loaded.ctx())?;
    if a.format.json {
        let v = serde_json::to_value(&l)?;
        println!("{}", serde_json::to_string_pretty(&v)?);
    } else {
        print!("{}", render_listing(&l, a.stats));
    }
    Ok(0)
}

fn cmd_report(a: ReportArgs) -> Result<u8> {
    require_file(&a.report, "report")?;
    let text = std::fs::read_to_string(&a.report)?;
    let r: ScanReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.report.display()))?;
    print_report(&r, a.format);
    Ok(u8::from(r.has_findings()))
}
