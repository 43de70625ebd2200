//! Library-specific upstream version extraction.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use regex::Regex;

const BUILTIN: &str = include_str!("../../data/extractors.tsv");

#[derive(Debug, Clone)]
pub enum Strategy {
    /// Anchored regex matched against printable runs; capture groups form
    /// the version.
    StringPattern(Regex),
    /// Exported symbol plus decode rule handed to the probe adapter.
    SymbolProbe { symbol: String, decode: String },
}

#[derive(Debug, Clone)]
pub struct ExtractorSpec {
    pub libname: String,
    pub strategy: Strategy,
}

impl ExtractorSpec {
    pub fn string(libname: &str, pattern: &str) -> Result<Self, regex::Error> {
        Ok(Self {
            libname: libname.to_string(),
            strategy: Strategy::StringPattern(Regex::new(&format!("^(?:{pattern})$"))?),
        })
    }

    pub fn probe(libname: &str, symbol: &str, decode: &str) -> Self {
        Self {
            libname: libname.to_string(),
            strategy: Strategy::SymbolProbe {
                symbol: symbol.to_string(),
                decode: decode.to_string(),
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Extractors keyed by normalized library name, in file order.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    specs: BTreeMap<String, Vec<ExtractorSpec>>,
}

impl Registry {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("builtin extractor registry")
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// `libname<TAB>string|probe<TAB>payload`; probe payloads are
    /// `symbol:decode`.
    pub fn parse(text: &str) -> Result<Self, RegistryError> {
        let mut reg = Registry::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| RegistryError::Parse { line: i + 1, msg };
            let mut f = line.splitn(3, '\t');
            let (Some(lib), Some(strategy), Some(payload)) = (f.next(), f.next(), f.next()) else {
                return Err(err("expected 3 tab-separated fields".into()));
            };
            if lib.is_empty() || payload.is_empty() {
                return Err(err("empty field".into()));
            }
            let spec = match strategy {
                "string" => ExtractorSpec::string(lib, payload).map_err(|e| err(e.to_string()))?,
                "probe" => match payload.split_once(':') {
                    Some((sym, dec)) if !sym.is_empty() && !dec.is_empty() => {
                        ExtractorSpec::probe(lib, sym, dec)
                    }
                    _ => return Err(err(format!("bad probe payload {payload:?}"))),
                },
                other => return Err(err(format!("unknown strategy {other:?}"))),
            };
            reg.add(spec);
        }
        Ok(reg)
    }

    pub fn add(&mut self, spec: ExtractorSpec) {
        self.specs
            .entry(spec.libname.clone())
            .or_default()
            .push(spec);
    }

    /// Merge `other` in; its entries come after existing ones.
    pub fn extend(&mut self, other: Registry) {
        for spec in other.specs.into_values().flatten() {
            self.add(spec);
        }
    }

    pub fn get(&self, libname: &str) -> &[ExtractorSpec] {
        self.specs.get(libname).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.specs.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn libnames(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no version string found")]
    NoMatch,
    #[error("conflicting versions: {}", .0.join(", "))]
    Conflict(Vec<String>),
    #[error("probe adapter disabled")]
    ProbeDisabled,
    #[error("probe failed: {0}")]
    ProbeFailed(String),
}

/// Printable ASCII runs of at least `min` bytes, in file order.
pub fn printable_runs(bytes: &[u8], min: usize) -> impl Iterator<Item = &str> {
    bytes
        .split(|b| !(b.is_ascii_graphic() || *b == b' ' || *b == b'\t'))
        .filter(move |r| r.len() >= min)
        .map(|r| std::str::from_utf8(r).expect("ascii"))
}

fn strip_zeros(s: &str) -> &str {
    if s.bytes().all(|b| b.is_ascii_digit()) {
        let t = s.trim_start_matches('0');
        if t.is_empty() {
            "0"
        } else {
            t
        }
    } else {
        s
    }
}

/// Version captured by `re` from a single string, groups joined with `.`.
pub fn version_from_match(re: &Regex, s: &str) -> Option<String> {
    let caps = re.captures(s)?;
    let groups: Vec<&str> = caps.iter().skip(1).flatten().map(|m| m.as_str()).collect();
    match groups.len() {
        0 => None,
        1 => Some(groups[0].to_string()),
        _ => Some(
            groups
                .iter()
                .map(|g| strip_zeros(g))
                .collect::<Vec<_>>()
                .join("."),
        ),
    }
}

/// Scan with a string pattern. All matches must agree.
pub fn scan_strings(bytes: &[u8], re: &Regex) -> Result<String, ExtractError> {
    let mut found: Vec<String> = Vec::new();
    for run in printable_runs(bytes, 4) {
        if let Some(v) = version_from_match(re, run) {
            if !found.contains(&v) {
                found.push(v);
            }
        }
    }
    match found.len() {
        0 => Err(ExtractError::NoMatch),
        1 => Ok(found.pop().unwrap()),
        _ => Err(ExtractError::Conflict(found)),
    }
}

/// External process that loads an object and calls a version symbol.
///
/// Invoked as `<program> <object path> <symbol> <decode>`; must print the
/// version on one line and exit 0.
#[derive(Debug, Clone)]
pub struct ProbeAdapter {
    pub program: PathBuf,
    pub timeout: Duration,
}

impl ProbeAdapter {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            timeout: Duration::from_secs(10),
        }
    }

    pub fn run(&self, object: &Path, symbol: &str, decode: &str) -> Result<String, ExtractError> {
        let fail = |m: String| ExtractError::ProbeFailed(m);
        let mut child = Command::new(&self.program)
            .arg(object)
            .arg(symbol)
            .arg(decode)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| fail(format!("{}: {e}", self.program.display())))?;
        let start = Instant::now();
        let status = loop {
            match child.try_wait().map_err(|e| fail(e.to_string()))? {
                Some(s) => break s,
                None if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(fail(format!("timed out after {:?}", self.timeout)));
                }
                None => std::thread::sleep(Duration::from_millis(5)),
            }
        };
        let mut out = String::new();
        if let Some(mut s) = child.stdout.take() {
            s.read_to_string(&mut out)
                .map_err(|e| fail(e.to_string()))?;
        }
        if !status.success() {
            return Err(fail(format!("exit status {status}")));
        }
        let mut lines = out.lines().filter(|l| !l.trim().is_empty());
        match (lines.next(), lines.next()) {
            (Some(v), None) => Ok(v.trim().to_string()),
            _ => Err(fail(format!("expected one line of output, got {out:?}"))),
        }
    }
}

/// Run one extractor over `bytes`. `object` is a file holding the same
/// bytes, needed only by probes.
pub fn extract_upstream_version(
    bytes: &[u8],
    spec: &ExtractorSpec,
    probe: Option<&ProbeAdapter>,
    object: Option<&Path>,
) -> Result<String, ExtractError> {
    match &spec.strategy {
        Strategy::StringPattern(re) => scan_strings(bytes, re),
        Strategy::SymbolProbe { symbol, decode } => {
            let Some(adapter) = probe else {
                return Err(ExtractError::ProbeDisabled);
            };
            match object {
                Some(p) => adapter.run(p, symbol, decode),
                None => {
                    let mut tmp = tempfile::NamedTempFile::new()
                        .map_err(|e| ExtractError::ProbeFailed(e.to_string()))?;
                    std::io::Write::write_all(&mut tmp, bytes)
                        .map_err(|e| ExtractError::ProbeFailed(e.to_string()))?;
                    adapter.run(tmp.path(), symbol, decode)
                }
            }
        }
    }
}
