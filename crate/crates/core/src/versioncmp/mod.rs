//! Orderings for the version families the scanner compares.
//!
//! Three families matter: Python package versions (for `Requires-Dist`
//! predicates), Debian package versions and RPM package versions (for
//! deciding whether an OS revision carries a backported fix).

mod deb;
mod py;
mod rpm;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use deb::{compare_deb, compare_deb_str, deb_part_cmp, DebVersion};
pub use py::{satisfies, Comparator, PreRelease, PyVersion, VersionClause};
pub use rpm::{compare_rpm, compare_rpm_str, rpmvercmp, RpmVersion};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty version string")]
    Empty,
    #[error("invalid epoch in {0:?}")]
    BadEpoch(String),
    #[error("empty upstream version in {0:?}")]
    EmptyUpstream(String),
    #[error("invalid python version {0:?}")]
    BadPython(String),
    #[error("invalid version clause {0:?}")]
    BadClause(String),
}

/// Package-manager family an OS distribution belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OsFamily {
    Debian,
    Redhat,
    Other,
}

impl OsFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            OsFamily::Debian => "debian",
            OsFamily::Redhat => "redhat",
            OsFamily::Other => "other",
        }
    }
}

impl fmt::Display for OsFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OsFamily {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "debian" | "ubuntu" | "deb" => OsFamily::Debian,
            "redhat" | "rhel" | "rpm" | "fedora" | "centos" => OsFamily::Redhat,
            _ => OsFamily::Other,
        })
    }
}

/// Compare two OS package version strings under the family's rules.
///
/// Unknown families use the Debian algorithm; the returned flag is `true`
/// in that case so callers can surface a diagnostic.
pub fn compare_os_versions(
    family: OsFamily,
    a: &str,
    b: &str,
) -> Result<(Ordering, bool), ParseError> {
    match family {
        OsFamily::Debian => Ok((compare_deb_str(a, b)?, false)),
        OsFamily::Redhat => Ok((compare_rpm_str(a, b)?, false)),
        OsFamily::Other => Ok((compare_deb_str(a, b)?, true)),
    }
}

/// Check that `version` parses under the family's grammar.
pub fn validate_os_version(family: OsFamily, version: &str) -> Result<(), ParseError> {
    match family {
        OsFamily::Redhat => version.parse::<RpmVersion>().map(|_| ()),
        _ => version.parse::<DebVersion>().map(|_| ()),
    }
}

/// The upstream release encoded in an OS package version: epoch and
/// distribution revision stripped. Debian repack and native-update markers
/// (`+dfsg`, `+ds`, `+deb9u1`, ...) are dropped from the first `+` on.
pub fn upstream_of_os_version(family: OsFamily, version: &str) -> Result<String, ParseError> {
    match family {
        OsFamily::Redhat => Ok(version.parse::<RpmVersion>()?.version),
        _ => {
            let upstream = version.parse::<DebVersion>()?.upstream;
            match upstream.find('+') {
                Some(i) if i > 0 => Ok(upstream[..i].to_string()),
                _ => Ok(upstream),
            }
        }
    }
}

/// Relational operator used in upstream vulnerability ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RangeOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

/// A conjunction of `(op, version)` clauses over upstream release strings,
/// compared with the Debian upstream algorithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpstreamRange {
    pub clauses: Vec<(RangeOp, String)>,
}

impl UpstreamRange {
    pub fn contains(&self, version: &str) -> bool {
        self.clauses.iter().all(|(op, bound)| {
            let ord = deb_part_cmp(version, bound);
            match op {
                RangeOp::Lt => ord == Ordering::Less,
                RangeOp::Le => ord != Ordering::Greater,
                RangeOp::Gt => ord == Ordering::Greater,
                RangeOp::Ge => ord != Ordering::Less,
                RangeOp::Eq => ord == Ordering::Equal,
                RangeOp::Ne => ord != Ordering::Equal,
            }
        })
    }

    /// A comparison is ambiguous when a letter-suffixed release is compared
    /// against a bound, since projects disagree on what letters mean.
    pub fn is_ambiguous_for(&self, version: &str) -> bool {
        let lettered = |s: &str| s.chars().any(|c| c.is_ascii_alphabetic());
        lettered(version) || self.clauses.iter().any(|(_, b)| lettered(b))
    }
}

impl FromStr for UpstreamRange {
    type Err = ParseError;

    /// Accepts clauses joined by `,` or `&&`, e.g. `>=7.46.0 && <8.5.0`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut clauses = Vec::new();
        for raw in s.split("&&").flat_map(|p| p.split(',')) {
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let (op, rest) = if let Some(r) = raw.strip_prefix("<=") {
                (RangeOp::Le, r)
            } else if let Some(r) = raw.strip_prefix(">=") {
                (RangeOp::Ge, r)
            } else if let Some(r) = raw.strip_prefix("==") {
                (RangeOp::Eq, r)
            } else if let Some(r) = raw.strip_prefix("!=") {
                (RangeOp::Ne, r)
            } else if let Some(r) = raw.strip_prefix('<') {
                (RangeOp::Lt, r)
            } else if let Some(r) = raw.strip_prefix('>') {
                (RangeOp::Gt, r)
            } else if let Some(r) = raw.strip_prefix('=') {
                (RangeOp::Eq, r)
            } else {
                return Err(ParseError::BadClause(raw.to_string()));
            };
            let v = rest.trim();
            if v.is_empty() || v.chars().any(char::is_whitespace) {
                return Err(ParseError::BadClause(raw.to_string()));
            }
            clauses.push((op, v.to_string()));
        }
        if clauses.is_empty() {
            return Err(ParseError::BadClause(s.to_string()));
        }
        Ok(UpstreamRange { clauses })
    }
}
