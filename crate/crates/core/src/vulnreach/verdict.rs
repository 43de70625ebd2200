//! Backport-aware verdicts and the upstream-only baseline.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::record::CompiledRecord;
use crate::provdb::family_of;
use crate::upstream::ProvenanceTag;
use crate::versioncmp::{compare_os_versions, upstream_of_os_version};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Vulnerable,
    Fixed,
    NotAffected,
    Unknown,
}

fn split_os(os: &str) -> (&str, &str) {
    os.split_once('/').unwrap_or((os, os))
}

fn upstream_only(os: &str, version: &str, rec: &CompiledRecord) -> Verdict {
    match upstream_of_os_version(family_of(os), version) {
        Ok(up) if rec.upstream_vulnerable(&up) => Verdict::Vulnerable,
        Ok(_) => Verdict::NotAffected,
        Err(_) => Verdict::Unknown,
    }
}

/// Verdict for a binary with provenance `tag`.
///
/// OS-packaged binaries are judged by the distribution's fix record when
/// there is one, so backported fixes count; otherwise by the upstream
/// release their version encodes.
pub fn is_vulnerable(tag: &ProvenanceTag, rec: &CompiledRecord) -> Verdict {
    match tag {
        ProvenanceTag::OsPackage {
            os,
            package,
            version,
        }
        | ProvenanceTag::HostSystem {
            os,
            package,
            version,
        } => {
            let family = family_of(os);
            let (_, distro) = split_os(os);
            match rec.os_fix(family, distro, package) {
                Some(fix) if fix.not_affected => Verdict::NotAffected,
                Some(fix) => {
                    let fixed = fix.fixed.as_deref().unwrap_or_default();
                    match compare_os_versions(family, version, fixed) {
                        Ok((Ordering::Less, _)) => Verdict::Vulnerable,
                        Ok(_) => Verdict::Fixed,
                        Err(_) => Verdict::Unknown,
                    }
                }
                None => upstream_only(os, version, rec),
            }
        }
        ProvenanceTag::Upstream { project, version } => {
            if *project != rec.record.project {
                Verdict::NotAffected
            } else if rec.upstream_vulnerable(version) {
                Verdict::Vulnerable
            } else {
                Verdict::NotAffected
            }
        }
        ProvenanceTag::OwningPythonPackage { .. } => Verdict::NotAffected,
        ProvenanceTag::Unknown { .. } => Verdict::Unknown,
    }
}

/// What a scanner that trusts upstream version strings would say.
pub fn baseline_upstream_only(tag: &ProvenanceTag, rec: &CompiledRecord) -> Verdict {
    match tag {
        ProvenanceTag::OsPackage { os, version, .. }
        | ProvenanceTag::HostSystem { os, version, .. } => upstream_only(os, version, rec),
        ProvenanceTag::Upstream { .. } => is_vulnerable(tag, rec),
        ProvenanceTag::OwningPythonPackage { .. } => Verdict::NotAffected,
        ProvenanceTag::Unknown { .. } => Verdict::Unknown,
    }
}

/// Combine the verdicts of several candidate provenances: any vulnerable
/// candidate makes the binary vulnerable, then any unknown one makes it
/// unknown.
pub fn union(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let all: Vec<Verdict> = verdicts.into_iter().collect();
    [
        Verdict::Vulnerable,
        Verdict::Unknown,
        Verdict::Fixed,
        Verdict::NotAffected,
    ]
    .into_iter()
    .find(|v| all.contains(v))
    .unwrap_or(Verdict::Unknown)
}

/// The upstream release a tag speaks about, if any.
pub fn upstream_version_of(tag: &ProvenanceTag) -> Option<String> {
    match tag {
        ProvenanceTag::OsPackage { os, version, .. }
        | ProvenanceTag::HostSystem { os, version, .. } => {
            upstream_of_os_version(family_of(os), version).ok()
        }
        ProvenanceTag::Upstream { version, .. } => Some(version.clone()),
        _ => None,
    }
}
