//! Synthetic per-CVE instance sets with known upstream-only and
//! provenance-aware vulnerable counts.

use std::collections::BTreeMap;

use nativereach_core::pkgmeta::PackageId;
use nativereach_core::upstream::{Method, Provenance, ProvenanceTag};
use nativereach_core::versioncmp::OsFamily;
use nativereach_core::vulnreach::{
    assess_instances, emit_report, CveCounts, OsFix, VulnDb, VulnRecord,
};
use nativereach_core::Diagnostics;

pub struct Group {
    pub count: usize,
    pub tag: ProvenanceTag,
    pub method: Method,
}

pub struct Fixture {
    pub name: &'static str,
    pub record: VulnRecord,
    pub groups: Vec<Group>,
    /// (instances, hash, version, vuln upstream, vuln provenance, whole percent)
    pub expected: (usize, usize, usize, usize, usize, i64),
}

fn os(version: &str, count: usize) -> Group {
    Group {
        count,
        tag: ProvenanceTag::OsPackage {
            os: "debian/debian".into(),
            package: "pkg".into(),
            version: version.into(),
        },
        method: Method::HashMatch,
    }
}

fn up(project: &str, version: &str, count: usize) -> Group {
    Group {
        count,
        tag: ProvenanceTag::Upstream {
            project: project.into(),
            version: version.into(),
        },
        method: Method::VersionMatch,
    }
}

fn record(cve: &str, project: &str, ranges: &[&str], fixed: Option<&str>) -> VulnRecord {
    VulnRecord {
        cve: cve.into(),
        project: project.into(),
        symbols: vec!["f".into()],
        upstream_ranges: ranges.iter().map(|s| s.to_string()).collect(),
        os_fixes: fixed
            .map(|v| OsFix {
                family: OsFamily::Debian,
                distro: "debian".into(),
                package: "pkg".into(),
                fixed: Some(v.into()),
                not_affected: false,
            })
            .into_iter()
            .collect(),
    }
}

pub fn fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "pcre2",
            record: record(
                "CVE-2022-1586",
                "pcre.org/pcre2",
                &["<10.40.0"],
                Some("10.39-3"),
            ),
            groups: vec![
                os("10.39-3", 59),
                os("10.42-1", 6),
                up("pcre.org/pcre2", "10.34", 2),
                up("pcre.org/pcre2", "10.42", 3),
            ],
            expected: (70, 65, 5, 61, 2, 97),
        },
        Fixture {
            name: "hdf5",
            record: record("CVE-2024-33877", "hdfgroup.org/hdf5", &["<1.14.4"], None),
            groups: vec![
                os("1.10.8+repack1-1", 20),
                os("1.14.5+repack-1", 8),
                up("hdfgroup.org/hdf5", "1.12.1", 27),
                up("hdfgroup.org/hdf5", "1.14.4", 6),
            ],
            expected: (61, 28, 33, 47, 47, 0),
        },
        Fixture {
            name: "ffmpeg",
            record: record(
                "CVE-2025-9951",
                "ffmpeg.org",
                &[">=7.1 && <7.1.2", ">=6.0 && <7.0", "<5.1.7"],
                Some("7:5.1.6-0+deb12u1"),
            ),
            groups: vec![
                os("7:5.1.6-0+deb12u1", 1),
                os("7:5.1.5-0+deb12u1", 1),
                up("ffmpeg.org", "6.1.1", 16),
                up("ffmpeg.org", "7.1.2", 35),
            ],
            expected: (53, 2, 51, 18, 17, 6),
        },
    ]
}

pub fn counts(f: &Fixture) -> CveCounts {
    let mut prov = BTreeMap::new();
    let mut n = 0;
    for g in &f.groups {
        for _ in 0..g.count {
            n += 1;
            prov.insert(
                format!("pkg{n}:lib/libx.so"),
                Provenance {
                    tag: g.tag.clone(),
                    alternatives: Vec::new(),
                    method: g.method,
                    libname: Some("libx.so".into()),
                    project: Some(f.record.project.clone()),
                },
            );
        }
    }
    let db = VulnDb::new([f.record.clone()]).expect("record compiles");
    let instances = assess_instances(&prov, &db);
    let report = emit_report(
        &PackageId::new("corpus", "0"),
        &db,
        instances,
        Vec::new(),
        Diagnostics::new(),
    );
    report.cves.into_iter().next().expect("one record")
}

pub fn check(f: &Fixture) -> Result<CveCounts, String> {
    let c = counts(f);
    let (inst, hash, ver, vu, vp, pct) = f.expected;
    let got = (
        c.instances,
        c.hash_matched,
        c.version_matched,
        c.vuln_upstream,
        c.vuln_provenance,
    );
    if got != (inst, hash, ver, vu, vp) {
        return Err(format!(
            "{}: counts {got:?}, expected {:?}",
            f.name,
            (inst, hash, ver, vu, vp)
        ));
    }
    if (c.fp_reduction * 100.0).round() as i64 != pct {
        return Err(format!(
            "{}: fp_reduction {} is not {pct}%",
            f.name, c.fp_reduction
        ));
    }
    if !c.chain_holds() {
        return Err(format!("{}: counter chain broken", f.name));
    }
    Ok(c)
}
