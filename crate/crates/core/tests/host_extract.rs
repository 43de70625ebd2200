//! String extractors against the host's own distro libraries, checked
//! against the package manager's recorded versions. Libraries that are not
//! installed, or hosts without dpkg, are skipped.

use std::path::Path;

use nativereach_core::provdb::normalize_libname;
use nativereach_core::upstream::{dpkg_owner, extract_upstream_version, Registry, Strategy};
use nativereach_core::versioncmp::{upstream_of_os_version, OsFamily};

const LIBS: &[&str] = &[
    "libcrypto.so.3",
    "libcrypto.so.1.1",
    "libxml2.so.2",
    "libcurl.so.4",
    "libpcre2-8.so.0",
    "libsqlite3.so.0",
    "libz.so.1",
    "liblz4.so.1",
    "libicuuc.so.70",
    "libicui18n.so.70",
    "libhdf5_serial.so.103",
];

const DIRS: &[&str] = &[
    "/usr/lib/x86_64-linux-gnu",
    "/lib/x86_64-linux-gnu",
    "/usr/lib64",
    "/usr/lib",
];

/// `short` equals `full` or is a prefix ending at a component boundary.
fn release_prefix(short: &str, full: &str) -> bool {
    full == short
        || full
            .strip_prefix(short)
            .is_some_and(|rest| rest.starts_with(|c: char| !c.is_ascii_alphanumeric()))
}

#[test]
fn extracted_versions_match_dpkg() {
    let registry = Registry::builtin();
    let mut checked = 0;
    for lib in LIBS {
        let Some(path) = DIRS
            .iter()
            .map(|d| Path::new(d).join(lib))
            .find(|p| p.exists())
        else {
            continue;
        };
        let Some((pkg, ver)) = dpkg_owner(&path) else {
            eprintln!("skip {}: not owned by a dpkg package", path.display());
            continue;
        };
        let real = std::fs::canonicalize(&path).unwrap();
        let bytes = std::fs::read(&real).unwrap();
        let libname = normalize_libname(lib).unwrap().basename;
        let spec = registry
            .get(&libname)
            .iter()
            .find(|s| matches!(s.strategy, Strategy::StringPattern(_)))
            .unwrap_or_else(|| panic!("no string extractor for {libname}"));
        let got = extract_upstream_version(&bytes, spec, None, None)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let want = upstream_of_os_version(OsFamily::Debian, &ver).unwrap();
        assert!(
            release_prefix(&got, &want),
            "{}: extracted {got}, {pkg} {ver} says {want}",
            path.display()
        );
        eprintln!("{lib}: {got} ({pkg} {ver})");
        checked += 1;
    }
    eprintln!("checked {checked} host libraries");
}

#[test]
fn prefix_rule() {
    assert!(release_prefix("1.2.11", "1.2.11.dfsg"));
    assert!(release_prefix("70", "70.1"));
    assert!(!release_prefix("1.2.1", "1.2.11"));
}
