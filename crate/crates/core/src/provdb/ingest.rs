use std::io::{Cursor, Read};
use std::path::Path;

use super::{content_hash8, cpio, family_of, normalize_libname, HashDbEntry};
use crate::versioncmp::validate_os_version;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("malformed archive: {0}")]
    MalformedArchive(String),
    #[error("unsupported compression: {0}")]
    UnsupportedCompression(String),
    #[error("invalid package version {0:?}")]
    BadVersion(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const LIB_DIRS: [&str; 4] = ["lib/", "lib64/", "usr/lib/", "usr/lib64/"];

/// Library names accepted without the usual `lib` prefix.
pub const LIBNAME_WHITELIST: [&str; 2] = ["ld-linux-x86-64.so", "ld-linux.so"];

/// Library base name for an archive member path, if the ingestion filter
/// keeps it.
fn library_name(path: &str) -> Option<String> {
    let p = path.trim_start_matches("./").trim_start_matches('/');
    if !LIB_DIRS.iter().any(|d| p.starts_with(d)) {
        return None;
    }
    let norm = normalize_libname(p).ok()?;
    (norm.basename.starts_with("lib") || LIBNAME_WHITELIST.contains(&norm.basename.as_str()))
        .then_some(norm.basename)
}

fn entries_for(
    files: impl IntoIterator<Item = (String, Vec<u8>)>,
    os: &str,
    package: &str,
    version: &str,
) -> Vec<HashDbEntry> {
    let mut out: Vec<HashDbEntry> = files
        .into_iter()
        .filter_map(|(path, bytes)| {
            library_name(&path).map(|libname| HashDbEntry {
                os: os.to_string(),
                package: package.to_string(),
                version: version.to_string(),
                libname,
                hash8: content_hash8(&bytes),
            })
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

fn check_version(os: &str, version: &str) -> Result<(), IngestError> {
    validate_os_version(family_of(os), version)
        .map_err(|_| IngestError::BadVersion(version.to_string()))
}

fn decompress(kind: &str, data: &[u8]) -> Result<Vec<u8>, IngestError> {
    let mut out = Vec::new();
    let fail = |e: String| IngestError::MalformedArchive(format!("{kind} stream: {e}"));
    match kind {
        "none" => out.extend_from_slice(data),
        "gzip" => {
            flate2::read::GzDecoder::new(data)
                .read_to_end(&mut out)
                .map_err(|e| fail(e.to_string()))?;
        }
        "xz" => lzma_rs::xz_decompress(&mut Cursor::new(data), &mut out)
            .map_err(|e| fail(e.to_string()))?,
        "lzma" => lzma_rs::lzma_decompress(&mut Cursor::new(data), &mut out)
            .map_err(|e| fail(e.to_string()))?,
        #[cfg(feature = "zstd")]
        "zstd" => {
            let mut dec =
                ruzstd::decoding::StreamingDecoder::new(data).map_err(|e| fail(e.to_string()))?;
            dec.read_to_end(&mut out).map_err(|e| fail(e.to_string()))?;
        }
        other => return Err(IngestError::UnsupportedCompression(other.to_string())),
    }
    Ok(out)
}

fn sniff(data: &[u8]) -> &'static str {
    if data.starts_with(&[0x1f, 0x8b]) {
        "gzip"
    } else if data.starts_with(&[0xfd, b'7', b'z', b'X', b'Z', 0]) {
        "xz"
    } else if data.starts_with(&[0x28, 0xb5, 0x2f, 0xfd]) {
        "zstd"
    } else if data.starts_with(b"070701") {
        "none"
    } else if data.starts_with(b"BZh") {
        "bzip2"
    } else if data.starts_with(&[0x5d, 0, 0]) {
        "lzma"
    } else {
        "unknown"
    }
}

fn tar_files(data: &[u8]) -> Result<Vec<(String, Vec<u8>)>, IngestError> {
    let mut ar = tar::Archive::new(data);
    let mut out = Vec::new();
    let bad = |e: std::io::Error| IngestError::MalformedArchive(format!("data tarball: {e}"));
    for entry in ar.entries().map_err(bad)? {
        let mut entry = entry.map_err(bad)?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let path = entry.path().map_err(bad)?.to_string_lossy().into_owned();
        let mut buf = Vec::new();
        entry.read_to_end(&mut buf).map_err(bad)?;
        out.push((path, buf));
    }
    Ok(out)
}

/// Entries for every shared library in a `.deb`'s data tarball.
pub fn ingest_deb(
    artifact: &[u8],
    os: &str,
    package: &str,
    version: &str,
) -> Result<Vec<HashDbEntry>, IngestError> {
    check_version(os, version)?;
    let mut ar = ar::Archive::new(artifact);
    while let Some(entry) = ar.next_entry() {
        let mut entry = entry.map_err(|e| IngestError::MalformedArchive(format!("ar: {e}")))?;
        let name = String::from_utf8_lossy(entry.header().identifier()).into_owned();
        let kind = match name.trim_end_matches('/') {
            "data.tar" => "none",
            "data.tar.gz" => "gzip",
            "data.tar.xz" => "xz",
            "data.tar.zst" => "zstd",
            "data.tar.lzma" => "lzma",
            n if n.starts_with("data.tar.") => {
                return Err(IngestError::UnsupportedCompression(n.to_string()))
            }
            _ => continue,
        };
        let mut raw = Vec::new();
        entry
            .read_to_end(&mut raw)
            .map_err(|e| IngestError::MalformedArchive(format!("ar member {name}: {e}")))?;
        let tarball = decompress(kind, &raw)?;
        return Ok(entries_for(tar_files(&tarball)?, os, package, version));
    }
    Err(IngestError::MalformedArchive("no data.tar member".into()))
}

fn be32(b: &[u8], at: usize) -> Option<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
}

/// Length of the header structure starting at `at`.
fn rpm_header_len(b: &[u8], at: usize, what: &str) -> Result<usize, IngestError> {
    let bad = |m: &str| IngestError::MalformedArchive(format!("rpm {what} header: {m}"));
    if b.get(at..at + 4) != Some(&[0x8e, 0xad, 0xe8, 0x01][..]) {
        return Err(bad("bad magic"));
    }
    let nindex = be32(b, at + 8).ok_or_else(|| bad("truncated"))? as usize;
    let hsize = be32(b, at + 12).ok_or_else(|| bad("truncated"))? as usize;
    let len = nindex
        .checked_mul(16)
        .and_then(|n| n.checked_add(16))
        .and_then(|n| n.checked_add(hsize))
        .ok_or_else(|| bad("size overflow"))?;
    if at.checked_add(len).is_none_or(|end| end > b.len()) {
        return Err(bad("extends past end of file"));
    }
    Ok(len)
}

/// Entries for every shared library in an `.rpm`'s cpio payload.
pub fn ingest_rpm(
    artifact: &[u8],
    os: &str,
    package: &str,
    version: &str,
) -> Result<Vec<HashDbEntry>, IngestError> {
    check_version(os, version)?;
    if artifact.len() < 96 || artifact[..4] != [0xed, 0xab, 0xee, 0xdb] {
        return Err(IngestError::MalformedArchive("missing rpm lead".into()));
    }
    let sig_len = rpm_header_len(artifact, 96, "signature")?;
    let main_at = (96 + sig_len).next_multiple_of(8);
    let main_len = rpm_header_len(artifact, main_at, "main")?;
    let payload = &artifact[main_at + main_len..];
    let kind = sniff(payload);
    if kind == "unknown" {
        return Err(IngestError::UnsupportedCompression(
            "unrecognized payload".into(),
        ));
    }
    let archive = decompress(kind, payload)?;
    let files = cpio::read(&archive).map_err(|e| IngestError::MalformedArchive(e.to_string()))?;
    Ok(entries_for(
        files
            .into_iter()
            .filter(|e| e.is_file())
            .map(|e| (e.name.to_string(), e.data.to_vec())),
        os,
        package,
        version,
    ))
}

/// Same rule over an already-extracted filesystem tree. Symlinks are
/// skipped.
pub fn ingest_tree(
    root: &Path,
    os: &str,
    package: &str,
    version: &str,
) -> Result<Vec<HashDbEntry>, IngestError> {
    check_version(os, version)?;
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root)
        .follow_links(false)
        .sort_by_file_name()
    {
        let entry = entry.map_err(|e| IngestError::Io(e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root")
            .to_string_lossy()
            .replace('\\', "/");
        if library_name(&rel).is_some() {
            files.push((rel, std::fs::read(entry.path())?));
        }
    }
    Ok(entries_for(files, os, package, version))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_deb, build_rpm, ArchiveEntry, Compression};

    #[test]
    fn library_filter() {
        assert_eq!(
            library_name("./usr/lib/x86_64-linux-gnu/libz.so.1.2.11").as_deref(),
            Some("libz.so")
        );
        assert_eq!(library_name("/lib64/libc.so.6").as_deref(), Some("libc.so"));
        assert_eq!(library_name("usr/share/doc/libz.so.txt"), None);
        assert_eq!(library_name("usr/bin/libz.so"), None);
        assert_eq!(library_name("usr/lib/python3/foo.so"), None);
        assert_eq!(
            library_name("lib64/ld-linux-x86-64.so.2").as_deref(),
            Some("ld-linux-x86-64.so")
        );
    }

    #[test]
    fn deb_with_symlink() {
        let lib = b"\x7fELF zlib".to_vec();
        let entries = [
            ArchiveEntry::file("usr/lib/x86_64-linux-gnu/libz.so.1.2.11", lib.clone()),
            ArchiveEntry::symlink("usr/lib/x86_64-linux-gnu/libz.so", "libz.so.1"),
            ArchiveEntry::file("usr/share/doc/zlib1g/copyright", b"text".to_vec()),
        ];
        for comp in [
            Compression::None,
            Compression::Gzip,
            Compression::Xz,
            #[cfg(feature = "zstd")]
            Compression::Zstd,
        ] {
            let deb = build_deb("zlib1g", "1:1.2.11.dfsg-1", &entries, comp);
            let got = ingest_deb(&deb, "debian/debian", "zlib1g", "1:1.2.11.dfsg-1").unwrap();
            assert_eq!(got.len(), 1, "{comp:?}");
            assert_eq!(got[0].libname, "libz.so");
            assert_eq!(got[0].hash8, content_hash8(&lib));
        }
    }

    #[test]
    fn rpm_multi_lib() {
        let entries = [
            ArchiveEntry::file("usr/lib64/libxml2.so.2.9.1", b"xml".to_vec()),
            ArchiveEntry::file("usr/lib64/libxml2mod.so", b"mod".to_vec()),
            ArchiveEntry::symlink("usr/lib64/libxml2.so.2", "libxml2.so.2.9.1"),
        ];
        for comp in [
            Compression::Gzip,
            Compression::Xz,
            #[cfg(feature = "zstd")]
            Compression::Zstd,
        ] {
            let rpm = build_rpm("libxml2", "2.9.1", "6.el7_9.6", &entries, comp);
            let got = ingest_rpm(&rpm, "redhat/centos", "libxml2", "2.9.1-6.el7_9.6").unwrap();
            let names: Vec<&str> = got.iter().map(|e| e.libname.as_str()).collect();
            assert_eq!(names, ["libxml2.so", "libxml2mod.so"]);
        }
        let empty = build_rpm("e", "1", "1", &[], Compression::Gzip);
        assert!(ingest_rpm(&empty, "redhat/centos", "e", "1-1")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            ingest_deb(b"not an ar", "debian/debian", "p", "1"),
            Err(IngestError::MalformedArchive(_))
        ));
        assert!(matches!(
            ingest_rpm(&[0u8; 200], "redhat/centos", "p", "1-1"),
            Err(IngestError::MalformedArchive(_))
        ));
        assert!(matches!(
            ingest_deb(&[], "debian/debian", "p", ""),
            Err(IngestError::BadVersion(_))
        ));
        let deb = build_deb("p", "1", &[], Compression::Gzip);
        let mut bad = deb.clone();
        let at = bad.len() - 10;
        bad.truncate(at);
        assert!(ingest_deb(&bad, "debian/debian", "p", "1").is_err());
    }
}
