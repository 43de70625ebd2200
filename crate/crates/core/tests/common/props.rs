//! Hash-database, naming, ingestion and ELF-robustness properties.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};

use nativereach_core::elfscan::{detect_elf, read_dynamic, read_needed};
use nativereach_core::provdb::{
    content_hash8, ingest_deb, ingest_rpm, ingest_tree, normalize_libname, HashDb, HashDbEntry,
};
use nativereach_core::synth::{
    build_deb, build_elf, build_rpm, ArchiveEntry, Compression, ElfSpec,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

fn pick<'a>(rng: &mut StdRng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

pub fn random_db(rng: &mut StdRng) -> HashDb {
    let n = rng.random_range(0..60);
    HashDb::from_entries((0..n).map(|_| HashDbEntry {
        os: pick(rng, &["debian/debian", "debian/ubuntu", "redhat/centos"]).into(),
        package: pick(rng, &["libxml2", "openssl-libs", "zlib1g"]).into(),
        version: pick(rng, &["1.0-1", "1.0-2", "2:1.1-1", "1.0-1.el7"]).into(),
        libname: pick(rng, &["libxml2.so", "libcrypto.so", "libz.so"]).into(),
        hash8: pick(rng, &["3998bec4", "39f609e7", "00000000", "ffffffff"]).into(),
    }))
}

/// `query` agrees with a linear scan, before and after a save/load trip.
pub fn query_vs_linear(trials: usize, rng: &mut StdRng) -> Result<usize, String> {
    let mut queries = 0;
    for _ in 0..trials {
        let db = random_db(rng);
        let reloaded = HashDb::read(db.to_text().as_bytes()).map_err(|e| e.to_string())?;
        if reloaded != db {
            return Err("save/load changed the database".into());
        }
        for l in ["libxml2.so", "libcrypto.so", "libz.so", "libnone.so"] {
            for h in ["3998bec4", "39f609e7", "00000000", "ffffffff", "12345678"] {
                let want: BTreeSet<&HashDbEntry> = db
                    .entries()
                    .filter(|e| e.libname == l && e.hash8 == h)
                    .collect();
                for d in [&db, &reloaded] {
                    let got: Vec<&HashDbEntry> = d.query(l, h).iter().collect();
                    let set: BTreeSet<&HashDbEntry> = got.iter().copied().collect();
                    if set != want || got.len() != want.len() {
                        return Err(format!("query({l}, {h}) = {got:?}, linear scan {want:?}"));
                    }
                }
                queries += 1;
            }
        }
    }
    Ok(queries)
}

/// (file name, base name, embedded hash, version suffix)
pub const NAME_CORPUS: &[(&str, &str, Option<&str>, Option<&str>)] = &[
    (
        "libxml2-39f609e7.so.2.9.7",
        "libxml2.so",
        Some("39f609e7"),
        Some("2.9.7"),
    ),
    (
        "libxml2-3998bec4.so.2.9.1",
        "libxml2.so",
        Some("3998bec4"),
        Some("2.9.1"),
    ),
    ("libcrypto.so.3", "libcrypto.so", None, Some("3")),
    ("libfoo.so", "libfoo.so", None, None),
    (
        "libgfortran-040039e1.so.5.0.0",
        "libgfortran.so",
        Some("040039e1"),
        Some("5.0.0"),
    ),
    (
        "libquadmath-96973f99.so.0.0.0",
        "libquadmath.so",
        Some("96973f99"),
        Some("0.0.0"),
    ),
    (
        "libgomp-a34b3233.so.1.0.0",
        "libgomp.so",
        Some("a34b3233"),
        Some("1.0.0"),
    ),
    (
        "libpng16-1bde1c40.so.16.43.0",
        "libpng16.so",
        Some("1bde1c40"),
        Some("16.43.0"),
    ),
    (
        "libavcodec-46fe3b8c.so.61.19.100",
        "libavcodec.so",
        Some("46fe3b8c"),
        Some("61.19.100"),
    ),
    (
        "libssl-4b1c6c36.so.3",
        "libssl.so",
        Some("4b1c6c36"),
        Some("3"),
    ),
    (
        "libpcre2-8-516f4c9d.so.0.11.0",
        "libpcre2-8.so",
        Some("516f4c9d"),
        Some("0.11.0"),
    ),
    (
        "libhdf5_serial-a0a2b2cf.so.103.0.0",
        "libhdf5_serial.so",
        Some("a0a2b2cf"),
        Some("103.0.0"),
    ),
    (
        "libstdc++-6b6d5e8e.so.6.0.33",
        "libstdc++.so",
        Some("6b6d5e8e"),
        Some("6.0.33"),
    ),
    (
        "libz-eb09ad1d.so.1.3.1",
        "libz.so",
        Some("eb09ad1d"),
        Some("1.3.1"),
    ),
    (
        "libcurl-BADC0DE1.so.4",
        "libcurl.so",
        Some("badc0de1"),
        Some("4"),
    ),
    (
        "libjpeg-45e70d75.so.62.4.0",
        "libjpeg.so",
        Some("45e70d75"),
        Some("62.4.0"),
    ),
    ("libtiff-0a8a2a8d.so", "libtiff.so", Some("0a8a2a8d"), None),
    ("libfoo-1234567.so.1", "libfoo-1234567.so", None, Some("1")),
    (
        "libfoo-123456789.so.1",
        "libfoo-123456789.so",
        None,
        Some("1"),
    ),
    (
        "libfoo-ghijklmn.so.1",
        "libfoo-ghijklmn.so",
        None,
        Some("1"),
    ),
    (
        "python3.12/site-packages/x.libs/libbar-deadbeef.so.2",
        "libbar.so",
        Some("deadbeef"),
        Some("2"),
    ),
    ("libsqlite3.so.0.8.6", "libsqlite3.so", None, Some("0.8.6")),
    ("_igraph.abi3.so", "_igraph.abi3.so", None, None),
];

pub const NOT_LIBRARIES: &[&str] = &[
    "README",
    "libfoo.a",
    "libfoo.so.x",
    ".so",
    "libfoo.so.1.",
    "foo.soap",
];

/// Every corpus name parses as listed, and stripping the hash gives back
/// the name the library had before vendoring.
pub fn normalize_corpus() -> Result<usize, String> {
    for (name, base, hash, suffix) in NAME_CORPUS {
        let n = normalize_libname(name).map_err(|e| format!("{name}: {e}"))?;
        let got = (
            n.basename.as_str(),
            n.embedded_hash.as_deref(),
            n.version_suffix.as_deref(),
        );
        if got != (*base, *hash, *suffix) {
            return Err(format!("{name}: got {got:?}"));
        }
        let file = name.rsplit('/').next().unwrap();
        let original = match hash {
            Some(_) => {
                let i = file.find(".so").unwrap();
                format!("{}{}", &file[..i - 9], &file[i..])
            }
            None => file.to_string(),
        };
        if n.original_filename() != original {
            return Err(format!(
                "{name}: original {} != {original}",
                n.original_filename()
            ));
        }
        let again = normalize_libname(&n.original_filename()).map_err(|e| e.to_string())?;
        if again.basename != n.basename
            || again.version_suffix != n.version_suffix
            || again.embedded_hash.is_some()
        {
            return Err(format!(
                "{name}: re-normalizing the original gives {again:?}"
            ));
        }
    }
    for bad in NOT_LIBRARIES {
        if normalize_libname(bad).is_ok() {
            return Err(format!("{bad} accepted as a library name"));
        }
    }
    Ok(NAME_CORPUS.len() + NOT_LIBRARIES.len())
}

fn libs() -> Vec<ArchiveEntry> {
    vec![
        ArchiveEntry::file(
            "usr/lib/x86_64-linux-gnu/libxml2.so.2.9.14",
            build_elf(&ElfSpec::shared("libxml2.so.2")),
        ),
        ArchiveEntry::symlink("usr/lib/x86_64-linux-gnu/libxml2.so.2", "libxml2.so.2.9.14"),
        ArchiveEntry::file(
            "lib/x86_64-linux-gnu/libz.so.1.2.11",
            build_elf(&ElfSpec::shared("libz.so.1")),
        ),
        ArchiveEntry::file(
            "usr/lib64/libcrypto.so.3",
            build_elf(&ElfSpec::shared("libcrypto.so.3").rodata(b"x")),
        ),
        ArchiveEntry::file("usr/share/doc/libxml2/copyright", b"text".to_vec()),
        ArchiveEntry::file("usr/bin/xmllint", build_elf(&ElfSpec::default())),
    ]
}

fn sorted(mut v: Vec<HashDbEntry>) -> Vec<HashDbEntry> {
    v.sort();
    v
}

/// Repeated and reordered ingestion gives the same entries, and a
/// database built twice from the same artifacts is byte-identical.
pub fn ingest_determinism(rng: &mut StdRng) -> Result<usize, String> {
    let e = |r: Result<Vec<HashDbEntry>, _>| {
        r.map_err(|e: nativereach_core::provdb::IngestError| e.to_string())
    };
    let comps = [
        Compression::None,
        Compression::Gzip,
        Compression::Xz,
        #[cfg(feature = "zstd")]
        Compression::Zstd,
    ];
    let mut checked = 0;
    let base = libs();
    let hash = |i: usize| match &base[i] {
        ArchiveEntry::File { bytes, .. } => content_hash8(bytes),
        ArchiveEntry::Symlink { .. } => unreachable!(),
    };
    let mut expected = vec![
        ("libxml2.so".to_string(), hash(0)),
        ("libz.so".to_string(), hash(2)),
        ("libcrypto.so".to_string(), hash(3)),
    ];
    expected.sort();
    for comp in comps {
        let mut shuffled = base.clone();
        shuffled.shuffle(rng);
        let deb = build_deb("pkg", "1.0-1", &base, comp);
        let deb2 = build_deb("pkg", "1.0-1", &shuffled, comp);
        let rpm = build_rpm("pkg", "1.0", "1.el9", &base, comp);
        let rpm2 = build_rpm("pkg", "1.0", "1.el9", &shuffled, comp);
        let a = sorted(e(ingest_deb(&deb, "debian/debian", "pkg", "1.0-1"))?);
        let b = sorted(e(ingest_deb(&deb, "debian/debian", "pkg", "1.0-1"))?);
        let c = sorted(e(ingest_deb(&deb2, "debian/debian", "pkg", "1.0-1"))?);
        if a != b || a != c {
            return Err(format!("deb ingestion not deterministic with {comp:?}"));
        }
        let keys: Vec<(String, String)> = a
            .iter()
            .map(|x| (x.libname.clone(), x.hash8.clone()))
            .collect();
        if keys != expected {
            return Err(format!("deb entries {keys:?}, expected {expected:?}"));
        }
        let r1 = sorted(e(ingest_rpm(&rpm, "redhat/rocky", "pkg", "1.0-1.el9"))?);
        let r2 = sorted(e(ingest_rpm(&rpm2, "redhat/rocky", "pkg", "1.0-1.el9"))?);
        if r1 != r2
            || r1
                .iter()
                .map(|x| (&x.libname, &x.hash8))
                .ne(a.iter().map(|x| (&x.libname, &x.hash8)))
        {
            return Err(format!("rpm ingestion differs with {comp:?}"));
        }
        let mut once = HashDb::from_entries(a.clone());
        let twice = HashDb::from_entries(a.iter().chain(&b).cloned());
        if once.to_text() != twice.to_text() {
            return Err("double ingestion changed the database".into());
        }
        once.merge(&twice);
        if once.to_text() != twice.to_text() {
            return Err("merging a database into itself changed it".into());
        }
        checked += 4;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for a in &base {
        match a {
            ArchiveEntry::File { path, bytes } => {
                let p = dir.path().join(path);
                std::fs::create_dir_all(p.parent().unwrap()).map_err(|e| e.to_string())?;
                std::fs::write(p, bytes).map_err(|e| e.to_string())?;
            }
            ArchiveEntry::Symlink { path, target } => {
                std::os::unix::fs::symlink(target, dir.path().join(path))
                    .map_err(|e| e.to_string())?;
            }
        }
    }
    let t1 = sorted(e(ingest_tree(dir.path(), "debian/debian", "pkg", "1.0-1"))?);
    let t2 = sorted(e(ingest_tree(dir.path(), "debian/debian", "pkg", "1.0-1"))?);
    let d = sorted(e(ingest_deb(
        &build_deb("pkg", "1.0-1", &base, Compression::Gzip),
        "debian/debian",
        "pkg",
        "1.0-1",
    ))?);
    if t1 != t2 || t1 != d {
        return Err(format!("tree ingestion {t1:?} differs from deb {d:?}"));
    }
    Ok(checked + 2)
}

fn seeds() -> Vec<Vec<u8>> {
    let many: Vec<String> = (0..40).map(|i| format!("sym_{i}")).collect();
    let many: Vec<&str> = many.iter().map(String::as_str).collect();
    vec![
        build_elf(
            &ElfSpec::shared("libx.so.1")
                .needs(&["libz.so.1", "libm.so.6"])
                .exports(&["f", "g"])
                .imports(&["h"]),
        ),
        build_elf(&ElfSpec {
            no_sections: true,
            ..ElfSpec::shared("liby.so")
                .needs(&["libc.so.6"])
                .exports(&["a"])
        }),
        build_elf(&ElfSpec {
            no_dynamic: true,
            ..Default::default()
        }),
        build_elf(&ElfSpec::shared("libbig.so").exports(&many).rodata(&[7; 64])),
    ]
}

fn mutate(rng: &mut StdRng, seed: &[u8]) -> Vec<u8> {
    let mut b = seed.to_vec();
    match rng.random_range(0..5) {
        0 => {
            for _ in 0..rng.random_range(1..=8) {
                let i = rng.random_range(0..b.len());
                b[i] = rng.random();
            }
        }
        1 => b.truncate(rng.random_range(0..b.len())),
        2 => {
            // header offsets and counts
            let fields = [
                (0x20usize, 8usize),
                (0x28, 8),
                (0x36, 2),
                (0x38, 2),
                (0x3a, 2),
                (0x3c, 2),
                (0x3e, 2),
            ];
            let (off, len) = fields[rng.random_range(0..fields.len())];
            let v: u64 = match rng.random_range(0..3) {
                0 => rng.random(),
                1 => rng.random_range(0..b.len() as u64 + 64),
                _ => u64::MAX >> rng.random_range(0..64),
            };
            b[off..off + len].copy_from_slice(&v.to_le_bytes()[..len]);
        }
        3 => {
            // somewhere past the header: table entries, dynamic array, strings
            let start = rng.random_range(64..b.len());
            for x in b[start..].iter_mut().take(rng.random_range(1..32)) {
                *x = rng.random();
            }
        }
        _ => {
            let n = rng.random_range(0..256);
            let mut v: Vec<u8> = (0..n).map(|_| rng.random()).collect();
            if v.len() >= 6 && rng.random_bool(0.5) {
                v[..6].copy_from_slice(b"\x7fELF\x02\x01");
            }
            b = v;
        }
    }
    b
}

/// Feed mutated objects to the ELF reader; any panic is a failure.
pub fn elf_fuzz(inputs: usize, rng: &mut StdRng) -> Result<usize, String> {
    let seeds = seeds();
    let prev = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut result = Ok(inputs);
    for i in 0..inputs {
        let s = &seeds[i % seeds.len()];
        let input = mutate(rng, s);
        let r = catch_unwind(AssertUnwindSafe(|| {
            let _ = detect_elf(&input);
            let _ = read_dynamic(&input);
            let _ = read_needed(&input);
        }));
        if r.is_err() {
            result = Err(format!(
                "reader panicked on input {i} ({} bytes): {:02x?}",
                input.len(),
                &input[..input.len().min(96)]
            ));
            break;
        }
    }
    std::panic::set_hook(prev);
    result
}
