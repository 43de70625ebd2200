use std::io::Write;

use crate::provdb::cpio;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    None,
    Gzip,
    Xz,
    #[cfg(feature = "zstd")]
    Zstd,
}

impl Compression {
    fn suffix(self) -> &'static str {
        match self {
            Compression::None => "",
            Compression::Gzip => ".gz",
            Compression::Xz => ".xz",
            #[cfg(feature = "zstd")]
            Compression::Zstd => ".zst",
        }
    }

    fn rpm_name(self) -> &'static str {
        match self {
            Compression::None => "identity",
            Compression::Gzip => "gzip",
            Compression::Xz => "xz",
            #[cfg(feature = "zstd")]
            Compression::Zstd => "zstd",
        }
    }

    pub fn compress(self, data: &[u8]) -> Vec<u8> {
        match self {
            Compression::None => data.to_vec(),
            Compression::Gzip => {
                let mut enc =
                    flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
                enc.write_all(data).expect("in-memory write");
                enc.finish().expect("in-memory write")
            }
            Compression::Xz => {
                let mut out = Vec::new();
                lzma_rs::xz_compress(&mut std::io::Cursor::new(data), &mut out)
                    .expect("in-memory write");
                out
            }
            #[cfg(feature = "zstd")]
            Compression::Zstd => ruzstd::encoding::compress_to_vec(
                std::io::Cursor::new(data),
                ruzstd::encoding::CompressionLevel::Fastest,
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ArchiveEntry {
    File { path: String, bytes: Vec<u8> },
    Symlink { path: String, target: String },
}

impl ArchiveEntry {
    pub fn file(path: &str, bytes: Vec<u8>) -> Self {
        ArchiveEntry::File {
            path: path.to_string(),
            bytes,
        }
    }

    pub fn symlink(path: &str, target: &str) -> Self {
        ArchiveEntry::Symlink {
            path: path.to_string(),
            target: target.to_string(),
        }
    }
}

fn tar_of(entries: &[ArchiveEntry]) -> Vec<u8> {
    let mut b = tar::Builder::new(Vec::new());
    for e in entries {
        let mut h = tar::Header::new_gnu();
        h.set_mtime(0);
        h.set_uid(0);
        h.set_gid(0);
        match e {
            ArchiveEntry::File { path, bytes } => {
                h.set_entry_type(tar::EntryType::Regular);
                h.set_mode(0o644);
                h.set_size(bytes.len() as u64);
                b.append_data(&mut h, format!("./{path}"), bytes.as_slice())
                    .expect("tar append");
            }
            ArchiveEntry::Symlink { path, target } => {
                h.set_entry_type(tar::EntryType::Symlink);
                h.set_mode(0o777);
                h.set_size(0);
                b.append_link(&mut h, format!("./{path}"), target)
                    .expect("tar append");
            }
        }
    }
    b.into_inner().expect("tar finish")
}

/// A `.deb` with `debian-binary`, a stub control tarball and the data tarball.
pub fn build_deb(
    package: &str,
    version: &str,
    entries: &[ArchiveEntry],
    comp: Compression,
) -> Vec<u8> {
    let control = format!("Package: {package}\nVersion: {version}\nArchitecture: amd64\n");
    let control_tar = tar_of(&[ArchiveEntry::file("control", control.into_bytes())]);
    let data = comp.compress(&tar_of(entries));

    let mut ar = ar::Builder::new(Vec::new());
    let mut add = |name: &str, bytes: &[u8]| {
        let mut h = ar::Header::new(name.as_bytes().to_vec(), bytes.len() as u64);
        h.set_mode(0o100644);
        ar.append(&h, bytes).expect("ar append");
    };
    add("debian-binary", b"2.0\n");
    add("control.tar.gz", &Compression::Gzip.compress(&control_tar));
    add(&format!("data.tar{}", comp.suffix()), &data);
    ar.into_inner().expect("ar finish")
}

const RPM_STRING: u32 = 6;
const RPM_INT32: u32 = 4;

fn rpm_header(tags: &[(u32, u32, Vec<u8>)]) -> Vec<u8> {
    let mut index = Vec::new();
    let mut store: Vec<u8> = Vec::new();
    for (tag, ty, data) in tags {
        if *ty == RPM_INT32 {
            while !store.len().is_multiple_of(4) {
                store.push(0);
            }
        }
        index.extend_from_slice(&tag.to_be_bytes());
        index.extend_from_slice(&ty.to_be_bytes());
        index.extend_from_slice(&(store.len() as u32).to_be_bytes());
        let count = if *ty == RPM_INT32 {
            data.len() as u32 / 4
        } else {
            1
        };
        index.extend_from_slice(&count.to_be_bytes());
        store.extend_from_slice(data);
    }
    let mut out = vec![0x8e, 0xad, 0xe8, 0x01, 0, 0, 0, 0];
    out.extend_from_slice(&(tags.len() as u32).to_be_bytes());
    out.extend_from_slice(&(store.len() as u32).to_be_bytes());
    out.extend_from_slice(&index);
    out.extend_from_slice(&store);
    out
}

fn cstr(s: &str) -> Vec<u8> {
    let mut v = s.as_bytes().to_vec();
    v.push(0);
    v
}

/// A binary `.rpm`: lead, signature header, main header, compressed cpio.
pub fn build_rpm(
    name: &str,
    version: &str,
    release: &str,
    entries: &[ArchiveEntry],
    comp: Compression,
) -> Vec<u8> {
    let mut lead = vec![0xed, 0xab, 0xee, 0xdb, 3, 0, 0, 0];
    let mut lname = format!("{name}-{version}-{release}").into_bytes();
    lname.resize(66, 0);
    lead.extend_from_slice(&lname);
    lead.extend_from_slice(&1u16.to_be_bytes()); // osnum
    lead.extend_from_slice(&5u16.to_be_bytes()); // signature type
    lead.resize(96, 0);

    let mut cp = cpio::Writer::new();
    for e in entries {
        match e {
            ArchiveEntry::File { path, bytes } => cp.file(&format!("./{path}"), 0o100644, bytes),
            ArchiveEntry::Symlink { path, target } => {
                cp.file(&format!("./{path}"), 0o120777, target.as_bytes())
            }
        }
    }
    let payload = comp.compress(&cp.finish());

    let sig = rpm_header(&[(
        1000,
        RPM_INT32,
        (payload.len() as u32).to_be_bytes().to_vec(),
    )]);
    let main = rpm_header(&[
        (1000, RPM_STRING, cstr(name)),
        (1001, RPM_STRING, cstr(version)),
        (1002, RPM_STRING, cstr(release)),
        (1124, RPM_STRING, cstr("cpio")),
        (1125, RPM_STRING, cstr(comp.rpm_name())),
    ]);

    let mut out = lead;
    out.extend_from_slice(&sig);
    while out.len() % 8 != 0 {
        out.push(0);
    }
    out.extend_from_slice(&main);
    out.extend_from_slice(&payload);
    out
}
