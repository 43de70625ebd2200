//! Builders for synthetic inputs: minimal ELF64 shared objects, wheels, and
//! OS package archives. Used by the test-suite and by the bundled demo.

mod archive;
pub mod scppin;

use std::io::{Cursor, Write};

pub use archive::{build_deb, build_rpm, ArchiveEntry, Compression};

/// Description of a minimal x86_64 shared object.
#[derive(Debug, Clone, Default)]
pub struct ElfSpec {
    pub soname: Option<String>,
    pub needed: Vec<String>,
    /// Defined GLOBAL functions.
    pub exports: Vec<String>,
    /// Defined WEAK functions.
    pub weak_exports: Vec<String>,
    /// Defined LOCAL symbols; never exported.
    pub locals: Vec<String>,
    /// Undefined references.
    pub imports: Vec<String>,
    /// Bytes placed in a `.rodata` section.
    pub rodata: Vec<u8>,
    /// Omit the section header table (sstrip-style objects).
    pub no_sections: bool,
    /// Omit `.dynamic` and PT_DYNAMIC, as in a static executable.
    pub no_dynamic: bool,
}

impl ElfSpec {
    pub fn shared(soname: &str) -> Self {
        ElfSpec {
            soname: Some(soname.to_string()),
            ..Default::default()
        }
    }

    pub fn needs(mut self, libs: &[&str]) -> Self {
        self.needed.extend(libs.iter().map(|s| s.to_string()));
        self
    }

    pub fn exports(mut self, syms: &[&str]) -> Self {
        self.exports.extend(syms.iter().map(|s| s.to_string()));
        self
    }

    pub fn imports(mut self, syms: &[&str]) -> Self {
        self.imports.extend(syms.iter().map(|s| s.to_string()));
        self
    }

    pub fn rodata(mut self, bytes: &[u8]) -> Self {
        self.rodata.extend_from_slice(bytes);
        self
    }
}

struct StrTab(Vec<u8>);

impl StrTab {
    fn new() -> Self {
        StrTab(vec![0])
    }

    fn add(&mut self, s: &str) -> u32 {
        let off = self.0.len() as u32;
        self.0.extend_from_slice(s.as_bytes());
        self.0.push(0);
        off
    }
}

fn align(buf: &mut Vec<u8>, to: usize) {
    while !buf.len().is_multiple_of(to) {
        buf.push(0);
    }
}

const STB_LOCAL: u8 = 0;
const STB_GLOBAL: u8 = 1;
const STB_WEAK: u8 = 2;
const STT_FUNC: u8 = 2;

/// Serialize `spec` as an ELF64 little-endian ET_DYN image whose virtual
/// addresses equal file offsets.
pub fn build_elf(spec: &ElfSpec) -> Vec<u8> {
    const EHDR: usize = 64;
    const PHDR: usize = 56;
    let nph = if spec.no_dynamic { 1 } else { 2 };

    let mut dynstr = StrTab::new();
    let soname_off = spec.soname.as_ref().map(|s| dynstr.add(s));
    let needed_off: Vec<u32> = spec.needed.iter().map(|s| dynstr.add(s)).collect();

    // (name offset, info, defined)
    let mut syms: Vec<(u32, u8, bool)> = Vec::new();
    for s in &spec.locals {
        syms.push((dynstr.add(s), STB_LOCAL << 4 | STT_FUNC, true));
    }
    let first_global = syms.len() + 1;
    for s in &spec.exports {
        syms.push((dynstr.add(s), STB_GLOBAL << 4 | STT_FUNC, true));
    }
    for s in &spec.weak_exports {
        syms.push((dynstr.add(s), STB_WEAK << 4 | STT_FUNC, true));
    }
    for s in &spec.imports {
        syms.push((dynstr.add(s), STB_GLOBAL << 4 | STT_FUNC, false));
    }

    let mut out = vec![0u8; EHDR + nph * PHDR];

    let dynsym_off = out.len();
    out.extend_from_slice(&[0u8; 24]);
    let rodata_shndx: u16 = 3;
    for (name, info, defined) in &syms {
        out.extend_from_slice(&name.to_le_bytes());
        out.push(*info);
        out.push(0);
        out.extend_from_slice(&(if *defined { rodata_shndx } else { 0 }).to_le_bytes());
        out.extend_from_slice(&0u64.to_le_bytes());
        out.extend_from_slice(&0u64.to_le_bytes());
    }
    let dynsym_size = out.len() - dynsym_off;

    let dynstr_off = out.len();
    out.extend_from_slice(&dynstr.0);
    let dynstr_size = dynstr.0.len();

    let rodata_off = out.len();
    out.extend_from_slice(&spec.rodata);
    let rodata_size = spec.rodata.len();
    // point defined symbols at .rodata
    for (i, sym) in syms.iter().enumerate() {
        if sym.2 {
            let at = dynsym_off + 24 * (i + 1) + 8;
            out[at..at + 8].copy_from_slice(&(rodata_off as u64).to_le_bytes());
        }
    }

    align(&mut out, 8);
    let dynamic_off = out.len();
    if !spec.no_dynamic {
        let mut push = |tag: u64, val: u64| {
            out.extend_from_slice(&tag.to_le_bytes());
            out.extend_from_slice(&val.to_le_bytes());
        };
        for off in &needed_off {
            push(1, *off as u64);
        }
        if let Some(off) = soname_off {
            push(14, off as u64);
        }
        push(5, dynstr_off as u64); // DT_STRTAB
        push(6, dynsym_off as u64); // DT_SYMTAB
        push(10, dynstr_size as u64); // DT_STRSZ
        push(11, 24); // DT_SYMENT
        push(0, 0);
    }
    let dynamic_size = out.len() - dynamic_off;

    let mut shstr = StrTab::new();
    let names = [
        shstr.add(".dynsym"),
        shstr.add(".dynstr"),
        shstr.add(".rodata"),
        shstr.add(".dynamic"),
        shstr.add(".shstrtab"),
    ];
    let shstr_off = out.len();
    out.extend_from_slice(&shstr.0);

    align(&mut out, 8);
    let (shoff, shnum) = if spec.no_sections {
        (0usize, 0u16)
    } else {
        let shoff = out.len();
        let mut sh = |name: u32,
                      ty: u32,
                      flags: u64,
                      off: usize,
                      size: usize,
                      link: u32,
                      info: u32,
                      align: u64,
                      entsize: u64| {
            out.extend_from_slice(&name.to_le_bytes());
            out.extend_from_slice(&ty.to_le_bytes());
            out.extend_from_slice(&flags.to_le_bytes());
            let addr = if flags & 2 != 0 { off as u64 } else { 0 };
            out.extend_from_slice(&addr.to_le_bytes());
            out.extend_from_slice(&(off as u64).to_le_bytes());
            out.extend_from_slice(&(size as u64).to_le_bytes());
            out.extend_from_slice(&link.to_le_bytes());
            out.extend_from_slice(&info.to_le_bytes());
            out.extend_from_slice(&align.to_le_bytes());
            out.extend_from_slice(&entsize.to_le_bytes());
        };
        sh(0, 0, 0, 0, 0, 0, 0, 0, 0);
        sh(
            names[0],
            11,
            2,
            dynsym_off,
            dynsym_size,
            2,
            first_global as u32,
            8,
            24,
        );
        sh(names[1], 3, 2, dynstr_off, dynstr_size, 0, 0, 1, 0);
        sh(names[2], 1, 2, rodata_off, rodata_size, 0, 0, 1, 0);
        if spec.no_dynamic {
            sh(names[3], 1, 0, dynamic_off, 0, 0, 0, 8, 0);
        } else {
            sh(names[3], 6, 3, dynamic_off, dynamic_size, 2, 0, 8, 16);
        }
        sh(names[4], 3, 0, shstr_off, shstr.0.len(), 0, 0, 1, 0);
        (shoff, 6u16)
    };

    let total = out.len() as u64;
    let mut h = Vec::with_capacity(EHDR + nph * PHDR);
    h.extend_from_slice(&[0x7f, b'E', b'L', b'F', 2, 1, 1, 0]);
    h.extend_from_slice(&[0u8; 8]);
    h.extend_from_slice(&(if spec.no_dynamic { 2u16 } else { 3u16 }).to_le_bytes());
    h.extend_from_slice(&62u16.to_le_bytes());
    h.extend_from_slice(&1u32.to_le_bytes());
    h.extend_from_slice(&0u64.to_le_bytes());
    h.extend_from_slice(&(EHDR as u64).to_le_bytes());
    h.extend_from_slice(&(shoff as u64).to_le_bytes());
    h.extend_from_slice(&0u32.to_le_bytes());
    h.extend_from_slice(&(EHDR as u16).to_le_bytes());
    h.extend_from_slice(&(PHDR as u16).to_le_bytes());
    h.extend_from_slice(&(nph as u16).to_le_bytes());
    h.extend_from_slice(&64u16.to_le_bytes());
    h.extend_from_slice(&shnum.to_le_bytes());
    h.extend_from_slice(&(if shnum == 0 { 0u16 } else { 5 }).to_le_bytes());
    let mut ph = |ty: u32, flags: u32, off: u64, size: u64, align: u64| {
        h.extend_from_slice(&ty.to_le_bytes());
        h.extend_from_slice(&flags.to_le_bytes());
        h.extend_from_slice(&off.to_le_bytes());
        h.extend_from_slice(&off.to_le_bytes());
        h.extend_from_slice(&off.to_le_bytes());
        h.extend_from_slice(&size.to_le_bytes());
        h.extend_from_slice(&size.to_le_bytes());
        h.extend_from_slice(&align.to_le_bytes());
    };
    ph(1, 4, 0, total, 0x1000);
    if !spec.no_dynamic {
        ph(2, 6, dynamic_off as u64, dynamic_size as u64, 8);
    }
    out[..h.len()].copy_from_slice(&h);
    out
}

/// A wheel with a generated `.dist-info` directory.
#[derive(Debug, Clone, Default)]
pub struct WheelSpec {
    pub name: String,
    pub version: String,
    pub requires: Vec<String>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl WheelSpec {
    pub fn new(name: &str, version: &str) -> Self {
        WheelSpec {
            name: name.to_string(),
            version: version.to_string(),
            ..Default::default()
        }
    }

    pub fn requires(mut self, reqs: &[&str]) -> Self {
        self.requires.extend(reqs.iter().map(|s| s.to_string()));
        self
    }

    pub fn file(mut self, path: &str, bytes: Vec<u8>) -> Self {
        self.files.push((path.to_string(), bytes));
        self
    }

    pub fn filename(&self) -> String {
        format!(
            "{}-{}-py3-none-manylinux_2_17_x86_64.whl",
            self.name.replace('-', "_"),
            self.version
        )
    }

    pub fn metadata(&self) -> String {
        let mut md = format!(
            "Metadata-Version: 2.1\nName: {}\nVersion: {}\n",
            self.name, self.version
        );
        for r in &self.requires {
            md.push_str(&format!("Requires-Dist: {r}\n"));
        }
        md.push('\n');
        md
    }

    pub fn build(&self) -> Vec<u8> {
        build_zip(&self.members())
    }

    fn members(&self) -> Vec<(String, Vec<u8>)> {
        let info = format!("{}-{}.dist-info", self.name.replace('-', "_"), self.version);
        let mut members = self.files.clone();
        members.push((format!("{info}/METADATA"), self.metadata().into_bytes()));
        members.push((
            format!("{info}/WHEEL"),
            b"Wheel-Version: 1.0\nRoot-Is-Purelib: false\nTag: py3-none-manylinux_2_17_x86_64\n"
                .to_vec(),
        ));
        let record: String = members.iter().map(|(p, _)| format!("{p},,\n")).collect();
        members.push((
            format!("{info}/RECORD"),
            format!("{record}{info}/RECORD,,\n").into_bytes(),
        ));
        members
    }
}

/// Deflate-compressed ZIP with fixed timestamps, so output is reproducible.
pub fn build_zip(members: &[(String, Vec<u8>)]) -> Vec<u8> {
    let mut zw = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    for (path, bytes) in members {
        zw.start_file(path.as_str(), opts).expect("zip member");
        zw.write_all(bytes).expect("zip write");
    }
    zw.finish().expect("zip finish").into_inner()
}
