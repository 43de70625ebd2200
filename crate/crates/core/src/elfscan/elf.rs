//! Bounded reader for the parts of ELF64 little-endian objects the scanner
//! needs: DT_NEEDED, DT_SONAME and the dynamic symbol table.
//!
//! Every offset taken from the file is checked before use, so hostile input
//! yields `ElfError::Malformed` rather than a panic.

use std::collections::BTreeSet;

pub const ELF_MAGIC: [u8; 4] = [0x7f, b'E', b'L', b'F'];

const EHDR_SIZE: usize = 64;
const SHDR_SIZE: usize = 64;
const PHDR_SIZE: usize = 56;
const SYM_SIZE: usize = 24;
const DYN_SIZE: usize = 16;

const SHT_DYNAMIC: u32 = 6;
const SHT_DYNSYM: u32 = 11;
const SHT_NOBITS: u32 = 8;
const PT_LOAD: u32 = 1;
const PT_DYNAMIC: u32 = 2;

const DT_NULL: u64 = 0;
const DT_NEEDED: u64 = 1;
const DT_HASH: u64 = 4;
const DT_STRTAB: u64 = 5;
const DT_SYMTAB: u64 = 6;
const DT_STRSZ: u64 = 10;
const DT_SONAME: u64 = 14;
const DT_GNU_HASH: u64 = 0x6fff_fef5;

const STB_GLOBAL: u8 = 1;
const STB_WEAK: u8 = 2;
const STT_SECTION: u8 = 3;
const STT_FILE: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ElfError {
    #[error("not an ELF object")]
    NotElf,
    #[error(
        "unsupported ELF class {class} / encoding {data}; only 64-bit little-endian is accepted"
    )]
    Unsupported { class: u8, data: u8 },
    #[error("malformed ELF: {0}")]
    Malformed(String),
}

fn bad(msg: impl Into<String>) -> ElfError {
    ElfError::Malformed(msg.into())
}

/// Dynamic-linking facts read from one object.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DynamicInfo {
    pub soname: Option<String>,
    pub needed: Vec<String>,
    /// Defined GLOBAL/WEAK dynamic symbols with default or protected visibility.
    pub exports: BTreeSet<String>,
    /// Undefined dynamic symbols.
    pub imports: BTreeSet<String>,
}

/// True for any file starting with the ELF magic.
pub fn has_elf_magic(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && bytes[..4] == ELF_MAGIC
}

/// True iff `bytes` carries the ELF magic and declares ELFCLASS64 / ELFDATA2LSB.
pub fn detect_elf(bytes: &[u8]) -> bool {
    has_elf_magic(bytes) && bytes.len() >= 6 && bytes[4] == 2 && bytes[5] == 1
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn slice(&self, off: u64, len: u64, what: &str) -> Result<&'a [u8], ElfError> {
        let start = usize::try_from(off).map_err(|_| bad(format!("{what}: offset overflow")))?;
        let len = usize::try_from(len).map_err(|_| bad(format!("{what}: size overflow")))?;
        let end = start
            .checked_add(len)
            .ok_or_else(|| bad(format!("{what}: range overflow")))?;
        self.0.get(start..end).ok_or_else(|| {
            bad(format!(
                "{what}: {start:#x}..{end:#x} outside file of {} bytes",
                self.0.len()
            ))
        })
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

#[derive(Clone, Copy)]
struct Section {
    ty: u32,
    offset: u64,
    size: u64,
    link: u32,
    entsize: u64,
}

#[derive(Clone, Copy)]
struct Segment {
    ty: u32,
    offset: u64,
    vaddr: u64,
    filesz: u64,
}

struct Header {
    phoff: u64,
    shoff: u64,
    phentsize: u16,
    phnum: u16,
    shentsize: u16,
    shnum: u16,
}

fn header(bytes: &[u8]) -> Result<Header, ElfError> {
    if !has_elf_magic(bytes) {
        return Err(ElfError::NotElf);
    }
    if bytes.len() < 6 || bytes[4] != 2 || bytes[5] != 1 {
        return Err(ElfError::Unsupported {
            class: bytes.get(4).copied().unwrap_or(0),
            data: bytes.get(5).copied().unwrap_or(0),
        });
    }
    if bytes.len() < EHDR_SIZE {
        return Err(bad("truncated ELF header"));
    }
    Ok(Header {
        phoff: u64_at(bytes, 0x20),
        shoff: u64_at(bytes, 0x28),
        phentsize: u16_at(bytes, 0x36),
        phnum: u16_at(bytes, 0x38),
        shentsize: u16_at(bytes, 0x3a),
        shnum: u16_at(bytes, 0x3c),
    })
}

fn sections(r: &Reader, h: &Header) -> Result<Vec<Section>, ElfError> {
    if h.shoff == 0 || h.shnum == 0 {
        return Ok(Vec::new());
    }
    if h.shentsize as usize != SHDR_SIZE {
        return Err(bad(format!("section header size {}", h.shentsize)));
    }
    let table = r.slice(
        h.shoff,
        h.shnum as u64 * SHDR_SIZE as u64,
        "section headers",
    )?;
    Ok(table
        .chunks_exact(SHDR_SIZE)
        .map(|s| Section {
            ty: u32_at(s, 4),
            offset: u64_at(s, 0x18),
            size: u64_at(s, 0x20),
            link: u32_at(s, 0x28),
            entsize: u64_at(s, 0x38),
        })
        .collect())
}

fn segments(r: &Reader, h: &Header) -> Result<Vec<Segment>, ElfError> {
    if h.phoff == 0 || h.phnum == 0 {
        return Ok(Vec::new());
    }
    if h.phentsize as usize != PHDR_SIZE {
        return Err(bad(format!("program header size {}", h.phentsize)));
    }
    let table = r.slice(
        h.phoff,
        h.phnum as u64 * PHDR_SIZE as u64,
        "program headers",
    )?;
    Ok(table
        .chunks_exact(PHDR_SIZE)
        .map(|p| Segment {
            ty: u32_at(p, 0),
            offset: u64_at(p, 8),
            vaddr: u64_at(p, 0x10),
            filesz: u64_at(p, 0x20),
        })
        .collect())
}

/// File offset of a virtual address, through the PT_LOAD segments.
fn va_to_offset(segs: &[Segment], va: u64) -> Option<u64> {
    segs.iter()
        .filter(|s| s.ty == PT_LOAD)
        .find(|s| va >= s.vaddr && va - s.vaddr < s.filesz)
        .and_then(|s| s.offset.checked_add(va - s.vaddr))
}

fn cstr(table: &[u8], idx: u64, what: &str) -> Result<String, ElfError> {
    let start = usize::try_from(idx)
        .ok()
        .filter(|i| *i < table.len())
        .ok_or_else(|| {
            bad(format!(
                "{what}: string index {idx} beyond table of {} bytes",
                table.len()
            ))
        })?;
    let rest = &table[start..];
    let end = rest
        .iter()
        .position(|&b| b == 0)
        .ok_or_else(|| bad(format!("{what}: unterminated string at {idx}")))?;
    Ok(String::from_utf8_lossy(&rest[..end]).into_owned())
}

fn dyn_entries(raw: &[u8]) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for e in raw.chunks_exact(DYN_SIZE) {
        let tag = u64_at(e, 0);
        if tag == DT_NULL {
            break;
        }
        out.push((tag, u64_at(e, 8)));
    }
    out
}

fn section_at<'s>(secs: &'s [Section], idx: u32, what: &str) -> Result<&'s Section, ElfError> {
    secs.get(idx as usize)
        .ok_or_else(|| bad(format!("{what}: section link {idx} out of range")))
}

fn section_bytes<'a>(r: &Reader<'a>, s: &Section, what: &str) -> Result<&'a [u8], ElfError> {
    if s.ty == SHT_NOBITS {
        return Ok(&[]);
    }
    r.slice(s.offset, s.size, what)
}

fn read_symbols(syms: &[u8], strtab: &[u8], info: &mut DynamicInfo) -> Result<(), ElfError> {
    // entry 0 is the reserved null symbol
    for s in syms.chunks_exact(SYM_SIZE).skip(1) {
        let name_idx = u32_at(s, 0) as u64;
        let st_info = s[4];
        let other = s[5];
        let shndx = u16_at(s, 6);
        let bind = st_info >> 4;
        let ty = st_info & 0xf;
        if name_idx == 0 || !(bind == STB_GLOBAL || bind == STB_WEAK) {
            continue;
        }
        let name = cstr(strtab, name_idx, "dynamic symbol name")?;
        if name.is_empty() {
            continue;
        }
        if shndx == 0 {
            info.imports.insert(name);
        } else if ty != STT_SECTION && ty != STT_FILE && matches!(other & 3, 0 | 3) {
            info.exports.insert(name);
        }
    }
    Ok(())
}

fn hash_symbol_count(r: &Reader, segs: &[Segment], dyns: &[(u64, u64)]) -> Option<u64> {
    let get = |t| dyns.iter().find(|(tag, _)| *tag == t).map(|(_, v)| *v);
    if let Some(va) = get(DT_HASH) {
        let off = va_to_offset(segs, va)?;
        let b = r.slice(off, 8, "DT_HASH").ok()?;
        return Some(u32_at(b, 4) as u64);
    }
    if let Some(va) = get(DT_GNU_HASH) {
        let off = va_to_offset(segs, va)?;
        let h = r.slice(off, 16, "DT_GNU_HASH").ok()?;
        let nbuckets = u32_at(h, 0) as u64;
        let symoffset = u32_at(h, 4) as u64;
        let bloom = u32_at(h, 8) as u64;
        let buckets_off = off.checked_add(16)?.checked_add(bloom.checked_mul(8)?)?;
        let buckets = r
            .slice(buckets_off, nbuckets.checked_mul(4)?, "GNU hash buckets")
            .ok()?;
        let last = buckets
            .chunks_exact(4)
            .map(|c| u32_at(c, 0) as u64)
            .max()
            .unwrap_or(0);
        if last < symoffset {
            return Some(symoffset);
        }
        let chains_off = buckets_off.checked_add(nbuckets * 4)?;
        let mut i = last;
        loop {
            let at = chains_off.checked_add((i - symoffset).checked_mul(4)?)?;
            let v = u32_at(r.slice(at, 4, "GNU hash chain").ok()?, 0);
            i += 1;
            if v & 1 == 1 {
                return Some(i);
            }
        }
    }
    None
}

/// Read DT_SONAME, DT_NEEDED (file order) and the dynamic symbol table.
///
/// The `.dynamic` section is used when section headers exist; otherwise
/// the PT_DYNAMIC segment, with DT_STRTAB mapped through PT_LOAD.
pub fn read_dynamic(bytes: &[u8]) -> Result<DynamicInfo, ElfError> {
    let h = header(bytes)?;
    let r = Reader(bytes);
    let secs = sections(&r, &h)?;
    let segs = segments(&r, &h)?;
    let mut info = DynamicInfo::default();

    let dynamic_sec = secs.iter().find(|s| s.ty == SHT_DYNAMIC);
    let (dyns, strtab): (Vec<(u64, u64)>, &[u8]) = if let Some(ds) = dynamic_sec {
        let raw = section_bytes(&r, ds, ".dynamic")?;
        let st = section_at(&secs, ds.link, ".dynamic")?;
        (dyn_entries(raw), section_bytes(&r, st, ".dynstr")?)
    } else if let Some(pd) = segs.iter().find(|s| s.ty == PT_DYNAMIC) {
        let raw = r.slice(pd.offset, pd.filesz, "PT_DYNAMIC")?;
        let dyns = dyn_entries(raw);
        let va = dyns
            .iter()
            .find(|(t, _)| *t == DT_STRTAB)
            .map(|(_, v)| *v)
            .ok_or_else(|| bad("dynamic segment without DT_STRTAB"))?;
        let size = dyns
            .iter()
            .find(|(t, _)| *t == DT_STRSZ)
            .map(|(_, v)| *v)
            .ok_or_else(|| bad("dynamic segment without DT_STRSZ"))?;
        let off =
            va_to_offset(&segs, va).ok_or_else(|| bad("DT_STRTAB not mapped by any PT_LOAD"))?;
        let st = r.slice(off, size, "DT_STRTAB")?;
        (dyns, st)
    } else {
        return Ok(info);
    };

    for (tag, val) in &dyns {
        match *tag {
            DT_NEEDED => {
                let s = cstr(strtab, *val, "DT_NEEDED")?;
                if !s.is_empty() {
                    info.needed.push(s);
                }
            }
            DT_SONAME if info.soname.is_none() => {
                let s = cstr(strtab, *val, "DT_SONAME")?;
                if !s.is_empty() {
                    info.soname = Some(s);
                }
            }
            _ => {}
        }
    }

    if let Some(ds) = secs.iter().find(|s| s.ty == SHT_DYNSYM) {
        if ds.entsize != 0 && ds.entsize != SYM_SIZE as u64 {
            return Err(bad(format!(".dynsym entry size {}", ds.entsize)));
        }
        let syms = section_bytes(&r, ds, ".dynsym")?;
        let st = section_bytes(
            &r,
            section_at(&secs, ds.link, ".dynsym")?,
            ".dynsym strings",
        )?;
        read_symbols(syms, st, &mut info)?;
    } else if let Some(va) = dyns.iter().find(|(t, _)| *t == DT_SYMTAB).map(|(_, v)| *v) {
        let off =
            va_to_offset(&segs, va).ok_or_else(|| bad("DT_SYMTAB not mapped by any PT_LOAD"))?;
        let count = match hash_symbol_count(&r, &segs, &dyns) {
            Some(n) => n,
            None => {
                // no hash table: assume the usual layout, symbols up to the string table
                let str_va = dyns.iter().find(|(t, _)| *t == DT_STRTAB).map(|(_, v)| *v);
                match str_va.and_then(|v| va_to_offset(&segs, v)) {
                    Some(so) if so > off => (so - off) / SYM_SIZE as u64,
                    _ => 0,
                }
            }
        };
        let len = count
            .checked_mul(SYM_SIZE as u64)
            .ok_or_else(|| bad("symbol count overflow"))?;
        let syms = r.slice(off, len, "DT_SYMTAB")?;
        read_symbols(syms, strtab, &mut info)?;
    }
    Ok(info)
}

/// DT_SONAME and DT_NEEDED only.
pub fn read_needed(bytes: &[u8]) -> Result<(Option<String>, Vec<String>), ElfError> {
    let info = read_dynamic(bytes)?;
    Ok((info.soname, info.needed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_elf, ElfSpec};

    #[test]
    fn magic_and_class() {
        assert!(detect_elf(&[0x7f, b'E', b'L', b'F', 2, 1, 1]));
        assert!(!detect_elf(&[]));
        assert!(!detect_elf(&[0x7f, b'E', b'L', b'F', 1, 1]));
        assert!(!detect_elf(b"\x7fELG\x02\x01"));
        assert_eq!(
            read_dynamic(&[0x7f, b'E', b'L', b'F', 1, 1, 1, 0]),
            Err(ElfError::Unsupported { class: 1, data: 1 })
        );
    }

    #[test]
    fn needed_in_order_with_soname() {
        let spec = ElfSpec::shared("libxml2.so.2")
            .needs(&["libz.so.1", "libm.so.6"])
            .exports(&["xmlBuildQName"])
            .imports(&["inflate"]);
        let info = read_dynamic(&build_elf(&spec)).unwrap();
        assert_eq!(info.soname.as_deref(), Some("libxml2.so.2"));
        assert_eq!(info.needed, ["libz.so.1", "libm.so.6"]);
        assert!(info.exports.contains("xmlBuildQName"));
        assert!(info.imports.contains("inflate"));
    }

    #[test]
    fn program_header_fallback() {
        let mut spec = ElfSpec::shared("liba.so")
            .needs(&["libb.so"])
            .exports(&["a"]);
        spec.weak_exports.push("w".into());
        spec.locals.push("hidden_local".into());
        spec.no_sections = true;
        let info = read_dynamic(&build_elf(&spec)).unwrap();
        assert_eq!(info.needed, ["libb.so"]);
        assert_eq!(info.soname.as_deref(), Some("liba.so"));
        assert_eq!(
            info.exports,
            BTreeSet::from(["a".to_string(), "w".to_string()])
        );
    }

    #[test]
    fn static_object_has_no_dynamic_info() {
        let spec = ElfSpec {
            no_dynamic: true,
            ..Default::default()
        };
        assert_eq!(read_needed(&build_elf(&spec)).unwrap(), (None, vec![]));
    }

    #[test]
    fn truncations_never_panic() {
        let elf = build_elf(
            &ElfSpec::shared("libq.so")
                .needs(&["libz.so.1"])
                .exports(&["q"]),
        );
        for cut in 0..elf.len() {
            let _ = read_dynamic(&elf[..cut]);
        }
    }
}
