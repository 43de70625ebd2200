//! SVR4 "newc" cpio archives (`070701`), the RPM payload format.

const MAGIC: &[u8; 6] = b"070701";
const HEADER: usize = 110;
const TRAILER: &str = "TRAILER!!!";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry<'a> {
    pub name: &'a str,
    pub mode: u32,
    pub data: &'a [u8],
}

impl Entry<'_> {
    pub fn is_file(&self) -> bool {
        self.mode & 0o170000 == 0o100000
    }

    pub fn is_symlink(&self) -> bool {
        self.mode & 0o170000 == 0o120000
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CpioError {
    #[error("bad cpio magic at offset {0}")]
    Magic(usize),
    #[error("truncated cpio archive at offset {0}")]
    Truncated(usize),
    #[error("bad header field at offset {0}")]
    Field(usize),
}

fn pad4(n: usize) -> usize {
    (n + 3) & !3
}

fn hex_field(buf: &[u8], at: usize) -> Result<u32, CpioError> {
    let s = std::str::from_utf8(&buf[at..at + 8]).map_err(|_| CpioError::Field(at))?;
    u32::from_str_radix(s, 16).map_err(|_| CpioError::Field(at))
}

/// Parse every entry up to the trailer. Names are borrowed from `buf`.
pub fn read(buf: &[u8]) -> Result<Vec<Entry<'_>>, CpioError> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    loop {
        let hdr = buf
            .get(pos..pos + HEADER)
            .ok_or(CpioError::Truncated(pos))?;
        if &hdr[..6] != MAGIC {
            return Err(CpioError::Magic(pos));
        }
        let mode = hex_field(hdr, 14)?;
        let filesize = hex_field(hdr, 54)? as usize;
        let namesize = hex_field(hdr, 94)? as usize;
        if namesize == 0 {
            return Err(CpioError::Field(pos + 94));
        }
        let name_start = pos + HEADER;
        let name_bytes = buf
            .get(name_start..name_start + namesize)
            .ok_or(CpioError::Truncated(name_start))?;
        let name = std::str::from_utf8(&name_bytes[..namesize - 1])
            .map_err(|_| CpioError::Field(name_start))?;
        let data_start = pad4(name_start + namesize);
        let data = buf
            .get(
                data_start
                    ..data_start
                        .checked_add(filesize)
                        .ok_or(CpioError::Field(pos + 54))?,
            )
            .ok_or(CpioError::Truncated(data_start))?;
        if name == TRAILER {
            return Ok(out);
        }
        out.push(Entry { name, mode, data });
        pos = pad4(data_start + filesize);
    }
}

/// Minimal newc writer with zeroed metadata.
#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
    ino: u32,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn file(&mut self, name: &str, mode: u32, data: &[u8]) {
        self.ino += 1;
        let fields = [
            self.ino,
            mode,
            0,
            0,
            1,
            0,
            data.len() as u32,
            0,
            0,
            0,
            0,
            name.len() as u32 + 1,
            0,
        ];
        self.buf.extend_from_slice(MAGIC);
        for f in fields {
            self.buf.extend_from_slice(format!("{f:08x}").as_bytes());
        }
        self.buf.extend_from_slice(name.as_bytes());
        self.buf.push(0);
        self.buf.resize(pad4(self.buf.len()), 0);
        self.buf.extend_from_slice(data);
        self.buf.resize(pad4(self.buf.len()), 0);
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.file(TRAILER, 0, &[]);
        self.buf
    }
}
