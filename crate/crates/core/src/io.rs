//! Little-endian binary framing shared by the dataset and checkpoint
//! formats: length-prefixed sections with trailing CRC32, and atomic file
//! writes (temp file + rename).

use std::io::Write;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("file truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: [u8; 4] },
    #[error("unsupported format version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },
    #[error("section checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append one length-prefixed section with a trailing CRC32.
pub fn write_section(out: &mut Vec<u8>, payload: &[u8]) {
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
}

/// Cursor over a byte buffer with checked little-endian reads.
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated { needed: n - self.remaining() });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Read one section written by [`write_section`], verifying its CRC32.
    pub fn section(&mut self) -> Result<Reader<'a>, FormatError> {
        let len = self.u64()? as usize;
        let payload = self.take(len)?;
        let stored = self.u32_unframed()?;
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }
        Ok(Reader::new(payload))
    }

    fn u32_unframed(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Builder for section payloads.
#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Write `bytes` to `path` atomically: temp file in the same directory,
/// flush, then rename over the destination.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn section_round_trip() {
        let mut out = Vec::new();
        write_section(&mut out, b"hello");
        write_section(&mut out, b"");
        let mut r = Reader::new(&out);
        let mut s1 = r.section().unwrap();
        assert_eq!(s1.take(5).unwrap(), b"hello");
        let s2 = r.section().unwrap();
        assert_eq!(s2.remaining(), 0);
        assert_eq!(r.remaining(), 0);
    }

    #[test]
    fn corrupted_section_fails_checksum() {
        let mut out = Vec::new();
        write_section(&mut out, b"payload");
        out[9] ^= 0xff;
        let mut r = Reader::new(&out);
        assert!(matches!(r.section(), Err(FormatError::Checksum { .. })));
    }

    #[test]
    fn truncated_read_reports_shortfall() {
        let mut r = Reader::new(b"abc");
        assert!(matches!(r.u64(), Err(FormatError::Truncated { needed: 5 })));
    }
}
